#pragma once

#include <string>

#include "bsdectl/bsdectl.hpp"

namespace testing_support {

inline std::string instance_path(const std::string& name) {
  return std::string(BSDECTL_INSTANCE_DIR) + "/" + name;
}

inline bsdectl::ProblemInstance example(int k) {
  return bsdectl::load_instance(instance_path("example" + std::to_string(k) + ".json"));
}

inline bsdectl::Reformulation example_reformulation(int k) {
  return bsdectl::reformulate(bsdectl::validate(example(k).system));
}

}  // namespace testing_support

// Asserts that `stmt` throws bsdectl::Error with the given code.
#define EXPECT_BSDE_ERROR(stmt, expected_code)                              \
  do {                                                                      \
    try {                                                                   \
      stmt;                                                                 \
      ADD_FAILURE() << "expected " << bsdectl::to_string(expected_code);    \
    } catch (const bsdectl::Error& e) {                                     \
      EXPECT_EQ(e.code(), expected_code) << e.what();                       \
    }                                                                       \
  } while (false)
