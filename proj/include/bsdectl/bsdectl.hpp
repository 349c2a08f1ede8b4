#pragma once

#include "bsdectl/controller_table.hpp"
#include "bsdectl/criteria.hpp"
#include "bsdectl/delay.hpp"
#include "bsdectl/error.hpp"
#include "bsdectl/instance_io.hpp"
#include "bsdectl/linalg.hpp"
#include "bsdectl/model.hpp"
#include "bsdectl/partial.hpp"
#include "bsdectl/pathspace.hpp"
#include "bsdectl/synthesis.hpp"
#include "bsdectl/transform.hpp"
