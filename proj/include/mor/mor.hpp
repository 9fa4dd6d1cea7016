#pragma once

#include "mor/binary.hpp"
#include "mor/calibration.hpp"
#include "mor/clustering.hpp"
#include "mor/errors.hpp"
#include "mor/fixed.hpp"
#include "mor/geometry.hpp"
#include "mor/hybrid.hpp"
#include "mor/io/container.hpp"
#include "mor/io/stats_csv.hpp"
#include "mor/io/tensor_file.hpp"
#include "mor/model.hpp"
#include "mor/reference.hpp"
#include "mor/regression.hpp"
#include "mor/report.hpp"
#include "mor/sim/simulator.hpp"
#include "mor/sweep.hpp"
#include "mor/tensor.hpp"
