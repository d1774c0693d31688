#pragma once

#include "thermofuse/error.hpp"
#include "thermofuse/image.hpp"
#include "thermofuse/radiometry.hpp"
#include "thermofuse/calibration.hpp"
#include "thermofuse/homography.hpp"
#include "thermofuse/burst.hpp"
#include "thermofuse/fusion.hpp"
#include "thermofuse/metrics.hpp"
#include "thermofuse/io.hpp"
#include "thermofuse/synthetic.hpp"

namespace thermofuse {
inline constexpr const char* kVersion = "0.1.0";
}
