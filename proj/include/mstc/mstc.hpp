#pragma once

#include "mstc/checkpoint.hpp"
#include "mstc/config.hpp"
#include "mstc/metrics.hpp"
#include "mstc/pipeline.hpp"
#include "mstc/report.hpp"
#include "mstc/synthetic.hpp"
#include "mstc/training.hpp"
#include "mstc/video_io.hpp"
