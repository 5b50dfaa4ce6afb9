#pragma once

#include "celltwin/calib.hpp"
#include "celltwin/config.hpp"
#include "celltwin/dataset.hpp"
#include "celltwin/error.hpp"
#include "celltwin/eval.hpp"
#include "celltwin/filter.hpp"
#include "celltwin/io.hpp"
#include "celltwin/model.hpp"
#include "celltwin/pipeline.hpp"
#include "celltwin/prognosis.hpp"
#include "celltwin/retirement.hpp"
#include "celltwin/rng.hpp"
#include "celltwin/stats.hpp"
#include "celltwin/utility.hpp"
