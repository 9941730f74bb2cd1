#pragma once

#include "ucan/core/config.hpp"
#include "ucan/core/error.hpp"
#include "ucan/core/tracer.hpp"
#include "ucan/core/volume.hpp"
#include "ucan/data/folds.hpp"
#include "ucan/data/normalize.hpp"
#include "ucan/data/phantom.hpp"
#include "ucan/data/sampling.hpp"
#include "ucan/data/study_io.hpp"
#include "ucan/eval/evaluate.hpp"
#include "ucan/eval/metrics.hpp"
#include "ucan/eval/plot.hpp"
#include "ucan/eval/report.hpp"
#include "ucan/eval/stats.hpp"
#include "ucan/losses.hpp"
#include "ucan/nets/discriminator.hpp"
#include "ucan/nets/generator.hpp"
#include "ucan/train/cross_validation.hpp"
#include "ucan/train/trainer.hpp"
