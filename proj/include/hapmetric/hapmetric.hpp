#pragma once

#include "hapmetric/boost_metric.hpp"
#include "hapmetric/config.hpp"
#include "hapmetric/cqfb.hpp"
#include "hapmetric/dataio.hpp"
#include "hapmetric/error.hpp"
#include "hapmetric/evaluation.hpp"
#include "hapmetric/feature_set.hpp"
#include "hapmetric/fft.hpp"
#include "hapmetric/model_io.hpp"
#include "hapmetric/pipeline.hpp"
#include "hapmetric/random.hpp"
#include "hapmetric/signal.hpp"
