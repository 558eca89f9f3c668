#pragma once

#include "stg2seq/autodiff.hpp"
#include "stg2seq/baselines.hpp"
#include "stg2seq/checkpoint.hpp"
#include "stg2seq/errors.hpp"
#include "stg2seq/features.hpp"
#include "stg2seq/graph.hpp"
#include "stg2seq/io.hpp"
#include "stg2seq/metrics.hpp"
#include "stg2seq/model.hpp"
#include "stg2seq/pipeline.hpp"
#include "stg2seq/synth.hpp"
#include "stg2seq/tensor.hpp"
#include "stg2seq/training.hpp"
