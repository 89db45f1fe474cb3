#pragma once

#include "handdi/adam.hpp"
#include "handdi/autodiff.hpp"
#include "handdi/checkpoint.hpp"
#include "handdi/dataset.hpp"
#include "handdi/errors.hpp"
#include "handdi/espf.hpp"
#include "handdi/gradcheck.hpp"
#include "handdi/han.hpp"
#include "handdi/hin.hpp"
#include "handdi/io.hpp"
#include "handdi/metapath.hpp"
#include "handdi/metrics.hpp"
#include "handdi/random.hpp"
#include "handdi/run.hpp"
#include "handdi/synthetic.hpp"
#include "handdi/tensor.hpp"
#include "handdi/training.hpp"
