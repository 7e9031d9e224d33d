#pragma once

#include "nes/core.hpp"
#include "nes/dataset.hpp"
#include "nes/dsp.hpp"
#include "nes/factored_rbm.hpp"
#include "nes/gaussian_rbm.hpp"
#include "nes/gradcheck.hpp"
#include "nes/layers.hpp"
#include "nes/metrics.hpp"
#include "nes/model.hpp"
#include "nes/model_io.hpp"
#include "nes/trial.hpp"
