#pragma once

#include "nerd/config.hpp"
#include "nerd/conv_denoiser.hpp"
#include "nerd/error.hpp"
#include "nerd/forward_model.hpp"
#include "nerd/io.hpp"
#include "nerd/metrics.hpp"
#include "nerd/optim.hpp"
#include "nerd/phantom.hpp"
#include "nerd/priors.hpp"
#include "nerd/rng.hpp"
#include "nerd/samplers.hpp"
#include "nerd/schedule.hpp"
#include "nerd/volume.hpp"
