#pragma once

#include "glab/annealer.hpp"
#include "glab/checkpoint.hpp"
#include "glab/common.hpp"
#include "glab/denoiser.hpp"
#include "glab/eval.hpp"
#include "glab/guidance.hpp"
#include "glab/io.hpp"
#include "glab/nnkernel.hpp"
#include "glab/plots.hpp"
#include "glab/runs.hpp"
#include "glab/schedule.hpp"
#include "glab/scheduler_net.hpp"
#include "glab/toyworld.hpp"
