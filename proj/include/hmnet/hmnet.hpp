#pragma once

#include "errors.hpp"
#include "util.hpp"
#include "mesh_core.hpp"
#include "synth_gen.hpp"
#include "net.hpp"
#include "losses.hpp"
#include "train.hpp"
#include "eval_metrics.hpp"
#include "io.hpp"
