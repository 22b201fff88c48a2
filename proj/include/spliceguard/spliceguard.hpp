#pragma once

#include "spliceguard/audio.hpp"
#include "spliceguard/config.hpp"
#include "spliceguard/corpus.hpp"
#include "spliceguard/error.hpp"
#include "spliceguard/experiment.hpp"
#include "spliceguard/features.hpp"
#include "spliceguard/inference.hpp"
#include "spliceguard/manifest.hpp"
#include "spliceguard/model.hpp"
#include "spliceguard/nn/checkpoint.hpp"
#include "spliceguard/nn/gradcheck.hpp"
#include "spliceguard/nn/layers.hpp"
#include "spliceguard/nn/ops.hpp"
#include "spliceguard/nn/optim.hpp"
#include "spliceguard/nn/tape.hpp"
#include "spliceguard/nn/tensor.hpp"
#include "spliceguard/parallel.hpp"
#include "spliceguard/rng.hpp"
#include "spliceguard/scoring.hpp"
#include "spliceguard/training.hpp"
