#pragma once

#include "otfsim/coding/ldpc.hpp"
#include "otfsim/coding/llr.hpp"
#include "otfsim/common.hpp"
#include "otfsim/fft.hpp"
#include "otfsim/harness/config.hpp"
#include "otfsim/harness/experiments.hpp"
#include "otfsim/harness/transceiver.hpp"
#include "otfsim/im.hpp"
#include "otfsim/nn/autoencoder.hpp"
#include "otfsim/nn/checkpoint.hpp"
#include "otfsim/nn/gradcheck.hpp"
#include "otfsim/nn/layers.hpp"
#include "otfsim/nn/training.hpp"
#include "otfsim/ntn.hpp"
#include "otfsim/otfs.hpp"
#include "otfsim/papr.hpp"
