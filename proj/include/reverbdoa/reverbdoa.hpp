#pragma once

// Reverberant two-microphone source localization toolkit: room simulation,
// relative-transfer-function features, steered-response-power and learned
// estimators with a built-in reverse-mode gradient tape.

#include "reverbdoa/errors.hpp"
#include "reverbdoa/rng.hpp"
#include "reverbdoa/tensor.hpp"
#include "reverbdoa/fft.hpp"
#include "reverbdoa/ops.hpp"
#include "reverbdoa/tape.hpp"
#include "reverbdoa/adam.hpp"
#include "reverbdoa/room.hpp"
#include "reverbdoa/stft.hpp"
#include "reverbdoa/features.hpp"
#include "reverbdoa/srp_phat.hpp"
#include "reverbdoa/networks.hpp"
#include "reverbdoa/objectives.hpp"
#include "reverbdoa/training.hpp"
#include "reverbdoa/metrics.hpp"
#include "reverbdoa/io.hpp"
#include "reverbdoa/harness.hpp"
