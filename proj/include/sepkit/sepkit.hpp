#pragma once

// Umbrella header.

#include "sepkit/beamforming.hpp"
#include "sepkit/errors.hpp"
#include "sepkit/extraction.hpp"
#include "sepkit/fft.hpp"
#include "sepkit/framing.hpp"
#include "sepkit/linalg.hpp"
#include "sepkit/losses.hpp"
#include "sepkit/matrix.hpp"
#include "sepkit/metrics.hpp"
#include "sepkit/rng.hpp"
#include "sepkit/serialize.hpp"
#include "sepkit/simulation.hpp"
#include "sepkit/stft.hpp"
#include "sepkit/tensor_file.hpp"
#include "sepkit/toytrain.hpp"
#include "sepkit/transforms.hpp"
#include "sepkit/version.hpp"
#include "sepkit/wav.hpp"
#include "sepkit/waveform.hpp"
