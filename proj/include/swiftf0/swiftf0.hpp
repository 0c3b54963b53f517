#pragma once

#include "audio_io.hpp"
#include "baseline.hpp"
#include "decode.hpp"
#include "dsp.hpp"
#include "errors.hpp"
#include "fft.hpp"
#include "grid.hpp"
#include "loss.hpp"
#include "matrix.hpp"
#include "metrics.hpp"
#include "model.hpp"
#include "noise.hpp"
#include "pipeline.hpp"
#include "synth.hpp"
#include "train.hpp"
