#pragma once

#include "phdst/adam.hpp"
#include "phdst/boxcox.hpp"
#include "phdst/csv.hpp"
#include "phdst/date.hpp"
#include "phdst/decision.hpp"
#include "phdst/error.hpp"
#include "phdst/features.hpp"
#include "phdst/gradcheck.hpp"
#include "phdst/ingest.hpp"
#include "phdst/layers.hpp"
#include "phdst/metrics.hpp"
#include "phdst/model.hpp"
#include "phdst/pipeline.hpp"
#include "phdst/rng.hpp"
#include "phdst/synth.hpp"
#include "phdst/tensor.hpp"
#include "phdst/threads.hpp"
