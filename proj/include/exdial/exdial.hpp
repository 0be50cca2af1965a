#pragma once

// Convenience umbrella: pulls in the whole library.

#include "exdial/autodiff.hpp"
#include "exdial/common.hpp"
#include "exdial/corpus.hpp"
#include "exdial/datagen.hpp"
#include "exdial/metrics.hpp"
#include "exdial/model.hpp"
#include "exdial/pipeline.hpp"
#include "exdial/retrieval.hpp"
#include "exdial/text.hpp"
#include "exdial/training.hpp"
