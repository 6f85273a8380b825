#pragma once

#include "ctm/common.hpp"
#include "ctm/concept_kb.hpp"
#include "ctm/corpus.hpp"
#include "ctm/eval.hpp"
#include "ctm/generate.hpp"
#include "ctm/harness.hpp"
#include "ctm/model_state.hpp"
#include "ctm/samplers.hpp"
#include "ctm/snapshot.hpp"
