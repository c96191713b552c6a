#pragma once

#include "rationale/backend.hpp"
#include "rationale/config.hpp"
#include "rationale/emitter.hpp"
#include "rationale/eval.hpp"
#include "rationale/extractor.hpp"
#include "rationale/filter.hpp"
#include "rationale/http_backend.hpp"
#include "rationale/mock_backend.hpp"
#include "rationale/prefilter.hpp"
#include "rationale/supervision.hpp"
#include "rationale/template.hpp"
