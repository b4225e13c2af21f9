#pragma once

// Everything except the HTTP backend and the command-line front end.

#include "cloudano/agents.hpp"
#include "cloudano/backend.hpp"
#include "cloudano/baselines.hpp"
#include "cloudano/bench_gen.hpp"
#include "cloudano/case_io.hpp"
#include "cloudano/core.hpp"
#include "cloudano/features.hpp"
#include "cloudano/harness.hpp"
#include "cloudano/mock_backends.hpp"
#include "cloudano/patterns.hpp"
#include "cloudano/pipeline.hpp"
#include "cloudano/report.hpp"
#include "cloudano/rng.hpp"
#include "cloudano/ruleset.hpp"
#include "cloudano/templates.hpp"
#include "cloudano/verifier.hpp"
