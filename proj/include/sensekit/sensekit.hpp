#pragma once

// Umbrella header for the sensemaking-trajectory toolkit.

#include "sensekit/agreement.hpp"
#include "sensekit/citestats.hpp"
#include "sensekit/corpus.hpp"
#include "sensekit/diversity.hpp"
#include "sensekit/errors.hpp"
#include "sensekit/hash.hpp"
#include "sensekit/judge.hpp"
#include "sensekit/llmio.hpp"
#include "sensekit/ot.hpp"
#include "sensekit/parallel.hpp"
#include "sensekit/textproc.hpp"
#include "sensekit/trajgen.hpp"
