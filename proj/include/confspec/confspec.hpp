#pragma once

#include "confspec/errors.hpp"
#include "confspec/core.hpp"
#include "confspec/oracle.hpp"
#include "confspec/ledger.hpp"
#include "confspec/cascade.hpp"
#include "confspec/rng.hpp"
#include "confspec/metrics.hpp"
#include "confspec/simworld.hpp"
#include "confspec/ngram.hpp"
#include "confspec/backend.hpp"
#include "confspec/report.hpp"
#include "confspec/config.hpp"
#include "confspec/experiment.hpp"
