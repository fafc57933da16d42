#pragma once

#include "calibration.hpp"
#include "core.hpp"
#include "distributions.hpp"
#include "error.hpp"
#include "ingestion.hpp"
#include "marginal.hpp"
#include "parallel.hpp"
#include "report.hpp"
#include "rng.hpp"
#include "sampler.hpp"
#include "schema.hpp"
#include "structure.hpp"
#include "synth.hpp"
