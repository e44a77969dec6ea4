#pragma once

#include "seqdiag/error.hpp"
#include "seqdiag/rng.hpp"
#include "seqdiag/models.hpp"
#include "seqdiag/statistics.hpp"
#include "seqdiag/procedures.hpp"
#include "seqdiag/montecarlo.hpp"
#include "seqdiag/design.hpp"
