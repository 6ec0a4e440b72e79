#pragma once

#include "neqlab/config.hpp"
#include "neqlab/eq_model.hpp"
#include "neqlab/evaluation.hpp"
#include "neqlab/fpe.hpp"
#include "neqlab/langevin.hpp"
#include "neqlab/manifest.hpp"
#include "neqlab/nn.hpp"
#include "neqlab/noneq_model.hpp"
#include "neqlab/pipeline.hpp"
#include "neqlab/potential.hpp"
#include "neqlab/rng.hpp"
#include "neqlab/types.hpp"
