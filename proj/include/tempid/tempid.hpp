#pragma once

#include "tempid/diagram.hpp"
#include "tempid/emc.hpp"
#include "tempid/errors.hpp"
#include "tempid/families.hpp"
#include "tempid/graph.hpp"
#include "tempid/model_io.hpp"
#include "tempid/models/infection.hpp"
#include "tempid/models/toxicity.hpp"
#include "tempid/oracle.hpp"
#include "tempid/rng.hpp"
#include "tempid/sampler.hpp"
#include "tempid/validate.hpp"
