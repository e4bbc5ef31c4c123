#pragma once

#include "lebm/adam.hpp"
#include "lebm/checkpoint.hpp"
#include "lebm/config.hpp"
#include "lebm/data.hpp"
#include "lebm/eval.hpp"
#include "lebm/gaussian.hpp"
#include "lebm/langevin.hpp"
#include "lebm/mlp.hpp"
#include "lebm/model.hpp"
#include "lebm/oracle.hpp"
#include "lebm/rng.hpp"
#include "lebm/tape.hpp"
#include "lebm/tensor.hpp"
#include "lebm/trainer.hpp"
#include "lebm/util.hpp"
#include "lebm/version.hpp"
