#pragma once

#include "minfo/builtins.hpp"
#include "minfo/information.hpp"
#include "minfo/markov.hpp"
#include "minfo/model.hpp"
#include "minfo/policy.hpp"
#include "minfo/reduction.hpp"
#include "minfo/simulator.hpp"
#include "minfo/solver.hpp"
#include "minfo/sweep.hpp"
#include "minfo/value_function.hpp"
