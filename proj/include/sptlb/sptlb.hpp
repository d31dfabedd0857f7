#pragma once

#include "sptlb/error.hpp"
#include "sptlb/evaluation.hpp"
#include "sptlb/generator.hpp"
#include "sptlb/hierarchy.hpp"
#include "sptlb/io.hpp"
#include "sptlb/model.hpp"
#include "sptlb/problem.hpp"
#include "sptlb/random.hpp"
#include "sptlb/solvers.hpp"
