#pragma once

#include "vlift/bsde.hpp"
#include "vlift/config.hpp"
#include "vlift/control.hpp"
#include "vlift/csv.hpp"
#include "vlift/error.hpp"
#include "vlift/forward.hpp"
#include "vlift/hamiltonian.hpp"
#include "vlift/kernels.hpp"
#include "vlift/parallel.hpp"
#include "vlift/pipeline.hpp"
#include "vlift/problem.hpp"
#include "vlift/regression.hpp"
#include "vlift/rng.hpp"
#include "vlift/statespace.hpp"
