#pragma once

#include "cemlab/basis_io.hpp"
#include "cemlab/domain.hpp"
#include "cemlab/errors.hpp"
#include "cemlab/grid_measure.hpp"
#include "cemlab/harness.hpp"
#include "cemlab/legendre.hpp"
#include "cemlab/limit_constant.hpp"
#include "cemlab/mc.hpp"
#include "cemlab/projection.hpp"
#include "cemlab/semigroup.hpp"
#include "cemlab/spectral_basis.hpp"
#include "cemlab/tail.hpp"
#include "cemlab/transport_bounds.hpp"
#include "cemlab/wasserstein.hpp"
