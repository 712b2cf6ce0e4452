#pragma once

// Convenience header pulling in the whole library.

#include "camo/config.hpp"
#include "camo/error.hpp"
#include "camo/eval.hpp"
#include "camo/flow.hpp"
#include "camo/geometry.hpp"
#include "camo/image.hpp"
#include "camo/parallel.hpp"
#include "camo/png_io.hpp"
#include "camo/random.hpp"
#include "camo/registration.hpp"
#include "camo/segmentation.hpp"
#include "camo/sequence_io.hpp"
#include "camo/synthgen.hpp"
