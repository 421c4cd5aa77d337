#pragma once

// Umbrella header: the whole library in one include.

#include "omniseg/ablate.hpp"
#include "omniseg/aplr.hpp"
#include "omniseg/augment.hpp"
#include "omniseg/dataset.hpp"
#include "omniseg/image.hpp"
#include "omniseg/mask.hpp"
#include "omniseg/metrics.hpp"
#include "omniseg/model.hpp"
#include "omniseg/plot.hpp"
#include "omniseg/rng.hpp"
#include "omniseg/synthgen.hpp"
#include "omniseg/trainer.hpp"
#include "omniseg/util.hpp"
