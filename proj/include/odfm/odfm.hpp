#pragma once

#include "odfm/adequacy.hpp"
#include "odfm/common.hpp"
#include "odfm/datamodel.hpp"
#include "odfm/factors.hpp"
#include "odfm/io.hpp"
#include "odfm/moments.hpp"
#include "odfm/outliers.hpp"
#include "odfm/presets.hpp"
#include "odfm/random.hpp"
#include "odfm/simulation.hpp"
#include "odfm/var.hpp"
