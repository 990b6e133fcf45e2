#pragma once

#include "wtarm/aer.hpp"
#include "wtarm/analysis.hpp"
#include "wtarm/angle_selector.hpp"
#include "wtarm/pipeline.hpp"
#include "wtarm/plant.hpp"
#include "wtarm/plot.hpp"
#include "wtarm/rng.hpp"
#include "wtarm/scenario.hpp"
#include "wtarm/spid.hpp"
#include "wtarm/spiking_core.hpp"
#include "wtarm/types.hpp"
#include "wtarm/wta.hpp"
