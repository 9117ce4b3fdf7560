// acdc.hpp - everything.
#pragma once

#include "acdc/error.hpp"
#include "acdc/traffic.hpp"
#include "acdc/flowset_io.hpp"
#include "acdc/synthetic.hpp"
#include "acdc/encode.hpp"
#include "acdc/models/metrics.hpp"
#include "acdc/models/ensemble.hpp"
#include "acdc/models/importance.hpp"
#include "acdc/models/flowstats.hpp"
#include "acdc/explore.hpp"
#include "acdc/profile.hpp"
#include "acdc/schedule.hpp"
#include "acdc/simulate.hpp"
