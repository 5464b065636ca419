#pragma once

#include "sitewatch/error.hpp"
#include "sitewatch/geometry.hpp"
#include "sitewatch/rng.hpp"
#include "sitewatch/json_io.hpp"
#include "sitewatch/clipstore.hpp"
#include "sitewatch/scenario.hpp"
#include "sitewatch/matching.hpp"
#include "sitewatch/tracker.hpp"
#include "sitewatch/alertgate.hpp"
#include "sitewatch/alertnet.hpp"
#include "sitewatch/runlog.hpp"
#include "sitewatch/evalharness.hpp"
#include "sitewatch/controlplane.hpp"
#include "sitewatch/corpus.hpp"
