#pragma once

#include "driftsearch/environment.hpp"
#include "driftsearch/errors.hpp"
#include "driftsearch/exec_client.hpp"
#include "driftsearch/report.hpp"
#include "driftsearch/search.hpp"
#include "driftsearch/semver.hpp"
#include "driftsearch/sim.hpp"
#include "driftsearch/universe.hpp"
#include "driftsearch/upgrade_matrix.hpp"
#include "driftsearch/validation.hpp"
