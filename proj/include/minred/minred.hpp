#pragma once

#include "minred/agents.hpp"
#include "minred/config.hpp"
#include "minred/csv.hpp"
#include "minred/entropy.hpp"
#include "minred/envs.hpp"
#include "minred/harness.hpp"
#include "minred/mdp.hpp"
#include "minred/mdp_io.hpp"
#include "minred/posterior.hpp"
#include "minred/redundancy.hpp"
#include "minred/replay.hpp"
#include "minred/report.hpp"
#include "minred/rng.hpp"
#include "minred/verify.hpp"
