#pragma once

#include "swarmchain/allocation.hpp"
#include "swarmchain/bench.hpp"
#include "swarmchain/chain.hpp"
#include "swarmchain/codec.hpp"
#include "swarmchain/error.hpp"
#include "swarmchain/estimator.hpp"
#include "swarmchain/io.hpp"
#include "swarmchain/pow.hpp"
#include "swarmchain/quality.hpp"
#include "swarmchain/rng.hpp"
#include "swarmchain/scenario.hpp"
#include "swarmchain/sha256.hpp"
#include "swarmchain/sim.hpp"
#include "swarmchain/types.hpp"
