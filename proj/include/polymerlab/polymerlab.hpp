#pragma once

#include "polymerlab/disorder.hpp"
#include "polymerlab/error.hpp"
#include "polymerlab/experiment.hpp"
#include "polymerlab/graph.hpp"
#include "polymerlab/graph_spec.hpp"
#include "polymerlab/local_chain.hpp"
#include "polymerlab/partition_dp.hpp"
#include "polymerlab/replica_moments.hpp"
#include "polymerlab/walk_diagnostics.hpp"
