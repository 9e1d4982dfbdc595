#pragma once

// Umbrella header for the spin-simulation library.

#include "spinsim/spin_core.hpp"
#include "spinsim/hamiltonian.hpp"
#include "spinsim/mq_coherence.hpp"
#include "spinsim/pulse_engine.hpp"
#include "spinsim/logic.hpp"
#include "spinsim/spectra.hpp"
#include "spinsim/experiment.hpp"
#include "spinsim/config.hpp"
#include "spinsim/cli_runner.hpp"
