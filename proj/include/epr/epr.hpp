#pragma once

// Umbrella header for the relativistic singlet spin-correlation library.

#include "epr/amplitude.hpp"
#include "epr/correlator.hpp"
#include "epr/detector.hpp"
#include "epr/integrals.hpp"
#include "epr/kinematics.hpp"
#include "epr/quadrature.hpp"
#include "epr/wavepacket.hpp"
