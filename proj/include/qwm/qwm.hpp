#pragma once

#include "qwm/quantum_core.hpp"
#include "qwm/work_distribution.hpp"
#include "qwm/ancilla_meter.hpp"
#include "qwm/chip_config.hpp"
#include "qwm/chip_sim.hpp"
