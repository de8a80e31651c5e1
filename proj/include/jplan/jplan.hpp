#pragma once

#include "jplan/errors.hpp"
#include "jplan/trajectory.hpp"
#include "jplan/world.hpp"
#include "jplan/junction_solver.hpp"
#include "jplan/game.hpp"
#include "jplan/oracle.hpp"
#include "jplan/serialization.hpp"
