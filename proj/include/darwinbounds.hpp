#pragma once

#include "darwinbounds/core.hpp"
#include "darwinbounds/random.hpp"
#include "darwinbounds/qstate.hpp"
#include "darwinbounds/measurement.hpp"
#include "darwinbounds/branching.hpp"
#include "darwinbounds/optimizer.hpp"
#include "darwinbounds/correlations.hpp"
#include "darwinbounds/fragments.hpp"
#include "darwinbounds/models.hpp"
#include "darwinbounds/bounds.hpp"
#include "darwinbounds/io.hpp"
#include "darwinbounds/cli.hpp"
