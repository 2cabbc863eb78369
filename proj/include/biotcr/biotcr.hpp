#pragma once

#include "biotcr/mesh.hpp"
#include "biotcr/quadrature.hpp"
#include "biotcr/fespace.hpp"
#include "biotcr/smoothers.hpp"
#include "biotcr/assembly.hpp"
#include "biotcr/solver.hpp"
#include "biotcr/analysis.hpp"
#include "biotcr/manufactured.hpp"
#include "biotcr/config.hpp"
#include "biotcr/io.hpp"
#include "biotcr/app.hpp"
