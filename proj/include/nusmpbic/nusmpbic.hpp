#pragma once

#include "nusmpbic/physics.hpp"
#include "nusmpbic/mesh.hpp"
#include "nusmpbic/synthetic.hpp"
#include "nusmpbic/assembly.hpp"
#include "nusmpbic/linear_solver.hpp"
#include "nusmpbic/singular_field.hpp"
#include "nusmpbic/model2.hpp"
#include "nusmpbic/model3.hpp"
#include "nusmpbic/energy.hpp"
#include "nusmpbic/pqr.hpp"
#include "nusmpbic/config_file.hpp"
#include "nusmpbic/curves.hpp"
#include "nusmpbic/vtk.hpp"
