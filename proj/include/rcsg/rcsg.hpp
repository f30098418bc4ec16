#pragma once

#include "rcsg/mesh.hpp"
#include "rcsg/sparse.hpp"
#include "rcsg/field.hpp"
#include "rcsg/assembly.hpp"
#include "rcsg/energy.hpp"
#include "rcsg/gradients.hpp"
#include "rcsg/line_search.hpp"
#include "rcsg/optimizer.hpp"
#include "rcsg/verifier.hpp"
#include "rcsg/io.hpp"
