#pragma once

#include "lig/adam.hpp"
#include "lig/binary_io.hpp"
#include "lig/common.hpp"
#include "lig/decoder.hpp"
#include "lig/geometry.hpp"
#include "lig/grid_optimizer.hpp"
#include "lig/kdtree.hpp"
#include "lig/latent_grid.hpp"
#include "lig/mesh_io.hpp"
#include "lig/metrics.hpp"
#include "lig/part_corpus.hpp"
#include "lig/postprocess.hpp"
#include "lig/surface_extraction.hpp"
#include "lig/train.hpp"
