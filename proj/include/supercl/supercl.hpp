#pragma once

#include "supercl/augment.hpp"
#include "supercl/errors.hpp"
#include "supercl/gradcheck.hpp"
#include "supercl/igcp.hpp"
#include "supercl/ilcp.hpp"
#include "supercl/image.hpp"
#include "supercl/infonce.hpp"
#include "supercl/network.hpp"
#include "supercl/npy.hpp"
#include "supercl/positive_set.hpp"
#include "supercl/pretrain.hpp"
#include "supercl/rng.hpp"
#include "supercl/superpixel.hpp"
#include "supercl/tensor.hpp"
