#pragma once

#include "prunelab/dataset.hpp"
#include "prunelab/engine.hpp"
#include "prunelab/error.hpp"
#include "prunelab/mask.hpp"
#include "prunelab/models.hpp"
#include "prunelab/pruning.hpp"
#include "prunelab/rng.hpp"
#include "prunelab/sanity.hpp"
#include "prunelab/schedules.hpp"
#include "prunelab/tensor.hpp"
#include "prunelab/tickets.hpp"
#include "prunelab/training.hpp"
