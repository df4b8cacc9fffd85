#pragma once

#include "tandem/bench.hpp"
#include "tandem/collection.hpp"
#include "tandem/errors.hpp"
#include "tandem/flat.hpp"
#include "tandem/fusion.hpp"
#include "tandem/hnsw.hpp"
#include "tandem/metrics.hpp"
#include "tandem/parallel.hpp"
#include "tandem/sparse.hpp"
#include "tandem/store.hpp"
#include "tandem/trec.hpp"
#include "tandem/vectors.hpp"
