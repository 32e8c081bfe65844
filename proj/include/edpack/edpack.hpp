#pragma once

#include "edpack/analysis.hpp"
#include "edpack/config.hpp"
#include "edpack/corpus.hpp"
#include "edpack/dedup.hpp"
#include "edpack/filter.hpp"
#include "edpack/hash.hpp"
#include "edpack/pack.hpp"
#include "edpack/parallel.hpp"
#include "edpack/pipeline.hpp"
#include "edpack/report.hpp"
#include "edpack/shard.hpp"
#include "edpack/shuffle.hpp"
#include "edpack/splitmix.hpp"
#include "edpack/stream.hpp"
#include "edpack/tokenize.hpp"
