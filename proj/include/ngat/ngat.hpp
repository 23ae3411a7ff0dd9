#pragma once

#include "ngat/errors.hpp"
#include "ngat/numerics.hpp"
#include "ngat/market_data.hpp"
#include "ngat/relation_graph.hpp"
#include "ngat/model.hpp"
#include "ngat/gradcheck.hpp"
#include "ngat/training.hpp"
#include "ngat/eval.hpp"
#include "ngat/compare.hpp"
#include "ngat/synthetic.hpp"
