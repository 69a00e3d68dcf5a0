#pragma once

#include "dgnn/core.hpp"
#include "dgnn/datasets.hpp"
#include "dgnn/gradcheck.hpp"
#include "dgnn/graph.hpp"
#include "dgnn/gsd.hpp"
#include "dgnn/oracle.hpp"
#include "dgnn/run_config.hpp"
#include "dgnn/tape.hpp"
#include "dgnn/trainer.hpp"
#include "dgnn/types.hpp"
