#pragma once

#include "graphcpd/baselines.hpp"
#include "graphcpd/config.hpp"
#include "graphcpd/dataio.hpp"
#include "graphcpd/detector.hpp"
#include "graphcpd/eval.hpp"
#include "graphcpd/graph.hpp"
#include "graphcpd/special_functions.hpp"
#include "graphcpd/spectral.hpp"
#include "graphcpd/superpixel.hpp"
#include "graphcpd/types.hpp"
