// Convenience umbrella: pulls in the whole library.
#pragma once

#include "oodscope/common.hpp"
#include "oodscope/eigen_analysis.hpp"
#include "oodscope/gaussian.hpp"
#include "oodscope/io.hpp"
#include "oodscope/linalg.hpp"
#include "oodscope/metrics.hpp"
#include "oodscope/scoring.hpp"
#include "oodscope/simulation.hpp"
