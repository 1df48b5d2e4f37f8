#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "archevo/arch_graph.hpp"

namespace archevo {

// Point masses (normalized depth, probability) sorted by depth.
using DepthMasses = std::vector<std::pair<double, double>>;

// Per op label, the distribution of depth(v) / max depth over interior nodes.
std::map<std::string, DepthMasses> depth_distribution(const BlockGraph& g);

// 1-D Wasserstein-1 distance between two point-mass distributions,
// integrated from the difference of their CDFs.
double emd_1d(const DepthMasses& a, const DepthMasses& b);

using WLHistogram = std::map<std::uint64_t, int>;

// Colors after `iterations` rounds on the interior-induced subgraph.
WLHistogram wl_histogram(const BlockGraph& g, int iterations = 2);

double op_similarity(const std::map<std::string, int>& hc, const std::map<std::string, int>& hp);
double depth_similarity(const BlockGraph& c, const BlockGraph& p);
double wl_similarity(const BlockGraph& c, const BlockGraph& p);

struct SimilarityBreakdown {
    double s_op = 1.0;
    double s_depth = 1.0;
    double s_wl = 1.0;
    double similarity = 1.0;
    double diversity = 0.0;
};

inline constexpr double kOpWeight = 0.50;
inline constexpr double kDepthWeight = 0.30;
inline constexpr double kWlWeight = 0.20;

// 1 - clamp(0.5 s_op + 0.3 s_depth + 0.2 s_wl, 0, 1).
double blend_diversity(double s_op, double s_depth, double s_wl);

SimilarityBreakdown similarity_breakdown(const BlockGraph& c, const BlockGraph& p);

// Null pointers stand for a missing graph, which yields 1.
double structural_diversity(const BlockGraph* c, const BlockGraph* p);

} // namespace archevo
