#pragma once

#include "pktsig/pairs.hpp"

#include <span>
#include <utility>
#include <vector>

namespace pktsig {

inline constexpr double kDefaultEps = 10.0;

// floor(n - 0.1n) and the pruning interval [floor(n - 0.1n), ceil(n + 0.1n)].
inline int default_min_pts(int n) { return (9 * n) / 10; }
inline int prune_lower(int n) { return (9 * n) / 10; }
inline int prune_upper(int n) { return (11 * n + 9) / 10; }

struct PairCluster {
    std::vector<int> members; // indices into the clustering input, ascending
    int frequency{0};
    Direction pattern_dir{Direction::ClientToServer};
    bool pattern_has_second{true};
    // unique (len1, len2) tuples of core members; len2 = 0 for nil pairs
    std::vector<std::pair<int, int>> core_points;
    int core_min1{0}, core_max1{0}, core_min2{0}, core_max2{0};
};

struct ClusteringResult {
    std::vector<PairCluster> clusters;
    std::vector<int> noise; // indices of noise points
};

// DBSCAN over pair_distance. Points are visited in ascending order of first
// packet timestamp, so border points deterministically join the first cluster
// that reaches them. A point is core when its eps-neighborhood (including
// itself) holds at least min_pts points.
ClusteringResult dbscan_pairs(std::span<const PacketPair> pairs, double eps, int min_pts);

// Keeps clusters whose frequency lies in [floor(n-0.1n), ceil(n+0.1n)].
std::vector<PairCluster> prune_clusters(std::vector<PairCluster> clusters, int n);

} // namespace pktsig
