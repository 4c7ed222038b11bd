#include "pktsig/clustering.hpp"

#include <algorithm>
#include <numeric>
#include <set>

namespace pktsig {

ClusteringResult dbscan_pairs(std::span<const PacketPair> pairs, double eps, int min_pts) {
    const int n = static_cast<int>(pairs.size());
    ClusteringResult result;
    if (n == 0) return result;

    // fixed visiting order: first-packet timestamp, input position as tie-break
    std::vector<int> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&pairs](int a, int b) {
        return pairs[a].first_ts() < pairs[b].first_ts();
    });
    std::vector<int> rank(n); // position of each point in the visiting order
    for (int i = 0; i < n; ++i) rank[order[i]] = i;

    auto neighbors_of = [&](int idx) {
        std::vector<int> out;
        for (int j : order)
            if (pair_distance(pairs[idx], pairs[j]) <= eps) out.push_back(j);
        return out; // visiting order, includes idx itself
    };

    constexpr int kUnvisited = -2;
    constexpr int kNoise = -1;
    std::vector<int> label(n, kUnvisited);
    std::vector<bool> is_core(n, false);

    for (int seed : order) {
        if (label[seed] != kUnvisited) continue;
        auto seed_neighbors = neighbors_of(seed);
        if (static_cast<int>(seed_neighbors.size()) < min_pts) {
            label[seed] = kNoise;
            continue;
        }
        int cluster_id = static_cast<int>(result.clusters.size());
        is_core[seed] = true;
        label[seed] = cluster_id;

        std::vector<int> frontier = std::move(seed_neighbors);
        for (std::size_t qi = 0; qi < frontier.size(); ++qi) {
            int q = frontier[qi];
            if (label[q] == kNoise) label[q] = cluster_id; // border point
            if (label[q] != kUnvisited) continue;
            label[q] = cluster_id;
            auto q_neighbors = neighbors_of(q);
            if (static_cast<int>(q_neighbors.size()) >= min_pts) {
                is_core[q] = true;
                frontier.insert(frontier.end(), q_neighbors.begin(), q_neighbors.end());
            }
        }
        result.clusters.emplace_back();
    }

    for (int i = 0; i < n; ++i)
        if (label[i] == kNoise) result.noise.push_back(i);

    for (int i : order) {
        if (label[i] < 0) continue;
        result.clusters[static_cast<std::size_t>(label[i])].members.push_back(i);
    }

    for (PairCluster& cluster : result.clusters) {
        std::sort(cluster.members.begin(), cluster.members.end());
        cluster.frequency = static_cast<int>(cluster.members.size());
        const PacketPair& head = pairs[cluster.members.front()];
        cluster.pattern_dir = head.dir();
        cluster.pattern_has_second = head.has_second();

        std::set<std::pair<int, int>> cores;
        for (int m : cluster.members)
            if (is_core[m]) cores.emplace(pairs[m].len1(), pairs[m].len2());
        cluster.core_points.assign(cores.begin(), cores.end());
        cluster.core_min1 = cluster.core_points.front().first;
        cluster.core_max1 = cluster.core_points.front().first;
        cluster.core_min2 = cluster.core_points.front().second;
        cluster.core_max2 = cluster.core_points.front().second;
        for (const auto& [l1, l2] : cluster.core_points) {
            cluster.core_min1 = std::min(cluster.core_min1, l1);
            cluster.core_max1 = std::max(cluster.core_max1, l1);
            cluster.core_min2 = std::min(cluster.core_min2, l2);
            cluster.core_max2 = std::max(cluster.core_max2, l2);
        }
    }
    return result;
}

std::vector<PairCluster> prune_clusters(std::vector<PairCluster> clusters, int n) {
    int lo = prune_lower(n);
    int hi = prune_upper(n);
    std::vector<PairCluster> out;
    out.reserve(clusters.size());
    for (PairCluster& c : clusters)
        if (c.frequency >= lo && c.frequency <= hi) out.push_back(std::move(c));
    return out;
}

} // namespace pktsig
