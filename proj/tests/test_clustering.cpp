#include <doctest.h>

#include "pktsig/clustering.hpp"
#include "pktsig/util.hpp"

#include "support/dbscan_ref.hpp"

using namespace pktsig;

namespace {

PacketPair mk_pair(Direction d1, int l1, std::optional<int> l2, Micros ts) {
    PacketPair p;
    p.first.direction = d1;
    p.first.length = l1;
    p.first.ts_us = ts;
    if (l2) {
        PacketMeta second;
        second.direction = flipped(d1);
        second.length = *l2;
        second.ts_us = ts + 5;
        p.second = second;
    }
    return p;
}

std::vector<PacketPair> repeated(Direction d, int l1, int l2, int count, Micros base) {
    std::vector<PacketPair> out;
    for (int i = 0; i < count; ++i)
        out.push_back(mk_pair(d, l1, l2, base + i * 1000));
    return out;
}

} // namespace

TEST_CASE("two well-separated clusters keep their frequencies") {
    // 50 instances of (C-556, S-1293) and 98 of (C-237, S-826)
    auto pairs = repeated(Direction::ClientToServer, 556, 1293, 50, 0);
    auto more = repeated(Direction::ClientToServer, 237, 826, 98, 100);
    pairs.insert(pairs.end(), more.begin(), more.end());

    auto result = dbscan_pairs(pairs, 10.0, default_min_pts(50));
    REQUIRE(result.clusters.size() == 2);
    std::vector<int> freqs{result.clusters[0].frequency, result.clusters[1].frequency};
    std::sort(freqs.begin(), freqs.end());
    CHECK(freqs[0] == 50);
    CHECK(freqs[1] == 98);
    CHECK(result.noise.empty());
}

TEST_CASE("fewer points than minPts all become noise") {
    auto pairs = repeated(Direction::ClientToServer, 556, 1293, 44, 0);
    auto result = dbscan_pairs(pairs, 10.0, 45);
    CHECK(result.clusters.empty());
    CHECK(result.noise.size() == 44);
}

TEST_CASE("spread within eps forms one cluster") {
    std::vector<PacketPair> pairs;
    Rng rng(7);
    for (int i = 0; i < 50; ++i)
        pairs.push_back(mk_pair(Direction::ClientToServer, rng.uniform_int(338, 339),
                                rng.uniform_int(541, 542), i * 1000));
    auto result = dbscan_pairs(pairs, 10.0, 45);
    REQUIRE(result.clusters.size() == 1);
    CHECK(result.clusters[0].frequency == 50);
    CHECK(result.clusters[0].core_min1 >= 338);
    CHECK(result.clusters[0].core_max1 <= 339);
}

TEST_CASE("empty input clusters to nothing") {
    auto result = dbscan_pairs({}, 10.0, 45);
    CHECK(result.clusters.empty());
    CHECK(result.noise.empty());
}

TEST_CASE("default minPts follows floor(n - 0.1n)") {
    CHECK(default_min_pts(50) == 45);
    CHECK(default_min_pts(100) == 90);
    CHECK(default_min_pts(7) == 6);
}

TEST_CASE("pruning keeps the [floor(n-0.1n), ceil(n+0.1n)] band") {
    CHECK(prune_lower(50) == 45);
    CHECK(prune_upper(50) == 55);

    auto cluster_of = [](int freq) {
        PairCluster c;
        c.frequency = freq;
        return c;
    };
    std::vector<PairCluster> clusters;
    for (int f : {44, 45, 50, 55, 56, 98}) clusters.push_back(cluster_of(f));
    auto kept = prune_clusters(clusters, 50);
    REQUIRE(kept.size() == 3);
    CHECK(kept[0].frequency == 45);
    CHECK(kept[1].frequency == 50);
    CHECK(kept[2].frequency == 55);
}

TEST_CASE("pruning is monotonic in the cluster list") {
    Rng rng(11);
    for (int trial = 0; trial < 50; ++trial) {
        std::vector<PairCluster> clusters;
        int count = rng.uniform_int(1, 12);
        for (int i = 0; i < count; ++i) {
            PairCluster c;
            c.frequency = rng.uniform_int(1, 120);
            clusters.push_back(c);
        }
        auto kept_before = prune_clusters(clusters, 50);
        PairCluster extra;
        extra.frequency = rng.uniform_int(1, 120);
        clusters.push_back(extra);
        auto kept_after = prune_clusters(clusters, 50);
        // adding a cluster never removes a previously kept one
        CHECK(kept_after.size() >= kept_before.size());
        for (std::size_t i = 0; i < kept_before.size(); ++i)
            CHECK(kept_after[i].frequency == kept_before[i].frequency);
    }
}

TEST_CASE("matches the brute-force reference on randomized inputs") {
    Rng rng(2024);
    for (int trial = 0; trial < 40; ++trial) {
        std::vector<PacketPair> pairs;
        int blob_count = rng.uniform_int(1, 5);
        Micros ts = 0;
        for (int b = 0; b < blob_count; ++b) {
            int center1 = rng.uniform_int(100, 1300);
            int center2 = rng.uniform_int(100, 1300);
            int members = rng.uniform_int(5, 80);
            Direction dir = rng.chance(0.5) ? Direction::ClientToServer
                                            : Direction::ServerToClient;
            bool with_second = rng.chance(0.8);
            for (int m = 0; m < members; ++m) {
                int jitter1 = rng.uniform_int(-8, 8);
                int jitter2 = rng.uniform_int(-8, 8);
                pairs.push_back(mk_pair(dir, center1 + jitter1,
                                        with_second ? std::optional<int>(center2 + jitter2)
                                                    : std::nullopt,
                                        ts));
                ts += rng.uniform_i64(1, 500);
            }
        }
        double eps = static_cast<double>(rng.uniform_int(1, 15));
        int min_pts = rng.uniform_int(2, 40);

        auto mine = dbscan_pairs(pairs, eps, min_pts);
        auto ref = testing::dbscan_reference(pairs, eps, min_pts);

        REQUIRE(mine.clusters.size() == ref.clusters.size());
        for (std::size_t c = 0; c < mine.clusters.size(); ++c)
            CHECK(mine.clusters[c].members == ref.clusters[c]);
        CHECK(mine.noise == ref.noise);
    }
}
