#pragma once

#include "pktsig/types.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace pktsig {

inline constexpr const char* kToolVersion = "pktsig 0.1.0";

// One matched position: direction plus the trained length bounds. `obs_*` are
// the observed min/max over all training members; `core_*` come from the
// clustering core points and feed range-based matching.
struct SignaturePosition {
    Direction dir{Direction::ClientToServer};
    int obs_min{0}, obs_max{0};
    int core_min{0}, core_max{0};
};

struct SignatureSet {
    std::vector<SignaturePosition> positions;
};

struct Provenance {
    std::string capture_sha256{"-"};
    double window_t_s{15.0};
    double eps{10.0};
    int min_pts{0};
    std::string tool{kToolVersion};
};

struct Signature {
    std::string id;
    std::string device;
    std::string label;
    CommClass comm{CommClass::DeviceCloud};
    int layer2_offset{80};
    Micros duration_min_us{0};
    Micros duration_avg_us{0};
    Micros duration_max_us{0};
    std::vector<SignatureSet> sets;
    Provenance provenance;

    int total_packets() const;
    std::int64_t duration_max_ms() const; // ceil to whole milliseconds
    bool same_shape(const Signature& o) const;
    std::string pattern_string() const; // e.g. "S1: C-556 S-1293"
};

enum class MatchStrategy { Exact, Range, Relaxed };

const char* strategy_name(MatchStrategy s);

// Per-set, per-position matching rule used by the detection machines:
// expected direction plus inclusive byte bounds.
struct BoundPosition {
    Direction dir{Direction::ClientToServer};
    int lo{0};
    int hi{0};
};

struct MatchBounds {
    MatchStrategy strategy{MatchStrategy::Exact};
    std::vector<std::vector<BoundPosition>> sets;

    bool matches(std::size_t set, std::size_t pos, Direction d, int length) const {
        const BoundPosition& b = sets[set][pos];
        return d == b.dir && length >= b.lo && length <= b.hi;
    }

    // Wi-Fi view: every bound shifted up by the layer-2 offset.
    MatchBounds shifted(int offset) const;
};

// Exact matching: only lengths observed during training are valid (positions
// with training variation keep their observed min/max).
MatchBounds exact_bounds(const Signature& sig);

// Range matching: eps applied around the clustering core points, clamped at 0.
MatchBounds range_bounds(const Signature& sig, double eps = 10.0);
std::pair<int, int> range_bounds_for(int core_min, int core_max, double eps);

// Relaxed matching: widens only the listed flattened positions by +/- delta
// around the trained bounds; an empty position list leaves everything as-is.
MatchBounds relaxed_bounds(const Signature& sig, int delta, const std::vector<int>& positions);

// Maximum span allowed for a full signature match: the trained maximum
// duration plus a 10% slack, to the nearest millisecond.
std::int64_t detection_window_ms(std::int64_t duration_max_ms);

// Range matching falls back to exact when the signature has only two packets
// or when two same-device signatures overlap after widening.
bool range_matching_applicable(const Signature& sig, const std::vector<Signature>& same_device,
                               double eps = 10.0);

// Shift every position's bounds by a per-direction constant (tunnel header
// accounting). Negative results clamp at 0.
Signature shift_signature_lengths(const Signature& sig, int c2s_delta, int s2c_delta);

std::string serialize(const Signature& sig);
Signature deserialize(const std::string& text);
Signature load_signature(const std::string& path);
void save_signature(const Signature& sig, const std::string& path);

struct CompareReport {
    bool same_shape{false};
    std::vector<int> deltas; // per flattened position, b - a
    int max_abs_delta{0};
    std::string mismatch_reason;
};

CompareReport compare_signatures(const Signature& a, const Signature& b);

} // namespace pktsig
