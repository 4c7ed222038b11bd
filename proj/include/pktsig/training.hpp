#pragma once

#include "pktsig/clustering.hpp"
#include "pktsig/events.hpp"
#include "pktsig/ingest.hpp"
#include "pktsig/signature.hpp"

#include <optional>
#include <string>
#include <vector>

namespace pktsig {

struct TrainParams {
    double window_t_s{15.0};
    double eps{10.0};
    std::optional<int> min_pts; // default: floor(n - 0.1n) per label
    int layer2_offset{kDefaultLayer2Offset};
    std::string device{"device"};
};

// Keeps packets that fall inside some event window [e.ts, e.ts + window_t]
// and tags them with the window index. Overlapping windows are a fatal
// configuration error; spacing below twice the window only warns.
std::vector<PacketMeta> filter_trace(std::span<const PacketMeta> packets, const EventLog& events,
                                     double window_t_s, std::vector<std::string>* warnings = nullptr);

// A group of similar packet sequences plus where they were seen.
struct SequenceSet {
    std::vector<Direction> directions;      // per position
    std::vector<int> obs_min, obs_max;      // trained bounds per position
    std::vector<int> core_min, core_max;    // clustering core bounds per position
    std::vector<std::vector<int>> variations; // unique length tuples, sorted

    struct Occurrence {
        Micros first_ts{0};
        Micros last_ts{0};
        int conn_id{0};
        int event_window{-1};
    };
    std::vector<Occurrence> occurrences;

    std::size_t length() const { return directions.size(); }
};

// Joins clusters whose member pairs appear back to back in the same TCP
// connection into longer sequences (extra members of the larger cluster are
// dropped); unmergeable clusters become single-pair sets.
std::vector<SequenceSet> concatenate_pairs(const std::vector<PairCluster>& clusters,
                                           std::span<const PacketPair> pairs);

struct OrderingResult {
    std::vector<SequenceSet> ordered;
    std::vector<std::string> notes; // discarded sets, diagnostics
};

// Sorts sets by the strict happens-before relation (every occurrence of the
// earlier set is followed by one of the later set within the window).
// Incomparable pairs drop the set with the shorter sequences; an unresolvable
// tie fails extraction.
OrderingResult order_sequence_sets(std::vector<SequenceSet> sets, double window_t_s);

struct DurationStats {
    Micros min_us{0};
    Micros avg_us{0};
    Micros max_us{0};
    int occurrences{0};
};

// Signature duration per event window: first packet of the first set to last
// packet of the last set, over windows where every set occurred.
DurationStats compute_duration_stats(const std::vector<SequenceSet>& ordered_sets);

struct ValidationResult {
    bool accepted{false};
    int match_count{0};
    int matched_windows{0};
    int expected{0};
    std::vector<Micros> extra_match_ts; // matches outside any event window
    std::string note;
};

// Runs detection over the unfiltered training capture: accept iff the match
// count stays at or below the trigger count and every match lands in a
// distinct window of this label's events. Label-indistinguishable signatures
// pass a slash-joined label ("ON/OFF") and validate against the union of
// those labels' windows.
ValidationResult validate_signature(const Signature& sig, const Capture& raw_capture,
                                    const EventLog& events, const std::string& label,
                                    double window_t_s);

struct LabelReport {
    std::string label;
    int event_count{0};
    int clusters_found{0};
    int clusters_kept{0};
    std::vector<std::string> notes;
    std::optional<Signature> signature;
    ValidationResult validation;
};

struct TrainingReport {
    std::vector<LabelReport> labels;
    std::vector<Signature> signatures; // validated only, label-merged
    std::vector<std::string> warnings;
};

// Full pipeline: filter, pair, cluster per label, prune, concatenate, order,
// validate. Identical signatures extracted for different labels are merged
// into one label-indistinguishable signature. The roster, when supplied,
// drives communication-class inference (device vs phone endpoints).
TrainingReport train(const Capture& capture, const EventLog& events, const TrainParams& params,
                     const std::string& capture_sha256 = "-");
TrainingReport train(const Capture& capture, const EventLog& events, const TrainParams& params,
                     const std::string& capture_sha256, const EndpointRoster& roster);

} // namespace pktsig
