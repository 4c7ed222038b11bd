#include "pktsig/training.hpp"

#include "pktsig/detection.hpp"
#include "pktsig/reassembly.hpp"
#include "pktsig/util.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <limits>
#include <map>
#include <set>
#include <sstream>

namespace pktsig {

std::vector<PacketMeta> filter_trace(std::span<const PacketMeta> packets, const EventLog& events,
                                     double window_t_s, std::vector<std::string>* warnings) {
    if (window_t_s <= 0) throw ConfigError("training window must be positive");
    if (events.entries.empty()) throw ConfigError("event log is empty");

    const Micros window_us = static_cast<Micros>(std::llround(window_t_s * 1e6));
    for (std::size_t i = 1; i < events.entries.size(); ++i) {
        Micros gap = events.entries[i].ts_us - events.entries[i - 1].ts_us;
        if (gap <= window_us)
            throw ConfigError("event windows overlap: events " + std::to_string(i - 1) + " and " +
                              std::to_string(i) + " are " + std::to_string(gap / 1000) +
                              " ms apart with a " + std::to_string(window_us / 1000) +
                              " ms window");
        if (gap < 2 * window_us && warnings)
            warnings->push_back("events " + std::to_string(i - 1) + " and " + std::to_string(i) +
                                " are closer than twice the training window");
    }

    std::vector<PacketMeta> out;
    for (const PacketMeta& pkt : packets) {
        // last event starting at or before the packet; windows do not overlap
        auto it = std::upper_bound(events.entries.begin(), events.entries.end(), pkt.ts_us,
                                   [](Micros ts, const EventLog::Entry& e) { return ts < e.ts_us; });
        if (it == events.entries.begin()) continue;
        --it;
        if (pkt.ts_us > it->ts_us + window_us) continue;
        PacketMeta tagged = pkt;
        tagged.event_window = static_cast<std::int32_t>(it - events.entries.begin());
        out.push_back(tagged);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Pair concatenation (signature creation)
// ---------------------------------------------------------------------------

namespace {

struct Chain {
    int conn_id{0};
    int first_pair{0};
    int last_pair{0};
    std::vector<int> pair_ids; // indices into the label's pair span
};

struct WorkingSet {
    std::vector<Chain> chains;
    std::vector<int> core_min, core_max; // per position
    Micros earliest_ts{0};
};

Micros chain_first_ts(const Chain& c, std::span<const PacketPair> pairs) {
    return pairs[static_cast<std::size_t>(c.pair_ids.front())].first_ts();
}

Micros chain_last_ts(const Chain& c, std::span<const PacketPair> pairs) {
    return pairs[static_cast<std::size_t>(c.pair_ids.back())].last_ts();
}

// Every chain of `a` must have an immediate successor chain in `b` (same
// connection, next pair slot). Extra members of `b` are dropped.
bool try_join(const WorkingSet& a, const WorkingSet& b, std::span<const PacketPair> pairs,
              WorkingSet& out) {
    std::map<std::pair<int, int>, const Chain*> b_by_start;
    for (const Chain& bc : b.chains) b_by_start[{bc.conn_id, bc.first_pair}] = &bc;

    std::vector<Chain> joined;
    joined.reserve(a.chains.size());
    for (const Chain& ac : a.chains) {
        auto it = b_by_start.find({ac.conn_id, ac.last_pair + 1});
        if (it == b_by_start.end()) return false;
        Chain merged = ac;
        merged.last_pair = it->second->last_pair;
        merged.pair_ids.insert(merged.pair_ids.end(), it->second->pair_ids.begin(),
                               it->second->pair_ids.end());
        joined.push_back(std::move(merged));
    }

    out.chains = std::move(joined);
    out.core_min = a.core_min;
    out.core_max = a.core_max;
    out.core_min.insert(out.core_min.end(), b.core_min.begin(), b.core_min.end());
    out.core_max.insert(out.core_max.end(), b.core_max.begin(), b.core_max.end());
    out.earliest_ts = a.earliest_ts;
    for (const Chain& c : out.chains)
        out.earliest_ts = std::min(out.earliest_ts, chain_first_ts(c, pairs));
    return true;
}

// The anchor may also be the smaller, later cluster: every chain of `b` has an
// immediate predecessor in `a`; extra members of `a` are dropped.
bool try_join_anchored_on_second(const WorkingSet& a, const WorkingSet& b,
                                 std::span<const PacketPair> pairs, WorkingSet& out) {
    std::map<std::pair<int, int>, const Chain*> a_by_end;
    for (const Chain& ac : a.chains) a_by_end[{ac.conn_id, ac.last_pair}] = &ac;

    std::vector<Chain> joined;
    joined.reserve(b.chains.size());
    for (const Chain& bc : b.chains) {
        auto it = a_by_end.find({bc.conn_id, bc.first_pair - 1});
        if (it == a_by_end.end()) return false;
        Chain merged = *it->second;
        merged.last_pair = bc.last_pair;
        merged.pair_ids.insert(merged.pair_ids.end(), bc.pair_ids.begin(), bc.pair_ids.end());
        joined.push_back(std::move(merged));
    }
    std::sort(joined.begin(), joined.end(), [&pairs](const Chain& x, const Chain& y) {
        return chain_first_ts(x, pairs) < chain_first_ts(y, pairs);
    });

    out.chains = std::move(joined);
    out.core_min = a.core_min;
    out.core_max = a.core_max;
    out.core_min.insert(out.core_min.end(), b.core_min.begin(), b.core_min.end());
    out.core_max.insert(out.core_max.end(), b.core_max.begin(), b.core_max.end());
    out.earliest_ts = chain_first_ts(out.chains.front(), pairs);
    return true;
}

SequenceSet finalize_set(const WorkingSet& ws, std::span<const PacketPair> pairs) {
    SequenceSet set;
    set.core_min = ws.core_min;
    set.core_max = ws.core_max;

    std::set<std::vector<int>> unique;
    for (const Chain& chain : ws.chains) {
        std::vector<Direction> dirs;
        std::vector<int> lens;
        for (int pid : chain.pair_ids) {
            const PacketPair& p = pairs[static_cast<std::size_t>(pid)];
            dirs.push_back(p.dir());
            lens.push_back(p.len1());
            if (p.has_second()) {
                dirs.push_back(p.second->direction);
                lens.push_back(p.len2());
            }
        }
        if (set.directions.empty()) {
            set.directions = dirs;
            set.obs_min = lens;
            set.obs_max = lens;
        } else {
            for (std::size_t i = 0; i < lens.size(); ++i) {
                set.obs_min[i] = std::min(set.obs_min[i], lens[i]);
                set.obs_max[i] = std::max(set.obs_max[i], lens[i]);
            }
        }
        unique.insert(lens);

        SequenceSet::Occurrence occ;
        occ.first_ts = chain_first_ts(chain, pairs);
        occ.last_ts = chain_last_ts(chain, pairs);
        occ.conn_id = chain.conn_id;
        occ.event_window = pairs[static_cast<std::size_t>(chain.pair_ids.front())].event_window;
        set.occurrences.push_back(occ);
    }
    set.variations.assign(unique.begin(), unique.end());
    std::sort(set.occurrences.begin(), set.occurrences.end(),
              [](const auto& a, const auto& b) { return a.first_ts < b.first_ts; });
    return set;
}

} // namespace

std::vector<SequenceSet> concatenate_pairs(const std::vector<PairCluster>& clusters,
                                           std::span<const PacketPair> pairs) {
    std::vector<WorkingSet> sets;
    for (const PairCluster& cluster : clusters) {
        WorkingSet ws;
        ws.core_min.push_back(cluster.core_min1);
        ws.core_max.push_back(cluster.core_max1);
        if (cluster.pattern_has_second) {
            ws.core_min.push_back(cluster.core_min2);
            ws.core_max.push_back(cluster.core_max2);
        }
        ws.earliest_ts = std::numeric_limits<Micros>::max();
        for (int m : cluster.members) {
            const PacketPair& p = pairs[static_cast<std::size_t>(m)];
            Chain chain;
            chain.conn_id = p.conn_id;
            chain.first_pair = chain.last_pair = p.pair_index;
            chain.pair_ids.push_back(m);
            ws.earliest_ts = std::min(ws.earliest_ts, p.first_ts());
            ws.chains.push_back(std::move(chain));
        }
        std::sort(ws.chains.begin(), ws.chains.end(), [&pairs](const Chain& x, const Chain& y) {
            return chain_first_ts(x, pairs) < chain_first_ts(y, pairs);
        });
        sets.push_back(std::move(ws));
    }

    std::sort(sets.begin(), sets.end(),
              [](const WorkingSet& a, const WorkingSet& b) { return a.earliest_ts < b.earliest_ts; });

    // greedily merge earliest-first until no pair of sets concatenates
    bool merged = true;
    while (merged && sets.size() > 1) {
        merged = false;
        for (std::size_t i = 0; i < sets.size() && !merged; ++i) {
            for (std::size_t j = i + 1; j < sets.size() && !merged; ++j) {
                WorkingSet out;
                if (try_join(sets[i], sets[j], pairs, out) ||
                    try_join_anchored_on_second(sets[i], sets[j], pairs, out) ||
                    try_join(sets[j], sets[i], pairs, out) ||
                    try_join_anchored_on_second(sets[j], sets[i], pairs, out)) {
                    sets[i] = std::move(out);
                    sets.erase(sets.begin() + static_cast<std::ptrdiff_t>(j));
                    std::sort(sets.begin(), sets.end(), [](const WorkingSet& a, const WorkingSet& b) {
                        return a.earliest_ts < b.earliest_ts;
                    });
                    merged = true;
                }
            }
        }
    }

    std::vector<SequenceSet> out;
    out.reserve(sets.size());
    for (const WorkingSet& ws : sets) out.push_back(finalize_set(ws, pairs));
    return out;
}

// ---------------------------------------------------------------------------
// Set ordering and duration statistics
// ---------------------------------------------------------------------------

namespace {

// Definition-style happens-before: every occurrence of X is followed by an
// occurrence of Y within the window.
bool set_before(const SequenceSet& x, const SequenceSet& y, Micros window_us) {
    for (const auto& ox : x.occurrences) {
        bool followed = false;
        for (const auto& oy : y.occurrences) {
            if (oy.first_ts > ox.first_ts && oy.first_ts - ox.first_ts <= window_us) {
                followed = true;
                break;
            }
        }
        if (!followed) return false;
    }
    return !x.occurrences.empty();
}

} // namespace

OrderingResult order_sequence_sets(std::vector<SequenceSet> sets, double window_t_s) {
    OrderingResult result;
    const Micros window_us = static_cast<Micros>(std::llround(window_t_s * 1e6));

    std::vector<SequenceSet> remaining = std::move(sets);

    // the relation must be antisymmetric on training data; flag when it is not
    for (std::size_t i = 0; i < remaining.size(); ++i)
        for (std::size_t j = i + 1; j < remaining.size(); ++j)
            if (set_before(remaining[i], remaining[j], window_us) &&
                set_before(remaining[j], remaining[i], window_us))
                result.notes.push_back("ordering relation not antisymmetric between sets " +
                                       std::to_string(i) + " and " + std::to_string(j) +
                                       "; keeping the earlier one first");

    while (!remaining.empty()) {
        if (remaining.size() == 1) {
            result.ordered.push_back(std::move(remaining.front()));
            remaining.clear();
            break;
        }
        int first_idx = -1;
        for (std::size_t i = 0; i < remaining.size() && first_idx < 0; ++i) {
            bool before_all = true;
            for (std::size_t j = 0; j < remaining.size(); ++j) {
                if (i == j) continue;
                if (!set_before(remaining[i], remaining[j], window_us)) {
                    before_all = false;
                    break;
                }
            }
            if (before_all) first_idx = static_cast<int>(i);
        }
        if (first_idx >= 0) {
            result.ordered.push_back(std::move(remaining[static_cast<std::size_t>(first_idx)]));
            remaining.erase(remaining.begin() + first_idx);
            continue;
        }

        // no minimum: find an incomparable pair and drop the shorter set
        bool dropped = false;
        for (std::size_t i = 0; i < remaining.size() && !dropped; ++i) {
            for (std::size_t j = i + 1; j < remaining.size() && !dropped; ++j) {
                if (set_before(remaining[i], remaining[j], window_us) ||
                    set_before(remaining[j], remaining[i], window_us))
                    continue;
                std::size_t shorter =
                    remaining[i].length() < remaining[j].length() ? i
                    : remaining[j].length() < remaining[i].length() ? j
                                                                    : remaining.size();
                if (shorter == remaining.size()) {
                    result.ordered.clear();
                    result.notes.push_back(
                        "sets are mutually unordered with equal sequence lengths; "
                        "no signature can be formed");
                    return result;
                }
                result.notes.push_back("discarded a " +
                                       std::to_string(remaining[shorter].length()) +
                                       "-packet set that could not be ordered");
                remaining.erase(remaining.begin() + static_cast<std::ptrdiff_t>(shorter));
                dropped = true;
            }
        }
        if (!dropped) {
            result.ordered.clear();
            result.notes.push_back("sets form an ordering cycle; no signature can be formed");
            return result;
        }
    }
    return result;
}

DurationStats compute_duration_stats(const std::vector<SequenceSet>& ordered_sets) {
    DurationStats stats;
    if (ordered_sets.empty()) return stats;

    std::map<int, std::pair<Micros, Micros>> window_span; // window -> (first, last)
    std::map<int, std::size_t> window_sets;               // window -> sets seen
    for (std::size_t s = 0; s < ordered_sets.size(); ++s) {
        std::set<int> seen_windows;
        for (const auto& occ : ordered_sets[s].occurrences) {
            auto [it, fresh] = window_span.try_emplace(occ.event_window,
                                                       std::make_pair(occ.first_ts, occ.last_ts));
            if (!fresh) {
                it->second.first = std::min(it->second.first, occ.first_ts);
                it->second.second = std::max(it->second.second, occ.last_ts);
            }
            if (seen_windows.insert(occ.event_window).second) ++window_sets[occ.event_window];
        }
    }

    std::vector<Micros> durations;
    for (const auto& [window, span] : window_span) {
        if (window_sets[window] != ordered_sets.size()) continue; // incomplete occurrence
        durations.push_back(span.second - span.first);
    }
    if (durations.empty()) return stats;

    stats.occurrences = static_cast<int>(durations.size());
    stats.min_us = *std::min_element(durations.begin(), durations.end());
    stats.max_us = *std::max_element(durations.begin(), durations.end());
    long double sum = 0;
    for (Micros d : durations) sum += static_cast<long double>(d);
    stats.avg_us = static_cast<Micros>(std::llround(static_cast<double>(sum / durations.size())));
    return stats;
}

// ---------------------------------------------------------------------------
// Validation and the full pipeline
// ---------------------------------------------------------------------------

namespace {

std::vector<std::string> split_labels(const std::string& joined) {
    std::vector<std::string> out;
    std::size_t start = 0;
    while (start <= joined.size()) {
        std::size_t slash = joined.find('/', start);
        std::size_t end = slash == std::string::npos ? joined.size() : slash;
        out.push_back(joined.substr(start, end - start));
        if (slash == std::string::npos) break;
        start = slash + 1;
    }
    return out;
}

} // namespace

ValidationResult validate_signature(const Signature& sig, const Capture& raw_capture,
                                    const EventLog& events, const std::string& label,
                                    double window_t_s) {
    ValidationResult result;
    const std::vector<std::string> labels = split_labels(label);
    auto covered = [&labels](const std::string& l) {
        return std::find(labels.begin(), labels.end(), l) != labels.end();
    };
    for (const std::string& l : labels)
        result.expected += static_cast<int>(events.count_label(l));

    DetectOptions opt;
    opt.mode = sig.comm == CommClass::PhoneDevice ? SnifferMode::Wifi : SnifferMode::Wan;
    opt.strategy = MatchStrategy::Range; // auto-disables to exact when not applicable
    DetectReport report = detect(raw_capture, {sig}, opt);

    result.match_count = static_cast<int>(report.matches.size());
    const Micros window_us = static_cast<Micros>(std::llround(window_t_s * 1e6));
    std::vector<bool> consumed(events.entries.size(), false);
    for (const MatchEvent& m : report.matches) {
        bool placed = false;
        for (std::size_t e = 0; e < events.entries.size(); ++e) {
            if (consumed[e] || !covered(events.entries[e].label)) continue;
            Micros start = events.entries[e].ts_us;
            if (m.first_ts >= start && m.first_ts <= start + window_us) {
                consumed[e] = true;
                ++result.matched_windows;
                placed = true;
                break;
            }
        }
        if (!placed) result.extra_match_ts.push_back(m.first_ts);
    }

    result.accepted = result.match_count <= result.expected && result.extra_match_ts.empty();
    std::ostringstream note;
    if (!result.accepted) {
        note << "rejected: " << result.match_count << " matches for " << result.expected
             << " events, " << result.extra_match_ts.size() << " outside event windows";
    } else if (result.matched_windows < result.expected) {
        note << "accepted; recall " << result.matched_windows << "/" << result.expected
             << " on the training capture";
    } else {
        note << "accepted";
    }
    result.note = note.str();
    return result;
}

namespace {

std::string slug(const std::string& text) {
    std::string out;
    for (char c : text) {
        if (std::isalnum(static_cast<unsigned char>(c)))
            out.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
        else if (!out.empty() && out.back() != '-')
            out.push_back('-');
    }
    while (!out.empty() && out.back() == '-') out.pop_back();
    return out.empty() ? "x" : out;
}

bool identical_signature(const Signature& a, const Signature& b) {
    if (!a.same_shape(b)) return false;
    for (std::size_t s = 0; s < a.sets.size(); ++s)
        for (std::size_t p = 0; p < a.sets[s].positions.size(); ++p) {
            const auto& pa = a.sets[s].positions[p];
            const auto& pb = b.sets[s].positions[p];
            if (pa.obs_min != pb.obs_min || pa.obs_max != pb.obs_max ||
                pa.core_min != pb.core_min || pa.core_max != pb.core_max)
                return false;
        }
    return true;
}

CommClass infer_comm_class(const std::vector<Connection>& connections,
                           const std::vector<SequenceSet>& sets, const EndpointRoster& roster) {
    for (const SequenceSet& set : sets) {
        for (const auto& occ : set.occurrences) {
            const FlowKey& key = connections[static_cast<std::size_t>(occ.conn_id)].key;
            bool a_local = roster.is_local_ip(key.ip_a);
            bool b_local = roster.is_local_ip(key.ip_b);
            if (a_local && b_local) return CommClass::PhoneDevice;
            std::uint32_t local = a_local ? key.ip_a : key.ip_b;
            if (roster.is_device_ip(local)) return CommClass::DeviceCloud;
            if (roster.phone_ips.count(local)) return CommClass::PhoneCloud;
        }
    }
    return CommClass::DeviceCloud;
}

} // namespace

TrainingReport train(const Capture& capture, const EventLog& events, const TrainParams& params,
                     const std::string& capture_sha256) {
    return train(capture, events, params, capture_sha256, EndpointRoster{});
}

TrainingReport train(const Capture& capture, const EventLog& events, const TrainParams& params,
                     const std::string& capture_sha256, const EndpointRoster& roster) {
    if (capture.mode != FlowMode::Layer3)
        throw ConfigError("training needs a layer-3 capture (TCP reassembly)");

    TrainingReport report;
    std::vector<PacketMeta> filtered =
        filter_trace(capture.packets, events, params.window_t_s, &report.warnings);
    std::vector<Connection> connections = reassemble_tcp(filtered);

    std::vector<PacketPair> all_pairs;
    for (std::size_t c = 0; c < connections.size(); ++c) {
        auto pairs = form_pairs(connections[c], static_cast<int>(c));
        all_pairs.insert(all_pairs.end(), pairs.begin(), pairs.end());
    }

    std::vector<Signature> candidates;
    std::vector<std::size_t> candidate_label_idx;

    for (const std::string& label : events.labels()) {
        LabelReport lr;
        lr.label = label;
        lr.event_count = static_cast<int>(events.count_label(label));
        const int n = lr.event_count;
        const int min_pts = params.min_pts.value_or(default_min_pts(n));

        std::vector<PacketPair> label_pairs;
        for (const PacketPair& p : all_pairs)
            if (p.event_window >= 0 &&
                events.entries[static_cast<std::size_t>(p.event_window)].label == label)
                label_pairs.push_back(p);

        auto clustering = dbscan_pairs(label_pairs, params.eps, min_pts);
        lr.clusters_found = static_cast<int>(clustering.clusters.size());
        auto kept = prune_clusters(clustering.clusters, n);
        lr.clusters_kept = static_cast<int>(kept.size());
        for (const PairCluster& c : clustering.clusters) {
            std::ostringstream note;
            note << (direction_code(c.pattern_dir)) << (c.pattern_has_second ? "->reply" : "->nil")
                 << " cluster f: " << c.frequency << " ["
                 << c.core_min1 << "-" << c.core_max1;
            if (c.pattern_has_second) note << ", " << c.core_min2 << "-" << c.core_max2;
            note << "] " << (c.frequency >= prune_lower(n) && c.frequency <= prune_upper(n)
                                 ? "kept"
                                 : "dropped");
            lr.notes.push_back(note.str());
        }

        if (kept.empty()) {
            lr.notes.push_back("no signature found: no cluster frequency within [" +
                               std::to_string(prune_lower(n)) + ", " +
                               std::to_string(prune_upper(n)) + "]");
            report.labels.push_back(std::move(lr));
            continue;
        }

        auto sets = concatenate_pairs(kept, label_pairs);
        auto ordering = order_sequence_sets(std::move(sets), params.window_t_s);
        for (const auto& note : ordering.notes) lr.notes.push_back(note);
        if (ordering.ordered.empty()) {
            report.labels.push_back(std::move(lr));
            continue;
        }

        DurationStats stats = compute_duration_stats(ordering.ordered);

        Signature sig;
        sig.device = params.device;
        sig.label = label;
        sig.id = slug(params.device) + "-" + slug(label);
        sig.comm = infer_comm_class(connections, ordering.ordered, roster);
        sig.layer2_offset = params.layer2_offset;
        sig.duration_min_us = stats.min_us;
        sig.duration_avg_us = stats.avg_us;
        sig.duration_max_us = stats.max_us;
        for (const SequenceSet& set : ordering.ordered) {
            SignatureSet out_set;
            for (std::size_t i = 0; i < set.length(); ++i) {
                SignaturePosition pos;
                pos.dir = set.directions[i];
                pos.obs_min = set.obs_min[i];
                pos.obs_max = set.obs_max[i];
                pos.core_min = set.core_min[i];
                pos.core_max = set.core_max[i];
                out_set.positions.push_back(pos);
            }
            sig.sets.push_back(std::move(out_set));
        }
        sig.provenance.capture_sha256 = capture_sha256;
        sig.provenance.window_t_s = params.window_t_s;
        sig.provenance.eps = params.eps;
        sig.provenance.min_pts = min_pts;

        lr.signature = sig;
        candidates.push_back(std::move(sig));
        candidate_label_idx.push_back(report.labels.size());
        report.labels.push_back(std::move(lr));
    }

    // merge label-indistinguishable candidates (identical bounds), then
    // validate each final candidate against its labels' event windows
    std::vector<bool> merged(candidates.size(), false);
    for (std::size_t i = 0; i < candidates.size(); ++i) {
        if (merged[i]) continue;
        Signature sig = candidates[i];
        std::vector<std::size_t> covered{candidate_label_idx[i]};
        for (std::size_t j = i + 1; j < candidates.size(); ++j) {
            if (merged[j] || !identical_signature(sig, candidates[j])) continue;
            merged[j] = true;
            covered.push_back(candidate_label_idx[j]);
            sig.label += "/" + candidates[j].label;
            sig.duration_min_us = std::min(sig.duration_min_us, candidates[j].duration_min_us);
            sig.duration_max_us = std::max(sig.duration_max_us, candidates[j].duration_max_us);
            sig.duration_avg_us = (sig.duration_avg_us + candidates[j].duration_avg_us) / 2;
            report.warnings.push_back("labels " + candidates[i].label + " and " +
                                      candidates[j].label +
                                      " produced identical signatures; reported as " + sig.label);
        }
        sig.id = slug(sig.device) + "-" + slug(sig.label);

        ValidationResult verdict =
            validate_signature(sig, capture, events, sig.label, params.window_t_s);
        for (std::size_t idx : covered) {
            report.labels[idx].validation = verdict;
            report.labels[idx].notes.push_back("validation: " + verdict.note);
            if (!verdict.accepted) report.labels[idx].signature.reset();
        }
        if (verdict.accepted) report.signatures.push_back(std::move(sig));
    }
    return report;
}

} // namespace pktsig
