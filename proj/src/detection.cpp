#include "pktsig/detection.hpp"

#include "pktsig/events.hpp"
#include "pktsig/reassembly.hpp"
#include "pktsig/util.hpp"

#include <algorithm>
#include <map>
#include <set>
#include <unordered_map>

namespace pktsig {

const char* sniffer_mode_name(SnifferMode m) {
    return m == SnifferMode::Wan ? "wan" : "wifi";
}

AdvanceResult advance(SequenceMachine& machine, const PacketMeta& packet, SnifferMode mode,
                      const MatchBounds& bounds) {
    const auto& positions = bounds.sets[static_cast<std::size_t>(machine.set_index)];
    const int len = static_cast<int>(positions.size());
    if (bounds.matches(static_cast<std::size_t>(machine.set_index),
                       static_cast<std::size_t>(machine.state), packet.direction,
                       packet.length)) {
        machine.recorded.push_back(packet);
        ++machine.state;
        return machine.state == len ? AdvanceResult::Completed : AdvanceResult::Advanced;
    }
    if (mode == SnifferMode::Wan) {
        machine.state = 0;
        machine.recorded.clear();
        return AdvanceResult::Reset;
    }
    return AdvanceResult::Ignored;
}

std::optional<SequenceCompletion> MachinePool::feed(const PacketMeta& packet, SnifferMode mode,
                                                    const MatchBounds& bounds) {
    const std::size_t set = static_cast<std::size_t>(set_index_);

    // expire partials that can no longer complete within the window
    for (auto& slot : slots_)
        if (slot && packet.ts_us - slot->first_ts() > window_us_) slot.reset();

    // A completed sequence consumes its packets: partial matches that share
    // one are stale and must go, so no packet lands in two completions.
    auto consume = [this](const std::vector<PacketMeta>& recorded) {
        for (auto& slot : slots_) {
            if (!slot) continue;
            bool overlap = false;
            for (const PacketMeta& held : slot->recorded)
                for (const PacketMeta& used : recorded)
                    if (held.index == used.index) overlap = true;
            if (overlap) slot.reset();
        }
    };

    // Highest states first so one packet advances each machine at most once.
    // Only the top slot can complete, so a completing packet is never also
    // consumed by a lower machine.
    for (int s = len_ - 1; s >= 1; --s) {
        auto& slot = slots_[static_cast<std::size_t>(s)];
        if (!slot) continue;
        SequenceMachine machine = std::move(*slot);
        slot.reset();
        AdvanceResult r = advance(machine, packet, mode, bounds);
        switch (r) {
        case AdvanceResult::Completed: {
            SequenceCompletion done;
            done.set_index = set_index_;
            done.recorded = std::move(machine.recorded);
            done.flow = flow_;
            consume(done.recorded);
            return done;
        }
        case AdvanceResult::Advanced: {
            auto& next = slots_[static_cast<std::size_t>(machine.state)];
            // replacement rule: the newly advanced machine wins iff its last
            // packet is strictly later
            if (!next || machine.last_ts() > next->last_ts()) next = std::move(machine);
            break;
        }
        case AdvanceResult::Ignored:
            slot = std::move(machine); // unchanged, put it back
            break;
        case AdvanceResult::Reset:
            break; // partial match discarded; slot stays empty
        }
    }

    // Implicit state-0 machine: always present, spawns a fresh copy on match.
    if (bounds.matches(set, 0, packet.direction, packet.length)) {
        SequenceMachine fresh;
        fresh.set_index = set_index_;
        fresh.state = 1;
        fresh.recorded.push_back(packet);
        if (len_ == 1) {
            SequenceCompletion done;
            done.set_index = set_index_;
            done.recorded = std::move(fresh.recorded);
            done.flow = flow_;
            consume(done.recorded);
            return done;
        }
        auto& next = slots_[1];
        if (!next || fresh.last_ts() > next->last_ts()) next = std::move(fresh);
    }
    return std::nullopt;
}

int MachinePool::active_machines() const {
    int n = 1; // the implicit state-0 machine
    for (const auto& slot : slots_)
        if (slot) ++n;
    return n;
}

std::optional<MatchEvent> MatchAssembler::offer(const SequenceCompletion& completion) {
    const std::size_t k = static_cast<std::size_t>(completion.set_index);
    const std::size_t num_sets = sig_->sets.size();

    // expire stored completions that can no longer satisfy the span limit
    Micros horizon = completion.last_ts() - window_us_;
    for (auto& bucket : pending_) {
        std::erase_if(bucket, [horizon](const SequenceCompletion& c) {
            return c.first_ts() < horizon;
        });
    }

    if (k + 1 < num_sets) {
        pending_[k].push_back(completion);
        return std::nullopt;
    }

    // last set completed: assemble a chain backwards, preferring the most
    // recent viable completion at every step
    std::vector<const SequenceCompletion*> chain(num_sets, nullptr);
    chain[k] = &completion;
    for (std::size_t i = k; i-- > 0;) {
        const SequenceCompletion* best = nullptr;
        for (auto it = pending_[i].rbegin(); it != pending_[i].rend(); ++it) {
            if (it->last_ts() < chain[i + 1]->first_ts()) {
                if (!best || it->last_ts() > best->last_ts()) best = &*it;
            }
        }
        if (!best) return std::nullopt;
        chain[i] = best;
    }
    if (completion.last_ts() - chain[0]->first_ts() > window_us_) return std::nullopt;

    MatchEvent event;
    event.signature_id = sig_->id;
    event.label = sig_->label;
    event.first_ts = chain[0]->first_ts();
    event.last_ts = completion.last_ts();
    for (const SequenceCompletion* c : chain) {
        auto& ids = event.packet_indices.emplace_back();
        for (const PacketMeta& pkt : c->recorded) ids.push_back(pkt.index);
        if (std::find(event.flows.begin(), event.flows.end(), c->flow) == event.flows.end())
            event.flows.push_back(c->flow);
    }

    // consume the used completions
    for (std::size_t i = 0; i < k; ++i) {
        auto& bucket = pending_[i];
        for (auto it = bucket.begin(); it != bucket.end(); ++it) {
            if (&*it == chain[i]) {
                bucket.erase(it);
                break;
            }
        }
    }
    return event;
}

std::vector<SequenceCompletion> run_sequence_machines(std::span<const PacketMeta> flow_packets,
                                                      int set_index, SnifferMode mode,
                                                      const MatchBounds& bounds,
                                                      const FlowKey& flow, Micros window_us) {
    const int len = static_cast<int>(bounds.sets[static_cast<std::size_t>(set_index)].size());
    MachinePool pool(set_index, len, flow, window_us);
    std::vector<SequenceCompletion> out;
    for (const PacketMeta& pkt : flow_packets) {
        if (auto done = pool.feed(pkt, mode, bounds)) out.push_back(std::move(*done));
    }
    return out;
}

MatchBounds bounds_for(const Signature& sig, const DetectOptions& opt,
                       const std::vector<Signature>& all_sigs) {
    switch (opt.strategy) {
    case MatchStrategy::Relaxed: {
        std::vector<int> positions = opt.delta_positions;
        if (positions.empty()) {
            for (int i = 0; i < sig.total_packets(); ++i) positions.push_back(i);
        }
        return relaxed_bounds(sig, opt.delta, positions);
    }
    case MatchStrategy::Range: {
        std::vector<Signature> same_device;
        for (const Signature& other : all_sigs)
            if (other.device == sig.device) same_device.push_back(other);
        if (range_matching_applicable(sig, same_device, opt.eps))
            return range_bounds(sig, opt.eps);
        return exact_bounds(sig); // auto-disable: 2 packets or sibling overlap
    }
    case MatchStrategy::Exact:
    default:
        return exact_bounds(sig);
    }
}

namespace {

// Labels may be merged ("ON/OFF"); everything compares component-wise.
std::vector<std::string> label_components(const std::string& label) {
    std::vector<std::string> out;
    std::size_t start = 0;
    while (start <= label.size()) {
        std::size_t slash = label.find('/', start);
        std::size_t end = slash == std::string::npos ? label.size() : slash;
        out.push_back(label.substr(start, end - start));
        if (slash == std::string::npos) break;
        start = slash + 1;
    }
    return out;
}

bool label_covers(const std::string& match_label, const std::string& label) {
    for (const std::string& part : label_components(match_label))
        if (part == label) return true;
    return false;
}

bool labels_intersect(const std::string& a, const std::string& b) {
    for (const std::string& part : label_components(a))
        if (label_covers(b, part)) return true;
    return false;
}

struct SigRuntime {
    const Signature* sig;
    MatchBounds bounds;
    Micros window_us;
    MatchAssembler assembler;
    std::unordered_map<FlowKey, std::vector<MachinePool>, FlowKeyHash> pools;
    std::vector<MatchEvent> matches;
};

void feed_packet(SigRuntime& rt, const FlowKey& flow, const PacketMeta& pkt, SnifferMode mode) {
    auto it = rt.pools.find(flow);
    if (it == rt.pools.end()) {
        std::vector<MachinePool> pools;
        for (std::size_t s = 0; s < rt.bounds.sets.size(); ++s)
            pools.emplace_back(static_cast<int>(s), static_cast<int>(rt.bounds.sets[s].size()),
                               flow, rt.window_us);
        it = rt.pools.emplace(flow, std::move(pools)).first;
    }
    for (MachinePool& pool : it->second) {
        if (auto done = pool.feed(pkt, mode, rt.bounds)) {
            if (auto event = rt.assembler.offer(*done)) rt.matches.push_back(std::move(*event));
        }
    }
}

// Merge same-device matches over identical packets into one "ON/OFF"-style
// report line.
std::vector<MatchEvent> merge_identical(std::vector<MatchEvent> matches,
                                        const std::vector<Signature>& sigs) {
    std::map<std::string, std::string> device_of;
    std::map<std::string, std::size_t> sig_rank;
    for (std::size_t i = 0; i < sigs.size(); ++i) {
        device_of[sigs[i].id] = sigs[i].device;
        sig_rank[sigs[i].label] = sig_rank.count(sigs[i].label) ? sig_rank[sigs[i].label] : i;
    }

    std::vector<MatchEvent> out;
    std::map<std::pair<std::string, std::string>, std::size_t> seen; // (device, packets) -> out idx
    for (MatchEvent& m : matches) {
        std::string fingerprint;
        for (const auto& set : m.packet_indices) {
            for (auto idx : set) fingerprint += std::to_string(idx) + ",";
            fingerprint += ";";
        }
        auto key = std::make_pair(device_of[m.signature_id], fingerprint);
        auto it = seen.find(key);
        if (it == seen.end()) {
            seen.emplace(key, out.size());
            out.push_back(std::move(m));
        } else {
            MatchEvent& existing = out[it->second];
            if (!label_covers(existing.label, m.label)) {
                // label components in signature-list order ("ON/OFF")
                if (sig_rank[m.label] < sig_rank[existing.label.substr(0, existing.label.find('/'))])
                    existing.label = m.label + "/" + existing.label;
                else
                    existing.label += "/" + m.label;
            }
        }
    }
    return out;
}

} // namespace

DetectReport detect(const Capture& capture, const std::vector<Signature>& signatures,
                    const DetectOptions& options, const EventLog* truth,
                    double truth_window_s) {
    if (options.mode == SnifferMode::Wan && capture.mode != FlowMode::Layer3)
        throw ConfigError("WAN-sniffer detection needs a layer-3 capture");
    for (const Signature& sig : signatures) {
        if (options.mode == SnifferMode::Wan && sig.comm == CommClass::PhoneDevice)
            throw ConfigError("signature " + sig.id +
                              " is phone-device traffic, observable only by the Wi-Fi sniffer");
    }

    std::vector<SigRuntime> runtimes;
    runtimes.reserve(signatures.size());
    for (const Signature& sig : signatures) {
        MatchBounds bounds = bounds_for(sig, options, signatures);
        int offset = options.layer2_offset.value_or(sig.layer2_offset);
        if (options.mode == SnifferMode::Wifi) bounds = bounds.shifted(offset);
        std::int64_t window = detection_window_ms(sig.duration_max_ms());
        runtimes.push_back(SigRuntime{&sig, std::move(bounds), window * 1000,
                                      MatchAssembler(sig, window), {}, {}});
    }

    if (options.mode == SnifferMode::Wan) {
        // reassembled per-connection payload views, streamed in global order
        auto connections = reassemble_tcp(capture.packets);
        std::vector<const PacketMeta*> stream;
        std::vector<const FlowKey*> stream_flow;
        for (const Connection& conn : connections)
            for (const PacketMeta& pkt : conn.payload) {
                stream.push_back(&pkt);
                stream_flow.push_back(&conn.key);
            }
        std::vector<std::size_t> order(stream.size());
        for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
        std::stable_sort(order.begin(), order.end(), [&stream](std::size_t a, std::size_t b) {
            if (stream[a]->ts_us != stream[b]->ts_us) return stream[a]->ts_us < stream[b]->ts_us;
            return stream[a]->index < stream[b]->index;
        });
        for (std::size_t i : order)
            for (SigRuntime& rt : runtimes)
                feed_packet(rt, *stream_flow[i], *stream[i], SnifferMode::Wan);
    } else {
        // layer-2 flows; frame lengths are synthesized from payload lengths
        // when the capture was parsed at layer 3
        for (const PacketMeta& pkt : capture.packets) {
            for (SigRuntime& rt : runtimes) {
                PacketMeta view = pkt;
                FlowKey flow;
                if (capture.mode == FlowMode::Layer3) {
                    int offset = options.layer2_offset.value_or(rt.sig->layer2_offset);
                    view.length = map_to_layer2(pkt.length, offset);
                    flow = pkt.layer2_flow();
                } else {
                    flow = pkt.flow;
                }
                feed_packet(rt, flow, view, SnifferMode::Wifi);
            }
        }
    }

    DetectReport report;
    for (SigRuntime& rt : runtimes)
        for (MatchEvent& m : rt.matches) report.matches.push_back(std::move(m));
    std::stable_sort(report.matches.begin(), report.matches.end(),
                     [](const MatchEvent& a, const MatchEvent& b) {
                         if (a.first_ts != b.first_ts) return a.first_ts < b.first_ts;
                         return a.signature_id < b.signature_id;
                     });
    report.matches = merge_identical(std::move(report.matches), signatures);

    // per-signature counts, with recall/false-positive attribution when the
    // ground-truth event log is available
    std::map<std::string, std::string> device_of;
    for (const Signature& sig : signatures) device_of[sig.id] = sig.device;
    for (const Signature& sig : signatures) {
        SignatureTally t;
        t.signature_id = sig.id;
        t.label = sig.label;
        if (truth)
            for (const std::string& part : label_components(sig.label))
                t.expected_events += static_cast<int>(truth->count_label(part));
        report.tallies.push_back(t);
    }
    std::vector<bool> consumed(truth ? truth->entries.size() : 0, false);
    Micros window_us = static_cast<Micros>(truth_window_s * 1'000'000);
    for (const MatchEvent& m : report.matches) {
        std::vector<SignatureTally*> candidates;
        for (SignatureTally& tally : report.tallies)
            if (device_of[tally.signature_id] == device_of[m.signature_id] &&
                labels_intersect(m.label, tally.label))
                candidates.push_back(&tally);
        if (candidates.empty()) continue;

        if (!truth) {
            // no ground truth: a label-ambiguous match counts everywhere it fits
            for (SignatureTally* tally : candidates) ++tally->matches;
            continue;
        }

        // the event window containing the match decides which tally it feeds;
        // an unattributable match is one false positive, not one per label
        SignatureTally* attributed = nullptr;
        for (std::size_t e = 0; e < truth->entries.size() && !attributed; ++e) {
            if (consumed[e] || !label_covers(m.label, truth->entries[e].label)) continue;
            Micros start = truth->entries[e].ts_us;
            if (m.first_ts < start || m.first_ts > start + window_us) continue;
            for (SignatureTally* tally : candidates) {
                if (!label_covers(tally->label, truth->entries[e].label)) continue;
                consumed[e] = true;
                attributed = tally;
                break;
            }
        }
        if (attributed) {
            ++attributed->matches;
            ++attributed->true_positives;
        } else {
            ++candidates.front()->matches;
            ++candidates.front()->false_positives;
        }
    }
    return report;
}

} // namespace pktsig
