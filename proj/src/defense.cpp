#include "pktsig/defense.hpp"

#include "pktsig/reassembly.hpp"

#include <algorithm>
#include <limits>
#include <map>

namespace pktsig {

const char* defense_strategy_name(DefenseStrategy s) {
    switch (s) {
    case DefenseStrategy::PadMtuVpn: return "pad-mtu-vpn";
    case DefenseStrategy::PadMtuTlsPerConn: return "pad-mtu-tls";
    case DefenseStrategy::PadMtuHybrid: return "pad-mtu-hybrid";
    case DefenseStrategy::StpVpn: return "stp-vpn";
    }
    return "pad-mtu-vpn";
}

std::optional<DefenseStrategy> defense_strategy_from_name(const std::string& name) {
    if (name == "pad-mtu-vpn") return DefenseStrategy::PadMtuVpn;
    if (name == "pad-mtu-tls") return DefenseStrategy::PadMtuTlsPerConn;
    if (name == "pad-mtu-hybrid") return DefenseStrategy::PadMtuHybrid;
    if (name == "stp-vpn") return DefenseStrategy::StpVpn;
    return std::nullopt;
}

namespace {

bool involves_ip(const FlowKey& key, std::uint32_t ip) {
    return key.ip_a == ip || key.ip_b == ip;
}

bool involves_device(const FlowKey& key, const EndpointRoster& roster) {
    return roster.is_device_ip(key.ip_a) || roster.is_device_ip(key.ip_b);
}

} // namespace

PaddedView simulate_padding(const Capture& capture, const DefenseConfig& config,
                            const EndpointRoster& roster) {
    if (capture.mode != FlowMode::Layer3)
        throw ConfigError("padding simulation needs a layer-3 capture");

    PaddedView view;
    switch (config.strategy) {
    case DefenseStrategy::PadMtuVpn: {
        // one tunnel: every packet, lengths erased, timestamps kept
        for (const PacketMeta& pkt : capture.packets)
            view.packets.push_back({pkt.ts_us, pkt.direction, 0});
        view.flow_count = 1;
        break;
    }
    case DefenseStrategy::PadMtuTlsPerConn: {
        std::map<FlowKey, int> flow_ids;
        for (const PacketMeta& pkt : capture.packets) {
            if (pkt.kind != PacketKind::TlsAppData) continue;
            if (config.event_endpoint_ip && !involves_ip(pkt.flow, *config.event_endpoint_ip))
                continue;
            auto [it, fresh] = flow_ids.try_emplace(pkt.flow, static_cast<int>(flow_ids.size()));
            view.packets.push_back({pkt.ts_us, pkt.direction, it->second});
        }
        view.flow_count = static_cast<int>(flow_ids.size());
        break;
    }
    case DefenseStrategy::PadMtuHybrid: {
        // the device's application-data traffic as if it rode one connection
        for (const PacketMeta& pkt : capture.packets) {
            if (pkt.kind != PacketKind::TlsAppData) continue;
            if (!involves_device(pkt.flow, roster)) continue;
            view.packets.push_back({pkt.ts_us, pkt.direction, 0});
        }
        view.flow_count = 1;
        break;
    }
    case DefenseStrategy::StpVpn:
        throw ConfigError("stp-vpn is a traffic-injection simulation; use simulate_stp");
    }
    std::stable_sort(view.packets.begin(), view.packets.end(),
                     [](const PaddedView::Pkt& a, const PaddedView::Pkt& b) {
                         return a.ts_us < b.ts_us;
                     });
    return view;
}

DirectionOnlyResult detect_direction_only(const PaddedView& view, const Signature& sig,
                                          std::int64_t window_ms) {
    // flatten the signature to its direction pattern
    std::vector<Direction> pattern;
    for (const auto& set : sig.sets)
        for (const auto& pos : set.positions) pattern.push_back(pos.dir);
    DirectionOnlyResult result;
    if (pattern.empty()) return result;

    const Micros window_us = window_ms * 1000;
    const std::size_t len = pattern.size();
    constexpr Micros kUnset = std::numeric_limits<Micros>::min();

    // per flow: latest_start[k] = latest possible first-packet time of an
    // assignment matching the pattern prefix of length k+1
    std::map<int, std::vector<Micros>> state;
    for (const PaddedView::Pkt& pkt : view.packets) {
        auto [it, fresh] = state.try_emplace(pkt.flow_id, std::vector<Micros>(len, kUnset));
        std::vector<Micros>& latest_start = it->second;
        // walk prefix lengths downward so one packet extends each prefix once
        for (std::size_t k = len; k-- > 0;) {
            if (pattern[k] != pkt.dir) continue;
            Micros start = k == 0 ? pkt.ts_us : latest_start[k - 1];
            if (start == kUnset) continue;
            if (k + 1 == len) {
                if (pkt.ts_us - start <= window_us) {
                    ++result.positives;
                    result.spans.emplace_back(start, pkt.ts_us);
                }
            } else {
                latest_start[k] = std::max(latest_start[k], start);
            }
        }
    }
    return result;
}

StpResult simulate_stp(const Capture& capture, const Signature& sig, int dummy_count,
                       const DefenseConfig& config) {
    if (capture.mode != FlowMode::Layer3)
        throw ConfigError("stp simulation needs a layer-3 capture");

    StpResult result;
    const FlowKey tunnel_flow = FlowKey::layer3(1, 1, 2, 2, 6);

    // real traffic, tunneled: header added per direction, one flow
    for (const PacketMeta& pkt : capture.packets) {
        PacketMeta out = pkt;
        out.flow = tunnel_flow;
        out.length += pkt.direction == Direction::ClientToServer ? config.vpn_header_c2s
                                                                 : config.vpn_header_s2c;
        result.tunnel.push_back(out);
    }
    if (result.tunnel.empty()) return result;

    Micros span_start = result.tunnel.front().ts_us;
    Micros span_end = result.tunnel.back().ts_us;
    for (const PacketMeta& pkt : result.tunnel) {
        span_start = std::min(span_start, pkt.ts_us);
        span_end = std::max(span_end, pkt.ts_us);
    }

    // dummy events clone the signature shape at random non-overlapping times
    std::vector<Direction> dirs;
    std::vector<int> lens;
    for (const auto& set : sig.sets)
        for (const auto& pos : set.positions) {
            dirs.push_back(pos.dir);
            lens.push_back(pos.obs_min);
        }

    const Micros window_us = detection_window_ms(sig.duration_max_ms()) * 1000;
    const Micros exclusion = 2 * window_us;
    Rng rng(config.seed);

    // keep dummies clear of each other and of real payload traffic
    std::vector<std::pair<Micros, Micros>> busy;
    for (const PacketMeta& pkt : capture.packets)
        if (pkt.length > 0) busy.emplace_back(pkt.ts_us - exclusion, pkt.ts_us + exclusion);
    std::sort(busy.begin(), busy.end());
    std::vector<std::pair<Micros, Micros>> merged;
    for (const auto& iv : busy) {
        if (!merged.empty() && iv.first <= merged.back().second)
            merged.back().second = std::max(merged.back().second, iv.second);
        else
            merged.push_back(iv);
    }

    auto overlaps_busy = [&merged](Micros ts) {
        auto probe = std::make_pair(ts, std::numeric_limits<Micros>::max());
        auto it = std::upper_bound(merged.begin(), merged.end(), probe);
        return it != merged.begin() && ts <= std::prev(it)->second;
    };

    for (int d = 0; d < dummy_count; ++d) {
        bool placed = false;
        for (int attempt = 0; attempt < 1000 && !placed; ++attempt) {
            Micros ts = rng.uniform_i64(span_start, span_end);
            bool clear = !overlaps_busy(ts);
            for (Micros other : result.dummy_times)
                if (std::llabs(other - ts) < exclusion) clear = false;
            if (!clear) continue;
            placed = true;
            result.dummy_times.push_back(ts);
            Micros cursor = ts;
            for (std::size_t i = 0; i < dirs.size(); ++i) {
                if (i > 0) cursor += rng.uniform_i64(1'000, 20'000);
                PacketMeta pkt;
                pkt.ts_us = cursor;
                pkt.direction = dirs[i];
                pkt.length = lens[i] + (dirs[i] == Direction::ClientToServer
                                            ? config.vpn_header_c2s
                                            : config.vpn_header_s2c);
                pkt.kind = PacketKind::TcpPayload;
                pkt.flow = tunnel_flow;
                result.tunnel.push_back(pkt);
            }
        }
        if (!placed)
            throw ConfigError("could not place dummy event " + std::to_string(d) +
                              " without overlap; capture too dense or too short");
    }

    std::sort(result.dummy_times.begin(), result.dummy_times.end());
    std::stable_sort(result.tunnel.begin(), result.tunnel.end(),
                     [](const PacketMeta& a, const PacketMeta& b) { return a.ts_us < b.ts_us; });
    for (std::size_t i = 0; i < result.tunnel.size(); ++i)
        result.tunnel[i].index = static_cast<std::uint32_t>(i);
    return result;
}

std::vector<MatchEvent> detect_on_tunnel(const std::vector<PacketMeta>& tunnel,
                                         const Signature& shifted_sig) {
    MatchBounds bounds = exact_bounds(shifted_sig);
    const std::int64_t window_ms = detection_window_ms(shifted_sig.duration_max_ms());
    MatchAssembler assembler(shifted_sig, window_ms);
    std::vector<MatchEvent> out;
    const FlowKey flow = tunnel.empty() ? FlowKey{} : tunnel.front().flow;

    std::vector<MachinePool> pools;
    for (std::size_t s = 0; s < bounds.sets.size(); ++s)
        pools.emplace_back(static_cast<int>(s), static_cast<int>(bounds.sets[s].size()), flow,
                           window_ms * 1000);

    for (const PacketMeta& pkt : tunnel) {
        if (pkt.length <= 0) continue; // header-only tunnel records carry no signal
        for (MachinePool& pool : pools) {
            // the tunnel multiplexes connections, so interleaved packets are
            // ignored rather than resetting partial matches
            if (auto done = pool.feed(pkt, SnifferMode::Wifi, bounds)) {
                if (auto event = assembler.offer(*done)) out.push_back(std::move(*event));
            }
        }
    }
    return out;
}

DefenseScore score_defense(const std::vector<std::pair<Micros, Micros>>& positive_spans,
                           const EventLog& truth, double window_t_s,
                           const std::vector<Micros>& dummy_times,
                           std::int64_t dummy_window_ms) {
    DefenseScore score;
    score.true_events = static_cast<int>(truth.entries.size());
    score.positives = static_cast<int>(positive_spans.size());

    const Micros window_us = static_cast<Micros>(window_t_s * 1e6);
    const Micros dummy_window_us = dummy_window_ms * 1000;
    std::vector<bool> event_hit(truth.entries.size(), false);
    std::vector<bool> dummy_hit(dummy_times.size(), false);

    for (const auto& [first, last] : positive_spans) {
        bool attributed = false;
        for (std::size_t e = 0; e < truth.entries.size(); ++e) {
            if (event_hit[e]) continue;
            Micros start = truth.entries[e].ts_us;
            if (first >= start && first <= start + window_us) {
                event_hit[e] = true;
                ++score.true_positives;
                attributed = true;
                break;
            }
        }
        if (attributed) continue;
        ++score.false_positives;
        for (std::size_t d = 0; d < dummy_times.size(); ++d) {
            if (dummy_hit[d]) continue;
            if (first >= dummy_times[d] - dummy_window_us &&
                first <= dummy_times[d] + dummy_window_us) {
                dummy_hit[d] = true;
                ++score.dummy_detected;
                break;
            }
        }
    }

    if (score.true_events > 0) {
        score.recall = static_cast<double>(score.true_positives) / score.true_events;
        score.fp_per_100_events = 100.0 * score.false_positives / score.true_events;
        score.positives_per_true_event =
            static_cast<double>(score.positives) / score.true_events;
    }
    return score;
}

} // namespace pktsig
