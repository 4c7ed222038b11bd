#pragma once

#include "pktsig/detection.hpp"
#include "pktsig/events.hpp"
#include "pktsig/ingest.hpp"
#include "pktsig/signature.hpp"
#include "pktsig/types.hpp"
#include "pktsig/util.hpp"

#include <optional>
#include <string>
#include <vector>

namespace pktsig {

enum class DefenseStrategy { PadMtuVpn, PadMtuTlsPerConn, PadMtuHybrid, StpVpn };

const char* defense_strategy_name(DefenseStrategy s);
std::optional<DefenseStrategy> defense_strategy_from_name(const std::string& name);

struct DefenseConfig {
    DefenseStrategy strategy{DefenseStrategy::PadMtuVpn};
    int mtu{1500};
    int vpn_header_c2s{52};
    int vpn_header_s2c{49};
    int dummy_count{0};
    std::uint64_t seed{1};
    // per-connection padding mirrors an attacker who singles out the event
    // endpoint's connections (the cleartext SNI gives it away)
    std::optional<std::uint32_t> event_endpoint_ip;
};

// Trace view after padding to the MTU: lengths are gone, only direction,
// timing and (per strategy) flow identity remain.
struct PaddedView {
    struct Pkt {
        Micros ts_us{0};
        Direction dir{Direction::ClientToServer};
        int flow_id{0};
    };
    std::vector<Pkt> packets; // time-ordered
    int flow_count{0};
};

// PadMtuVpn: everything multiplexed into one tunnel flow. PadMtuTlsPerConn:
// per-connection views of TLS application-data packets (optionally filtered
// to the event endpoint). PadMtuHybrid: the device's application-data packets
// merged into one flow.
PaddedView simulate_padding(const Capture& capture, const DefenseConfig& config,
                            const EndpointRoster& roster);

struct DirectionOnlyResult {
    std::int64_t positives{0};
    std::vector<std::pair<Micros, Micros>> spans; // (first, last) per positive
};

// Counts completions of the signature's direction pattern within the
// detection window, ignoring interleaved packets (a packet counts once, as
// the completion point of the latest possible assignment).
DirectionOnlyResult detect_direction_only(const PaddedView& view, const Signature& sig,
                                          std::int64_t window_ms);

struct StpResult {
    std::vector<PacketMeta> tunnel;   // single flow, lengths include tunnel headers
    std::vector<Micros> dummy_times;  // injected event times (ground truth)
};

// Clones signature-shaped exchanges at random non-overlapping times, adds the
// per-direction tunnel header to every packet, and multiplexes everything
// into one flow.
StpResult simulate_stp(const Capture& capture, const Signature& sig, int dummy_count,
                       const DefenseConfig& config);

// Length-aware detection on an STP tunnel using the header-shifted signature.
std::vector<MatchEvent> detect_on_tunnel(const std::vector<PacketMeta>& tunnel,
                                         const Signature& shifted_sig);

struct DefenseScore {
    int true_events{0};
    int positives{0};
    int true_positives{0};
    int false_positives{0};
    int dummy_detected{0};
    double recall{0.0};
    double fp_per_100_events{0.0};
    double positives_per_true_event{0.0};
};

// Attributes positives against the true event windows (and dummy times, when
// present); everything not attributable to a true event is a false positive.
DefenseScore score_defense(const std::vector<std::pair<Micros, Micros>>& positive_spans,
                           const EventLog& truth, double window_t_s,
                           const std::vector<Micros>& dummy_times = {},
                           std::int64_t dummy_window_ms = 0);

} // namespace pktsig
