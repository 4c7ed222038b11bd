#pragma once

#include "pktsig/events.hpp"
#include "pktsig/types.hpp"
#include "pktsig/util.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace pktsig {

// Synthetic capture generation: ground-truth event traffic plus configurable
// background, deterministic for a given profile and seed.

struct TemplatePacket {
    int conn{0}; // event-local connection index; separate indexes become separate TCP connections
    Direction dir{Direction::ClientToServer};
    int len_min{0};
    int len_max{0};
};

struct EventTemplate {
    std::string label;
    CommClass comm{CommClass::DeviceCloud};
    int gap_min_ms{1};
    int gap_max_ms{50};
    std::vector<TemplatePacket> packets; // always TLS application data
};

struct BackgroundFlow {
    enum class Kind { PeriodicChatter, RandomRequestReply, BulkTransfer };
    Kind kind{Kind::PeriodicChatter};
    bool from_device{false}; // device endpoint instead of the generic local host
    bool tls{false};
    // chatter
    double period_s{1.0};
    int c2s_len{200};
    int s2c_len{300};
    // request/reply
    double rate_per_s{1.0};
    int len_min{100};
    int len_max{1400};
    std::vector<int> avoid_lengths;
    // bulk
    double at_s{10.0};
    int packet_count{100};
    int bulk_len{1460};
};

struct TraceProfile {
    int n_per_label{50};
    double spacing_s{131.0};
    std::vector<EventTemplate> events;
    std::vector<BackgroundFlow> background;

    static TraceProfile from_file(const std::string& path);
    static TraceProfile from_text(const std::string& text, const std::string& origin = "profile");
    std::string to_text() const;
};

struct TruthEvent {
    std::string label;
    Micros trigger_ts{0};
    Micros first_payload_ts{0};
    Micros last_payload_ts{0};
};

struct SynthResult {
    std::vector<std::pair<Micros, std::vector<std::uint8_t>>> frames; // time-ordered
    EventLog events;
    EndpointRoster roster;     // device + phone (training view)
    EndpointRoster roster_all; // every local host (defense view)
    std::vector<TruthEvent> truth;

    // fixed addresses used by the generator
    std::uint32_t device_ip{0}, phone_ip{0}, laptop_ip{0};
    std::uint32_t event_server_ip{0}, chatter_server_ip{0}, background_server_ip{0};
};

SynthResult generate(const TraceProfile& profile, std::uint64_t seed);

// Writes capture.pcap, events.txt, roster.txt, roster-all.txt, truth.txt.
void write_synth(const SynthResult& result, const std::string& out_dir);

void write_truth(const std::vector<TruthEvent>& truth, const std::string& path);
std::vector<TruthEvent> read_truth(const std::string& path);

enum class NoiseKind { Retransmissions, InterleavedFlows, OffWindowChatter };

struct NoiseOptions {
    NoiseKind kind{NoiseKind::Retransmissions};
    double rate{0.05}; // duplicate probability, or exchanges per second
    std::uint64_t seed{1};
    // exchange shape for injected flows (off-window chatter clones these)
    std::vector<std::pair<int, int>> exchange_lengths{{333, 444}};
    const EventLog* events{nullptr}; // off-window placement avoids these windows
    double window_t_s{15.0};
};

// Transforms a capture file; injected traffic is never part of the ground
// truth. Retransmissions duplicate payload frames; interleaved flows add an
// unrelated connection on the device's MAC pair; off-window chatter clones
// signature-shaped exchanges between event windows.
void inject_noise(const std::string& pcap_in, const std::string& pcap_out,
                  const NoiseOptions& options);

} // namespace pktsig
