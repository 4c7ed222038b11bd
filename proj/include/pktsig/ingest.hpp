#pragma once

#include "pktsig/types.hpp"

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace pktsig {

inline constexpr int kDefaultLayer2Offset = 80;

// Raw parse result before direction inference and flow assignment.
struct ParsedPacket {
    Micros ts_us{0};
    MacAddr src_mac{}, dst_mac{};
    bool has_ipv4{false};
    bool has_tcp{false};
    std::uint8_t protocol{0};
    std::uint32_t src_ip{0}, dst_ip{0};
    std::uint16_t src_port{0}, dst_port{0};
    std::uint32_t tcp_seq{0};
    std::uint32_t frame_len{0};
    std::uint32_t payload_len{0};
    std::array<std::uint8_t, 3> payload_head{};
    std::uint8_t payload_head_len{0};
};

struct ParseStats {
    std::uint64_t frames{0};
    std::uint64_t emitted{0};
    std::uint64_t non_tcp{0};       // UDP/ICMP/IPv6/ARP... dropped in Layer3 mode
    std::uint64_t truncated{0};     // pcap records cut short
    std::uint64_t no_direction{0};  // neither endpoint in the roster
    std::uint64_t malformed{0};     // frames too short to carry the claimed headers
};

struct Capture {
    FlowMode mode{FlowMode::Layer3};
    std::vector<PacketMeta> packets; // parse order; PacketMeta.index is the position here
    ParseStats stats;
};

// TlsAppData iff the payload starts with a TLS application-data record header
// (content type 0x17, major version 0x03). Anything shorter than a record
// header is plain payload.
PacketKind classify_tls(std::span<const std::uint8_t> payload_head);

// ClientToServer iff the source address belongs to the roster's local set.
// nullopt when neither endpoint is local (packet is excluded and counted).
std::optional<Direction> infer_direction(const ParsedPacket& pkt, const EndpointRoster& roster);

// Wi-Fi view of a layer-3 payload length: the 802.11 stack adds a constant
// per-testbed overhead on top of the TCP payload.
inline int map_to_layer2(int l3_len, int offset = kDefaultLayer2Offset) {
    return l3_len + offset;
}

// Parse Ethernet bytes into a ParsedPacket. Returns false if the frame is too
// short for the headers it claims to carry.
bool parse_ethernet_frame(std::span<const std::uint8_t> frame, ParsedPacket& out);

// Parse one classic-pcap capture. Layer3 mode keeps IPv4/TCP frames (payload
// length = TCP segment payload); Layer2 mode keeps every data frame (length =
// frame size) and additionally accepts radiotap link types.
Capture parse_capture(const std::string& path, FlowMode mode, const EndpointRoster& roster);

} // namespace pktsig
