#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <optional>
#include <set>
#include <string>

namespace pktsig {

// Timestamps are kept as integer microseconds since the epoch so that
// comparisons and file round-trips are exact.
using Micros = std::int64_t;

enum class Direction : std::uint8_t { ClientToServer, ServerToClient };

inline Direction flipped(Direction d) {
    return d == Direction::ClientToServer ? Direction::ServerToClient
                                          : Direction::ClientToServer;
}

inline char direction_code(Direction d) {
    return d == Direction::ClientToServer ? 'C' : 'S';
}

enum class PacketKind : std::uint8_t { TcpPayload, TlsAppData, Other };

enum class FlowMode : std::uint8_t { Layer3, Layer2 };

using MacAddr = std::array<std::uint8_t, 6>;

std::string mac_to_string(const MacAddr& mac);
std::optional<MacAddr> mac_from_string(const std::string& text);
std::string ipv4_to_string(std::uint32_t ip);
std::optional<std::uint32_t> ipv4_from_string(const std::string& text);

// Flow identity for both adversary views. Layer3 keys normalize the TCP
// 5-tuple so both directions of a connection map to the same key; Layer2
// keys are unordered MAC pairs.
struct FlowKey {
    FlowMode mode{FlowMode::Layer3};
    std::uint32_t ip_a{0}, ip_b{0};
    std::uint16_t port_a{0}, port_b{0};
    std::uint8_t protocol{0};
    MacAddr mac_a{}, mac_b{};

    static FlowKey layer3(std::uint32_t src_ip, std::uint16_t src_port,
                          std::uint32_t dst_ip, std::uint16_t dst_port,
                          std::uint8_t protocol);
    static FlowKey layer2(const MacAddr& a, const MacAddr& b);

    bool operator==(const FlowKey&) const = default;
    bool operator<(const FlowKey& o) const;
    std::string to_string() const;
};

struct FlowKeyHash {
    std::size_t operator()(const FlowKey& k) const noexcept;
};

// One captured packet after normalization. `length` is the TCP payload size
// in Layer3 mode and the full frame size in Layer2 mode.
struct PacketMeta {
    Micros ts_us{0};
    std::int32_t length{0};
    Direction direction{Direction::ClientToServer};
    FlowKey flow{};
    PacketKind kind{PacketKind::Other};
    bool retransmission{false};
    std::uint32_t tcp_seq{0};
    std::uint32_t index{0};        // position in parse order
    std::int32_t event_window{-1}; // set by trace filtering, -1 = untagged
    MacAddr src_mac{}, dst_mac{};

    FlowKey layer2_flow() const { return FlowKey::layer2(src_mac, dst_mac); }
};

// Local endpoint knowledge used for direction inference and the defense
// simulator's device filter. `device_*` / `phone_*` are optional refinements
// of the local set.
struct EndpointRoster {
    std::set<std::uint32_t> local_ips;
    std::set<MacAddr> local_macs;
    std::set<std::uint32_t> device_ips;
    std::set<MacAddr> device_macs;
    std::set<std::uint32_t> phone_ips;
    std::optional<std::uint32_t> router_wan_ip;

    bool empty() const { return local_ips.empty() && local_macs.empty(); }
    bool is_local_ip(std::uint32_t ip) const { return local_ips.count(ip) != 0; }
    bool is_local_mac(const MacAddr& m) const { return local_macs.count(m) != 0; }
    bool is_device_ip(std::uint32_t ip) const { return device_ips.count(ip) != 0; }

    void add_local_ip(std::uint32_t ip) { local_ips.insert(ip); }
    void add_device_ip(std::uint32_t ip) { device_ips.insert(ip); local_ips.insert(ip); }
    void add_phone_ip(std::uint32_t ip) { phone_ips.insert(ip); local_ips.insert(ip); }
    void add_local_mac(const MacAddr& m) { local_macs.insert(m); }
    void add_device_mac(const MacAddr& m) { device_macs.insert(m); local_macs.insert(m); }

    static EndpointRoster from_file(const std::string& path);
    void to_file(const std::string& path) const;
};

enum class CommClass : std::uint8_t { PhoneCloud, DeviceCloud, PhoneDevice };

const char* comm_class_name(CommClass c);
std::optional<CommClass> comm_class_from_name(const std::string& name);

} // namespace pktsig
