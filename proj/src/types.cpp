#include "pktsig/types.hpp"

#include "pktsig/util.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>
#include <tuple>

namespace pktsig {

std::string mac_to_string(const MacAddr& mac) {
    char buf[18];
    std::snprintf(buf, sizeof(buf), "%02x:%02x:%02x:%02x:%02x:%02x",
                  mac[0], mac[1], mac[2], mac[3], mac[4], mac[5]);
    return buf;
}

std::optional<MacAddr> mac_from_string(const std::string& text) {
    MacAddr mac{};
    unsigned v[6];
    if (std::sscanf(text.c_str(), "%x:%x:%x:%x:%x:%x",
                    &v[0], &v[1], &v[2], &v[3], &v[4], &v[5]) != 6)
        return std::nullopt;
    for (int i = 0; i < 6; ++i) {
        if (v[i] > 0xff) return std::nullopt;
        mac[i] = static_cast<std::uint8_t>(v[i]);
    }
    return mac;
}

std::string ipv4_to_string(std::uint32_t ip) {
    char buf[16];
    std::snprintf(buf, sizeof(buf), "%u.%u.%u.%u",
                  (ip >> 24) & 0xff, (ip >> 16) & 0xff, (ip >> 8) & 0xff, ip & 0xff);
    return buf;
}

std::optional<std::uint32_t> ipv4_from_string(const std::string& text) {
    unsigned a, b, c, d;
    char extra;
    if (std::sscanf(text.c_str(), "%u.%u.%u.%u%c", &a, &b, &c, &d, &extra) != 4)
        return std::nullopt;
    if (a > 255 || b > 255 || c > 255 || d > 255) return std::nullopt;
    return (a << 24) | (b << 16) | (c << 8) | d;
}

FlowKey FlowKey::layer3(std::uint32_t src_ip, std::uint16_t src_port,
                        std::uint32_t dst_ip, std::uint16_t dst_port,
                        std::uint8_t protocol) {
    FlowKey k;
    k.mode = FlowMode::Layer3;
    k.protocol = protocol;
    if (std::tie(src_ip, src_port) <= std::tie(dst_ip, dst_port)) {
        k.ip_a = src_ip; k.port_a = src_port;
        k.ip_b = dst_ip; k.port_b = dst_port;
    } else {
        k.ip_a = dst_ip; k.port_a = dst_port;
        k.ip_b = src_ip; k.port_b = src_port;
    }
    return k;
}

FlowKey FlowKey::layer2(const MacAddr& a, const MacAddr& b) {
    FlowKey k;
    k.mode = FlowMode::Layer2;
    if (a <= b) {
        k.mac_a = a; k.mac_b = b;
    } else {
        k.mac_a = b; k.mac_b = a;
    }
    return k;
}

bool FlowKey::operator<(const FlowKey& o) const {
    return std::tie(mode, ip_a, port_a, ip_b, port_b, protocol, mac_a, mac_b) <
           std::tie(o.mode, o.ip_a, o.port_a, o.ip_b, o.port_b, o.protocol, o.mac_a, o.mac_b);
}

std::string FlowKey::to_string() const {
    std::ostringstream out;
    if (mode == FlowMode::Layer3) {
        out << ipv4_to_string(ip_a) << ':' << port_a << '-'
            << ipv4_to_string(ip_b) << ':' << port_b;
    } else {
        out << mac_to_string(mac_a) << '-' << mac_to_string(mac_b);
    }
    return out.str();
}

std::size_t FlowKeyHash::operator()(const FlowKey& k) const noexcept {
    // FNV-1a over the identifying fields
    std::uint64_t h = 14695981039346656037ULL;
    auto mix = [&h](std::uint64_t v) { h = (h ^ v) * 1099511628211ULL; };
    mix(static_cast<std::uint64_t>(k.mode));
    mix((std::uint64_t(k.ip_a) << 32) | k.ip_b);
    mix((std::uint64_t(k.port_a) << 24) | (std::uint64_t(k.port_b) << 8) | k.protocol);
    std::uint64_t ma = 0, mb = 0;
    for (auto b : k.mac_a) ma = (ma << 8) | b;
    for (auto b : k.mac_b) mb = (mb << 8) | b;
    mix(ma);
    mix(mb);
    return static_cast<std::size_t>(h);
}

const char* comm_class_name(CommClass c) {
    switch (c) {
    case CommClass::PhoneCloud: return "phone-cloud";
    case CommClass::DeviceCloud: return "device-cloud";
    case CommClass::PhoneDevice: return "phone-device";
    }
    return "device-cloud";
}

std::optional<CommClass> comm_class_from_name(const std::string& name) {
    if (name == "phone-cloud") return CommClass::PhoneCloud;
    if (name == "device-cloud") return CommClass::DeviceCloud;
    if (name == "phone-device") return CommClass::PhoneDevice;
    return std::nullopt;
}

EndpointRoster EndpointRoster::from_file(const std::string& path) {
    EndpointRoster roster;
    std::istringstream in(read_text_file(path));
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        line = trim(line);
        if (line.empty() || line[0] == '#') continue;
        auto toks = split_ws(line);
        std::string role = "local";
        std::string addr;
        if (toks.size() == 1) {
            addr = toks[0];
        } else if (toks.size() == 2) {
            role = toks[0];
            addr = toks[1];
        } else {
            throw ParseError(path + ":" + std::to_string(lineno) + ": expected `[role] <ip|mac>`");
        }
        auto ip = ipv4_from_string(addr);
        auto mac = mac_from_string(addr);
        if (!ip && !mac)
            throw ParseError(path + ":" + std::to_string(lineno) + ": not an IPv4 or MAC address: " + addr);
        if (role == "local") {
            if (ip) roster.add_local_ip(*ip);
            if (mac) roster.add_local_mac(*mac);
        } else if (role == "device") {
            if (ip) roster.add_device_ip(*ip);
            if (mac) roster.add_device_mac(*mac);
        } else if (role == "phone") {
            if (ip) roster.add_phone_ip(*ip);
            if (mac) roster.add_local_mac(*mac);
        } else if (role == "wan") {
            if (!ip) throw ParseError(path + ":" + std::to_string(lineno) + ": wan entry must be an IPv4 address");
            roster.router_wan_ip = *ip;
        } else {
            throw ParseError(path + ":" + std::to_string(lineno) + ": unknown role: " + role);
        }
    }
    return roster;
}

void EndpointRoster::to_file(const std::string& path) const {
    std::ostringstream out;
    for (auto ip : device_ips) out << "device " << ipv4_to_string(ip) << '\n';
    for (auto ip : phone_ips) out << "phone " << ipv4_to_string(ip) << '\n';
    for (auto ip : local_ips)
        if (!device_ips.count(ip) && !phone_ips.count(ip))
            out << "local " << ipv4_to_string(ip) << '\n';
    for (const auto& mac : device_macs) out << "device " << mac_to_string(mac) << '\n';
    for (const auto& mac : local_macs)
        if (!device_macs.count(mac)) out << "local " << mac_to_string(mac) << '\n';
    if (router_wan_ip) out << "wan " << ipv4_to_string(*router_wan_ip) << '\n';
    write_text_file(path, out.str());
}

} // namespace pktsig
