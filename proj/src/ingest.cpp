#include "pktsig/ingest.hpp"

#include "pktsig/pcap.hpp"

#include <cstring>

namespace pktsig {

PacketKind classify_tls(std::span<const std::uint8_t> payload_head) {
    if (payload_head.size() < 3) return PacketKind::TcpPayload;
    if (payload_head[0] == 0x17 && payload_head[1] == 0x03) return PacketKind::TlsAppData;
    return PacketKind::TcpPayload;
}

std::optional<Direction> infer_direction(const ParsedPacket& pkt, const EndpointRoster& roster) {
    bool src_local = false, dst_local = false;
    if (pkt.has_ipv4) {
        src_local = roster.is_local_ip(pkt.src_ip);
        dst_local = roster.is_local_ip(pkt.dst_ip);
    }
    if (!src_local && !dst_local) {
        src_local = roster.is_local_mac(pkt.src_mac);
        dst_local = roster.is_local_mac(pkt.dst_mac);
    }
    if (src_local) return Direction::ClientToServer;
    if (dst_local) return Direction::ServerToClient;
    return std::nullopt;
}

bool parse_ethernet_frame(std::span<const std::uint8_t> frame, ParsedPacket& out) {
    out = ParsedPacket{};
    out.frame_len = static_cast<std::uint32_t>(frame.size());
    if (frame.size() < 14) return false;
    std::copy(frame.begin(), frame.begin() + 6, out.dst_mac.begin());
    std::copy(frame.begin() + 6, frame.begin() + 12, out.src_mac.begin());
    std::uint16_t ethertype = static_cast<std::uint16_t>((frame[12] << 8) | frame[13]);
    std::size_t off = 14;
    // 802.1Q stacks
    while ((ethertype == 0x8100 || ethertype == 0x88a8) && off + 4 <= frame.size()) {
        ethertype = static_cast<std::uint16_t>((frame[off + 2] << 8) | frame[off + 3]);
        off += 4;
    }
    if (ethertype != 0x0800) return true; // parsed layer-2 only

    if (off + 20 > frame.size()) return false;
    const std::uint8_t* ip = frame.data() + off;
    if ((ip[0] >> 4) != 4) return true;
    std::size_t ihl = static_cast<std::size_t>(ip[0] & 0x0f) * 4;
    if (ihl < 20 || off + ihl > frame.size()) return false;
    out.has_ipv4 = true;
    out.protocol = ip[9];
    std::uint16_t total_len = static_cast<std::uint16_t>((ip[2] << 8) | ip[3]);
    out.src_ip = (std::uint32_t(ip[12]) << 24) | (std::uint32_t(ip[13]) << 16) |
                 (std::uint32_t(ip[14]) << 8) | ip[15];
    out.dst_ip = (std::uint32_t(ip[16]) << 24) | (std::uint32_t(ip[17]) << 16) |
                 (std::uint32_t(ip[18]) << 8) | ip[19];

    // fragments carry no parsable TCP header beyond the first one
    std::uint16_t frag = static_cast<std::uint16_t>((ip[6] << 8) | ip[7]);
    if ((frag & 0x1fff) != 0) return true;

    if (out.protocol != 6) return true;
    std::size_t tcp_off = off + ihl;
    if (tcp_off + 20 > frame.size()) return false;
    const std::uint8_t* tcp = frame.data() + tcp_off;
    out.src_port = static_cast<std::uint16_t>((tcp[0] << 8) | tcp[1]);
    out.dst_port = static_cast<std::uint16_t>((tcp[2] << 8) | tcp[3]);
    out.tcp_seq = (std::uint32_t(tcp[4]) << 24) | (std::uint32_t(tcp[5]) << 16) |
                  (std::uint32_t(tcp[6]) << 8) | tcp[7];
    std::size_t tcp_hdr = static_cast<std::size_t>(tcp[12] >> 4) * 4;
    if (tcp_hdr < 20 || tcp_off + tcp_hdr > frame.size()) return false;
    out.has_tcp = true;

    // payload length from the IP header, robust against snap-length capture
    std::size_t ip_data = total_len > ihl ? total_len - ihl : 0;
    out.payload_len = static_cast<std::uint32_t>(ip_data > tcp_hdr ? ip_data - tcp_hdr : 0);

    std::size_t payload_off = tcp_off + tcp_hdr;
    std::size_t avail = frame.size() > payload_off ? frame.size() - payload_off : 0;
    out.payload_head_len = static_cast<std::uint8_t>(std::min<std::size_t>(avail, 3));
    for (std::size_t i = 0; i < out.payload_head_len; ++i)
        out.payload_head[i] = frame[payload_off + i];
    return true;
}

namespace {

enum class RadiotapParse { Ok, Malformed, NotData };

// Radiotap + 802.11: extract the transmitter/receiver pair of data frames.
RadiotapParse parse_radiotap_frame(std::span<const std::uint8_t> frame, ParsedPacket& out) {
    out = ParsedPacket{};
    out.frame_len = static_cast<std::uint32_t>(frame.size());
    if (frame.size() < 4) return RadiotapParse::Malformed;
    std::uint16_t rt_len = static_cast<std::uint16_t>(frame[2] | (frame[3] << 8));
    if (rt_len < 8 || rt_len + 24u > frame.size()) return RadiotapParse::Malformed;
    const std::uint8_t* dot11 = frame.data() + rt_len;
    std::uint8_t type = static_cast<std::uint8_t>((dot11[0] >> 2) & 0x3);
    if (type != 2) return RadiotapParse::NotData; // management/control frame
    std::copy(dot11 + 4, dot11 + 10, out.dst_mac.begin());  // addr1 = receiver
    std::copy(dot11 + 10, dot11 + 16, out.src_mac.begin()); // addr2 = transmitter
    return RadiotapParse::Ok;
}

} // namespace

Capture parse_capture(const std::string& path, FlowMode mode, const EndpointRoster& roster) {
    if (roster.empty())
        throw ConfigError("endpoint roster is empty; direction inference needs at least one local address");

    PcapReader reader(path);
    if (mode == FlowMode::Layer3 && reader.link_type() != kLinkTypeEthernet)
        throw ParseError(path + ": layer-3 parsing expects an Ethernet capture (link type 1)");
    if (mode == FlowMode::Layer2 && reader.link_type() != kLinkTypeEthernet &&
        reader.link_type() != kLinkTypeRadiotap)
        throw ParseError(path + ": layer-2 parsing expects Ethernet or radiotap link types");

    Capture cap;
    cap.mode = mode;
    bool radiotap = reader.link_type() == kLinkTypeRadiotap;

    PcapRecord rec;
    while (reader.next(rec)) {
        ++cap.stats.frames;
        ParsedPacket pkt;
        if (radiotap) {
            switch (parse_radiotap_frame(rec.data, pkt)) {
            case RadiotapParse::Malformed: ++cap.stats.malformed; continue;
            case RadiotapParse::NotData: ++cap.stats.non_tcp; continue;
            case RadiotapParse::Ok: break;
            }
        } else if (!parse_ethernet_frame(rec.data, pkt)) {
            ++cap.stats.malformed;
            continue;
        }
        pkt.ts_us = rec.ts_us;
        pkt.frame_len = rec.orig_len;

        if (mode == FlowMode::Layer3) {
            if (!pkt.has_tcp) {
                ++cap.stats.non_tcp;
                continue;
            }
        }

        auto dir = infer_direction(pkt, roster);
        if (!dir) {
            ++cap.stats.no_direction;
            continue;
        }

        PacketMeta meta;
        meta.ts_us = pkt.ts_us;
        meta.direction = *dir;
        meta.src_mac = pkt.src_mac;
        meta.dst_mac = pkt.dst_mac;
        meta.index = static_cast<std::uint32_t>(cap.packets.size());
        if (mode == FlowMode::Layer3) {
            meta.length = static_cast<std::int32_t>(pkt.payload_len);
            meta.flow = FlowKey::layer3(pkt.src_ip, pkt.src_port, pkt.dst_ip, pkt.dst_port,
                                        pkt.protocol);
            meta.tcp_seq = pkt.tcp_seq;
            if (pkt.payload_len == 0) {
                meta.kind = PacketKind::Other;
            } else {
                meta.kind = classify_tls(
                    std::span<const std::uint8_t>(pkt.payload_head.data(), pkt.payload_head_len));
            }
        } else {
            meta.length = static_cast<std::int32_t>(pkt.frame_len);
            meta.flow = FlowKey::layer2(pkt.src_mac, pkt.dst_mac);
            meta.kind = PacketKind::Other;
        }
        cap.packets.push_back(meta);
        ++cap.stats.emitted;
    }
    cap.stats.truncated = reader.truncated_records();
    return cap;
}

} // namespace pktsig
