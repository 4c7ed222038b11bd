#include "pktsig/wire.hpp"

namespace pktsig {

namespace {

void push_u16be(std::vector<std::uint8_t>& out, std::uint16_t v) {
    out.push_back(static_cast<std::uint8_t>(v >> 8));
    out.push_back(static_cast<std::uint8_t>(v));
}

void push_u32be(std::vector<std::uint8_t>& out, std::uint32_t v) {
    out.push_back(static_cast<std::uint8_t>(v >> 24));
    out.push_back(static_cast<std::uint8_t>(v >> 16));
    out.push_back(static_cast<std::uint8_t>(v >> 8));
    out.push_back(static_cast<std::uint8_t>(v));
}

void push_ipv4_header(std::vector<std::uint8_t>& out, std::uint32_t src_ip,
                      std::uint32_t dst_ip, std::uint8_t protocol,
                      std::size_t l4_len) {
    out.push_back(0x45); // version 4, IHL 5
    out.push_back(0x00);
    push_u16be(out, static_cast<std::uint16_t>(20 + l4_len));
    push_u16be(out, 0);      // identification
    push_u16be(out, 0x4000); // don't fragment
    out.push_back(64);       // ttl
    out.push_back(protocol);
    push_u16be(out, 0); // checksum (unverified)
    push_u32be(out, src_ip);
    push_u32be(out, dst_ip);
}

} // namespace

std::vector<std::uint8_t> build_tcp_frame(const TcpFrameSpec& spec) {
    std::vector<std::uint8_t> out;
    out.reserve(54 + spec.payload.size());
    out.insert(out.end(), spec.dst_mac.begin(), spec.dst_mac.end());
    out.insert(out.end(), spec.src_mac.begin(), spec.src_mac.end());
    push_u16be(out, 0x0800);

    push_ipv4_header(out, spec.src_ip, spec.dst_ip, 6, 20 + spec.payload.size());

    push_u16be(out, spec.src_port);
    push_u16be(out, spec.dst_port);
    push_u32be(out, spec.seq);
    push_u32be(out, spec.ack);
    out.push_back(0x50); // data offset 5 words
    out.push_back(spec.flags);
    push_u16be(out, 65535); // window
    push_u16be(out, 0);     // checksum
    push_u16be(out, 0);     // urgent

    out.insert(out.end(), spec.payload.begin(), spec.payload.end());
    return out;
}

std::vector<std::uint8_t> build_udp_frame(const MacAddr& src_mac, const MacAddr& dst_mac,
                                          std::uint32_t src_ip, std::uint32_t dst_ip,
                                          std::uint16_t src_port, std::uint16_t dst_port,
                                          std::size_t payload_len) {
    std::vector<std::uint8_t> out;
    out.reserve(42 + payload_len);
    out.insert(out.end(), dst_mac.begin(), dst_mac.end());
    out.insert(out.end(), src_mac.begin(), src_mac.end());
    push_u16be(out, 0x0800);
    push_ipv4_header(out, src_ip, dst_ip, 17, 8 + payload_len);
    push_u16be(out, src_port);
    push_u16be(out, dst_port);
    push_u16be(out, static_cast<std::uint16_t>(8 + payload_len));
    push_u16be(out, 0);
    out.insert(out.end(), payload_len, 0xaa);
    return out;
}

std::vector<std::uint8_t> build_radiotap_data_frame(const MacAddr& receiver,
                                                    const MacAddr& transmitter,
                                                    std::size_t body_len) {
    std::vector<std::uint8_t> out;
    // radiotap header: version 0, pad 0, length 8, present flags 0
    out.push_back(0x00);
    out.push_back(0x00);
    out.push_back(0x08);
    out.push_back(0x00);
    push_u32be(out, 0); // present word (stored LE as zero either way)

    // 802.11 data frame: frame control (type=data), duration, addr1..addr3, seq-ctl
    out.push_back(0x08); // version 0, type 2 (data), subtype 0
    out.push_back(0x01); // to-DS
    push_u16be(out, 0);  // duration
    out.insert(out.end(), receiver.begin(), receiver.end());
    out.insert(out.end(), transmitter.begin(), transmitter.end());
    out.insert(out.end(), receiver.begin(), receiver.end()); // addr3
    push_u16be(out, 0); // sequence control
    out.insert(out.end(), body_len, 0x55);
    return out;
}

std::vector<std::uint8_t> tls_app_data_payload(std::size_t total_len) {
    std::vector<std::uint8_t> out(total_len, 0x5a);
    if (total_len >= 1) out[0] = 0x17;
    if (total_len >= 2) out[1] = 0x03;
    if (total_len >= 3) out[2] = 0x03;
    if (total_len >= 5) {
        std::uint16_t rec = static_cast<std::uint16_t>(total_len - 5);
        out[3] = static_cast<std::uint8_t>(rec >> 8);
        out[4] = static_cast<std::uint8_t>(rec);
    }
    return out;
}

std::vector<std::uint8_t> tls_handshake_payload(std::size_t total_len) {
    auto out = tls_app_data_payload(total_len);
    if (total_len >= 1) out[0] = 0x16;
    return out;
}

std::vector<std::uint8_t> plain_payload(std::size_t total_len) {
    return std::vector<std::uint8_t>(total_len, 0x47); // 'G'
}

} // namespace pktsig
