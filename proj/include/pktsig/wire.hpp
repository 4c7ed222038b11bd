#pragma once

#include "pktsig/types.hpp"

#include <cstdint>
#include <vector>

namespace pktsig {

// Minimal Ethernet/IPv4/TCP frame construction for the synthetic generator
// and test fixtures. Checksums are filled with zeros; the parser does not
// verify them.

inline constexpr std::uint8_t kTcpFlagFin = 0x01;
inline constexpr std::uint8_t kTcpFlagSyn = 0x02;
inline constexpr std::uint8_t kTcpFlagRst = 0x04;
inline constexpr std::uint8_t kTcpFlagPsh = 0x08;
inline constexpr std::uint8_t kTcpFlagAck = 0x10;

struct TcpFrameSpec {
    MacAddr src_mac{}, dst_mac{};
    std::uint32_t src_ip{0}, dst_ip{0};
    std::uint16_t src_port{0}, dst_port{0};
    std::uint32_t seq{0}, ack{0};
    std::uint8_t flags{kTcpFlagAck};
    std::vector<std::uint8_t> payload;
};

std::vector<std::uint8_t> build_tcp_frame(const TcpFrameSpec& spec);

std::vector<std::uint8_t> build_udp_frame(const MacAddr& src_mac, const MacAddr& dst_mac,
                                          std::uint32_t src_ip, std::uint32_t dst_ip,
                                          std::uint16_t src_port, std::uint16_t dst_port,
                                          std::size_t payload_len);

// Radiotap + 802.11 data frame carrying `body_len` opaque bytes. addr1 is the
// receiver, addr2 the transmitter.
std::vector<std::uint8_t> build_radiotap_data_frame(const MacAddr& receiver,
                                                    const MacAddr& transmitter,
                                                    std::size_t body_len);

// Payload body helpers: a TLS application-data record header followed by
// filler, or plain filler bytes.
std::vector<std::uint8_t> tls_app_data_payload(std::size_t total_len);
std::vector<std::uint8_t> tls_handshake_payload(std::size_t total_len);
std::vector<std::uint8_t> plain_payload(std::size_t total_len);

} // namespace pktsig
