#include <doctest.h>

#include "pktsig/ingest.hpp"
#include "pktsig/pcap.hpp"
#include "pktsig/reassembly.hpp"
#include "pktsig/wire.hpp"

#include <cstdio>
#include <filesystem>

using namespace pktsig;

namespace {

const MacAddr kDeviceMac{0x02, 0, 0, 0, 0, 0x0a};
const MacAddr kRouterMac{0x02, 0, 0, 0, 0, 0x01};
const std::uint32_t kDeviceIp = ipv4_from_string("192.0.2.10").value();
const std::uint32_t kCloudIp = ipv4_from_string("198.51.100.5").value();

EndpointRoster test_roster() {
    EndpointRoster roster;
    roster.add_device_ip(kDeviceIp);
    roster.add_device_mac(kDeviceMac);
    return roster;
}

std::string temp_path(const char* name) {
    return (std::filesystem::temp_directory_path() / name).string();
}

TcpFrameSpec payload_frame(Direction dir, std::uint32_t seq, std::vector<std::uint8_t> payload) {
    TcpFrameSpec spec;
    bool c2s = dir == Direction::ClientToServer;
    spec.src_mac = c2s ? kDeviceMac : kRouterMac;
    spec.dst_mac = c2s ? kRouterMac : kDeviceMac;
    spec.src_ip = c2s ? kDeviceIp : kCloudIp;
    spec.dst_ip = c2s ? kCloudIp : kDeviceIp;
    spec.src_port = c2s ? 40001 : 443;
    spec.dst_port = c2s ? 443 : 40001;
    spec.seq = seq;
    spec.flags = kTcpFlagAck | kTcpFlagPsh;
    spec.payload = std::move(payload);
    return spec;
}

} // namespace

TEST_CASE("empty pcap yields an empty stream") {
    std::string path = temp_path("pktsig_empty.pcap");
    {
        PcapWriter writer(path);
        writer.close();
    }
    Capture cap = parse_capture(path, FlowMode::Layer3, test_roster());
    CHECK(cap.packets.empty());
    CHECK(cap.stats.frames == 0);
}

TEST_CASE("single 556-byte TCP segment from the device") {
    std::string path = temp_path("pktsig_one.pcap");
    {
        PcapWriter writer(path);
        writer.write(1'000'000, build_tcp_frame(payload_frame(Direction::ClientToServer, 1000,
                                                              plain_payload(556))));
        writer.close();
    }
    Capture cap = parse_capture(path, FlowMode::Layer3, test_roster());
    REQUIRE(cap.packets.size() == 1);
    CHECK(cap.packets[0].length == 556);
    CHECK(cap.packets[0].direction == Direction::ClientToServer);
    CHECK(cap.packets[0].kind == PacketKind::TcpPayload);
    CHECK(cap.packets[0].ts_us == 1'000'000);
}

TEST_CASE("TLS application-data records are classified") {
    std::string path = temp_path("pktsig_tls.pcap");
    {
        PcapWriter writer(path);
        writer.write(1, build_tcp_frame(payload_frame(Direction::ClientToServer, 1000,
                                                      tls_app_data_payload(100))));
        writer.close();
    }
    Capture cap = parse_capture(path, FlowMode::Layer3, test_roster());
    REQUIRE(cap.packets.size() == 1);
    CHECK(cap.packets[0].kind == PacketKind::TlsAppData);
}

TEST_CASE("classify_tls record types") {
    std::uint8_t app[] = {0x17, 0x03, 0x03};
    std::uint8_t handshake[] = {0x16, 0x03, 0x03};
    std::uint8_t http[] = {'G', 'E', 'T'};
    std::uint8_t short_buf[] = {0x17, 0x03};
    CHECK(classify_tls({app, 3}) == PacketKind::TlsAppData);
    CHECK(classify_tls({handshake, 3}) == PacketKind::TcpPayload);
    CHECK(classify_tls({http, 3}) == PacketKind::TcpPayload);
    CHECK(classify_tls({short_buf, 2}) == PacketKind::TcpPayload);
}

TEST_CASE("direction inference from the roster") {
    EndpointRoster roster = test_roster();
    ParsedPacket pkt;
    pkt.has_ipv4 = true;
    pkt.src_ip = kDeviceIp;
    pkt.dst_ip = kCloudIp;
    CHECK(infer_direction(pkt, roster) == Direction::ClientToServer);

    std::swap(pkt.src_ip, pkt.dst_ip);
    CHECK(infer_direction(pkt, roster) == Direction::ServerToClient);

    pkt.src_ip = kCloudIp;
    pkt.dst_ip = ipv4_from_string("203.0.113.9").value();
    CHECK_FALSE(infer_direction(pkt, roster).has_value());
}

TEST_CASE("direction inference is an involution under endpoint swap") {
    EndpointRoster roster = test_roster();
    ParsedPacket pkt;
    pkt.has_ipv4 = true;
    pkt.src_ip = kDeviceIp;
    pkt.dst_ip = kCloudIp;
    pkt.src_mac = kDeviceMac;
    pkt.dst_mac = kRouterMac;
    auto forward = infer_direction(pkt, roster);
    std::swap(pkt.src_ip, pkt.dst_ip);
    std::swap(pkt.src_mac, pkt.dst_mac);
    auto backward = infer_direction(pkt, roster);
    REQUIRE(forward.has_value());
    REQUIRE(backward.has_value());
    CHECK(*backward == flipped(*forward));
}

TEST_CASE("map_to_layer2 examples") {
    CHECK(map_to_layer2(556) == 636);
    CHECK(map_to_layer2(0, 0) == 0);
    CHECK(map_to_layer2(1293, 80) == 1373);
}

TEST_CASE("nanosecond pcap is rejected") {
    std::string path = temp_path("pktsig_ns.pcap");
    std::vector<std::uint8_t> header = {0x4d, 0x3c, 0xb2, 0xa1}; // ns magic, LE
    header.resize(24, 0);
    write_text_file(path, std::string(header.begin(), header.end()));
    CHECK_THROWS_AS(PcapReader reader(path), ParseError);
}

TEST_CASE("malformed global header is fatal") {
    std::string path = temp_path("pktsig_bad.pcap");
    write_text_file(path, "not a capture");
    CHECK_THROWS_AS(PcapReader reader(path), ParseError);
}

TEST_CASE("truncated record bumps the warning counter") {
    std::string path = temp_path("pktsig_trunc.pcap");
    {
        PcapWriter writer(path);
        writer.write(1, build_tcp_frame(payload_frame(Direction::ClientToServer, 1, plain_payload(10))));
        writer.close();
    }
    std::string bytes = read_text_file(path);
    bytes.resize(bytes.size() - 4); // cut the last record short
    write_text_file(path, bytes);
    PcapReader reader(path);
    PcapRecord rec;
    while (reader.next(rec)) {
    }
    CHECK(reader.truncated_records() == 1);
}

TEST_CASE("big-endian pcap parses identically") {
    std::string le = temp_path("pktsig_le.pcap");
    std::string be = temp_path("pktsig_be.pcap");
    auto frame = build_tcp_frame(payload_frame(Direction::ClientToServer, 77, plain_payload(42)));
    {
        PcapWriter w1(le, kLinkTypeEthernet, false);
        w1.write(123'456'789, frame);
        w1.close();
        PcapWriter w2(be, kLinkTypeEthernet, true);
        w2.write(123'456'789, frame);
        w2.close();
    }
    Capture a = parse_capture(le, FlowMode::Layer3, test_roster());
    Capture b = parse_capture(be, FlowMode::Layer3, test_roster());
    REQUIRE(a.packets.size() == 1);
    REQUIRE(b.packets.size() == 1);
    CHECK(a.packets[0].ts_us == b.packets[0].ts_us);
    CHECK(a.packets[0].length == b.packets[0].length);
}

TEST_CASE("non-TCP packets are counted and dropped in layer-3 mode") {
    std::string path = temp_path("pktsig_udp.pcap");
    {
        PcapWriter writer(path);
        writer.write(1, build_udp_frame(kDeviceMac, kRouterMac, kDeviceIp, kCloudIp, 5353, 5353, 64));
        writer.write(2, build_tcp_frame(payload_frame(Direction::ClientToServer, 1, plain_payload(5))));
        writer.close();
    }
    Capture cap = parse_capture(path, FlowMode::Layer3, test_roster());
    CHECK(cap.packets.size() == 1);
    CHECK(cap.stats.non_tcp == 1);
}

TEST_CASE("layer-2 mode uses frame lengths and MAC flows") {
    std::string path = temp_path("pktsig_l2.pcap");
    std::size_t frame_len;
    {
        PcapWriter writer(path);
        auto frame = build_tcp_frame(payload_frame(Direction::ClientToServer, 1, plain_payload(556)));
        frame_len = frame.size();
        writer.write(1, frame);
        writer.close();
    }
    Capture cap = parse_capture(path, FlowMode::Layer2, test_roster());
    REQUIRE(cap.packets.size() == 1);
    CHECK(cap.packets[0].length == static_cast<int>(frame_len));
    CHECK(cap.packets[0].flow.mode == FlowMode::Layer2);
    CHECK(cap.packets[0].flow == FlowKey::layer2(kDeviceMac, kRouterMac));
}

TEST_CASE("radiotap data frames parse in layer-2 mode") {
    std::string path = temp_path("pktsig_rt.pcap");
    std::size_t frame_len;
    {
        PcapWriter writer(path, kLinkTypeRadiotap);
        auto frame = build_radiotap_data_frame(kRouterMac, kDeviceMac, 600);
        frame_len = frame.size();
        writer.write(1, frame);
        writer.close();
    }
    Capture cap = parse_capture(path, FlowMode::Layer2, test_roster());
    REQUIRE(cap.packets.size() == 1);
    CHECK(cap.packets[0].length == static_cast<int>(frame_len));
    CHECK(cap.packets[0].direction == Direction::ClientToServer); // transmitter is the device
    CHECK_THROWS_AS(parse_capture(path, FlowMode::Layer3, test_roster()), ParseError);
}

TEST_CASE("reassembly keeps arrival order when segments are in order") {
    std::vector<PacketMeta> packets;
    std::uint32_t seq = 1000;
    for (int i = 0; i < 4; ++i) {
        PacketMeta pkt;
        pkt.ts_us = 1000 + i;
        pkt.length = 100 + i;
        pkt.direction = i % 2 == 0 ? Direction::ClientToServer : Direction::ServerToClient;
        pkt.flow = FlowKey::layer3(kDeviceIp, 40001, kCloudIp, 443, 6);
        pkt.kind = PacketKind::TcpPayload;
        pkt.tcp_seq = pkt.direction == Direction::ClientToServer ? seq : 5000;
        if (pkt.direction == Direction::ClientToServer) seq += static_cast<std::uint32_t>(pkt.length);
        packets.push_back(pkt);
    }
    // distinct server seq per reply
    packets[1].tcp_seq = 5000;
    packets[3].tcp_seq = 5101;

    auto conns = reassemble_tcp(packets);
    REQUIRE(conns.size() == 1);
    CHECK(conns[0].payload.size() == 4);
    for (std::size_t i = 0; i < 4; ++i) CHECK(conns[0].payload[i].length == 100 + static_cast<int>(i));
}

TEST_CASE("duplicate segment is flagged as retransmission and excluded from P") {
    std::vector<PacketMeta> packets;
    auto mk = [](Micros ts, std::uint32_t seq, int len) {
        PacketMeta pkt;
        pkt.ts_us = ts;
        pkt.length = len;
        pkt.direction = Direction::ClientToServer;
        pkt.flow = FlowKey::layer3(kDeviceIp, 40001, kCloudIp, 443, 6);
        pkt.kind = PacketKind::TcpPayload;
        pkt.tcp_seq = seq;
        return pkt;
    };
    packets.push_back(mk(1, 1000, 50));
    packets.push_back(mk(2, 1050, 60)); // segment #2
    packets.push_back(mk(3, 1050, 60)); // duplicate of #2
    packets.push_back(mk(4, 1110, 70));
    packets.push_back(mk(5, 1180, 80));

    auto conns = reassemble_tcp(packets);
    REQUIRE(conns.size() == 1);
    CHECK(conns[0].payload.size() == 4);
    int flagged = 0;
    for (const auto& pkt : conns[0].packets)
        if (pkt.retransmission) ++flagged;
    CHECK(flagged == 1);
}

TEST_CASE("retransmission filtering is idempotent") {
    std::vector<PacketMeta> packets;
    auto mk = [](Micros ts, std::uint32_t seq, int len) {
        PacketMeta pkt;
        pkt.ts_us = ts;
        pkt.length = len;
        pkt.direction = Direction::ClientToServer;
        pkt.flow = FlowKey::layer3(kDeviceIp, 40001, kCloudIp, 443, 6);
        pkt.kind = PacketKind::TcpPayload;
        pkt.tcp_seq = seq;
        return pkt;
    };
    packets.push_back(mk(1, 1000, 50));
    packets.push_back(mk(2, 1000, 50));
    packets.push_back(mk(3, 1050, 60));

    auto once = reassemble_tcp(packets);
    REQUIRE(once.size() == 1);
    auto twice = reassemble_tcp(once[0].payload);
    REQUIRE(twice.size() == 1);
    CHECK(once[0].payload.size() == twice[0].payload.size());
    for (std::size_t i = 0; i < once[0].payload.size(); ++i)
        CHECK(once[0].payload[i].tcp_seq == twice[0].payload[i].tcp_seq);
}

TEST_CASE("interleaved connections split into ordered per-connection lists") {
    std::vector<PacketMeta> packets;
    auto mk = [](Micros ts, std::uint16_t port, std::uint32_t seq, int len) {
        PacketMeta pkt;
        pkt.ts_us = ts;
        pkt.length = len;
        pkt.direction = Direction::ClientToServer;
        pkt.flow = FlowKey::layer3(kDeviceIp, port, kCloudIp, 443, 6);
        pkt.kind = PacketKind::TcpPayload;
        pkt.tcp_seq = seq;
        return pkt;
    };
    packets.push_back(mk(1, 40001, 1000, 10));
    packets.push_back(mk(2, 40002, 9000, 20));
    packets.push_back(mk(3, 40001, 1010, 11));
    packets.push_back(mk(4, 40002, 9020, 21));

    auto conns = reassemble_tcp(packets);
    REQUIRE(conns.size() == 2);
    CHECK(conns[0].payload.size() == 2);
    CHECK(conns[1].payload.size() == 2);
    CHECK(conns[0].payload[0].length == 10);
    CHECK(conns[1].payload[0].length == 20);
}

TEST_CASE("out-of-order segments are delivered in sequence order") {
    std::vector<PacketMeta> packets;
    auto mk = [](Micros ts, std::uint32_t seq, int len) {
        PacketMeta pkt;
        pkt.ts_us = ts;
        pkt.length = len;
        pkt.direction = Direction::ClientToServer;
        pkt.flow = FlowKey::layer3(kDeviceIp, 40001, kCloudIp, 443, 6);
        pkt.kind = PacketKind::TcpPayload;
        pkt.tcp_seq = seq;
        return pkt;
    };
    packets.push_back(mk(1, 1000, 50));
    packets.push_back(mk(2, 1110, 70)); // arrives early
    packets.push_back(mk(3, 1050, 60)); // fills the gap
    auto conns = reassemble_tcp(packets);
    REQUIRE(conns.size() == 1);
    REQUIRE(conns[0].payload.size() == 3);
    CHECK(conns[0].payload[0].tcp_seq == 1000);
    CHECK(conns[0].payload[1].tcp_seq == 1050);
    CHECK(conns[0].payload[2].tcp_seq == 1110);
}

TEST_CASE("P is a subsequence of the reassembled packet list") {
    std::vector<PacketMeta> packets;
    auto mk = [](Micros ts, std::uint32_t seq, int len, PacketKind kind) {
        PacketMeta pkt;
        pkt.ts_us = ts;
        pkt.length = len;
        pkt.direction = Direction::ClientToServer;
        pkt.flow = FlowKey::layer3(kDeviceIp, 40001, kCloudIp, 443, 6);
        pkt.kind = kind;
        pkt.tcp_seq = seq;
        return pkt;
    };
    packets.push_back(mk(1, 1000, 50, PacketKind::TcpPayload));
    packets.push_back(mk(2, 1050, 60, PacketKind::TlsAppData));
    packets.push_back(mk(3, 1110, 70, PacketKind::TcpPayload));
    packets.push_back(mk(4, 1180, 80, PacketKind::TlsAppData));

    auto conns = reassemble_tcp(packets);
    REQUIRE(conns.size() == 1);
    CHECK(conns[0].tls);
    // TLS connection: P restricted to application data
    REQUIRE(conns[0].payload.size() == 2);
    CHECK(conns[0].payload[0].tcp_seq == 1050);
    CHECK(conns[0].payload[1].tcp_seq == 1180);

    // subsequence check
    std::size_t cursor = 0;
    for (const auto& pkt : conns[0].packets) {
        if (cursor < conns[0].payload.size() &&
            conns[0].payload[cursor].tcp_seq == pkt.tcp_seq &&
            conns[0].payload[cursor].ts_us == pkt.ts_us)
            ++cursor;
    }
    CHECK(cursor == conns[0].payload.size());
}

TEST_CASE("frame parsers survive random bytes") {
    Rng rng(314159);
    ParsedPacket parsed;
    for (int trial = 0; trial < 2000; ++trial) {
        std::vector<std::uint8_t> blob(rng.uniform_u64(0, 128));
        for (auto& b : blob) b = static_cast<std::uint8_t>(rng.uniform_u64(0, 255));
        // sometimes make it look like a frame so the deeper branches run
        if (blob.size() >= 14 && rng.chance(0.5)) {
            blob[12] = 0x08;
            blob[13] = 0x00;
            if (blob.size() >= 15 && rng.chance(0.7)) blob[14] = 0x45;
        }
        parse_ethernet_frame(blob, parsed);
    }
    CHECK(true); // no crash is the property
}

TEST_CASE("roster file round-trip") {
    std::string path = temp_path("pktsig_roster.txt");
    EndpointRoster roster = test_roster();
    roster.add_phone_ip(ipv4_from_string("192.0.2.20").value());
    roster.router_wan_ip = ipv4_from_string("203.0.113.1").value();
    roster.to_file(path);
    EndpointRoster loaded = EndpointRoster::from_file(path);
    CHECK(loaded.local_ips == roster.local_ips);
    CHECK(loaded.device_ips == roster.device_ips);
    CHECK(loaded.phone_ips == roster.phone_ips);
    CHECK(loaded.router_wan_ip == roster.router_wan_ip);
    CHECK(loaded.local_macs == roster.local_macs);
}
