#include <doctest.h>

#include "pktsig/detection.hpp"
#include "pktsig/events.hpp"
#include "pktsig/pcap.hpp"
#include "pktsig/util.hpp"
#include "pktsig/wire.hpp"

#include "support/detect_ref.hpp"
#include "support/random_trace.hpp"

#include <filesystem>
#include <map>
#include <set>

using namespace pktsig;

namespace {

SignaturePosition pos(Direction dir, int len) {
    SignaturePosition p;
    p.dir = dir;
    p.obs_min = p.obs_max = p.core_min = p.core_max = len;
    return p;
}

Signature tplink_like() {
    Signature sig;
    sig.id = "plug-on";
    sig.device = "plug";
    sig.label = "ON";
    sig.duration_min_us = 75'000;
    sig.duration_avg_us = 85'000;
    sig.duration_max_us = 204'000;
    SignatureSet set;
    set.positions.push_back(pos(Direction::ClientToServer, 556));
    set.positions.push_back(pos(Direction::ServerToClient, 1293));
    sig.sets.push_back(set);
    return sig;
}

PacketMeta mk(Micros ts, Direction dir, int len, std::uint32_t index = 0) {
    PacketMeta pkt;
    pkt.ts_us = ts;
    pkt.direction = dir;
    pkt.length = len;
    pkt.index = index;
    pkt.kind = PacketKind::TcpPayload;
    return pkt;
}

using testing::RandomTrace;
using testing::make_random_trace;
using testing::oracle_detect;

} // namespace

TEST_CASE("a matching terminal packet completes the machine") {
    Signature sig = tplink_like();
    MatchBounds bounds = exact_bounds(sig);
    SequenceMachine machine;
    machine.set_index = 0;
    machine.state = 1;
    machine.recorded.push_back(mk(1000, Direction::ClientToServer, 556));

    CHECK(advance(machine, mk(2000, Direction::ServerToClient, 1293), SnifferMode::Wan, bounds) ==
          AdvanceResult::Completed);
    CHECK(machine.recorded.size() == 2);
}

TEST_CASE("non-matching packets reset at layer 3 and are ignored at layer 2") {
    Signature sig = tplink_like();
    MatchBounds bounds = exact_bounds(sig);

    SequenceMachine wan;
    wan.set_index = 0;
    wan.state = 1;
    wan.recorded.push_back(mk(1000, Direction::ClientToServer, 556));
    CHECK(advance(wan, mk(2000, Direction::ClientToServer, 90), SnifferMode::Wan, bounds) ==
          AdvanceResult::Reset);
    CHECK(wan.state == 0);
    CHECK(wan.recorded.empty());

    SequenceMachine wifi;
    wifi.set_index = 0;
    wifi.state = 1;
    wifi.recorded.push_back(mk(1000, Direction::ClientToServer, 556));
    CHECK(advance(wifi, mk(2000, Direction::ClientToServer, 90), SnifferMode::Wifi, bounds) ==
          AdvanceResult::Ignored);
    CHECK(wifi.state == 1);
}

TEST_CASE("replacement keeps the later first packet") {
    // two C-556 in a row, then S-1293: one completion, starting at the second C-556
    Signature sig = tplink_like();
    MatchBounds bounds = exact_bounds(sig);
    FlowKey flow = FlowKey::layer3(1, 1, 2, 2, 6);

    for (SnifferMode mode : {SnifferMode::Wan, SnifferMode::Wifi}) {
        CAPTURE(sniffer_mode_name(mode));
        MachinePool pool(0, 2, flow, 224'000);
        auto r1 = pool.feed(mk(1000, Direction::ClientToServer, 556, 1), mode, bounds);
        auto r2 = pool.feed(mk(2000, Direction::ClientToServer, 556, 2), mode, bounds);
        auto r3 = pool.feed(mk(3000, Direction::ServerToClient, 1293, 3), mode, bounds);
        CHECK_FALSE(r1.has_value());
        CHECK_FALSE(r2.has_value());
        REQUIRE(r3.has_value());
        CHECK(r3->recorded.front().index == 2); // the later C-556 wins
        CHECK(r3->recorded.back().index == 3);
    }
}

TEST_CASE("pool stays at one machine when nothing matches") {
    Signature sig = tplink_like();
    MatchBounds bounds = exact_bounds(sig);
    MachinePool pool(0, 2, FlowKey{}, 224'000);
    for (int i = 0; i < 10; ++i)
        CHECK_FALSE(pool.feed(mk(1000 + i, Direction::ServerToClient, 42), SnifferMode::Wan, bounds)
                        .has_value());
    CHECK(pool.active_machines() == 1);
}

TEST_CASE("pool size stays bounded by the sequence length plus one") {
    Signature sig;
    sig.duration_max_us = 500'000;
    SignatureSet set;
    for (int i = 0; i < 4; ++i) set.positions.push_back(pos(Direction::ClientToServer, 100));
    sig.sets.push_back(set);
    MatchBounds bounds = exact_bounds(sig);

    MachinePool pool(0, 4, FlowKey{}, 10'000'000);
    Rng rng(3);
    for (int i = 0; i < 200; ++i) {
        pool.feed(mk(1000 + i * 10, Direction::ClientToServer, rng.chance(0.7) ? 100 : 55),
                  SnifferMode::Wifi, bounds);
        CHECK(pool.active_machines() <= 5);
    }
}

TEST_CASE("multi-set matches honor ordering and the window") {
    // Arlo-style: set 1 then set 2, duration max 194 ms -> window 214 ms (rounded-to-ms)
    Signature sig;
    sig.id = "cam-on";
    sig.device = "cam";
    sig.label = "ON";
    sig.duration_max_us = 194'000;
    SignatureSet s1, s2;
    s1.positions.push_back(pos(Direction::ClientToServer, 338));
    s1.positions.push_back(pos(Direction::ServerToClient, 326));
    s2.positions.push_back(pos(Direction::ClientToServer, 271));
    s2.positions.push_back(pos(Direction::ServerToClient, 499));
    sig.sets.push_back(s1);
    sig.sets.push_back(s2);

    MatchAssembler assembler(sig, detection_window_ms(sig.duration_max_ms()));

    SequenceCompletion c1;
    c1.set_index = 0;
    c1.recorded = {mk(1'000'000, Direction::ClientToServer, 338, 0),
                   mk(1'010'000, Direction::ServerToClient, 326, 1)};
    SequenceCompletion c2;
    c2.set_index = 1;
    c2.recorded = {mk(1'050'000, Direction::ClientToServer, 271, 2),
                   mk(1'060'000, Direction::ServerToClient, 499, 3)};

    SUBCASE("in order within the window") {
        CHECK_FALSE(assembler.offer(c1).has_value());
        auto match = assembler.offer(c2);
        REQUIRE(match.has_value());
        CHECK(match->first_ts == 1'000'000);
        CHECK(match->last_ts == 1'060'000);
    }
    SUBCASE("set 2 before any set 1 never matches") {
        CHECK_FALSE(assembler.offer(c2).has_value());
        CHECK_FALSE(assembler.offer(c1).has_value());
    }
    SUBCASE("span beyond the window never matches") {
        CHECK_FALSE(assembler.offer(c1).has_value());
        SequenceCompletion late = c2;
        for (auto& pkt : late.recorded) pkt.ts_us += 10'000'000; // 10 s later
        CHECK_FALSE(assembler.offer(late).has_value());
    }
}

TEST_CASE("single-set completions respect the duration window") {
    Signature sig = tplink_like(); // window 224 ms
    MatchAssembler assembler(sig, detection_window_ms(sig.duration_max_ms()));
    SequenceCompletion slow;
    slow.set_index = 0;
    slow.recorded = {mk(1'000'000, Direction::ClientToServer, 556),
                     mk(1'500'000, Direction::ServerToClient, 1293)}; // 500 ms apart
    CHECK_FALSE(assembler.offer(slow).has_value());

    SequenceCompletion quick;
    quick.set_index = 0;
    quick.recorded = {mk(2'000'000, Direction::ClientToServer, 556),
                      mk(2'100'000, Direction::ServerToClient, 1293)};
    CHECK(assembler.offer(quick).has_value());
}

TEST_CASE("empty capture detects nothing") {
    Capture cap;
    cap.mode = FlowMode::Layer3;
    DetectOptions opt;
    auto report = detect(cap, {tplink_like()}, opt);
    CHECK(report.matches.empty());
}

TEST_CASE("phone-device signatures are rejected in WAN mode") {
    Signature sig = tplink_like();
    sig.comm = CommClass::PhoneDevice;
    Capture cap;
    cap.mode = FlowMode::Layer3;
    DetectOptions opt;
    opt.mode = SnifferMode::Wan;
    CHECK_THROWS_AS(detect(cap, {sig}, opt), ConfigError);
    opt.mode = SnifferMode::Wifi;
    CHECK_NOTHROW(detect(cap, {sig}, opt));
}

TEST_CASE("identical same-device patterns merge into one labeled match") {
    Signature on = tplink_like();
    Signature off = tplink_like();
    off.id = "plug-off";
    off.label = "OFF";

    Capture cap;
    cap.mode = FlowMode::Layer3;
    FlowKey flow = FlowKey::layer3(0xc0000201, 40001, 0xc6336405, 443, 6);
    PacketMeta a = mk(1'000'000, Direction::ClientToServer, 556, 0);
    a.flow = flow;
    a.tcp_seq = 1000;
    PacketMeta b = mk(1'050'000, Direction::ServerToClient, 1293, 1);
    b.flow = flow;
    b.tcp_seq = 2000;
    cap.packets = {a, b};

    DetectOptions opt;
    auto report = detect(cap, {on, off}, opt);
    REQUIRE(report.matches.size() == 1);
    CHECK(report.matches[0].label == "ON/OFF");
}

TEST_CASE("state machines match the reference on random traces") {
    Rng rng(777);
    int checked = 0;
    for (int trial = 0; trial < 300; ++trial) {
        RandomTrace trace = make_random_trace(rng, 200);
        for (SnifferMode mode : {SnifferMode::Wan, SnifferMode::Wifi}) {
            DetectOptions opt;
            opt.mode = mode;
            auto mine = detect(trace.capture, {trace.sig}, opt);
            auto ref = oracle_detect(trace, mode);
            REQUIRE(mine.matches.size() == ref.size());

            // canonical order on both sides; the engine reports by first_ts
            using Canon = std::tuple<Micros, Micros, std::vector<std::vector<std::uint32_t>>>;
            std::vector<Canon> mine_canon, ref_canon;
            for (const auto& m : mine.matches)
                mine_canon.emplace_back(m.first_ts, m.last_ts, m.packet_indices);
            for (const auto& m : ref)
                ref_canon.emplace_back(m.first_ts, m.last_ts, m.packet_ids);
            std::sort(mine_canon.begin(), mine_canon.end());
            std::sort(ref_canon.begin(), ref_canon.end());
            REQUIRE(mine_canon == ref_canon);

            // no overlapping consumption: per signature set, a packet shows
            // up in at most one completed sequence
            for (std::size_t set = 0; set < trace.sig.sets.size(); ++set) {
                std::set<std::uint32_t> used;
                for (const auto& m : mine.matches)
                    for (std::uint32_t idx : m.packet_indices[set])
                        CHECK(used.insert(idx).second);
            }
            ++checked;
        }
    }
    CHECK(checked == 600);
}

TEST_CASE("wifi matches are a superset of wan matches per flow") {
    // one connection per MAC pair keeps the two modes' pools comparable
    Rng rng(4242);
    for (int trial = 0; trial < 200; ++trial) {
        RandomTrace trace = make_random_trace(rng, 150);
        DetectOptions wan_opt;
        wan_opt.mode = SnifferMode::Wan;
        DetectOptions wifi_opt;
        wifi_opt.mode = SnifferMode::Wifi;

        // skip the shared-MAC traces; multiplexing changes pool contents
        std::map<FlowKey, std::set<FlowKey>> l2_to_l3;
        for (const PacketMeta& pkt : trace.capture.packets)
            l2_to_l3[pkt.layer2_flow()].insert(pkt.flow);
        bool shared = false;
        for (const auto& [l2, l3s] : l2_to_l3)
            if (l3s.size() > 1) shared = true;
        if (shared) continue;

        auto wan = detect(trace.capture, {trace.sig}, wan_opt);
        auto wifi = detect(trace.capture, {trace.sig}, wifi_opt);
        CHECK(wifi.matches.size() >= wan.matches.size());
    }
}

TEST_CASE("label-ambiguous matches attribute by event window, once") {
    // identical ON and OFF signatures; truth decides which tally each match feeds
    Signature on = tplink_like();
    Signature off = tplink_like();
    off.id = "plug-off";
    off.label = "OFF";

    Capture cap;
    cap.mode = FlowMode::Layer3;
    auto add_exchange = [&cap](Micros ts, std::uint16_t port) {
        FlowKey flow = FlowKey::layer3(0xc0000201, port, 0xc6336405, 443, 6);
        PacketMeta a = mk(ts, Direction::ClientToServer, 556,
                          static_cast<std::uint32_t>(cap.packets.size()));
        a.flow = flow;
        a.tcp_seq = 1000;
        PacketMeta b = mk(ts + 50'000, Direction::ServerToClient, 1293,
                          static_cast<std::uint32_t>(cap.packets.size() + 1));
        b.flow = flow;
        b.tcp_seq = 2000;
        cap.packets.push_back(a);
        cap.packets.push_back(b);
    };
    add_exchange(10'000'000, 40001);  // inside the ON window
    add_exchange(140'000'000, 40002); // inside the OFF window
    add_exchange(300'000'000, 40003); // outside every window

    EventLog truth;
    truth.entries.push_back({10'000'000 - 100'000, "ON"});
    truth.entries.push_back({140'000'000 - 100'000, "OFF"});

    DetectOptions opt;
    auto report = detect(cap, {on, off}, opt, &truth, 15.0);
    REQUIRE(report.tallies.size() == 2);
    for (const SignatureTally& tally : report.tallies) {
        CHECK(tally.expected_events == 1);
        CHECK(tally.true_positives == 1);
    }
    int total_fp = report.tallies[0].false_positives + report.tallies[1].false_positives;
    CHECK(total_fp == 1); // the stray exchange is one false positive, not two
}

TEST_CASE("radiotap captures match with the layer-2 offset applied") {
    // 802.11 frames whose sizes equal payload + the 80-byte testbed overhead
    const MacAddr device{0x02, 0, 0, 0, 0, 0x0a};
    const MacAddr router{0x02, 0, 0, 0, 0, 0x01};
    auto path = (std::filesystem::temp_directory_path() / "pktsig_wifi_rt.pcap").string();
    {
        PcapWriter writer(path, kLinkTypeRadiotap);
        auto c_frame = build_radiotap_data_frame(router, device, 0);
        auto s_frame = build_radiotap_data_frame(device, router, 0);
        std::size_t overhead = c_frame.size();
        writer.write(1'000'000, build_radiotap_data_frame(router, device, 556 + 80 - overhead));
        writer.write(1'050'000, build_radiotap_data_frame(device, router, 1293 + 80 - overhead));
        // interleaved chatter frame, ignored by the machines
        writer.write(1'020'000, build_radiotap_data_frame(router, device, 90));
        writer.close();
        (void)s_frame;
    }
    EndpointRoster roster;
    roster.add_device_mac(device);
    Capture cap = parse_capture(path, FlowMode::Layer2, roster);
    REQUIRE(cap.packets.size() == 3);

    DetectOptions opt;
    opt.mode = SnifferMode::Wifi;
    auto report = detect(cap, {tplink_like()}, opt);
    REQUIRE(report.matches.size() == 1);
    CHECK(report.matches[0].first_ts == 1'000'000);
    CHECK(report.matches[0].last_ts == 1'050'000);
}

TEST_CASE("detection output is deterministic") {
    Rng rng(31337);
    RandomTrace trace = make_random_trace(rng, 300);
    DetectOptions opt;
    auto first = detect(trace.capture, {trace.sig}, opt);
    auto second = detect(trace.capture, {trace.sig}, opt);
    REQUIRE(first.matches.size() == second.matches.size());
    for (std::size_t i = 0; i < first.matches.size(); ++i) {
        CHECK(first.matches[i].first_ts == second.matches[i].first_ts);
        CHECK(first.matches[i].packet_indices == second.matches[i].packet_indices);
    }
}
