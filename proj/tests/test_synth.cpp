#include <doctest.h>

#include "pktsig/synth.hpp"

#include "pktsig/detection.hpp"
#include "pktsig/ingest.hpp"
#include "pktsig/pcap.hpp"
#include "pktsig/wire.hpp"
#include "pktsig/reassembly.hpp"
#include "pktsig/training.hpp"
#include "pktsig/util.hpp"

#include <filesystem>

using namespace pktsig;

namespace {

std::string temp_dir(const char* name) {
    auto dir = std::filesystem::temp_directory_path() / name;
    std::filesystem::create_directories(dir);
    return dir.string();
}

TraceProfile plug_profile(int n, double spacing_s) {
    TraceProfile profile;
    profile.n_per_label = n;
    profile.spacing_s = spacing_s;
    EventTemplate on;
    on.label = "ON";
    on.packets = {{0, Direction::ClientToServer, 556, 556},
                  {0, Direction::ServerToClient, 1293, 1293}};
    EventTemplate off = on;
    off.label = "OFF";
    off.packets = {{0, Direction::ClientToServer, 557, 557},
                   {0, Direction::ServerToClient, 1294, 1294}};
    profile.events = {on, off};
    return profile;
}

Signature sig_from(int c_len, int s_len) {
    Signature sig;
    sig.id = "plug-on";
    sig.device = "plug";
    sig.label = "ON";
    sig.duration_max_us = 204'000;
    sig.duration_avg_us = 85'000;
    sig.duration_min_us = 75'000;
    SignatureSet set;
    SignaturePosition a, b;
    a.dir = Direction::ClientToServer;
    a.obs_min = a.obs_max = a.core_min = a.core_max = c_len;
    b.dir = Direction::ServerToClient;
    b.obs_min = b.obs_max = b.core_min = b.core_max = s_len;
    set.positions = {a, b};
    sig.sets.push_back(set);
    return sig;
}

} // namespace

TEST_CASE("generated captures carry the events and parse losslessly") {
    TraceProfile profile = plug_profile(5, 2.0);
    SynthResult synth = generate(profile, 42);
    std::string dir = temp_dir("pktsig_synth_basic");
    write_synth(synth, dir);

    CHECK(synth.events.entries.size() == 10);
    CHECK(std::filesystem::exists(dir + "/capture.pcap"));
    CHECK(std::filesystem::exists(dir + "/events.txt"));
    CHECK(std::filesystem::exists(dir + "/roster.txt"));
    CHECK(std::filesystem::exists(dir + "/truth.txt"));

    // events file round-trips
    EventLog loaded = EventLog::from_file(dir + "/events.txt");
    REQUIRE(loaded.entries.size() == synth.events.entries.size());
    for (std::size_t i = 0; i < loaded.entries.size(); ++i) {
        CHECK(loaded.entries[i].ts_us == synth.events.entries[i].ts_us);
        CHECK(loaded.entries[i].label == synth.events.entries[i].label);
    }

    // truth file round-trips
    auto truth = read_truth(dir + "/truth.txt");
    REQUIRE(truth.size() == synth.truth.size());
    CHECK(truth[0].first_payload_ts == synth.truth[0].first_payload_ts);

    // timestamps survive the pcap round-trip exactly
    Capture cap = parse_capture(dir + "/capture.pcap", FlowMode::Layer3, synth.roster);
    for (const TruthEvent& t : synth.truth) {
        bool found_first = false, found_last = false;
        for (const PacketMeta& pkt : cap.packets) {
            if (pkt.ts_us == t.first_payload_ts && pkt.length > 0) found_first = true;
            if (pkt.ts_us == t.last_payload_ts && pkt.length > 0) found_last = true;
        }
        CHECK(found_first);
        CHECK(found_last);
    }

    // reassembly recovers exactly the templated payload sequences
    auto conns = reassemble_tcp(cap.packets);
    int on_conns = 0, off_conns = 0;
    for (const auto& conn : conns) {
        REQUIRE(conn.payload.size() == 2);
        if (conn.payload[0].length == 556) {
            CHECK(conn.payload[1].length == 1293);
            ++on_conns;
        } else {
            CHECK(conn.payload[0].length == 557);
            CHECK(conn.payload[1].length == 1294);
            ++off_conns;
        }
        CHECK(conn.tls);
    }
    CHECK(on_conns == 5);
    CHECK(off_conns == 5);
}

TEST_CASE("generation is deterministic for a fixed seed") {
    TraceProfile profile = plug_profile(4, 2.0);
    SynthResult a = generate(profile, 9);
    SynthResult b = generate(profile, 9);
    REQUIRE(a.frames.size() == b.frames.size());
    for (std::size_t i = 0; i < a.frames.size(); ++i) {
        CHECK(a.frames[i].first == b.frames[i].first);
        CHECK(a.frames[i].second == b.frames[i].second);
    }
    SynthResult c = generate(profile, 10);
    bool identical = a.frames.size() == c.frames.size();
    if (identical)
        for (std::size_t i = 0; i < a.frames.size(); ++i)
            if (a.frames[i] != c.frames[i]) identical = false;
    CHECK_FALSE(identical);
}

TEST_CASE("zero background flows keep the capture event-only") {
    TraceProfile profile = plug_profile(3, 2.0);
    SynthResult synth = generate(profile, 1);
    std::string dir = temp_dir("pktsig_synth_clean");
    write_synth(synth, dir);
    Capture cap = parse_capture(dir + "/capture.pcap", FlowMode::Layer3, synth.roster_all);
    auto conns = reassemble_tcp(cap.packets);
    CHECK(conns.size() == 6); // one connection per event, nothing else
}

TEST_CASE("profile files round-trip") {
    TraceProfile profile = plug_profile(50, 131.0);
    BackgroundFlow reqrep;
    reqrep.kind = BackgroundFlow::Kind::RandomRequestReply;
    reqrep.rate_per_s = 2.0;
    reqrep.avoid_lengths = {556, 557, 1293, 1294};
    profile.background.push_back(reqrep);

    std::string text = TraceProfile::from_text(profile.to_text()).to_text();
    CHECK(text == profile.to_text());

    TraceProfile parsed = TraceProfile::from_text(text);
    CHECK(parsed.n_per_label == 50);
    CHECK(parsed.events.size() == 2);
    CHECK(parsed.events[0].packets.size() == 2);
    CHECK(parsed.background.size() == 1);
    CHECK(parsed.background[0].avoid_lengths == std::vector<int>{556, 557, 1293, 1294});
}

TEST_CASE("malformed profiles are rejected") {
    CHECK_THROWS_AS(TraceProfile::from_text("nonsense"), ParseError);
    CHECK_THROWS_AS(TraceProfile::from_text("pktsig-profile v1\n"), ParseError);
    CHECK_THROWS_AS(TraceProfile::from_text("pktsig-profile v1\nevent ON\npkt 0 C 0 0\nend\n"),
                    ParseError);
}

TEST_CASE("range templates train to bounds inside the configured ranges") {
    TraceProfile profile;
    profile.n_per_label = 15;
    profile.spacing_s = 2.0;
    EventTemplate on;
    on.label = "ON";
    on.packets = {{0, Direction::ClientToServer, 338, 339},
                  {0, Direction::ServerToClient, 326, 329},
                  {0, Direction::ClientToServer, 364, 365},
                  {0, Direction::ServerToClient, 1061, 1070}};
    profile.events = {on};
    SynthResult synth = generate(profile, 77);
    std::string dir = temp_dir("pktsig_synth_range");
    write_synth(synth, dir);

    Capture cap = parse_capture(dir + "/capture.pcap", FlowMode::Layer3, synth.roster);
    TrainParams params;
    params.window_t_s = 0.5;
    params.device = "cam";
    auto report = train(cap, synth.events, params, "-", synth.roster);
    REQUIRE(report.signatures.size() == 1);
    const Signature& sig = report.signatures[0];
    REQUIRE(sig.sets.size() == 1);
    REQUIRE(sig.sets[0].positions.size() == 4);
    const int expected_lo[] = {338, 326, 364, 1061};
    const int expected_hi[] = {339, 329, 365, 1070};
    for (int i = 0; i < 4; ++i) {
        CHECK(sig.sets[0].positions[i].obs_min >= expected_lo[i]);
        CHECK(sig.sets[0].positions[i].obs_max <= expected_hi[i]);
    }
}

TEST_CASE("multi-set signatures detect across connections sharing a MAC pair") {
    // event template spans two connections; at layer 2 both ride the same
    // phone-router flow and interleave in one stream
    TraceProfile profile;
    profile.n_per_label = 15;
    profile.spacing_s = 2.0;
    EventTemplate stream;
    stream.label = "STREAM";
    stream.comm = CommClass::PhoneCloud;
    stream.gap_min_ms = 1;
    stream.gap_max_ms = 20;
    stream.packets = {{0, Direction::ClientToServer, 338, 339},
                      {0, Direction::ServerToClient, 326, 329},
                      {1, Direction::ClientToServer, 271, 273},
                      {1, Direction::ServerToClient, 499, 505}};
    profile.events = {stream};
    SynthResult synth = generate(profile, 31);
    std::string dir = temp_dir("pktsig_synth_multiset");
    write_synth(synth, dir);

    Capture cap = parse_capture(dir + "/capture.pcap", FlowMode::Layer3, synth.roster);
    TrainParams params;
    params.window_t_s = 0.5;
    params.device = "cam";
    auto trained = train(cap, synth.events, params, "-", synth.roster);
    REQUIRE(trained.signatures.size() == 1);
    REQUIRE(trained.signatures[0].sets.size() == 2);
    CHECK(trained.signatures[0].comm == CommClass::PhoneCloud);

    for (SnifferMode mode : {SnifferMode::Wan, SnifferMode::Wifi}) {
        CAPTURE(sniffer_mode_name(mode));
        DetectOptions opt;
        opt.mode = mode;
        opt.strategy = MatchStrategy::Range;
        auto report = detect(cap, trained.signatures, opt, &synth.events, 0.5);
        REQUIRE(report.tallies.size() == 1);
        CHECK(report.tallies[0].true_positives == 15);
        CHECK(report.tallies[0].false_positives == 0);
    }
}

TEST_CASE("wrong-device signatures match nothing") {
    TraceProfile profile = plug_profile(10, 2.0);
    SynthResult synth = generate(profile, 44);
    std::string dir = temp_dir("pktsig_synth_negctl");
    write_synth(synth, dir);
    Capture cap = parse_capture(dir + "/capture.pcap", FlowMode::Layer3, synth.roster);

    auto other = sig_from(716, 843); // lengths this trace never produces
    for (SnifferMode mode : {SnifferMode::Wan, SnifferMode::Wifi}) {
        DetectOptions opt;
        opt.mode = mode;
        auto report = detect(cap, {other}, opt);
        CHECK(report.matches.empty());
    }
}

TEST_CASE("duplicated segments leave WAN detection counts unchanged") {
    TraceProfile profile = plug_profile(8, 2.0);
    SynthResult synth = generate(profile, 5);
    std::string dir = temp_dir("pktsig_synth_retrans");
    write_synth(synth, dir);

    NoiseOptions noise;
    noise.kind = NoiseKind::Retransmissions;
    noise.rate = 0.2;
    noise.seed = 3;
    inject_noise(dir + "/capture.pcap", dir + "/noisy.pcap", noise);

    Capture clean = parse_capture(dir + "/capture.pcap", FlowMode::Layer3, synth.roster);
    Capture noisy = parse_capture(dir + "/noisy.pcap", FlowMode::Layer3, synth.roster);
    CHECK(noisy.packets.size() > clean.packets.size());

    DetectOptions opt;
    opt.mode = SnifferMode::Wan;
    auto sig = sig_from(556, 1293);
    auto before = detect(clean, {sig}, opt);
    auto after = detect(noisy, {sig}, opt);
    CHECK(before.matches.size() == 8);
    CHECK(after.matches.size() == before.matches.size());
}

TEST_CASE("interleaved flows leave Wi-Fi detection counts unchanged") {
    TraceProfile profile = plug_profile(8, 2.0);
    SynthResult synth = generate(profile, 15);
    std::string dir = temp_dir("pktsig_synth_interleave");
    write_synth(synth, dir);

    NoiseOptions noise;
    noise.kind = NoiseKind::InterleavedFlows;
    noise.rate = 3.0; // exchanges per second on the device's MAC pair
    noise.seed = 8;
    inject_noise(dir + "/capture.pcap", dir + "/interleaved.pcap", noise);

    Capture clean = parse_capture(dir + "/capture.pcap", FlowMode::Layer3, synth.roster);
    Capture noisy = parse_capture(dir + "/interleaved.pcap", FlowMode::Layer3, synth.roster);

    DetectOptions opt;
    opt.mode = SnifferMode::Wifi;
    auto sig = sig_from(556, 1293);
    auto before = detect(clean, {sig}, opt);
    auto after = detect(noisy, {sig}, opt);
    CHECK(before.matches.size() == 8);
    CHECK(after.matches.size() == before.matches.size());
}
