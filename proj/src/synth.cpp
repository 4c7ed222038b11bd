#include "pktsig/synth.hpp"

#include "pktsig/ingest.hpp"
#include "pktsig/pcap.hpp"
#include "pktsig/wire.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <sstream>

namespace pktsig {

// ---------------------------------------------------------------------------
// Profile file format
// ---------------------------------------------------------------------------

TraceProfile TraceProfile::from_text(const std::string& text, const std::string& origin) {
    TraceProfile profile;
    profile.events.clear();
    std::istringstream in(text);
    std::string line;
    int lineno = 0;
    auto fail = [&](const std::string& msg) -> ParseError {
        return ParseError(origin + ":" + std::to_string(lineno) + ": " + msg);
    };

    bool got_header = false;
    EventTemplate* current = nullptr;
    while (std::getline(in, line)) {
        ++lineno;
        line = trim(line);
        if (line.empty() || line[0] == '#') continue;
        if (!got_header) {
            if (line != "pktsig-profile v1") throw fail("expected `pktsig-profile v1` header");
            got_header = true;
            continue;
        }
        auto toks = split_ws(line);
        const std::string& key = toks[0];
        if (key == "n-per-label") {
            if (toks.size() != 2) throw fail("n-per-label needs one value");
            profile.n_per_label = std::stoi(toks[1]);
        } else if (key == "spacing-s") {
            if (toks.size() != 2) throw fail("spacing-s needs one value");
            profile.spacing_s = std::stod(toks[1]);
        } else if (key == "event") {
            if (toks.size() != 2) throw fail("event needs a label");
            profile.events.emplace_back();
            current = &profile.events.back();
            current->label = toks[1];
        } else if (key == "end") {
            current = nullptr;
        } else if (key == "comm") {
            if (!current) throw fail("comm outside event block");
            auto comm = comm_class_from_name(toks.size() == 2 ? toks[1] : "");
            if (!comm) throw fail("unknown comm class");
            current->comm = *comm;
        } else if (key == "gap-ms") {
            if (!current || toks.size() != 3) throw fail("gap-ms needs two values inside an event");
            current->gap_min_ms = std::stoi(toks[1]);
            current->gap_max_ms = std::stoi(toks[2]);
        } else if (key == "pkt") {
            if (!current || toks.size() != 5) throw fail("pkt needs `<conn> <C|S> <min> <max>`");
            TemplatePacket pkt;
            pkt.conn = std::stoi(toks[1]);
            if (toks[2] == "C") pkt.dir = Direction::ClientToServer;
            else if (toks[2] == "S") pkt.dir = Direction::ServerToClient;
            else throw fail("direction must be C or S");
            pkt.len_min = std::stoi(toks[3]);
            pkt.len_max = std::stoi(toks[4]);
            if (pkt.len_min < 1 || pkt.len_min > pkt.len_max)
                throw fail("template lengths must be positive and ordered");
            current->packets.push_back(pkt);
        } else if (key == "background") {
            if (toks.size() < 2) throw fail("background needs a kind");
            BackgroundFlow bg;
            if (toks[1] == "chatter") bg.kind = BackgroundFlow::Kind::PeriodicChatter;
            else if (toks[1] == "reqrep") bg.kind = BackgroundFlow::Kind::RandomRequestReply;
            else if (toks[1] == "bulk") bg.kind = BackgroundFlow::Kind::BulkTransfer;
            else throw fail("unknown background kind: " + toks[1]);
            for (std::size_t i = 2; i < toks.size();) {
                const std::string& opt = toks[i];
                if (opt == "avoid") {
                    for (++i; i < toks.size(); ++i) bg.avoid_lengths.push_back(std::stoi(toks[i]));
                    break;
                }
                if (i + 1 >= toks.size()) throw fail("background option without value: " + opt);
                const std::string& val = toks[i + 1];
                if (opt == "period-s") bg.period_s = std::stod(val);
                else if (opt == "c2s") bg.c2s_len = std::stoi(val);
                else if (opt == "s2c") bg.s2c_len = std::stoi(val);
                else if (opt == "rate-per-s") bg.rate_per_s = std::stod(val);
                else if (opt == "len-min") bg.len_min = std::stoi(val);
                else if (opt == "len-max") bg.len_max = std::stoi(val);
                else if (opt == "at-s") bg.at_s = std::stod(val);
                else if (opt == "packets") bg.packet_count = std::stoi(val);
                else if (opt == "len") bg.bulk_len = std::stoi(val);
                else if (opt == "tls") bg.tls = std::stoi(val) != 0;
                else if (opt == "device") bg.from_device = std::stoi(val) != 0;
                else throw fail("unknown background option: " + opt);
                i += 2;
            }
            profile.background.push_back(std::move(bg));
        } else {
            throw fail("unknown profile key: " + key);
        }
    }
    if (!got_header) throw ParseError(origin + ": empty profile");
    if (profile.events.empty()) throw ParseError(origin + ": profile has no event templates");
    for (const auto& ev : profile.events)
        if (ev.packets.empty())
            throw ParseError(origin + ": event " + ev.label + " has no packets");
    return profile;
}

TraceProfile TraceProfile::from_file(const std::string& path) {
    return from_text(read_text_file(path), path);
}

std::string TraceProfile::to_text() const {
    std::ostringstream out;
    out << "pktsig-profile v1\n";
    out << "n-per-label " << n_per_label << '\n';
    out << "spacing-s " << spacing_s << '\n';
    for (const auto& ev : events) {
        out << "event " << ev.label << '\n';
        out << "  comm " << comm_class_name(ev.comm) << '\n';
        out << "  gap-ms " << ev.gap_min_ms << ' ' << ev.gap_max_ms << '\n';
        for (const auto& pkt : ev.packets)
            out << "  pkt " << pkt.conn << ' ' << direction_code(pkt.dir) << ' ' << pkt.len_min
                << ' ' << pkt.len_max << '\n';
        out << "end\n";
    }
    for (const auto& bg : background) {
        out << "background ";
        switch (bg.kind) {
        case BackgroundFlow::Kind::PeriodicChatter:
            out << "chatter period-s " << bg.period_s << " c2s " << bg.c2s_len << " s2c "
                << bg.s2c_len;
            break;
        case BackgroundFlow::Kind::RandomRequestReply:
            out << "reqrep rate-per-s " << bg.rate_per_s << " len-min " << bg.len_min
                << " len-max " << bg.len_max;
            break;
        case BackgroundFlow::Kind::BulkTransfer:
            out << "bulk at-s " << bg.at_s << " packets " << bg.packet_count << " len "
                << bg.bulk_len;
            break;
        }
        out << " tls " << (bg.tls ? 1 : 0) << " device " << (bg.from_device ? 1 : 0);
        if (!bg.avoid_lengths.empty()) {
            out << " avoid";
            for (int len : bg.avoid_lengths) out << ' ' << len;
        }
        out << '\n';
    }
    return out.str();
}

// ---------------------------------------------------------------------------
// Generation
// ---------------------------------------------------------------------------

namespace {

struct Host {
    std::uint32_t ip;
    MacAddr mac;
};

struct ConnCtx {
    Host client, server;
    MacAddr client_l2_peer; // MAC the client's frames go to (router or the device itself)
    std::uint16_t client_port, server_port;
    std::uint32_t seq_c{0}, seq_s{0};
};

class FrameSink {
public:
    explicit FrameSink(SynthResult& result) : result_(result) {}

    void tcp(ConnCtx& conn, Direction dir, Micros ts, std::uint8_t flags,
             std::vector<std::uint8_t> payload) {
        TcpFrameSpec spec;
        bool c2s = dir == Direction::ClientToServer;
        spec.src_mac = c2s ? conn.client.mac : conn.client_l2_peer;
        spec.dst_mac = c2s ? conn.client_l2_peer : conn.client.mac;
        spec.src_ip = c2s ? conn.client.ip : conn.server.ip;
        spec.dst_ip = c2s ? conn.server.ip : conn.client.ip;
        spec.src_port = c2s ? conn.client_port : conn.server_port;
        spec.dst_port = c2s ? conn.server_port : conn.client_port;
        std::uint32_t& seq = c2s ? conn.seq_c : conn.seq_s;
        std::uint32_t& peer = c2s ? conn.seq_s : conn.seq_c;
        spec.seq = seq;
        spec.ack = peer;
        spec.flags = flags;
        spec.payload = std::move(payload);
        seq += static_cast<std::uint32_t>(spec.payload.size());
        if (flags & (kTcpFlagSyn | kTcpFlagFin)) seq += 1;
        result_.frames.emplace_back(ts, build_tcp_frame(spec));
    }

    // SYN, SYN-ACK, ACK; returns the timestamp after the handshake
    Micros handshake(ConnCtx& conn, Micros ts) {
        tcp(conn, Direction::ClientToServer, ts, kTcpFlagSyn, {});
        tcp(conn, Direction::ServerToClient, ts + 400, kTcpFlagSyn | kTcpFlagAck, {});
        tcp(conn, Direction::ClientToServer, ts + 800, kTcpFlagAck, {});
        return ts + 1200;
    }

private:
    SynthResult& result_;
};

int draw_len(Rng& rng, int lo, int hi, const std::vector<int>& avoid) {
    for (int attempt = 0; attempt < 64; ++attempt) {
        int len = rng.uniform_int(lo, hi);
        if (std::find(avoid.begin(), avoid.end(), len) == avoid.end()) return len;
    }
    return lo; // avoid set cannot cover 64 straight draws unless it spans the range
}

} // namespace

SynthResult generate(const TraceProfile& profile, std::uint64_t seed) {
    if (profile.n_per_label < 1) throw ConfigError("profile needs n-per-label >= 1");
    SynthResult result;
    Rng rng(seed);

    const Host device{ipv4_from_string("192.0.2.10").value(), {0x02, 0, 0, 0, 0, 0x0a}};
    const Host phone{ipv4_from_string("192.0.2.20").value(), {0x02, 0, 0, 0, 0, 0x14}};
    const Host laptop{ipv4_from_string("192.0.2.30").value(), {0x02, 0, 0, 0, 0, 0x1e}};
    const MacAddr router_mac{0x02, 0, 0, 0, 0, 0x01};
    const Host event_server{ipv4_from_string("198.51.100.5").value(), router_mac};
    const Host chatter_server{ipv4_from_string("198.51.100.10").value(), router_mac};
    const Host background_server{ipv4_from_string("198.51.100.20").value(), router_mac};

    result.device_ip = device.ip;
    result.phone_ip = phone.ip;
    result.laptop_ip = laptop.ip;
    result.event_server_ip = event_server.ip;
    result.chatter_server_ip = chatter_server.ip;
    result.background_server_ip = background_server.ip;

    result.roster.add_device_ip(device.ip);
    result.roster.add_device_mac(device.mac);
    result.roster.add_phone_ip(phone.ip);
    result.roster.add_local_mac(phone.mac);
    result.roster_all = result.roster;
    result.roster_all.add_local_ip(laptop.ip);
    result.roster_all.add_local_mac(laptop.mac);

    const Micros base_ts = 1'700'000'000'000000LL; // fixed epoch base keeps output stable
    const Micros spacing_us = static_cast<Micros>(std::llround(profile.spacing_s * 1e6));
    const int total_events = profile.n_per_label * static_cast<int>(profile.events.size());
    const Micros capture_end = base_ts + spacing_us * total_events;

    FrameSink sink(result);
    std::uint16_t next_port = 40000;

    // --- event traffic ---
    for (int i = 0; i < total_events; ++i) {
        const EventTemplate& tmpl =
            profile.events[static_cast<std::size_t>(i) % profile.events.size()];
        Micros trigger = base_ts + spacing_us * i;
        result.events.entries.push_back({trigger, tmpl.label});

        TruthEvent truth;
        truth.label = tmpl.label;
        truth.trigger_ts = trigger;

        int conn_count = 0;
        for (const auto& pkt : tmpl.packets) conn_count = std::max(conn_count, pkt.conn + 1);

        Host client = tmpl.comm == CommClass::PhoneCloud || tmpl.comm == CommClass::PhoneDevice
                          ? phone
                          : device;
        Host server = tmpl.comm == CommClass::PhoneDevice ? device : event_server;
        MacAddr l2_peer = tmpl.comm == CommClass::PhoneDevice ? device.mac : router_mac;

        Micros cursor = trigger + rng.uniform_i64(10'000, 100'000);
        std::vector<ConnCtx> conns;
        for (int c = 0; c < conn_count; ++c) {
            ConnCtx conn;
            conn.client = client;
            conn.server = server;
            conn.client_l2_peer = l2_peer;
            conn.client_port = next_port++;
            conn.server_port = 443;
            conn.seq_c = static_cast<std::uint32_t>(rng.uniform_u64(1000, 1u << 30));
            conn.seq_s = static_cast<std::uint32_t>(rng.uniform_u64(1000, 1u << 30));
            cursor = sink.handshake(conn, cursor);
            conns.push_back(conn);
        }

        bool first_payload = true;
        for (const auto& pkt : tmpl.packets) {
            cursor += rng.uniform_i64(tmpl.gap_min_ms * 1000LL, tmpl.gap_max_ms * 1000LL);
            int len = rng.uniform_int(pkt.len_min, pkt.len_max);
            sink.tcp(conns[static_cast<std::size_t>(pkt.conn)], pkt.dir, cursor,
                     kTcpFlagAck | kTcpFlagPsh, tls_app_data_payload(static_cast<std::size_t>(len)));
            // bare ACK from the other side
            sink.tcp(conns[static_cast<std::size_t>(pkt.conn)], flipped(pkt.dir), cursor + 300,
                     kTcpFlagAck, {});
            if (first_payload) {
                truth.first_payload_ts = cursor;
                first_payload = false;
            }
            truth.last_payload_ts = cursor;
        }
        result.truth.push_back(truth);
    }

    // --- background flows ---
    for (const BackgroundFlow& bg : profile.background) {
        Host client = bg.from_device ? device : laptop;
        Host server = bg.from_device ? chatter_server : background_server;

        switch (bg.kind) {
        case BackgroundFlow::Kind::PeriodicChatter: {
            ConnCtx conn;
            conn.client = client;
            conn.server = server;
            conn.client_l2_peer = router_mac;
            conn.client_port = next_port++;
            conn.server_port = 8883;
            conn.seq_c = 1000;
            conn.seq_s = 5000;
            Micros cursor = sink.handshake(conn, base_ts + 100'000);
            Micros period = static_cast<Micros>(std::llround(bg.period_s * 1e6));
            for (Micros ts = cursor; ts < capture_end; ts += period) {
                auto req = bg.tls ? tls_app_data_payload(static_cast<std::size_t>(bg.c2s_len))
                                  : plain_payload(static_cast<std::size_t>(bg.c2s_len));
                auto rep = bg.tls ? tls_app_data_payload(static_cast<std::size_t>(bg.s2c_len))
                                  : plain_payload(static_cast<std::size_t>(bg.s2c_len));
                Micros gap = rng.uniform_i64(20'000, 60'000);
                sink.tcp(conn, Direction::ClientToServer, ts, kTcpFlagAck | kTcpFlagPsh, req);
                sink.tcp(conn, Direction::ServerToClient, ts + gap, kTcpFlagAck | kTcpFlagPsh, rep);
            }
            break;
        }
        case BackgroundFlow::Kind::RandomRequestReply: {
            if (bg.rate_per_s <= 0) break;
            // a small pool of long-lived connections, uniformly jittered exchanges
            std::vector<ConnCtx> pool;
            for (int c = 0; c < 4; ++c) {
                ConnCtx conn;
                conn.client = client;
                conn.server = server;
                conn.client_l2_peer = router_mac;
                conn.client_port = next_port++;
                conn.server_port = 443;
                conn.seq_c = static_cast<std::uint32_t>(rng.uniform_u64(1000, 1u << 30));
                conn.seq_s = static_cast<std::uint32_t>(rng.uniform_u64(1000, 1u << 30));
                sink.handshake(conn, base_ts + 200'000 + c * 1000);
                pool.push_back(conn);
            }
            Micros mean_gap = static_cast<Micros>(std::llround(1e6 / bg.rate_per_s));
            Micros cursor = base_ts + 300'000;
            while (cursor < capture_end) {
                ConnCtx& conn = pool[rng.uniform_u64(0, pool.size() - 1)];
                int req_len = draw_len(rng, bg.len_min, bg.len_max, bg.avoid_lengths);
                int rep_len = draw_len(rng, bg.len_min, bg.len_max, bg.avoid_lengths);
                auto req = bg.tls ? tls_app_data_payload(static_cast<std::size_t>(req_len))
                                  : plain_payload(static_cast<std::size_t>(req_len));
                auto rep = bg.tls ? tls_app_data_payload(static_cast<std::size_t>(rep_len))
                                  : plain_payload(static_cast<std::size_t>(rep_len));
                Micros gap = rng.uniform_i64(5'000, 50'000);
                sink.tcp(conn, Direction::ClientToServer, cursor, kTcpFlagAck | kTcpFlagPsh, req);
                sink.tcp(conn, Direction::ServerToClient, cursor + gap, kTcpFlagAck | kTcpFlagPsh,
                         rep);
                cursor += rng.uniform_i64(mean_gap / 2, mean_gap + mean_gap / 2);
            }
            break;
        }
        case BackgroundFlow::Kind::BulkTransfer: {
            ConnCtx conn;
            conn.client = client;
            conn.server = server;
            conn.client_l2_peer = router_mac;
            conn.client_port = next_port++;
            conn.server_port = 80;
            conn.seq_c = 1000;
            conn.seq_s = 9000;
            Micros cursor = sink.handshake(
                conn, base_ts + static_cast<Micros>(std::llround(bg.at_s * 1e6)));
            sink.tcp(conn, Direction::ClientToServer, cursor, kTcpFlagAck | kTcpFlagPsh,
                     plain_payload(120));
            for (int p = 0; p < bg.packet_count; ++p) {
                cursor += rng.uniform_i64(500, 2'000);
                sink.tcp(conn, Direction::ServerToClient, cursor, kTcpFlagAck,
                         plain_payload(static_cast<std::size_t>(bg.bulk_len)));
                if (p % 2 == 1)
                    sink.tcp(conn, Direction::ClientToServer, cursor + 200, kTcpFlagAck, {});
            }
            break;
        }
        }
    }

    std::stable_sort(result.frames.begin(), result.frames.end(),
                     [](const auto& a, const auto& b) { return a.first < b.first; });
    return result;
}

void write_synth(const SynthResult& result, const std::string& out_dir) {
    std::filesystem::create_directories(out_dir);
    PcapWriter writer(out_dir + "/capture.pcap");
    for (const auto& [ts, frame] : result.frames) writer.write(ts, frame);
    writer.close();
    result.events.to_file(out_dir + "/events.txt");
    result.roster.to_file(out_dir + "/roster.txt");
    result.roster_all.to_file(out_dir + "/roster-all.txt");
    write_truth(result.truth, out_dir + "/truth.txt");
}

void write_truth(const std::vector<TruthEvent>& truth, const std::string& path) {
    std::ostringstream out;
    for (const TruthEvent& t : truth)
        out << "event " << t.label << ' ' << t.trigger_ts << ' ' << t.first_payload_ts << ' '
            << t.last_payload_ts << '\n';
    write_text_file(path, out.str());
}

std::vector<TruthEvent> read_truth(const std::string& path) {
    std::vector<TruthEvent> out;
    std::istringstream in(read_text_file(path));
    std::string line;
    while (std::getline(in, line)) {
        auto toks = split_ws(line);
        if (toks.size() != 5 || toks[0] != "event")
            throw ParseError(path + ": bad truth line: " + line);
        TruthEvent t;
        t.label = toks[1];
        t.trigger_ts = std::stoll(toks[2]);
        t.first_payload_ts = std::stoll(toks[3]);
        t.last_payload_ts = std::stoll(toks[4]);
        out.push_back(std::move(t));
    }
    return out;
}

// ---------------------------------------------------------------------------
// Noise injection
// ---------------------------------------------------------------------------

void inject_noise(const std::string& pcap_in, const std::string& pcap_out,
                  const NoiseOptions& options) {
    Rng rng(options.seed);
    PcapReader reader(pcap_in);
    std::vector<std::pair<Micros, std::vector<std::uint8_t>>> frames;
    Micros first_ts = 0, last_ts = 0;
    MacAddr device_mac{}, router_mac{};
    std::uint32_t device_ip = 0;
    bool have_endpoints = false;

    PcapRecord rec;
    while (reader.next(rec)) {
        if (frames.empty()) first_ts = rec.ts_us;
        last_ts = std::max(last_ts, rec.ts_us);
        ParsedPacket parsed;
        if (parse_ethernet_frame(rec.data, parsed) && parsed.has_tcp && !have_endpoints) {
            device_mac = parsed.src_mac;
            router_mac = parsed.dst_mac;
            device_ip = parsed.src_ip;
            have_endpoints = true;
        }
        if (options.kind == NoiseKind::Retransmissions && parse_ethernet_frame(rec.data, parsed) &&
            parsed.has_tcp && parsed.payload_len > 0 && rng.chance(options.rate)) {
            Micros dup_ts = rec.ts_us + rng.uniform_i64(1'000, 5'000);
            frames.emplace_back(dup_ts, rec.data);
        }
        frames.emplace_back(rec.ts_us, std::move(rec.data));
    }

    if (options.kind == NoiseKind::InterleavedFlows || options.kind == NoiseKind::OffWindowChatter) {
        if (!have_endpoints) throw ConfigError("cannot inject flows into a capture with no TCP traffic");
        SynthResult scratch;
        FrameSink sink(scratch);
        ConnCtx conn;
        conn.client = Host{device_ip, device_mac};
        conn.server = Host{ipv4_from_string("198.51.100.99").value(), router_mac};
        conn.client_l2_peer = router_mac;
        conn.client_port = 39999;
        conn.server_port = 443;
        conn.seq_c = 7000;
        conn.seq_s = 9000;
        Micros cursor = sink.handshake(conn, first_ts + 1'000);
        Micros mean_gap = options.rate > 0
                              ? static_cast<Micros>(std::llround(1e6 / options.rate))
                              : 1'000'000;
        const Micros window_us = static_cast<Micros>(std::llround(options.window_t_s * 1e6));
        while (cursor < last_ts) {
            bool in_window = false;
            if (options.kind == NoiseKind::OffWindowChatter && options.events) {
                for (const auto& e : options.events->entries) {
                    // stay clear of the window plus slack so filtering keeps it out
                    if (cursor >= e.ts_us - window_us / 2 && cursor <= e.ts_us + 2 * window_us) {
                        in_window = true;
                        break;
                    }
                }
            }
            if (!in_window) {
                auto [c2s, s2c] = options.exchange_lengths[rng.uniform_u64(
                    0, options.exchange_lengths.size() - 1)];
                Micros gap = rng.uniform_i64(5'000, 40'000);
                sink.tcp(conn, Direction::ClientToServer, cursor, kTcpFlagAck | kTcpFlagPsh,
                         tls_app_data_payload(static_cast<std::size_t>(c2s)));
                sink.tcp(conn, Direction::ServerToClient, cursor + gap, kTcpFlagAck | kTcpFlagPsh,
                         tls_app_data_payload(static_cast<std::size_t>(s2c)));
            }
            cursor += rng.uniform_i64(mean_gap / 2, mean_gap + mean_gap / 2);
        }
        for (auto& frame : scratch.frames) frames.push_back(std::move(frame));
    }

    std::stable_sort(frames.begin(), frames.end(),
                     [](const auto& a, const auto& b) { return a.first < b.first; });
    PcapWriter writer(pcap_out);
    for (const auto& [ts, frame] : frames) writer.write(ts, frame);
    writer.close();
}

} // namespace pktsig
