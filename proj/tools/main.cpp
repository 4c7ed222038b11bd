// pktsig: packet-level signature toolkit.
// Subcommands: gen, train, detect, validate, compare, defend.

#include <CLI11.hpp>

#include "pktsig/defense.hpp"
#include "pktsig/detection.hpp"
#include "pktsig/events.hpp"
#include "pktsig/ingest.hpp"
#include "pktsig/pcap.hpp"
#include "pktsig/signature.hpp"
#include "pktsig/synth.hpp"
#include "pktsig/training.hpp"
#include "pktsig/util.hpp"

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <sstream>

using namespace pktsig;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitInput = 2;
constexpr int kExitNothingFound = 3;

struct CommonArgs {
    std::string pcap;
    std::string events;
    std::string roster;
    std::vector<std::string> local_addrs;
    std::vector<std::string> device_addrs;
    std::string report;
    double window_t = 15.0;
    double eps = kDefaultEps;
    std::optional<int> layer2_offset; // unset: use the signature's trained offset
};

EndpointRoster load_roster(const CommonArgs& args) {
    EndpointRoster roster;
    if (!args.roster.empty()) roster = EndpointRoster::from_file(args.roster);
    auto add = [](EndpointRoster& r, const std::string& addr, bool device) {
        auto ip = ipv4_from_string(addr);
        auto mac = mac_from_string(addr);
        if (!ip && !mac) throw ConfigError("not an IPv4 or MAC address: " + addr);
        if (ip) device ? r.add_device_ip(*ip) : r.add_local_ip(*ip);
        if (mac) device ? r.add_device_mac(*mac) : r.add_local_mac(*mac);
    };
    for (const std::string& addr : args.local_addrs) add(roster, addr, false);
    for (const std::string& addr : args.device_addrs) add(roster, addr, true);
    if (roster.empty())
        throw ConfigError("no endpoints given; use --roster or --local-addr/--device-addr");
    return roster;
}

void emit_report(const std::string& path, const std::string& content) {
    if (!path.empty()) write_text_file(path, content);
}

SnifferMode parse_mode(const std::string& mode) {
    if (mode == "wan") return SnifferMode::Wan;
    if (mode == "wifi") return SnifferMode::Wifi;
    throw ConfigError("unknown mode: " + mode + " (expected wan or wifi)");
}

MatchStrategy parse_strategy(const std::string& match) {
    if (match == "exact") return MatchStrategy::Exact;
    if (match == "range") return MatchStrategy::Range;
    if (match == "relaxed") return MatchStrategy::Relaxed;
    throw ConfigError("unknown matching strategy: " + match);
}

int run_gen(const std::string& profile_path, std::uint64_t seed, const std::string& out_dir) {
    TraceProfile profile = TraceProfile::from_file(profile_path);
    SynthResult synth = generate(profile, seed);
    write_synth(synth, out_dir);
    std::printf("generated %zu frames, %zu events -> %s\n", synth.frames.size(),
                synth.events.entries.size(), out_dir.c_str());
    std::printf("  capture:  %s/capture.pcap\n", out_dir.c_str());
    std::printf("  events:   %s/events.txt\n", out_dir.c_str());
    std::printf("  roster:   %s/roster.txt (and roster-all.txt)\n", out_dir.c_str());
    std::printf("  truth:    %s/truth.txt\n", out_dir.c_str());
    return kExitOk;
}

int run_train(const CommonArgs& args, const std::string& device, std::optional<int> min_pts,
              const std::string& out_dir) {
    EndpointRoster roster = load_roster(args);
    EventLog events = EventLog::from_file(args.events);
    Capture capture = parse_capture(args.pcap, FlowMode::Layer3, roster);

    TrainParams params;
    params.window_t_s = args.window_t;
    params.eps = args.eps;
    params.min_pts = min_pts;
    params.layer2_offset = args.layer2_offset.value_or(kDefaultLayer2Offset);
    params.device = device;

    TrainingReport report = train(capture, events, params, sha256_file_hex(args.pcap), roster);

    std::ostringstream out;
    out << "training report\n";
    out << "  capture " << args.pcap << " (" << capture.packets.size() << " packets, "
        << capture.stats.non_tcp << " non-TCP dropped)\n";
    for (const std::string& warning : report.warnings) out << "  warning: " << warning << '\n';
    for (const LabelReport& lr : report.labels) {
        out << "label " << lr.label << " (" << lr.event_count << " events)\n";
        out << "  clusters: " << lr.clusters_found << " found, " << lr.clusters_kept << " kept\n";
        for (const std::string& note : lr.notes) out << "  " << note << '\n';
    }

    std::filesystem::create_directories(out_dir);
    for (const Signature& sig : report.signatures) {
        std::string path = out_dir + "/" + sig.id + ".sig";
        save_signature(sig, path);
        out << "signature " << sig.id << ": " << sig.pattern_string() << "  duration "
            << sig.duration_min_us / 1000 << "/" << sig.duration_avg_us / 1000 << "/"
            << sig.duration_max_us / 1000 << " ms -> " << path << '\n';
    }
    if (report.signatures.empty()) out << "no signature found\n";

    std::fputs(out.str().c_str(), stdout);
    emit_report(args.report, out.str());
    return report.signatures.empty() ? kExitNothingFound : kExitOk;
}

int run_detect(const CommonArgs& args, const std::vector<std::string>& sig_paths,
               const std::string& mode_name, const std::string& match_name,
               std::optional<int> delta, const std::vector<int>& delta_positions,
               bool have_truth) {
    EndpointRoster roster = load_roster(args);
    SnifferMode mode = parse_mode(mode_name);
    MatchStrategy strategy = parse_strategy(match_name);
    if (strategy == MatchStrategy::Relaxed && !delta)
        throw ConfigError("--match relaxed requires --delta");

    std::vector<Signature> sigs;
    for (const std::string& path : sig_paths) sigs.push_back(load_signature(path));

    // wifi-mode detection takes radiotap captures natively; Ethernet captures
    // are parsed at layer 3 and frame lengths synthesized from the payload
    Capture capture;
    if (mode == SnifferMode::Wan) {
        capture = parse_capture(args.pcap, FlowMode::Layer3, roster);
    } else {
        std::uint32_t link_type = PcapReader(args.pcap).link_type();
        FlowMode flow_mode =
            link_type == kLinkTypeRadiotap ? FlowMode::Layer2 : FlowMode::Layer3;
        capture = parse_capture(args.pcap, flow_mode, roster);
    }

    DetectOptions opt;
    opt.mode = mode;
    opt.strategy = strategy;
    opt.eps = args.eps;
    opt.delta = delta.value_or(0);
    for (int p : delta_positions) opt.delta_positions.push_back(p - 1); // 1-based on the CLI
    opt.layer2_offset = args.layer2_offset;

    std::optional<EventLog> truth;
    if (have_truth) truth = EventLog::from_file(args.events);

    DetectReport report = detect(capture, sigs, opt, truth ? &*truth : nullptr, args.window_t);

    std::ostringstream out;
    out << "detection report (" << mode_name << ", " << match_name << ")\n";
    for (const MatchEvent& m : report.matches) {
        out << "match " << m.signature_id << ' ' << m.label << " first " << m.first_ts << " last "
            << m.last_ts << " flows";
        for (const FlowKey& f : m.flows) out << ' ' << f.to_string();
        out << '\n';
    }
    out << "summary\n";
    for (const SignatureTally& tally : report.tallies) {
        out << "  " << tally.label << ": matches " << tally.matches;
        if (truth) {
            out << " recall " << tally.true_positives << "/" << tally.expected_events << " fp "
                << tally.false_positives;
            if (tally.expected_events > 0) {
                char buf[64];
                std::snprintf(buf, sizeof(buf), " (%.1f matched, %.1f fp per 100 events)",
                              100.0 * tally.true_positives / tally.expected_events,
                              100.0 * tally.false_positives / tally.expected_events);
                out << buf;
            }
        }
        out << '\n';
    }
    std::fputs(out.str().c_str(), stdout);
    emit_report(args.report, out.str());
    return report.matches.empty() ? kExitNothingFound : kExitOk;
}

int run_validate(const CommonArgs& args, const std::string& sig_path) {
    EndpointRoster roster = load_roster(args);
    EventLog events = EventLog::from_file(args.events);
    Signature sig = load_signature(sig_path);
    Capture capture = parse_capture(args.pcap, FlowMode::Layer3, roster);

    ValidationResult result = validate_signature(sig, capture, events, sig.label, args.window_t);
    std::ostringstream out;
    out << "validate " << sig.id << ": " << result.note << '\n';
    out << "  matches " << result.match_count << " windows " << result.matched_windows << "/"
        << result.expected << " extra " << result.extra_match_ts.size() << '\n';
    for (Micros ts : result.extra_match_ts) out << "  extra-match-at " << ts << '\n';
    std::fputs(out.str().c_str(), stdout);
    emit_report(args.report, out.str());
    return result.accepted ? kExitOk : kExitNothingFound;
}

int run_compare(const std::string& a_path, const std::string& b_path,
                const std::string& report_path) {
    Signature a = load_signature(a_path);
    Signature b = load_signature(b_path);
    CompareReport report = compare_signatures(a, b);

    std::ostringstream out;
    out << "compare " << a.id << " vs " << b.id << '\n';
    out << "  a: " << a.pattern_string() << '\n';
    out << "  b: " << b.pattern_string() << '\n';
    if (!report.same_shape) {
        out << "  " << report.mismatch_reason << '\n';
    } else {
        out << "  deltas";
        for (int d : report.deltas) out << ' ' << (d >= 0 ? "+" : "") << d;
        out << '\n';
        out << "  max-abs-delta " << report.max_abs_delta
            << " (relaxed-matching delta candidate)\n";
    }
    std::fputs(out.str().c_str(), stdout);
    emit_report(report_path, out.str());
    return kExitOk;
}

int run_defend(const CommonArgs& args, const std::string& sig_path,
               const std::string& strategy_name, DefenseConfig config, bool have_truth) {
    EndpointRoster roster = load_roster(args);
    Signature sig = load_signature(sig_path);
    Capture capture = parse_capture(args.pcap, FlowMode::Layer3, roster);

    auto strategy = defense_strategy_from_name(strategy_name);
    if (!strategy) throw ConfigError("unknown defense strategy: " + strategy_name);
    config.strategy = *strategy;

    std::optional<EventLog> truth;
    if (have_truth) truth = EventLog::from_file(args.events);
    if (truth && config.strategy == DefenseStrategy::StpVpn) {
        // length-aware matching only fires on this signature's own label(s);
        // direction-only strategies stay label-agnostic
        EventLog filtered;
        for (const auto& entry : truth->entries) {
            std::string labels = "/" + sig.label + "/";
            if (labels.find("/" + entry.label + "/") != std::string::npos)
                filtered.entries.push_back(entry);
        }
        if (!filtered.entries.empty()) truth = filtered;
    }

    std::ostringstream out;
    out << "defense report (" << strategy_name << ")\n";

    std::vector<std::pair<Micros, Micros>> spans;
    std::vector<Micros> dummy_times;
    std::int64_t window_ms = detection_window_ms(sig.duration_max_ms());

    if (config.strategy == DefenseStrategy::StpVpn) {
        StpResult stp = simulate_stp(capture, sig, config.dummy_count, config);
        dummy_times = stp.dummy_times;
        Signature shifted =
            shift_signature_lengths(sig, config.vpn_header_c2s, config.vpn_header_s2c);
        auto matches = detect_on_tunnel(stp.tunnel, shifted);
        for (const MatchEvent& m : matches) spans.emplace_back(m.first_ts, m.last_ts);
        out << "  tunnel packets " << stp.tunnel.size() << ", dummies injected "
            << dummy_times.size() << '\n';
        out << "  length-aware matches with header-shifted signature: " << matches.size() << '\n';
    } else {
        PaddedView view = simulate_padding(capture, config, roster);
        DirectionOnlyResult result = detect_direction_only(view, sig, window_ms);
        spans = result.spans;
        out << "  padded view: " << view.packets.size() << " packets in " << view.flow_count
            << " flow(s)\n";
        out << "  direction-only positives within " << window_ms << " ms: " << result.positives
            << '\n';
    }

    if (truth) {
        DefenseScore score = score_defense(spans, *truth, args.window_t, dummy_times, window_ms);
        char buf[160];
        std::snprintf(buf, sizeof(buf),
                      "  recall %.4f  fp-per-100-events %.2f  positives-per-true-event %.2f\n",
                      score.recall, score.fp_per_100_events, score.positives_per_true_event);
        out << buf;
        out << "  tp " << score.true_positives << " fp " << score.false_positives
            << " dummies-detected " << score.dummy_detected << '\n';
    }

    std::fputs(out.str().c_str(), stdout);
    emit_report(args.report, out.str());
    return spans.empty() ? kExitNothingFound : kExitOk;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"packet-level signature toolkit: extract, detect, and stress-test "
                 "request/reply length signatures of device events in network captures"};
    app.require_subcommand(1);

    CommonArgs args;
    std::string device = "device";
    std::string out_dir = "sigs";
    std::string mode_name = "wan";
    std::string match_name = "exact";
    std::string strategy_name = "pad-mtu-vpn";
    std::string profile_path;
    std::string sig_path, sig_b_path;
    std::vector<std::string> sig_paths;
    std::vector<int> delta_positions;
    std::optional<int> min_pts;
    std::optional<int> delta;
    std::uint64_t seed = 1;
    std::string event_endpoint;
    DefenseConfig defense_config;

    auto add_common = [&args](CLI::App* cmd, bool needs_events) {
        cmd->add_option("--pcap", args.pcap, "capture file (classic pcap)")->required();
        if (needs_events) cmd->add_option("--events", args.events, "event timestamp log");
        cmd->add_option("--roster", args.roster, "endpoint roster file");
        cmd->add_option("--local-addr", args.local_addrs, "local IP/MAC (repeatable)");
        cmd->add_option("--device-addr", args.device_addrs, "device IP/MAC (repeatable)");
        cmd->add_option("--window-t", args.window_t, "event window in seconds");
        cmd->add_option("--eps", args.eps, "clustering / range-matching epsilon");
        cmd->add_option("--layer2-offset", args.layer2_offset, "bytes added at layer 2");
        cmd->add_option("--report", args.report, "also write the report to this file");
    };

    CLI::App* gen = app.add_subcommand("gen", "generate a synthetic ground-truth capture");
    gen->add_option("--profile", profile_path, "trace profile file")->required();
    gen->add_option("--seed", seed, "generator seed");
    gen->add_option("--out", out_dir, "output directory")->required();

    CLI::App* train_cmd = app.add_subcommand("train", "extract signatures from a training capture");
    add_common(train_cmd, true);
    train_cmd->get_option("--events")->required();
    train_cmd->add_option("--device", device, "device name for signature ids");
    train_cmd->add_option("--min-pts", min_pts, "override the DBSCAN minPts");
    train_cmd->add_option("--out-dir", out_dir, "directory for .sig files");

    CLI::App* detect_cmd = app.add_subcommand("detect", "match signatures against a capture");
    add_common(detect_cmd, true);
    detect_cmd->add_option("--sig", sig_paths, "signature file(s)")->required();
    detect_cmd->add_option("--mode", mode_name, "wan or wifi");
    detect_cmd->add_option("--match", match_name, "exact, range, or relaxed");
    detect_cmd->add_option("--delta", delta, "relaxed-matching delta in bytes");
    detect_cmd->add_option("--delta-positions", delta_positions,
                           "1-based packet positions the delta applies to (default: all)");

    CLI::App* validate_cmd =
        app.add_subcommand("validate", "re-run detection over a training capture");
    add_common(validate_cmd, true);
    validate_cmd->get_option("--events")->required();
    validate_cmd->add_option("--sig", sig_path, "signature file")->required();

    CLI::App* compare_cmd =
        app.add_subcommand("compare", "diff two signatures position by position");
    compare_cmd->add_option("--sig-a", sig_path, "first signature")->required();
    compare_cmd->add_option("--sig-b", sig_b_path, "second signature")->required();
    compare_cmd->add_option("--report", args.report, "also write the report to this file");

    CLI::App* defend_cmd = app.add_subcommand("defend", "simulate traffic-obfuscation defenses");
    add_common(defend_cmd, true);
    defend_cmd->add_option("--sig", sig_path, "signature file")->required();
    defend_cmd->add_option("--strategy", strategy_name,
                           "pad-mtu-vpn, pad-mtu-tls, pad-mtu-hybrid, or stp-vpn");
    defend_cmd->add_option("--mtu", defense_config.mtu, "padding target");
    defend_cmd->add_option("--vpn-header-c2s", defense_config.vpn_header_c2s,
                           "tunnel header bytes, client to server");
    defend_cmd->add_option("--vpn-header-s2c", defense_config.vpn_header_s2c,
                           "tunnel header bytes, server to client");
    defend_cmd->add_option("--dummies", defense_config.dummy_count, "dummy events to inject");
    defend_cmd->add_option("--seed", defense_config.seed, "dummy placement seed");
    defend_cmd->add_option("--event-endpoint", event_endpoint,
                           "per-connection padding: only connections to this IP");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e);
        return code == 0 ? kExitOk : kExitUsage;
    }

    try {
        if (*gen) return run_gen(profile_path, seed, out_dir);
        if (*train_cmd) return run_train(args, device, min_pts, out_dir);
        if (*detect_cmd)
            return run_detect(args, sig_paths, mode_name, match_name, delta, delta_positions,
                              detect_cmd->count("--events") > 0);
        if (*validate_cmd) return run_validate(args, sig_path);
        if (*compare_cmd) return run_compare(sig_path, sig_b_path, args.report);
        if (*defend_cmd) {
            if (!event_endpoint.empty()) {
                auto ip = ipv4_from_string(event_endpoint);
                if (!ip) throw ConfigError("--event-endpoint must be an IPv4 address");
                defense_config.event_endpoint_ip = *ip;
            }
            return run_defend(args, sig_path, strategy_name, defense_config,
                              defend_cmd->count("--events") > 0);
        }
    } catch (const ConfigError& e) {
        std::fprintf(stderr, "configuration error: %s\n", e.what());
        return kExitUsage;
    } catch (const ParseError& e) {
        std::fprintf(stderr, "input error: %s\n", e.what());
        return kExitInput;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitInput;
    }
    return kExitUsage;
}
