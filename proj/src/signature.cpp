#include "pktsig/signature.hpp"

#include "pktsig/util.hpp"

#include <algorithm>
#include <cstdio>
#include <sstream>

namespace pktsig {

int Signature::total_packets() const {
    int n = 0;
    for (const auto& s : sets) n += static_cast<int>(s.positions.size());
    return n;
}

std::int64_t Signature::duration_max_ms() const {
    return (duration_max_us + 999) / 1000;
}

bool Signature::same_shape(const Signature& o) const {
    if (sets.size() != o.sets.size()) return false;
    for (std::size_t i = 0; i < sets.size(); ++i) {
        if (sets[i].positions.size() != o.sets[i].positions.size()) return false;
        for (std::size_t j = 0; j < sets[i].positions.size(); ++j)
            if (sets[i].positions[j].dir != o.sets[i].positions[j].dir) return false;
    }
    return true;
}

std::string Signature::pattern_string() const {
    std::ostringstream out;
    for (std::size_t i = 0; i < sets.size(); ++i) {
        if (i) out << "  ";
        out << 'S' << (i + 1) << ':';
        for (const auto& pos : sets[i].positions) {
            out << ' ' << direction_code(pos.dir) << '-';
            if (pos.obs_min == pos.obs_max)
                out << pos.obs_min;
            else
                out << '[' << pos.obs_min << '-' << pos.obs_max << ']';
        }
    }
    return out.str();
}

const char* strategy_name(MatchStrategy s) {
    switch (s) {
    case MatchStrategy::Exact: return "exact";
    case MatchStrategy::Range: return "range";
    case MatchStrategy::Relaxed: return "relaxed";
    }
    return "exact";
}

MatchBounds MatchBounds::shifted(int offset) const {
    MatchBounds out = *this;
    for (auto& set : out.sets)
        for (auto& b : set) {
            b.lo += offset;
            b.hi += offset;
        }
    return out;
}

MatchBounds exact_bounds(const Signature& sig) {
    MatchBounds mb;
    mb.strategy = MatchStrategy::Exact;
    for (const auto& set : sig.sets) {
        auto& dst = mb.sets.emplace_back();
        for (const auto& pos : set.positions)
            dst.push_back(BoundPosition{pos.dir, pos.obs_min, pos.obs_max});
    }
    return mb;
}

std::pair<int, int> range_bounds_for(int core_min, int core_max, double eps) {
    int lo = core_min - static_cast<int>(eps);
    int hi = core_max + static_cast<int>(eps);
    return {std::max(lo, 0), hi};
}

MatchBounds range_bounds(const Signature& sig, double eps) {
    MatchBounds mb;
    mb.strategy = MatchStrategy::Range;
    for (const auto& set : sig.sets) {
        auto& dst = mb.sets.emplace_back();
        for (const auto& pos : set.positions) {
            auto [lo, hi] = range_bounds_for(pos.core_min, pos.core_max, eps);
            dst.push_back(BoundPosition{pos.dir, lo, hi});
        }
    }
    return mb;
}

MatchBounds relaxed_bounds(const Signature& sig, int delta, const std::vector<int>& positions) {
    MatchBounds mb = exact_bounds(sig);
    mb.strategy = MatchStrategy::Relaxed;
    int flat = 0;
    for (auto& set : mb.sets) {
        for (auto& b : set) {
            if (std::find(positions.begin(), positions.end(), flat) != positions.end()) {
                b.lo = std::max(b.lo - delta, 0);
                b.hi += delta;
            }
            ++flat;
        }
    }
    return mb;
}

std::int64_t detection_window_ms(std::int64_t duration_max_ms) {
    // t + 0.1t to the nearest millisecond (204 -> 224)
    return (11 * duration_max_ms + 5) / 10;
}

bool range_matching_applicable(const Signature& sig, const std::vector<Signature>& same_device,
                               double eps) {
    bool has_variation = false;
    for (const auto& set : sig.sets)
        for (const auto& pos : set.positions)
            if (pos.obs_min != pos.obs_max) has_variation = true;
    if (!has_variation) return false;
    if (sig.total_packets() <= 2) return false;

    MatchBounds mine = range_bounds(sig, eps);
    for (const Signature& other : same_device) {
        if (other.id == sig.id || !sig.same_shape(other)) continue;
        MatchBounds theirs = range_bounds(other, eps);
        bool all_overlap = true;
        for (std::size_t s = 0; s < mine.sets.size() && all_overlap; ++s)
            for (std::size_t p = 0; p < mine.sets[s].size(); ++p) {
                const auto& a = mine.sets[s][p];
                const auto& b = theirs.sets[s][p];
                if (a.lo > b.hi || b.lo > a.hi) {
                    all_overlap = false;
                    break;
                }
            }
        if (all_overlap) return false; // would be indistinguishable from a sibling
    }
    return true;
}

Signature shift_signature_lengths(const Signature& sig, int c2s_delta, int s2c_delta) {
    Signature out = sig;
    for (auto& set : out.sets)
        for (auto& pos : set.positions) {
            int d = pos.dir == Direction::ClientToServer ? c2s_delta : s2c_delta;
            pos.obs_min = std::max(pos.obs_min + d, 0);
            pos.obs_max = std::max(pos.obs_max + d, 0);
            pos.core_min = std::max(pos.core_min + d, 0);
            pos.core_max = std::max(pos.core_max + d, 0);
        }
    return out;
}

// ---------------------------------------------------------------------------
// Signature file format (.sig): versioned key/value text, stable field order.
// ---------------------------------------------------------------------------

std::string serialize(const Signature& sig) {
    std::ostringstream out;
    out << "pktsig-signature v1\n";
    out << "id " << sig.id << '\n';
    out << "device " << sig.device << '\n';
    out << "label " << sig.label << '\n';
    out << "comm " << comm_class_name(sig.comm) << '\n';
    out << "layer2-offset " << sig.layer2_offset << '\n';
    out << "duration-us " << sig.duration_min_us << ' ' << sig.duration_avg_us << ' '
        << sig.duration_max_us << '\n';
    out << "sets " << sig.sets.size() << '\n';
    for (const auto& set : sig.sets) {
        out << "set " << set.positions.size() << '\n';
        for (const auto& pos : set.positions) {
            out << "  pos " << direction_code(pos.dir) << ' ' << pos.obs_min << ' '
                << pos.obs_max << " core " << pos.core_min << ' ' << pos.core_max << '\n';
        }
    }
    out << "provenance\n";
    out << "  capture-sha256 " << sig.provenance.capture_sha256 << '\n';
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.6g", sig.provenance.window_t_s);
    out << "  window-t-s " << buf << '\n';
    std::snprintf(buf, sizeof(buf), "%.6g", sig.provenance.eps);
    out << "  eps " << buf << '\n';
    out << "  min-pts " << sig.provenance.min_pts << '\n';
    out << "  tool " << sig.provenance.tool << '\n';
    out << "end\n";
    return out.str();
}

namespace {

struct LineReader {
    std::istringstream in;
    int lineno{0};
    explicit LineReader(const std::string& text) : in(text) {}
    bool next(std::string& line) {
        while (std::getline(in, line)) {
            ++lineno;
            line = trim(line);
            if (!line.empty()) return true;
        }
        return false;
    }
    [[noreturn]] void fail(const std::string& msg) const {
        throw ParseError("signature line " + std::to_string(lineno) + ": " + msg);
    }
};

std::string value_after(const std::string& line, const std::string& key, LineReader& r) {
    bool matches = line.size() >= key.size() && line.compare(0, key.size(), key) == 0 &&
                   (line.size() == key.size() || line[key.size()] == ' ' ||
                    line[key.size()] == '\t');
    if (!matches) r.fail("expected `" + key + " ...`, got: " + line);
    return trim(line.substr(key.size()));
}

} // namespace

Signature deserialize(const std::string& text) {
    LineReader r(text);
    std::string line;
    if (!r.next(line) || line != "pktsig-signature v1")
        throw ParseError("unknown signature file version (expected `pktsig-signature v1`)");

    Signature sig;
    if (!r.next(line)) r.fail("truncated file");
    sig.id = value_after(line, "id", r);
    if (!r.next(line)) r.fail("truncated file");
    sig.device = value_after(line, "device", r);
    if (!r.next(line)) r.fail("truncated file");
    sig.label = value_after(line, "label", r);
    if (!r.next(line)) r.fail("truncated file");
    auto comm = comm_class_from_name(value_after(line, "comm", r));
    if (!comm) r.fail("unknown comm class");
    sig.comm = *comm;
    if (!r.next(line)) r.fail("truncated file");
    sig.layer2_offset = std::stoi(value_after(line, "layer2-offset", r));
    if (!r.next(line)) r.fail("truncated file");
    {
        auto toks = split_ws(value_after(line, "duration-us", r));
        if (toks.size() != 3) r.fail("duration-us needs three values");
        sig.duration_min_us = std::stoll(toks[0]);
        sig.duration_avg_us = std::stoll(toks[1]);
        sig.duration_max_us = std::stoll(toks[2]);
    }
    if (!r.next(line)) r.fail("truncated file");
    int set_count = std::stoi(value_after(line, "sets", r));
    if (set_count < 0 || set_count > 64) r.fail("implausible set count");

    for (int s = 0; s < set_count; ++s) {
        if (!r.next(line)) r.fail("truncated file");
        int pos_count = std::stoi(value_after(line, "set", r));
        if (pos_count < 1 || pos_count > 4096) r.fail("implausible position count");
        SignatureSet set;
        for (int p = 0; p < pos_count; ++p) {
            if (!r.next(line)) r.fail("truncated file");
            auto toks = split_ws(line);
            if (toks.size() != 7 || toks[0] != "pos" || toks[4] != "core")
                r.fail("expected `pos <C|S> <min> <max> core <min> <max>`");
            SignaturePosition pos;
            if (toks[1] == "C") pos.dir = Direction::ClientToServer;
            else if (toks[1] == "S") pos.dir = Direction::ServerToClient;
            else r.fail("direction must be C or S");
            pos.obs_min = std::stoi(toks[2]);
            pos.obs_max = std::stoi(toks[3]);
            pos.core_min = std::stoi(toks[5]);
            pos.core_max = std::stoi(toks[6]);
            if (pos.obs_min > pos.obs_max || pos.core_min > pos.core_max)
                r.fail("length-min exceeds length-max");
            if (pos.obs_min < 0 || pos.core_min < 0) r.fail("negative length bound");
            set.positions.push_back(pos);
        }
        sig.sets.push_back(std::move(set));
    }

    if (!r.next(line) || line != "provenance") r.fail("expected provenance block");
    if (!r.next(line)) r.fail("truncated file");
    sig.provenance.capture_sha256 = value_after(line, "capture-sha256", r);
    if (!r.next(line)) r.fail("truncated file");
    sig.provenance.window_t_s = std::stod(value_after(line, "window-t-s", r));
    if (!r.next(line)) r.fail("truncated file");
    sig.provenance.eps = std::stod(value_after(line, "eps", r));
    if (!r.next(line)) r.fail("truncated file");
    sig.provenance.min_pts = std::stoi(value_after(line, "min-pts", r));
    if (!r.next(line)) r.fail("truncated file");
    sig.provenance.tool = value_after(line, "tool", r);
    if (!r.next(line) || line != "end") r.fail("expected end marker");

    if (sig.total_packets() >= 2 && sig.duration_max_us <= 0)
        r.fail("multi-packet signature needs a positive duration");
    return sig;
}

Signature load_signature(const std::string& path) {
    return deserialize(read_text_file(path));
}

void save_signature(const Signature& sig, const std::string& path) {
    write_text_file(path, serialize(sig));
}

CompareReport compare_signatures(const Signature& a, const Signature& b) {
    CompareReport report;
    if (!a.same_shape(b)) {
        report.same_shape = false;
        report.mismatch_reason = "structural mismatch: " + a.pattern_string() + " vs " +
                                 b.pattern_string();
        return report;
    }
    report.same_shape = true;
    for (std::size_t s = 0; s < a.sets.size(); ++s)
        for (std::size_t p = 0; p < a.sets[s].positions.size(); ++p) {
            int delta = b.sets[s].positions[p].obs_min - a.sets[s].positions[p].obs_min;
            report.deltas.push_back(delta);
            report.max_abs_delta = std::max(report.max_abs_delta, std::abs(delta));
        }
    return report;
}

} // namespace pktsig
