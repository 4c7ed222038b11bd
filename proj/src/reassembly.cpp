#include "pktsig/reassembly.hpp"

#include <algorithm>
#include <map>
#include <unordered_map>

namespace pktsig {

namespace {

// Sequence-space comparison with wraparound, RFC 793 style.
bool seq_leq(std::uint32_t a, std::uint32_t b) {
    return static_cast<std::int32_t>(a - b) <= 0;
}

struct DirectionState {
    bool started{false};
    std::uint32_t next_seq{0}; // highest contiguous byte + 1
    std::map<std::uint32_t, PacketMeta> pending; // out-of-order segments by seq
};

struct ConnState {
    Connection conn;
    DirectionState dir[2];
    Micros first_ts{0};
};

void drain_pending(ConnState& cs, DirectionState& ds) {
    for (;;) {
        auto it = ds.pending.find(ds.next_seq);
        if (it == ds.pending.end()) {
            // a partially overlapping segment may also continue the stream
            it = ds.pending.begin();
            if (it == ds.pending.end() || !seq_leq(it->first, ds.next_seq)) return;
        }
        PacketMeta pkt = it->second;
        ds.pending.erase(it);
        cs.conn.packets.push_back(pkt);
        std::uint32_t end = pkt.tcp_seq + static_cast<std::uint32_t>(pkt.length);
        if (seq_leq(ds.next_seq, end)) ds.next_seq = end;
    }
}

} // namespace

std::vector<Connection> reassemble_tcp(std::span<const PacketMeta> packets) {
    std::unordered_map<FlowKey, ConnState, FlowKeyHash> table;
    std::vector<FlowKey> order;

    for (const PacketMeta& pkt : packets) {
        if (pkt.flow.mode != FlowMode::Layer3) continue;
        if (pkt.length <= 0) continue; // only payload-bearing segments form P

        auto [it, inserted] = table.try_emplace(pkt.flow);
        ConnState& cs = it->second;
        if (inserted) {
            cs.conn.key = pkt.flow;
            cs.first_ts = pkt.ts_us;
            order.push_back(pkt.flow);
        }
        DirectionState& ds = cs.dir[pkt.direction == Direction::ClientToServer ? 0 : 1];

        std::uint32_t seg_end = pkt.tcp_seq + static_cast<std::uint32_t>(pkt.length);
        if (ds.started && seq_leq(seg_end, ds.next_seq)) {
            // entirely within bytes already delivered
            PacketMeta flagged = pkt;
            flagged.retransmission = true;
            cs.conn.packets.push_back(flagged);
            continue;
        }
        if (ds.started) {
            auto dup = ds.pending.find(pkt.tcp_seq);
            if (dup != ds.pending.end() && dup->second.length == pkt.length) {
                // duplicate of a segment still waiting for a gap to fill
                PacketMeta flagged = pkt;
                flagged.retransmission = true;
                cs.conn.packets.push_back(flagged);
                continue;
            }
        }

        if (!ds.started) {
            ds.started = true;
            ds.next_seq = pkt.tcp_seq;
        }

        if (seq_leq(pkt.tcp_seq, ds.next_seq)) {
            // in order, or partial overlap resolved in favor of first arrival
            cs.conn.packets.push_back(pkt);
            if (seq_leq(ds.next_seq, seg_end)) ds.next_seq = seg_end;
            drain_pending(cs, ds);
        } else {
            ds.pending.emplace(pkt.tcp_seq, pkt);
        }
    }

    std::vector<std::pair<Micros, Connection>> keyed;
    keyed.reserve(order.size());
    for (const FlowKey& key : order) {
        ConnState& cs = table.at(key);
        // flush gaps that never filled, in sequence order per direction
        for (DirectionState& ds : cs.dir) {
            for (auto& [seq, pkt] : ds.pending) cs.conn.packets.push_back(pkt);
            ds.pending.clear();
        }

        Connection& conn = cs.conn;
        for (const PacketMeta& pkt : conn.packets) {
            if (!pkt.retransmission && pkt.kind == PacketKind::TlsAppData) {
                conn.tls = true;
                break;
            }
        }
        for (const PacketMeta& pkt : conn.packets) {
            if (pkt.retransmission) continue;
            if (conn.tls && pkt.kind != PacketKind::TlsAppData) continue;
            conn.payload.push_back(pkt);
        }
        keyed.emplace_back(cs.first_ts, std::move(conn));
    }

    std::stable_sort(keyed.begin(), keyed.end(),
                     [](const auto& a, const auto& b) { return a.first < b.first; });
    std::vector<Connection> out;
    out.reserve(keyed.size());
    for (auto& [ts, conn] : keyed) out.push_back(std::move(conn));
    return out;
}

} // namespace pktsig
