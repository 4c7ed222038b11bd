#pragma once

#include "pktsig/types.hpp"

#include <span>
#include <vector>

namespace pktsig {

// One reassembled TCP connection. `packets` is the full reassembled list of
// payload-bearing packets (retransmissions flagged but kept); `payload` is P:
// retransmissions removed and, on TLS connections, restricted to
// application-data records.
struct Connection {
    FlowKey key;
    bool tls{false};
    std::vector<PacketMeta> packets;
    std::vector<PacketMeta> payload;
};

// Orders each direction by sequence number, flags retransmissions (a segment
// whose byte range is entirely at or below the highest contiguous byte seen,
// or an exact duplicate of a still-pending segment), and splits per
// connection. Input order is arrival order.
std::vector<Connection> reassemble_tcp(std::span<const PacketMeta> packets);

} // namespace pktsig
