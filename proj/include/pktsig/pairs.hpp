#pragma once

#include "pktsig/reassembly.hpp"
#include "pktsig/types.hpp"

#include <optional>
#include <span>
#include <vector>

namespace pktsig {

// Request/reply unit: two consecutive opposite-direction payload packets of a
// connection, or a lone packet paired with nil.
struct PacketPair {
    PacketMeta first;
    std::optional<PacketMeta> second;
    FlowKey connection{};
    int conn_id{0};
    int pair_index{0};     // position in the connection's pair list
    int event_window{-1};

    Direction dir() const { return first.direction; }
    bool has_second() const { return second.has_value(); }
    int len1() const { return first.length; }
    int len2() const { return second ? second->length : 0; }
    Micros first_ts() const { return first.ts_us; }
    Micros last_ts() const { return second ? second->ts_us : first.ts_us; }
    bool same_pattern(const PacketPair& o) const {
        return dir() == o.dir() && has_second() == o.has_second();
    }
};

// Greedy left-to-right pairing over a connection's payload list: packet i
// pairs with i+1 iff their directions differ, otherwise (i, nil).
std::vector<PacketPair> form_pairs(const Connection& conn, int conn_id);

// Euclidean distance over the two packet lengths; infinite when the
// direction patterns differ (including nil mismatches).
double pair_distance(const PacketPair& a, const PacketPair& b);

} // namespace pktsig
