#include "pktsig/pairs.hpp"

#include <cmath>
#include <limits>

namespace pktsig {

std::vector<PacketPair> form_pairs(const Connection& conn, int conn_id) {
    std::vector<PacketPair> out;
    const auto& p = conn.payload;
    std::size_t i = 0;
    while (i < p.size()) {
        PacketPair pair;
        pair.first = p[i];
        pair.connection = conn.key;
        pair.conn_id = conn_id;
        pair.event_window = p[i].event_window;
        if (i + 1 < p.size() && p[i + 1].direction != p[i].direction) {
            pair.second = p[i + 1];
            i += 2;
        } else {
            i += 1;
        }
        pair.pair_index = static_cast<int>(out.size());
        out.push_back(std::move(pair));
    }
    return out;
}

double pair_distance(const PacketPair& a, const PacketPair& b) {
    if (!a.same_pattern(b)) return std::numeric_limits<double>::infinity();
    double d1 = static_cast<double>(a.len1()) - static_cast<double>(b.len1());
    double d2 = a.has_second()
                    ? static_cast<double>(a.len2()) - static_cast<double>(b.len2())
                    : 0.0;
    return std::sqrt(d1 * d1 + d2 * d2);
}

} // namespace pktsig
