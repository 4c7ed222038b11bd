#pragma once

#include "pktsig/types.hpp"

#include <cstddef>
#include <string>
#include <vector>

namespace pktsig {

// Timestamped event trigger log. File format: one `<epoch-seconds> <label>`
// line per event, fractional seconds allowed, strictly increasing.
struct EventLog {
    struct Entry {
        Micros ts_us{0};
        std::string label;
    };
    std::vector<Entry> entries;

    static EventLog from_file(const std::string& path);
    static EventLog from_text(const std::string& text, const std::string& origin = "events");
    void to_file(const std::string& path) const;

    std::size_t count_label(const std::string& label) const;
    std::vector<std::string> labels() const; // distinct, in first-seen order
};

} // namespace pktsig
