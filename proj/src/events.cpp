#include "pktsig/events.hpp"

#include "pktsig/util.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

namespace pktsig {

EventLog EventLog::from_text(const std::string& text, const std::string& origin) {
    EventLog log;
    std::istringstream in(text);
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        line = trim(line);
        if (line.empty() || line[0] == '#') continue;
        auto toks = split_ws(line);
        if (toks.size() != 2)
            throw ParseError(origin + ":" + std::to_string(lineno) +
                             ": expected `<epoch-seconds> <label>`");
        double seconds;
        try {
            seconds = std::stod(toks[0]);
        } catch (const std::exception&) {
            throw ParseError(origin + ":" + std::to_string(lineno) +
                             ": bad timestamp: " + toks[0]);
        }
        Entry entry;
        entry.ts_us = static_cast<Micros>(std::llround(seconds * 1e6));
        entry.label = toks[1];
        if (!log.entries.empty() && entry.ts_us <= log.entries.back().ts_us)
            throw ParseError(origin + ":" + std::to_string(lineno) +
                             ": event timestamps must be strictly increasing");
        log.entries.push_back(std::move(entry));
    }
    return log;
}

EventLog EventLog::from_file(const std::string& path) {
    return from_text(read_text_file(path), path);
}

void EventLog::to_file(const std::string& path) const {
    std::ostringstream out;
    for (const Entry& e : entries) {
        char buf[40];
        std::snprintf(buf, sizeof(buf), "%lld.%06lld",
                      static_cast<long long>(e.ts_us / 1'000'000),
                      static_cast<long long>(e.ts_us % 1'000'000));
        out << buf << ' ' << e.label << '\n';
    }
    write_text_file(path, out.str());
}

std::size_t EventLog::count_label(const std::string& label) const {
    return static_cast<std::size_t>(
        std::count_if(entries.begin(), entries.end(),
                      [&label](const Entry& e) { return e.label == label; }));
}

std::vector<std::string> EventLog::labels() const {
    std::vector<std::string> out;
    for (const Entry& e : entries)
        if (std::find(out.begin(), out.end(), e.label) == out.end()) out.push_back(e.label);
    return out;
}

} // namespace pktsig
