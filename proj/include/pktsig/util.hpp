#pragma once

#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace pktsig {

struct ParseError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Deterministic RNG wrapper. All draws go through our own reduction so the
// byte streams we generate do not depend on libstdc++ distribution details.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    std::uint64_t next() { return engine_(); }

    // inclusive bounds
    std::uint64_t uniform_u64(std::uint64_t lo, std::uint64_t hi) {
        if (lo >= hi) return lo;
        std::uint64_t span = hi - lo + 1;
        // rejection sampling keeps the draw unbiased
        std::uint64_t limit = UINT64_MAX - UINT64_MAX % span;
        std::uint64_t v;
        do {
            v = engine_();
        } while (v >= limit);
        return lo + v % span;
    }

    std::int64_t uniform_i64(std::int64_t lo, std::int64_t hi) {
        return lo + static_cast<std::int64_t>(uniform_u64(0, static_cast<std::uint64_t>(hi - lo)));
    }

    int uniform_int(int lo, int hi) {
        return static_cast<int>(uniform_i64(lo, hi));
    }

    double uniform_real() { // [0, 1)
        return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
    }

    bool chance(double p) { return uniform_real() < p; }

private:
    std::mt19937_64 engine_;
};

std::string read_text_file(const std::string& path);
void write_text_file(const std::string& path, const std::string& content);

std::vector<std::string> split_ws(const std::string& line);
std::string trim(const std::string& s);

// SHA-256 of a file's contents, lowercase hex. Used for signature provenance.
std::string sha256_file_hex(const std::string& path);
std::string sha256_hex(const void* data, std::size_t len);

} // namespace pktsig
