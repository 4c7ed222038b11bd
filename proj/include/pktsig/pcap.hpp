#pragma once

#include "pktsig/types.hpp"
#include "pktsig/util.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace pktsig {

// Classic pcap only (microsecond timestamps). Nanosecond captures and pcapng
// are rejected with a descriptive error.
inline constexpr std::uint32_t kPcapMagicLe = 0xa1b2c3d4u;
inline constexpr std::uint32_t kPcapMagicBe = 0xd4c3b2a1u;
inline constexpr std::uint32_t kPcapMagicNsLe = 0xa1b23c4du;
inline constexpr std::uint32_t kPcapMagicNsBe = 0x4d3cb2a1u;

inline constexpr std::uint32_t kLinkTypeEthernet = 1;
inline constexpr std::uint32_t kLinkTypeRadiotap = 127;

struct PcapRecord {
    Micros ts_us{0};
    std::uint32_t orig_len{0};
    std::vector<std::uint8_t> data;
};

class PcapReader {
public:
    explicit PcapReader(const std::string& path);

    std::uint32_t link_type() const { return link_type_; }
    bool big_endian() const { return swap_; }
    std::uint64_t truncated_records() const { return truncated_; }

    // Returns false at end of stream. Truncated trailing records bump the
    // warning counter and end the stream.
    bool next(PcapRecord& out);

private:
    std::uint32_t u32(std::size_t off) const;
    std::uint16_t u16(std::size_t off) const;

    std::vector<std::uint8_t> bytes_;
    std::size_t pos_{0};
    bool swap_{false};
    std::uint32_t link_type_{kLinkTypeEthernet};
    std::uint64_t truncated_{0};
};

class PcapWriter {
public:
    PcapWriter(const std::string& path, std::uint32_t link_type = kLinkTypeEthernet,
               bool big_endian = false);
    ~PcapWriter();

    PcapWriter(const PcapWriter&) = delete;
    PcapWriter& operator=(const PcapWriter&) = delete;

    void write(Micros ts_us, const std::vector<std::uint8_t>& frame);
    void close();

private:
    void put_u32(std::uint32_t v);
    void put_u16(std::uint16_t v);

    std::string path_;
    std::vector<std::uint8_t> buf_;
    bool swap_{false};
    bool open_{true};
};

} // namespace pktsig
