#include "pktsig/pcap.hpp"

#include <cstring>
#include <fstream>

namespace pktsig {

namespace {

std::uint32_t bswap32(std::uint32_t v) {
    return ((v & 0x000000ffu) << 24) | ((v & 0x0000ff00u) << 8) |
           ((v & 0x00ff0000u) >> 8) | ((v & 0xff000000u) >> 24);
}

std::uint16_t bswap16(std::uint16_t v) {
    return static_cast<std::uint16_t>((v << 8) | (v >> 8));
}

} // namespace

PcapReader::PcapReader(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ParseError("cannot open capture: " + path);
    bytes_.assign(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
    if (bytes_.size() < 24) throw ParseError(path + ": malformed pcap global header (file too small)");

    std::uint32_t magic;
    std::memcpy(&magic, bytes_.data(), 4);
    if (magic == kPcapMagicNsLe || magic == kPcapMagicNsBe || bswap32(magic) == kPcapMagicNsLe)
        throw ParseError(path + ": nanosecond-resolution pcap is not supported; rewrite with microsecond timestamps");
    if (magic == kPcapMagicLe) {
        swap_ = false;
    } else if (magic == kPcapMagicBe) {
        swap_ = true;
    } else {
        throw ParseError(path + ": not a classic pcap file (bad magic)");
    }
    link_type_ = u32(20);
    pos_ = 24;
}

std::uint32_t PcapReader::u32(std::size_t off) const {
    std::uint32_t v;
    std::memcpy(&v, bytes_.data() + off, 4);
    return swap_ ? bswap32(v) : v;
}

std::uint16_t PcapReader::u16(std::size_t off) const {
    std::uint16_t v;
    std::memcpy(&v, bytes_.data() + off, 2);
    return swap_ ? bswap16(v) : v;
}

bool PcapReader::next(PcapRecord& out) {
    if (pos_ >= bytes_.size()) return false;
    if (pos_ + 16 > bytes_.size()) {
        ++truncated_;
        pos_ = bytes_.size();
        return false;
    }
    std::uint32_t ts_sec = u32(pos_);
    std::uint32_t ts_usec = u32(pos_ + 4);
    std::uint32_t incl_len = u32(pos_ + 8);
    std::uint32_t orig_len = u32(pos_ + 12);
    pos_ += 16;
    if (pos_ + incl_len > bytes_.size()) {
        ++truncated_;
        pos_ = bytes_.size();
        return false;
    }
    out.ts_us = static_cast<Micros>(ts_sec) * 1'000'000 + ts_usec;
    out.orig_len = orig_len;
    out.data.assign(bytes_.begin() + static_cast<std::ptrdiff_t>(pos_),
                    bytes_.begin() + static_cast<std::ptrdiff_t>(pos_ + incl_len));
    pos_ += incl_len;
    return true;
}

PcapWriter::PcapWriter(const std::string& path, std::uint32_t link_type, bool big_endian)
    : path_(path), swap_(big_endian) {
    put_u32(kPcapMagicLe); // put_u32 swaps for BE output, producing 0xd4c3b2a1 on disk
    put_u16(2);
    put_u16(4);
    put_u32(0); // thiszone
    put_u32(0); // sigfigs
    put_u32(65535);
    put_u32(link_type);
}

PcapWriter::~PcapWriter() {
    if (open_) close();
}

void PcapWriter::put_u32(std::uint32_t v) {
    if (swap_) v = bswap32(v);
    buf_.push_back(static_cast<std::uint8_t>(v));
    buf_.push_back(static_cast<std::uint8_t>(v >> 8));
    buf_.push_back(static_cast<std::uint8_t>(v >> 16));
    buf_.push_back(static_cast<std::uint8_t>(v >> 24));
}

void PcapWriter::put_u16(std::uint16_t v) {
    if (swap_) v = bswap16(v);
    buf_.push_back(static_cast<std::uint8_t>(v));
    buf_.push_back(static_cast<std::uint8_t>(v >> 8));
}

void PcapWriter::write(Micros ts_us, const std::vector<std::uint8_t>& frame) {
    put_u32(static_cast<std::uint32_t>(ts_us / 1'000'000));
    put_u32(static_cast<std::uint32_t>(ts_us % 1'000'000));
    put_u32(static_cast<std::uint32_t>(frame.size()));
    put_u32(static_cast<std::uint32_t>(frame.size()));
    buf_.insert(buf_.end(), frame.begin(), frame.end());
}

void PcapWriter::close() {
    if (!open_) return;
    open_ = false;
    std::ofstream out(path_, std::ios::binary | std::ios::trunc);
    if (!out) throw ParseError("cannot write capture: " + path_);
    out.write(reinterpret_cast<const char*>(buf_.data()),
              static_cast<std::streamsize>(buf_.size()));
}

} // namespace pktsig
