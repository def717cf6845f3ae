#pragma once

#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

namespace adnn {

/// Error thrown when a binary stream is malformed: bad magic, version,
/// truncation or checksum mismatch.
class FormatError : public std::runtime_error {
public:
    explicit FormatError(const std::string& what) : std::runtime_error(what) {}
};

// FNV-1a, 64-bit. Used as the integrity checksum of serialized files
// and as the dataset digest embedded in index files.
class Fnv1a {
public:
    void update(const void* data, size_t len) {
        const auto* bytes = static_cast<const unsigned char*>(data);
        for (size_t i = 0; i < len; ++i) {
            state_ ^= bytes[i];
            state_ *= 0x100000001b3ULL;
        }
    }
    uint64_t digest() const { return state_; }

private:
    uint64_t state_ = 0xcbf29ce484222325ULL;
};

/// Little-endian writer over an ostream. Every write is also folded
/// into a running FNV-1a checksum so files can carry a trailing digest.
class BinaryWriter {
public:
    explicit BinaryWriter(std::ostream& out) : out_(out) {}

    void bytes(const void* data, size_t len) {
        out_.write(static_cast<const char*>(data), static_cast<std::streamsize>(len));
        checksum_.update(data, len);
        written_ += len;
    }

    void u8(uint8_t v) { bytes(&v, 1); }
    void u16(uint16_t v) { put_le(v, 2); }
    void u32(uint32_t v) { put_le(v, 4); }
    void u64(uint64_t v) { put_le(v, 8); }

    void f64(double v) {
        uint64_t bits;
        std::memcpy(&bits, &v, 8);
        u64(bits);
    }

    void magic(const char tag[4]) { bytes(tag, 4); }

    uint64_t checksum() const { return checksum_.digest(); }
    size_t bytes_written() const { return written_; }

    /// Appends the running checksum (not itself checksummed).
    void finish_with_checksum() {
        uint64_t digest = checksum_.digest();
        unsigned char buf[8];
        for (int i = 0; i < 8; ++i) buf[i] = static_cast<unsigned char>(digest >> (8 * i));
        out_.write(reinterpret_cast<const char*>(buf), 8);
    }

private:
    void put_le(uint64_t v, int n) {
        unsigned char buf[8];
        for (int i = 0; i < n; ++i) buf[i] = static_cast<unsigned char>(v >> (8 * i));
        bytes(buf, static_cast<size_t>(n));
    }

    std::ostream& out_;
    Fnv1a checksum_;
    size_t written_ = 0;
};

/// Little-endian reader mirroring BinaryWriter.
class BinaryReader {
public:
    explicit BinaryReader(std::istream& in) : in_(in) {}

    void bytes(void* data, size_t len) {
        in_.read(static_cast<char*>(data), static_cast<std::streamsize>(len));
        if (static_cast<size_t>(in_.gcount()) != len) {
            throw FormatError("truncated stream");
        }
        checksum_.update(data, len);
    }

    uint8_t u8() {
        uint8_t v;
        bytes(&v, 1);
        return v;
    }
    uint16_t u16() { return static_cast<uint16_t>(get_le(2)); }
    uint32_t u32() { return static_cast<uint32_t>(get_le(4)); }
    uint64_t u64() { return get_le(8); }

    double f64() {
        uint64_t bits = u64();
        double v;
        std::memcpy(&v, &bits, 8);
        return v;
    }

    void expect_magic(const char tag[4], const char* what) {
        char buf[4];
        bytes(buf, 4);
        if (std::memcmp(buf, tag, 4) != 0) {
            throw FormatError(std::string("bad magic for ") + what);
        }
    }

    uint64_t checksum() const { return checksum_.digest(); }

    /// Reads the trailing checksum and compares against the running one.
    void verify_checksum() {
        uint64_t expected = checksum_.digest();
        unsigned char buf[8];
        in_.read(reinterpret_cast<char*>(buf), 8);
        if (in_.gcount() != 8) throw FormatError("truncated stream (checksum)");
        uint64_t stored = 0;
        for (int i = 0; i < 8; ++i) stored |= static_cast<uint64_t>(buf[i]) << (8 * i);
        if (stored != expected) throw FormatError("checksum mismatch");
    }

private:
    uint64_t get_le(int n) {
        unsigned char buf[8];
        bytes(buf, static_cast<size_t>(n));
        uint64_t v = 0;
        for (int i = 0; i < n; ++i) v |= static_cast<uint64_t>(buf[i]) << (8 * i);
        return v;
    }

    std::istream& in_;
    Fnv1a checksum_;
};

inline void write_f64_vector(BinaryWriter& w, const std::vector<double>& v) {
    w.u64(v.size());
    for (double x : v) w.f64(x);
}

inline std::vector<double> read_f64_vector(BinaryReader& r) {
    uint64_t n = r.u64();
    std::vector<double> v(n);
    for (auto& x : v) x = r.f64();
    return v;
}

} // namespace adnn
