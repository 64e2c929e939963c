#pragma once

#include "flowcast/common.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <vector>

namespace flowcast {

static_assert(std::endian::native == std::endian::little,
              "on-disk formats are little-endian; big-endian hosts are unsupported");

/// Little-endian binary writer over a std::ostream.
class BinWriter {
public:
    explicit BinWriter(std::ostream& os) : os_(os) {}

    void u8(uint8_t v) { raw(&v, 1); }
    void u32(uint32_t v) { raw(&v, 4); }
    void u64(uint64_t v) { raw(&v, 8); }
    void f32(float v) { raw(&v, 4); }
    void f64(double v) { raw(&v, 8); }

    void magic(const char (&m)[5]) { raw(m, 4); }

    void bytes(const void* p, size_t n) { raw(p, n); }

private:
    void raw(const void* p, size_t n) {
        os_.write(static_cast<const char*>(p), static_cast<std::streamsize>(n));
        if (!os_) throw FormatError("write failed");
    }
    std::ostream& os_;
};

/// Little-endian binary reader with context-aware truncation errors.
class BinReader {
public:
    BinReader(std::istream& is, std::string name) : is_(is), name_(std::move(name)) {}

    uint8_t u8(const char* what) { uint8_t v; raw(&v, 1, what); return v; }
    uint32_t u32(const char* what) { uint32_t v; raw(&v, 4, what); return v; }
    uint64_t u64(const char* what) { uint64_t v; raw(&v, 8, what); return v; }
    float f32(const char* what) { float v; raw(&v, 4, what); return v; }
    double f64(const char* what) { double v; raw(&v, 8, what); return v; }

    void expect_magic(const char (&m)[5]) {
        char got[4];
        raw(got, 4, "magic");
        if (std::memcmp(got, m, 4) != 0)
            throw FormatError(name_ + ": bad magic, expected \"" + std::string(m, 4) +
                              "\", got \"" + std::string(got, 4) + "\"");
    }

    void bytes(void* p, size_t n, const char* what) { raw(p, n, what); }

    bool at_eof() {
        is_.peek();
        return is_.eof();
    }

private:
    void raw(void* p, size_t n, const char* what) {
        is_.read(static_cast<char*>(p), static_cast<std::streamsize>(n));
        if (static_cast<size_t>(is_.gcount()) != n)
            throw FormatError(name_ + ": truncated while reading " + what);
    }
    std::istream& is_;
    std::string name_;
};

inline std::ofstream open_out(const std::string& path) {
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw FormatError("cannot open for writing: " + path);
    return os;
}

inline std::ifstream open_in(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw FormatError("cannot open for reading: " + path);
    return is;
}

}  // namespace flowcast
