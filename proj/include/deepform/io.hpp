#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "deepform/error.hpp"

namespace deepform {

// Little-endian binary helpers shared by the dataset cache, checkpoint
// and embedding file formats.

inline void write_bytes(std::ostream& os, const void* p, size_t n) {
    os.write(static_cast<const char*>(p), static_cast<std::streamsize>(n));
}

template <class T>
void write_le(std::ostream& os, T x) {
    static_assert(std::is_arithmetic_v<T>);
    unsigned char buf[sizeof(T)];
    std::memcpy(buf, &x, sizeof(T));
#if defined(__BYTE_ORDER__) && __BYTE_ORDER__ == __ORDER_BIG_ENDIAN__
    for (size_t i = 0; i < sizeof(T) / 2; ++i) std::swap(buf[i], buf[sizeof(T) - 1 - i]);
#endif
    write_bytes(os, buf, sizeof(T));
}

template <class T>
T read_le(std::istream& is) {
    unsigned char buf[sizeof(T)];
    is.read(reinterpret_cast<char*>(buf), sizeof(T));
    if (!is) throw DataError("unexpected end of file");
#if defined(__BYTE_ORDER__) && __BYTE_ORDER__ == __ORDER_BIG_ENDIAN__
    for (size_t i = 0; i < sizeof(T) / 2; ++i) std::swap(buf[i], buf[sizeof(T) - 1 - i]);
#endif
    T x;
    std::memcpy(&x, buf, sizeof(T));
    return x;
}

inline void write_string(std::ostream& os, const std::string& s) {
    write_le<uint32_t>(os, static_cast<uint32_t>(s.size()));
    write_bytes(os, s.data(), s.size());
}

inline std::string read_string(std::istream& is) {
    uint32_t n = read_le<uint32_t>(is);
    std::string s(n, '\0');
    is.read(s.data(), n);
    if (!is) throw DataError("unexpected end of file in string");
    return s;
}

inline void expect_magic(std::istream& is, const char magic[4], const std::string& what) {
    char buf[4];
    is.read(buf, 4);
    if (!is || std::memcmp(buf, magic, 4) != 0)
        throw DataError("bad magic in " + what + " (expected " + std::string(magic, 4) + ")");
}

// Write-temp-then-rename so readers never observe a partial file.
class AtomicFile {
  public:
    explicit AtomicFile(const std::string& path);
    ~AtomicFile();
    std::ofstream& stream() { return os_; }
    void commit();

  private:
    std::string path_, tmp_;
    std::ofstream os_;
    bool committed_ = false;
};

std::string read_text_file(const std::string& path);
void write_text_file_atomic(const std::string& path, const std::string& content);

uint64_t fnv1a64(const void* data, size_t n);
std::string fnv1a64_hex(const std::string& s);
uint64_t file_hash(const std::string& path);

}  // namespace deepform
