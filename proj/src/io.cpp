#include "deepform/io.hpp"

#include <cstdio>
#include <filesystem>
#include <sstream>

namespace deepform {

AtomicFile::AtomicFile(const std::string& path) : path_(path), tmp_(path + ".tmp") {
    os_.open(tmp_, std::ios::binary | std::ios::trunc);
    if (!os_) throw DataError("cannot open for writing: " + tmp_);
}

void AtomicFile::commit() {
    os_.flush();
    if (!os_) throw DataError("write failed: " + tmp_);
    os_.close();
    std::error_code ec;
    std::filesystem::rename(tmp_, path_, ec);
    if (ec) throw DataError("rename failed: " + tmp_ + " -> " + path_ + ": " + ec.message());
    committed_ = true;
}

AtomicFile::~AtomicFile() {
    if (!committed_) {
        if (os_.is_open()) os_.close();
        std::error_code ec;
        std::filesystem::remove(tmp_, ec);
    }
}

std::string read_text_file(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw DataError("cannot open file: " + path);
    std::ostringstream ss;
    ss << is.rdbuf();
    return ss.str();
}

void write_text_file_atomic(const std::string& path, const std::string& content) {
    AtomicFile f(path);
    f.stream() << content;
    f.commit();
}

uint64_t fnv1a64(const void* data, size_t n) {
    const unsigned char* p = static_cast<const unsigned char*>(data);
    uint64_t h = 0xcbf29ce484222325ULL;
    for (size_t i = 0; i < n; ++i) {
        h ^= p[i];
        h *= 0x100000001b3ULL;
    }
    return h;
}

std::string fnv1a64_hex(const std::string& s) {
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx",
                  static_cast<unsigned long long>(fnv1a64(s.data(), s.size())));
    return buf;
}

uint64_t file_hash(const std::string& path) {
    std::string content = read_text_file(path);
    return fnv1a64(content.data(), content.size());
}

}  // namespace deepform
