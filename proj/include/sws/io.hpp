#pragma once

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <string>
#include <vector>

namespace sws::io {

// Little-endian binary serialization into an in-memory buffer. Files are
// written atomically from the buffer so partial writes never hit disk.
class Writer {
public:
    void u8(std::uint8_t v) { buf_.push_back(static_cast<char>(v)); }
    void u16(std::uint16_t v) { append_le(v); }
    void u32(std::uint32_t v) { append_le(v); }
    void u64(std::uint64_t v) { append_le(v); }
    void f32(float v) {
        std::uint32_t bits;
        std::memcpy(&bits, &v, 4);
        append_le(bits);
    }
    void bytes(const void* p, std::size_t n) {
        buf_.insert(buf_.end(), static_cast<const char*>(p), static_cast<const char*>(p) + n);
    }
    void str(const std::string& s) { bytes(s.data(), s.size()); }

    const std::vector<char>& data() const { return buf_; }

private:
    template <typename T>
    void append_le(T v) {
        for (std::size_t i = 0; i < sizeof(T); ++i)
            buf_.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
    }
    std::vector<char> buf_;
};

/// Cursor over an in-memory buffer; throws CorruptLabels-agnostic IoError on
/// underrun so format readers can translate.
class Reader {
public:
    Reader(const char* data, std::size_t size) : p_(data), end_(data + size) {}
    explicit Reader(const std::vector<char>& buf) : Reader(buf.data(), buf.size()) {}

    std::uint8_t u8() { return static_cast<std::uint8_t>(take(1)[0]); }
    std::uint16_t u16() { return read_le<std::uint16_t>(); }
    std::uint32_t u32() { return read_le<std::uint32_t>(); }
    std::uint64_t u64() { return read_le<std::uint64_t>(); }
    float f32() {
        std::uint32_t bits = read_le<std::uint32_t>();
        float v;
        std::memcpy(&v, &bits, 4);
        return v;
    }
    std::string str(std::size_t n) { return std::string(take(n), n); }
    void raw(void* out, std::size_t n) { std::memcpy(out, take(n), n); }
    std::size_t remaining() const { return static_cast<std::size_t>(end_ - p_); }

private:
    const char* take(std::size_t n);
    template <typename T>
    T read_le() {
        const char* p = take(sizeof(T));
        T v = 0;
        for (std::size_t i = 0; i < sizeof(T); ++i)
            v |= static_cast<T>(static_cast<unsigned char>(p[i])) << (8 * i);
        return v;
    }
    const char* p_;
    const char* end_;
};

std::vector<char> read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, const std::vector<char>& data);
void write_file(const std::filesystem::path& path, const std::string& data);
std::string read_text(const std::filesystem::path& path);

/// FNV-1a hash of a file's bytes, hex-encoded; content stamp for manifests.
std::string file_hash(const std::filesystem::path& path);

}  // namespace sws::io
