#include "sws/io.hpp"

#include <cstdio>
#include <fstream>

#include "sws/errors.hpp"
#include "sws/rng.hpp"

namespace sws::io {

const char* Reader::take(std::size_t n) {
    if (remaining() < n) throw IoError("unexpected end of data");
    const char* p = p_;
    p_ += n;
    return p;
}

std::vector<char> read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    in.seekg(0, std::ios::end);
    std::vector<char> buf(static_cast<std::size_t>(in.tellg()));
    in.seekg(0);
    in.read(buf.data(), static_cast<std::streamsize>(buf.size()));
    if (!in) throw IoError("short read on " + path.string());
    return buf;
}

static void write_all(const std::filesystem::path& path, const char* data, std::size_t size) {
    const auto tmp = path.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw IoError("cannot open " + tmp + " for writing");
        out.write(data, static_cast<std::streamsize>(size));
        if (!out) throw IoError("short write on " + tmp);
    }
    std::filesystem::rename(tmp, path);
}

void write_file(const std::filesystem::path& path, const std::vector<char>& data) {
    write_all(path, data.data(), data.size());
}

void write_file(const std::filesystem::path& path, const std::string& data) {
    write_all(path, data.data(), data.size());
}

std::string read_text(const std::filesystem::path& path) {
    auto buf = read_file(path);
    return std::string(buf.begin(), buf.end());
}

std::string file_hash(const std::filesystem::path& path) {
    auto buf = read_file(path);
    char out[17];
    std::snprintf(out, sizeof(out), "%016llx",
                  static_cast<unsigned long long>(fnv1a64(buf.data(), buf.size())));
    return out;
}

}  // namespace sws::io
