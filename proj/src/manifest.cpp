#include "sws/manifest.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>

#include "sws/rng.hpp"

#include <nlohmann/json.hpp>

#include "sws/io.hpp"

namespace sws::cli {

using nlohmann::json;
using nlohmann::ordered_json;

namespace {

// one stamp per input; directories hash their sorted (name, content hash) list
std::string input_hash(const std::filesystem::path& path) {
    if (std::filesystem::is_regular_file(path)) return io::file_hash(path);
    std::vector<std::filesystem::path> files;
    for (const auto& entry : std::filesystem::recursive_directory_iterator(path))
        if (entry.is_regular_file()) files.push_back(entry.path());
    std::sort(files.begin(), files.end());
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (const auto& f : files) {
        h = fnv1a64(f.filename().string(), h);
        h = fnv1a64(io::file_hash(f), h);
    }
    char out[17];
    std::snprintf(out, sizeof(out), "%016llx", static_cast<unsigned long long>(h));
    return out;
}

}  // namespace

void write_manifest(const std::filesystem::path& out_dir, const std::string& command,
                    const std::vector<std::string>& argv, const std::string& resolved_config_json,
                    const std::vector<std::filesystem::path>& inputs,
                    const std::vector<std::filesystem::path>& outputs) {
    ordered_json j;
    j["tool_version"] = kToolVersion;
    j["command"] = command;
    j["argv"] = argv;
    j["config"] = ordered_json::parse(resolved_config_json);
    ordered_json in = ordered_json::object();
    for (const auto& path : inputs)
        if (std::filesystem::exists(path)) in[path.string()] = input_hash(path);
    j["inputs"] = in;
    ordered_json out = ordered_json::array();
    for (const auto& path : outputs) out.push_back(path.string());
    j["outputs"] = out;
    j["timestamp_unix"] = std::chrono::duration_cast<std::chrono::seconds>(
                              std::chrono::system_clock::now().time_since_epoch())
                              .count();
    io::write_file(out_dir / "manifest.json", j.dump(2) + "\n");
}

}  // namespace sws::cli
