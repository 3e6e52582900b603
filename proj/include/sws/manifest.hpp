#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace sws::cli {

inline constexpr const char* kToolVersion = "0.1.0";

/// Every subcommand writes one manifest beside its outputs: the command, its
/// resolved configuration, content hashes of the inputs, and the produced
/// files. Timestamps live only here, so re-runs stay byte-identical
/// elsewhere.
void write_manifest(const std::filesystem::path& out_dir, const std::string& command,
                    const std::vector<std::string>& argv, const std::string& resolved_config_json,
                    const std::vector<std::filesystem::path>& inputs,
                    const std::vector<std::filesystem::path>& outputs);

}  // namespace sws::cli
