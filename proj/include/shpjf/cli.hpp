#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

namespace shpjf::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitValidation = 1;
inline constexpr int kExitRuntime = 2;

/// Entry point of the shpjf tool: generate | train | evaluate | ablate |
/// gradcheck | serve-sim | plot. Returns the process exit code.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

/// 64-bit FNV-1a of a file's bytes, as 16 hex digits.
std::string file_checksum(const std::filesystem::path& path);

inline constexpr const char* kManifestFile = "manifest.json";

}  // namespace shpjf::cli
