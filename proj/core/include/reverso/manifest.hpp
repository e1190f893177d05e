#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace reverso {

inline constexpr const char* kToolVersion = "0.1.0";

/// Reproducibility record written next to every command's outputs. The
/// file hashes are FNV-1a 64 fingerprints (integrity markers, not
/// cryptographic).
struct RunManifest {
  std::string command_line;
  std::string tool_version = kToolVersion;
  std::vector<std::uint64_t> seeds;
  std::map<std::string, std::string> config;       // resolved settings
  std::map<std::string, std::string> input_hashes; // path -> fnv1a64 hex
  std::map<std::string, std::string> output_hashes;
  std::string timestamp_utc;  // informational; excluded from comparisons

  void add_input(const std::filesystem::path& path);
  void add_output(const std::filesystem::path& path);
  void write(const std::filesystem::path& path) const;
};

std::uint64_t fnv1a64(const void* data, std::size_t size);
std::uint64_t fnv1a64_file(const std::filesystem::path& path);
std::string utc_timestamp();

}  // namespace reverso
