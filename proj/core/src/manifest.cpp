#include "reverso/manifest.hpp"

#include <cstdio>
#include <ctime>
#include <fstream>
#include <stdexcept>

#include <nlohmann/json.hpp>

namespace reverso {

using json = nlohmann::ordered_json;

std::uint64_t fnv1a64(const void* data, std::size_t size) {
  const auto* bytes = static_cast<const unsigned char*>(data);
  std::uint64_t h = 0xCBF29CE484222325ULL;
  for (std::size_t i = 0; i < size; ++i) {
    h ^= bytes[i];
    h *= 0x100000001B3ULL;
  }
  return h;
}

std::uint64_t fnv1a64_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("fnv1a64_file: cannot open " + path.string());
  std::uint64_t h = 0xCBF29CE484222325ULL;
  char buf[1 << 16];
  while (in.read(buf, sizeof(buf)) || in.gcount() > 0) {
    const std::streamsize n = in.gcount();
    for (std::streamsize i = 0; i < n; ++i) {
      h ^= static_cast<unsigned char>(buf[i]);
      h *= 0x100000001B3ULL;
    }
  }
  return h;
}

std::string utc_timestamp() {
  const std::time_t now = std::time(nullptr);
  std::tm tm_utc{};
  gmtime_r(&now, &tm_utc);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm_utc);
  return buf;
}

namespace {

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx",
                static_cast<unsigned long long>(v));
  return buf;
}

}  // namespace

void RunManifest::add_input(const std::filesystem::path& path) {
  input_hashes[path.string()] = hex64(fnv1a64_file(path));
}

void RunManifest::add_output(const std::filesystem::path& path) {
  output_hashes[path.string()] = hex64(fnv1a64_file(path));
}

void RunManifest::write(const std::filesystem::path& path) const {
  json j;
  j["tool"] = "reverso";
  j["version"] = tool_version;
  j["command_line"] = command_line;
  j["timestamp_utc"] =
      timestamp_utc.empty() ? utc_timestamp() : timestamp_utc;
  j["seeds"] = seeds;
  j["config"] = config;
  j["input_hashes"] = input_hashes;
  j["output_hashes"] = output_hashes;
  std::ofstream out(path, std::ios::binary);
  if (!out)
    throw std::runtime_error("RunManifest::write: cannot open " +
                             path.string());
  out << j.dump(2) << "\n";
}

}  // namespace reverso
