#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

namespace ceqa::cli {

std::string sha256_file(const std::filesystem::path& path);

struct RunManifest {
  std::string subcommand;
  nlohmann::ordered_json config = nlohmann::ordered_json::object();
  std::vector<std::uint64_t> seeds;
  std::vector<std::filesystem::path> inputs;
  std::string version;

  nlohmann::ordered_json to_json() const;
  // Writes manifest.<subcommand>.json into `dir`, creating it if needed.
  std::filesystem::path write(const std::filesystem::path& dir) const;
};

}  // namespace ceqa::cli
