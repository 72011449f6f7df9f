#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace qti::cli {

struct MissingArtifact : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::string sha256_hex(const std::string &bytes);
std::string sha256_file(const std::filesystem::path &path);

// manifest.csv of one stage: kind,name,value rows.
class Manifest {
public:
  Manifest(std::string stage, std::uint64_t seed, std::string config_hash);

  void add_input(const std::filesystem::path &root, const std::filesystem::path &file);
  void add_output(const std::filesystem::path &root, const std::filesystem::path &file);
  void write(const std::filesystem::path &dir) const;

  // Output hashes recorded by an earlier stage; empty when absent.
  static std::map<std::string, std::string> recorded_outputs(const std::filesystem::path &dir);

private:
  std::string stage_;
  std::uint64_t seed_;
  std::string config_hash_;
  std::vector<std::pair<std::string, std::string>> inputs_;
  std::vector<std::pair<std::string, std::string>> outputs_;
};

// Throws MissingArtifact naming the file when it does not exist.
void require_file(const std::filesystem::path &path);

} // namespace qti::cli
