#include "manifest.hpp"

#include <array>
#include <fstream>
#include <iomanip>
#include <sstream>

#include <openssl/evp.h>

#include "qti/types.hpp"

namespace qti::cli {

namespace fs = std::filesystem;

namespace {

class Sha256 {
public:
  Sha256()
    : ctx_(EVP_MD_CTX_new()) {
    if (!ctx_ || EVP_DigestInit_ex(ctx_, EVP_sha256(), nullptr) != 1) { throw std::runtime_error("sha256: init failed"); }
  }
  ~Sha256() { EVP_MD_CTX_free(ctx_); }
  Sha256(const Sha256 &) = delete;
  Sha256 &operator=(const Sha256 &) = delete;

  void update(const char *data, std::size_t n) { EVP_DigestUpdate(ctx_, data, n); }

  std::string hex() {
    std::array<unsigned char, EVP_MAX_MD_SIZE> md{};
    unsigned int len = 0;
    EVP_DigestFinal_ex(ctx_, md.data(), &len);
    std::ostringstream out;
    for (unsigned int i = 0; i < len; ++i) { out << std::hex << std::setw(2) << std::setfill('0') << int{md[i]}; }
    return out.str();
  }

private:
  EVP_MD_CTX *ctx_;
};

std::string relative_name(const fs::path &root, const fs::path &file) {
  return file.lexically_relative(root).generic_string();
}

} // namespace

std::string sha256_hex(const std::string &bytes) {
  Sha256 h;
  h.update(bytes.data(), bytes.size());
  return h.hex();
}

std::string sha256_file(const fs::path &path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) { throw MissingArtifact("missing artifact: " + path.string()); }
  Sha256 h;
  std::array<char, 1 << 16> buf{};
  while (in) {
    in.read(buf.data(), buf.size());
    h.update(buf.data(), static_cast<std::size_t>(in.gcount()));
  }
  return h.hex();
}

void require_file(const fs::path &path) {
  if (!fs::is_regular_file(path)) { throw MissingArtifact("missing artifact: " + path.string()); }
}

Manifest::Manifest(std::string stage, std::uint64_t seed, std::string config_hash)
  : stage_(std::move(stage))
  , seed_(seed)
  , config_hash_(std::move(config_hash)) {}

void Manifest::add_input(const fs::path &root, const fs::path &file) {
  inputs_.emplace_back(relative_name(root, file), sha256_file(file));
}

void Manifest::add_output(const fs::path &root, const fs::path &file) {
  outputs_.emplace_back(relative_name(root, file), sha256_file(file));
}

void Manifest::write(const fs::path &dir) const {
  std::ofstream out(dir / "manifest.csv", std::ios::binary | std::ios::trunc);
  if (!out) { throw FormatError("cannot write " + (dir / "manifest.csv").string()); }
  out << "kind,name,value\n";
  out << "stage," << stage_ << ",\n";
  out << "version,qti," << QTI_VERSION << '\n';
  out << "seed,global," << seed_ << '\n';
  out << "config,sha256," << config_hash_ << '\n';
  for (const auto &[name, hash] : inputs_) { out << "input," << name << ',' << hash << '\n'; }
  for (const auto &[name, hash] : outputs_) { out << "output," << name << ',' << hash << '\n'; }
}

std::map<std::string, std::string> Manifest::recorded_outputs(const fs::path &dir) {
  std::map<std::string, std::string> out;
  std::ifstream in(dir / "manifest.csv");
  std::string line;
  while (std::getline(in, line)) {
    std::istringstream row(line);
    std::string kind, name, value;
    std::getline(row, kind, ',');
    std::getline(row, name, ',');
    std::getline(row, value, ',');
    if (kind == "output") { out[name] = value; }
  }
  return out;
}

} // namespace qti::cli
