#include "drsl/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>

#include <fmt/format.h>

namespace drsl {
namespace {

std::uint64_t to_le(std::uint64_t v) {
  if constexpr (std::endian::native == std::endian::big) return __builtin_bswap64(v);
  return v;
}

std::string param_file(const std::string& name) { return name + ".f64"; }

}  // namespace

void save_checkpoint(const SegNet& net, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  nlohmann::json params = nlohmann::json::array();
  for (const auto& p : net.params()) {
    std::ofstream out(dir / param_file(p.name), std::ios::binary);
    if (!out) throw IoError("cannot write parameter file for " + p.name);
    for (double v : p.value) {
      std::uint64_t bits = 0;
      std::memcpy(&bits, &v, sizeof(bits));
      bits = to_le(bits);
      out.write(reinterpret_cast<const char*>(&bits), sizeof(bits));
    }
    params.push_back({{"name", p.name}, {"shape", p.shape}, {"dtype", "float64-le"}, {"file", param_file(p.name)}});
  }
  nlohmann::json manifest = {{"schema_version", kCheckpointSchemaVersion}, {"model", net.config()}, {"params", params}};
  std::ofstream out(dir / "manifest.json");
  if (!out) throw IoError("cannot write checkpoint manifest in " + dir.string());
  out << manifest.dump(2) << "\n";
}

SegNet load_checkpoint(const std::filesystem::path& dir) {
  std::ifstream in(dir / "manifest.json");
  if (!in) throw IoError("no checkpoint manifest in " + dir.string());
  nlohmann::json manifest;
  try {
    in >> manifest;
  } catch (const nlohmann::json::exception& e) {
    throw IoError(std::string("malformed checkpoint manifest: ") + e.what());
  }
  if (manifest.value("schema_version", 0) != kCheckpointSchemaVersion)
    throw IoError("unsupported checkpoint schema version");
  SegNet net(manifest.at("model").get<ModelConfig>());
  const auto& entries = manifest.at("params");
  if (entries.size() != net.params().size()) throw IoError("checkpoint parameter count mismatch");
  for (const auto& e : entries) {
    auto& p = net.params().at(e.at("name").get<std::string>());
    if (e.at("shape").get<std::vector<int>>() != p.shape) throw IoError("checkpoint shape mismatch for " + p.name);
    if (e.at("dtype").get<std::string>() != "float64-le") throw IoError("unsupported dtype for " + p.name);
    std::ifstream f(dir / e.at("file").get<std::string>(), std::ios::binary);
    if (!f) throw IoError("missing parameter file for " + p.name);
    for (double& v : p.value) {
      std::uint64_t bits = 0;
      f.read(reinterpret_cast<char*>(&bits), sizeof(bits));
      if (!f) throw IoError("truncated parameter file for " + p.name);
      bits = to_le(bits);
      std::memcpy(&v, &bits, sizeof(bits));
    }
    if (f.peek() != std::char_traits<char>::eof()) throw IoError("oversized parameter file for " + p.name);
  }
  return net;
}

void write_mode_centers_csv(const SegNet& net, const std::filesystem::path& path) {
  const Eigen::MatrixXd c = net.mode_centers();
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << "class,mode";
  for (Eigen::Index d = 0; d < c.cols(); ++d) out << ",v" << d;
  out << "\n";
  const int modes = net.config().modes;
  for (Eigen::Index r = 0; r < c.rows(); ++r) {
    out << r / modes << "," << r % modes;
    for (Eigen::Index d = 0; d < c.cols(); ++d) out << fmt::format(",{:.17g}", c(r, d));
    out << "\n";
  }
}

}  // namespace drsl
