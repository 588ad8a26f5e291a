#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "plm/model.hpp"

namespace plm {

namespace {
constexpr char kMagic[4] = {'P', 'L', 'M', '1'};
constexpr std::uint32_t kVersion = 1;
}  // namespace

// Layout: magic "PLM1", u32 version, u64 header length, JSON header (model
// config plus an ordered shape table), then row-major float64 blocks in
// declaration order.
void save_checkpoint(const std::filesystem::path& path, const ModelParams& params) {
  nlohmann::json header;
  header["config"] = {{"grid", params.cfg.grid},
                      {"out_size", params.cfg.out_size},
                      {"d_backbone", params.cfg.d_backbone},
                      {"d_dense", params.cfg.d_dense},
                      {"d_global", params.cfg.d_global}};
  header["shapes"] = nlohmann::json::array();
  for (std::size_t i = 0; i < kParamCount; ++i) {
    header["shapes"].push_back({{"name", kParamNames[i]},
                                {"rows", params[i].rows()},
                                {"cols", params[i].cols()}});
  }
  const std::string hs = header.dump();

  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot write checkpoint " + path.string());
  f.write(kMagic, 4);
  f.write(reinterpret_cast<const char*>(&kVersion), sizeof(kVersion));
  const std::uint64_t hlen = hs.size();
  f.write(reinterpret_cast<const char*>(&hlen), sizeof(hlen));
  f.write(hs.data(), static_cast<std::streamsize>(hs.size()));
  for (std::size_t i = 0; i < kParamCount; ++i) {
    const auto& m = params[i];
    for (Eigen::Index r = 0; r < m.rows(); ++r)
      for (Eigen::Index c = 0; c < m.cols(); ++c) {
        const double v = m(r, c);
        f.write(reinterpret_cast<const char*>(&v), sizeof(v));
      }
  }
  if (!f) throw std::runtime_error("checkpoint write failed " + path.string());
}

ModelParams load_checkpoint(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot read checkpoint " + path.string());

  char magic[4];
  f.read(magic, 4);
  if (!f || std::memcmp(magic, kMagic, 4) != 0)
    throw std::runtime_error("bad checkpoint magic in " + path.string());
  std::uint32_t version = 0;
  f.read(reinterpret_cast<char*>(&version), sizeof(version));
  if (version != kVersion) throw std::runtime_error("unsupported checkpoint version");

  std::uint64_t hlen = 0;
  f.read(reinterpret_cast<char*>(&hlen), sizeof(hlen));
  std::string hs(hlen, '\0');
  f.read(hs.data(), static_cast<std::streamsize>(hlen));
  const nlohmann::json header = nlohmann::json::parse(hs);

  ModelParams params;
  params.cfg.grid = header["config"]["grid"];
  params.cfg.out_size = header["config"]["out_size"];
  params.cfg.d_backbone = header["config"]["d_backbone"];
  params.cfg.d_dense = header["config"]["d_dense"];
  params.cfg.d_global = header["config"]["d_global"];

  const auto& shapes = header["shapes"];
  if (shapes.size() != kParamCount) throw std::runtime_error("checkpoint shape table mismatch");
  params.tensors.reserve(kParamCount);
  for (std::size_t i = 0; i < kParamCount; ++i) {
    if (shapes[i]["name"] != kParamNames[i])
      throw std::runtime_error("checkpoint parameter order mismatch");
    const Eigen::Index rows = shapes[i]["rows"];
    const Eigen::Index cols = shapes[i]["cols"];
    Eigen::MatrixXd m(rows, cols);
    for (Eigen::Index r = 0; r < rows; ++r)
      for (Eigen::Index c = 0; c < cols; ++c) {
        double v = 0.0;
        f.read(reinterpret_cast<char*>(&v), sizeof(v));
        m(r, c) = v;
      }
    params.tensors.push_back(std::move(m));
  }
  if (!f) throw std::runtime_error("truncated checkpoint " + path.string());
  return params;
}

}  // namespace plm
