#include <fstream>
#include <sstream>

#include <json.hpp>

#include "eqco/encoder.hpp"
#include "eqco/errors.hpp"

namespace eqco {
namespace {

constexpr const char* kFormat = "eqco-mlp";
constexpr int kVersion = 1;

}  // namespace

std::string serialize_params(const MlpParams& params) {
  nlohmann::ordered_json doc;
  doc["format"] = kFormat;
  doc["version"] = kVersion;
  doc["dims"] = params.dims();
  auto layers = nlohmann::ordered_json::array();
  for (const auto& layer : params.layers) {
    nlohmann::ordered_json entry;
    entry["rows"] = layer.weight.rows();
    entry["cols"] = layer.weight.cols();
    std::vector<double> weight;
    weight.reserve(static_cast<std::size_t>(layer.weight.size()));
    for (Eigen::Index r = 0; r < layer.weight.rows(); ++r) {
      for (Eigen::Index c = 0; c < layer.weight.cols(); ++c) weight.push_back(layer.weight(r, c));
    }
    entry["weight"] = std::move(weight);
    entry["bias"] = std::vector<double>(layer.bias.data(), layer.bias.data() + layer.bias.size());
    layers.push_back(std::move(entry));
  }
  doc["layers"] = std::move(layers);
  return doc.dump() + "\n";
}

MlpParams deserialize_params(const std::string& text) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("checkpoint: invalid JSON: ") + e.what());
  }
  if (doc.value("format", "") != kFormat) throw ConfigError("checkpoint: unknown format tag");
  if (doc.value("version", 0) != kVersion) throw ConfigError("checkpoint: unsupported version");

  MlpParams params;
  try {
    const auto dims = doc.at("dims").get<std::vector<std::size_t>>();
    const auto& layers = doc.at("layers");
    if (dims.size() != layers.size() + 1) throw ConfigError("checkpoint: dims / layers disagree");
    for (std::size_t l = 0; l < layers.size(); ++l) {
      const auto rows = layers[l].at("rows").get<Eigen::Index>();
      const auto cols = layers[l].at("cols").get<Eigen::Index>();
      if (static_cast<std::size_t>(cols) != dims[l] || static_cast<std::size_t>(rows) != dims[l + 1]) {
        throw ConfigError("checkpoint: layer shape does not chain");
      }
      const auto weight = layers[l].at("weight").get<std::vector<double>>();
      const auto bias = layers[l].at("bias").get<std::vector<double>>();
      if (weight.size() != static_cast<std::size_t>(rows * cols) ||
          bias.size() != static_cast<std::size_t>(rows)) {
        throw ConfigError("checkpoint: array length mismatch");
      }
      DenseLayer layer{RealMat(rows, cols), RealVec(rows)};
      std::size_t at = 0;
      for (Eigen::Index r = 0; r < rows; ++r) {
        for (Eigen::Index c = 0; c < cols; ++c) layer.weight(r, c) = weight[at++];
      }
      for (Eigen::Index r = 0; r < rows; ++r) layer.bias[r] = bias[static_cast<std::size_t>(r)];
      params.layers.push_back(std::move(layer));
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("checkpoint: malformed field: ") + e.what());
  }
  if (!params.all_finite()) throw NumericError("checkpoint: non-finite parameter");
  return params;
}

void save_checkpoint(const MlpParams& params, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("checkpoint: cannot open " + path + " for writing");
  out << serialize_params(params);
}

MlpParams load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("checkpoint: cannot open " + path);
  std::stringstream buffer;
  buffer << in.rdbuf();
  return deserialize_params(buffer.str());
}

}  // namespace eqco
