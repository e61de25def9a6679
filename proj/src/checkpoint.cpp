#include "otmf/checkpoint.hpp"

#include <fstream>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

namespace otmf::nn {

using nlohmann::json;

namespace {

json params_layout(const MlpParams& p) {
  json layers = json::array();
  for (std::size_t l = 0; l < p.weights.size(); ++l) {
    layers.push_back({{"rows", p.weights[l].rows()}, {"cols", p.weights[l].cols()}});
  }
  return {{"data_dim", p.data_dim},
          {"activation", to_string(p.activation)},
          {"time_embedding",
           {{"dim", p.time_embedding.dim},
            {"frequencies", p.time_embedding.frequencies}}},
          {"layers", layers}};
}

MlpParams params_from_layout(const json& j) {
  MlpParams p;
  p.data_dim = j.at("data_dim").get<int>();
  p.activation = parse_activation(j.at("activation").get<std::string>());
  p.time_embedding.dim = j.at("time_embedding").at("dim").get<int>();
  p.time_embedding.frequencies =
      j.at("time_embedding").at("frequencies").get<std::vector<double>>();
  for (const auto& layer : j.at("layers")) {
    const auto rows = layer.at("rows").get<Eigen::Index>();
    const auto cols = layer.at("cols").get<Eigen::Index>();
    if (rows <= 0 || cols <= 0) throw std::runtime_error("bad layer shape");
    p.weights.emplace_back(Matrix::Zero(rows, cols));
    p.biases.emplace_back(Vector::Zero(rows));
  }
  return p;
}

MlpParams filled_from(const MlpParams& layout, const json& flat) {
  MlpParams p = layout;
  const auto values = flat.get<std::vector<double>>();
  unflatten(values, p);
  return p;
}

}  // namespace

std::string to_json(const Checkpoint& c) {
  json j;
  j["format"] = "otmf-checkpoint";
  j["version"] = kCheckpointVersion;
  j["step"] = c.step;
  j["mode"] = c.mode == FlowMode::cfm ? "cfm" : "meanflow";
  j["layout"] = params_layout(c.params);
  j["params"] = flatten(c.params);
  j["ema"] = flatten(c.ema);
  j["adam"] = {{"step", c.adam.step}, {"m", flatten(c.adam.m)}, {"v", flatten(c.adam.v)}};
  j["config"] = c.config_text;
  return j.dump(1);
}

Checkpoint checkpoint_from_json(const std::string& text) {
  try {
    const json j = json::parse(text);
    if (j.at("format").get<std::string>() != "otmf-checkpoint") {
      throw std::runtime_error("not an otmf checkpoint");
    }
    const int version = j.at("version").get<int>();
    if (version != kCheckpointVersion) {
      throw std::runtime_error("unsupported checkpoint version " + std::to_string(version));
    }
    Checkpoint c;
    const MlpParams layout = params_from_layout(j.at("layout"));
    c.params = filled_from(layout, j.at("params"));
    c.ema = filled_from(layout, j.at("ema"));
    c.adam.m = filled_from(layout, j.at("adam").at("m"));
    c.adam.v = filled_from(layout, j.at("adam").at("v"));
    c.adam.step = j.at("adam").at("step").get<long>();
    c.step = j.at("step").get<long>();
    const auto mode = j.at("mode").get<std::string>();
    if (mode != "meanflow" && mode != "cfm") throw std::runtime_error("bad mode " + mode);
    c.mode = mode == "cfm" ? FlowMode::cfm : FlowMode::meanflow;
    c.config_text = j.value("config", "");
    c.params.validate();
    c.ema.validate();
    return c;
  } catch (const json::exception& e) {
    throw std::runtime_error(std::string("corrupt checkpoint: ") + e.what());
  } catch (const std::invalid_argument& e) {
    throw std::runtime_error(std::string("corrupt checkpoint: ") + e.what());
  }
}

void save_checkpoint(const Checkpoint& c, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write checkpoint " + path.string());
  out << to_json(c);
  if (!out) throw std::runtime_error("failed writing checkpoint " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read checkpoint " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  try {
    return checkpoint_from_json(ss.str());
  } catch (const std::runtime_error& e) {
    throw std::runtime_error(path.string() + ": " + e.what());
  }
}

}  // namespace otmf::nn
