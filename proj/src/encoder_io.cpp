#include "driverep/encoder/encoder.hpp"

namespace driverep {

void EncoderConfig::validate() const {
  if (clip_len < 1) throw ConfigError("encoder clip_len must be >= 1");
  if (channels < 1) throw ConfigError("encoder channels must be >= 1");
  if (frame_size < 4) throw ConfigError("encoder frame_size must be >= 4");
  if (stage_channels.empty()) throw ConfigError("encoder needs >= 1 stage");
  if (stage_strides.size() != stage_channels.size()) {
    throw ConfigError("stage_strides / stage_channels length mismatch");
  }
  if (projection_dim < 2) throw ConfigError("projection_dim must be >= 2");
  if (projection_hidden < 1) throw ConfigError("projection_hidden must be >= 1");
  if (momentum < 0.0 || momentum >= 1.0) {
    throw ConfigError("momentum must be in [0, 1)");
  }
}

nlohmann::json EncoderConfig::to_json() const {
  nlohmann::json strides = nlohmann::json::array();
  for (const auto& s : stage_strides) strides.push_back({s[0], s[1], s[2]});
  return {{"clip_len", clip_len},
          {"channels", channels},
          {"frame_size", frame_size},
          {"stage_channels", stage_channels},
          {"stage_strides", strides},
          {"projection_dim", projection_dim},
          {"projection_hidden", projection_hidden},
          {"predictor_hidden", predictor_hidden},
          {"momentum", momentum}};
}

EncoderConfig EncoderConfig::from_json(const nlohmann::json& j) {
  EncoderConfig c;
  c.clip_len = j.at("clip_len").get<int>();
  c.channels = j.at("channels").get<int>();
  c.frame_size = j.at("frame_size").get<int>();
  c.stage_channels = j.at("stage_channels").get<std::vector<int>>();
  c.stage_strides.clear();
  for (const auto& s : j.at("stage_strides")) {
    c.stage_strides.push_back(
        {s.at(0).get<int>(), s.at(1).get<int>(), s.at(2).get<int>()});
  }
  c.projection_dim = j.at("projection_dim").get<int>();
  c.projection_hidden = j.at("projection_hidden").get<int>();
  c.predictor_hidden = j.at("predictor_hidden").get<int>();
  c.momentum = j.at("momentum").get<double>();
  c.validate();
  return c;
}

EncoderConfig EncoderConfig::from_kv(const KeyValueConfig& kv,
                                     const std::string& p) {
  EncoderConfig c;
  c.clip_len = static_cast<int>(kv.get_int(p + "clip_len", c.clip_len));
  c.frame_size = static_cast<int>(kv.get_int(p + "frame_size", c.frame_size));
  c.stage_channels = kv.get_int_list(p + "stage_channels", c.stage_channels);
  std::vector<int> flat;
  for (const auto& s : c.stage_strides) {
    flat.push_back(s[0]);
    flat.push_back(s[1]);
    flat.push_back(s[2]);
  }
  flat = kv.get_int_list(p + "stage_strides", flat);
  if (flat.size() % 3 != 0) {
    throw ConfigError(p + "stage_strides must hold triples (t,h,w)");
  }
  c.stage_strides.clear();
  for (std::size_t i = 0; i + 3 <= flat.size(); i += 3) {
    c.stage_strides.push_back({flat[i], flat[i + 1], flat[i + 2]});
  }
  c.projection_dim =
      static_cast<int>(kv.get_int(p + "projection_dim", c.projection_dim));
  c.projection_hidden = static_cast<int>(
      kv.get_int(p + "projection_hidden", c.projection_hidden));
  c.predictor_hidden = static_cast<int>(
      kv.get_int(p + "predictor_hidden", c.predictor_hidden));
  c.momentum = kv.get_real(p + "momentum", c.momentum);
  c.validate();
  return c;
}

nlohmann::json ShapeContract::to_json() const {
  return {{"feature_map", feature_map}, {"projection_dim", projection_dim}};
}

ShapeContract ShapeContract::from_json(const nlohmann::json& j) {
  ShapeContract c;
  const auto& f = j.at("feature_map");
  for (int i = 0; i < 4; ++i) {
    c.feature_map[static_cast<std::size_t>(i)] =
        f.at(static_cast<std::size_t>(i)).get<int>();
  }
  c.projection_dim = j.at("projection_dim").get<int>();
  return c;
}

std::string ShapeContract::to_string() const {
  return "{fmap=(" + std::to_string(feature_map[0]) + "," +
         std::to_string(feature_map[1]) + "," +
         std::to_string(feature_map[2]) + "," +
         std::to_string(feature_map[3]) +
         "), D=" + std::to_string(projection_dim) + "}";
}

void save_encoder_checkpoint(const std::filesystem::path& path,
                             const EncoderConfig& config,
                             const ShapeContract& contract,
                             const std::string& scheme,
                             const ParamLayout& layout,
                             const std::vector<double>& theta, int dtype) {
  nlohmann::json header = {{"kind", "encoder"},
                           {"config", config.to_json()},
                           {"contract", contract.to_json()},
                           {"scheme", scheme}};
  std::vector<std::pair<std::string, std::vector<double>>> sections;
  for (const auto& block : layout.blocks()) {
    if (block.offset + block.size() >
        static_cast<Eigen::Index>(theta.size())) {
      continue;  // train-only suffix (predictor) is not exported
    }
    std::vector<double> values(
        theta.begin() + block.offset,
        theta.begin() + block.offset + block.size());
    sections.emplace_back(block.name, std::move(values));
  }
  write_checkpoint_file(path, header, dtype, sections);
}

}  // namespace driverep
