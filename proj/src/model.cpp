#include "monet/model.hpp"

#include <fstream>
#include <json.hpp>
#include <sstream>

#include "monet/error.hpp"

namespace monet {

namespace {

constexpr const char* kCheckpointTag = "MONET-CHECKPOINT";
constexpr int kCheckpointVersion = 1;

using nlohmann::json;

void require(bool ok, const std::string& message) {
  if (!ok) throw ConfigError(message);
}

}  // namespace

std::vector<StageConfig> ModelConfig::stage_list() const {
  if (multi_stage()) return stages;
  return {StageConfig{hidden, depth}};
}

void ModelConfig::validate() const {
  require(depth > 0, "depth must be positive");
  require(expansion > 0, "expansion ratio must be positive");
  require(shrinkage > 0, "shrinkage ratio must be positive");
  require(patch_size > 0, "patch size must be positive");
  require(in_channels > 0, "input channel count must be positive");
  require(image_height > 0 && image_width > 0, "image extents must be positive");
  require(second_layer == "mu" || second_layer == "linear", "second_layer must be \"mu\" or \"linear\"");
  require(norm_eps >= 0.0, "norm_eps must be non-negative");
  const std::size_t cell = 2 * patch_size;
  require(image_height % cell == 0 && image_width % cell == 0,
          "image " + std::to_string(image_height) + "x" + std::to_string(image_width) +
              " must be divisible by 2p = " + std::to_string(cell));
  std::size_t total = 0;
  for (const StageConfig& st : stage_list()) {
    require(st.hidden > 0 && st.blocks > 0, "stage widths and block counts must be positive");
    require(st.hidden % 4 == 0, "stage width " + std::to_string(st.hidden) + " not divisible by 4");
    require(st.hidden % shrinkage == 0, "stage width " + std::to_string(st.hidden) +
                                            " not divisible by shrinkage " + std::to_string(shrinkage));
    total += st.blocks;
  }
  if (multi_stage()) {
    require(total == depth, "stage block counts sum to " + std::to_string(total) + " but depth is " +
                                std::to_string(depth));
    std::size_t h = image_height / cell, w = image_width / cell;
    for (std::size_t i = 0; i + 1 < stages.size(); ++i) {
      require(h % 2 == 0 && w % 2 == 0, "token grid too small for stage downsampling");
      h /= 2;
      w /= 2;
    }
  }
  require(channel_mean.empty() || channel_mean.size() == in_channels, "channel_mean length must equal in_channels");
  require(channel_std.empty() || channel_std.size() == in_channels, "channel_std length must equal in_channels");
}

std::string ModelConfig::to_json() const {
  json j;
  j["name"] = name;
  j["depth"] = depth;
  j["hidden"] = hidden;
  json st = json::array();
  for (const auto& s : stages) st.push_back({{"hidden", s.hidden}, {"blocks", s.blocks}});
  j["stages"] = st;
  j["expansion"] = expansion;
  j["shrinkage"] = shrinkage;
  j["patch_size"] = patch_size;
  j["pyramid"] = pyramid;
  j["num_classes"] = num_classes;
  j["image_height"] = image_height;
  j["image_width"] = image_width;
  j["in_channels"] = in_channels;
  j["use_norm"] = use_norm;
  j["second_layer"] = second_layer;
  j["norm_eps"] = norm_eps;
  j["channel_mean"] = channel_mean;
  j["channel_std"] = channel_std;
  return j.dump();
}

ModelConfig ModelConfig::from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw FormatError(std::string("config is not valid JSON: ") + e.what());
  }
  if (!j.is_object()) throw FormatError("config must be a JSON object");
  ModelConfig c;
  try {
    if (j.contains("preset")) c = preset(j.at("preset").get<std::string>());
    auto get = [&](const char* key, auto& field) {
      if (j.contains(key)) j.at(key).get_to(field);
    };
    get("name", c.name);
    get("depth", c.depth);
    get("hidden", c.hidden);
    if (j.contains("stages")) {
      c.stages.clear();
      for (const auto& s : j.at("stages")) c.stages.push_back({s.at("hidden").get<std::size_t>(), s.at("blocks").get<std::size_t>()});
    }
    get("expansion", c.expansion);
    get("shrinkage", c.shrinkage);
    get("patch_size", c.patch_size);
    get("pyramid", c.pyramid);
    get("num_classes", c.num_classes);
    get("image_height", c.image_height);
    get("image_width", c.image_width);
    if (j.contains("image_size")) c.image_height = c.image_width = j.at("image_size").get<std::size_t>();
    get("in_channels", c.in_channels);
    get("use_norm", c.use_norm);
    get("second_layer", c.second_layer);
    get("norm_eps", c.norm_eps);
    get("channel_mean", c.channel_mean);
    get("channel_std", c.channel_std);
  } catch (const json::exception& e) {
    throw FormatError(std::string("config field has the wrong type: ") + e.what());
  }
  return c;
}

ModelConfig ModelConfig::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open config " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return from_json(ss.str());
}

ModelConfig ModelConfig::tiny() {
  ModelConfig c;
  c.name = "tiny";
  c.depth = 32;
  c.hidden = 192;
  c.expansion = 3;
  c.shrinkage = 4;
  c.patch_size = 7;
  c.pyramid = true;
  c.num_classes = 1000;
  c.image_height = c.image_width = 224;
  return c;
}

ModelConfig ModelConfig::small() {
  ModelConfig c = tiny();
  c.name = "small";
  c.depth = 45;
  c.hidden = 320;
  return c;
}

ModelConfig ModelConfig::multi_stage_tiny() {
  ModelConfig c = tiny();
  c.name = "multi-stage-tiny";
  c.stages = {{64, 4}, {128, 8}, {192, 12}, {192, 10}};
  c.depth = 34;
  c.hidden = 64;
  c.shrinkage = 8;
  return c;
}

ModelConfig ModelConfig::multi_stage_small() {
  ModelConfig c = tiny();
  c.name = "multi-stage-small";
  c.stages = {{128, 4}, {192, 6}, {256, 12}, {384, 14}};
  c.depth = 36;
  c.hidden = 128;
  c.shrinkage = 8;
  return c;
}

ModelConfig ModelConfig::cifar_small() {
  ModelConfig c;
  c.name = "cifar-small";
  c.depth = 8;
  c.hidden = 64;
  c.expansion = 3;
  c.shrinkage = 4;
  c.patch_size = 2;
  c.pyramid = true;
  c.num_classes = 10;
  c.image_height = c.image_width = 32;
  c.channel_mean = {0.4914, 0.4822, 0.4465};
  c.channel_std = {0.2470, 0.2435, 0.2616};
  return c;
}

ModelConfig ModelConfig::preset(const std::string& name) {
  if (name == "tiny") return tiny();
  if (name == "small") return small();
  if (name == "multi-stage-tiny") return multi_stage_tiny();
  if (name == "multi-stage-small") return multi_stage_small();
  if (name == "cifar-small") return cifar_small();
  throw ConfigError("unknown preset \"" + name + "\"");
}

std::vector<NamedParam> MonetModel::parameters() {
  std::vector<NamedParam> out;
  for_each_param(*this, "", [&](const std::string& name, Param& p) { out.push_back({name, &p}); });
  return out;
}

std::vector<ConstNamedParam> MonetModel::parameters() const {
  std::vector<ConstNamedParam> out;
  for (const auto& np : const_cast<MonetModel&>(*this).parameters()) out.push_back({np.name, np.param});
  return out;
}

std::size_t MonetModel::parameter_count() const {
  std::size_t n = 0;
  for (const auto& np : parameters()) n += np.param->value.size();
  return n;
}

MonetModel build_zero(const ModelConfig& config) {
  config.validate();
  MonetModel m;
  m.config = config;
  const auto stages = config.stage_list();
  m.embed = make_pyramid_embed(config.in_channels, stages.front().hidden, config.patch_size, config.pyramid);
  for (std::size_t s = 0; s < stages.size(); ++s) {
    Stage stage;
    for (std::size_t b = 0; b < stages[s].blocks; ++b) {
      PolyBlockParams block = make_poly_block(stages[s].hidden, config.expansion, config.shrinkage, config.use_norm,
                                              config.second_layer == "linear");
      if (block.norm) block.norm->eps = config.norm_eps;
      stage.blocks.push_back(std::move(block));
    }
    if (s + 1 < stages.size()) stage.transition = make_conv(stages[s].hidden, stages[s + 1].hidden, 2, 2);
    m.stages.push_back(std::move(stage));
  }
  if (config.num_classes > 0) m.head = make_linear(stages.back().hidden, config.num_classes);
  assign_ids(m);
  return m;
}

MonetModel build(const ModelConfig& config, std::uint64_t seed) {
  MonetModel m = build_zero(config);
  std::mt19937_64 rng(seed);
  init_xavier_normal(m.embed, rng);
  for (auto& stage : m.stages) {
    for (auto& block : stage.blocks) init_xavier_normal(block, rng);
    if (stage.transition) init_xavier_normal(*stage.transition, rng);
  }
  if (m.head) init_xavier_normal(*m.head, rng);
  return m;
}

DenseTensor forward(const MonetModel& model, const DenseTensor& images) {
  EvalBackend be;
  return forward(be, model, images);
}

void save(const MonetModel& model, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("cannot open " + path + " for writing");
  const auto params = model.parameters();
  out << kCheckpointTag << ' ' << kCheckpointVersion << '\n';
  out << model.config.to_json() << '\n';
  out << params.size() << '\n';
  for (const auto& np : params) {
    out << np.name << '\n';
    write_tensor(out, np.param->value);
  }
  if (!out) throw FormatError("failed writing checkpoint " + path);
}

namespace {

struct CheckpointContents {
  ModelConfig config;
  std::vector<std::pair<std::string, DenseTensor>> tensors;
};

CheckpointContents read_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open checkpoint " + path);
  std::string line;
  if (!std::getline(in, line)) throw FormatError("empty checkpoint");
  std::istringstream head(line);
  std::string tag;
  int version = 0;
  head >> tag >> version;
  if (tag != kCheckpointTag) throw FormatError("bad checkpoint magic");
  if (version != kCheckpointVersion) throw FormatError("unsupported checkpoint version " + std::to_string(version));
  CheckpointContents c;
  if (!std::getline(in, line)) throw FormatError("truncated checkpoint header");
  c.config = ModelConfig::from_json(line);
  if (!std::getline(in, line)) throw FormatError("truncated checkpoint header");
  std::size_t count = 0;
  try {
    count = std::stoull(line);
  } catch (const std::exception&) {
    throw FormatError("bad tensor count in checkpoint");
  }
  for (std::size_t i = 0; i < count; ++i) {
    std::string name;
    if (!std::getline(in, name)) throw FormatError("truncated checkpoint: missing tensor " + std::to_string(i));
    c.tensors.emplace_back(std::move(name), read_tensor(in));
  }
  return c;
}

void assign_tensors(MonetModel& model, std::vector<std::pair<std::string, DenseTensor>>& tensors) {
  auto params = model.parameters();
  const std::size_t n = std::min(params.size(), tensors.size());
  for (std::size_t i = 0; i < n; ++i) {
    if (params[i].name != tensors[i].first || params[i].param->value.shape() != tensors[i].second.shape()) {
      throw ConfigError("checkpoint tensor " + std::to_string(i) + " (\"" + tensors[i].first + "\" " +
                        shape_string(tensors[i].second.shape()) + ") does not match model tensor \"" +
                        params[i].name + "\" " + shape_string(params[i].param->value.shape()));
    }
  }
  if (params.size() != tensors.size()) {
    const std::string first = params.size() > tensors.size() ? params[n].name : tensors[n].first;
    throw ConfigError("checkpoint holds " + std::to_string(tensors.size()) + " tensors, model has " +
                      std::to_string(params.size()) + "; first unmatched tensor \"" + first + "\"");
  }
  for (std::size_t i = 0; i < n; ++i) params[i].param->value = std::move(tensors[i].second);
}

}  // namespace

MonetModel load(const std::string& path) {
  CheckpointContents c = read_checkpoint(path);
  MonetModel model = build_zero(c.config);
  assign_tensors(model, c.tensors);
  return model;
}

void load_into(MonetModel& model, const std::string& path) {
  CheckpointContents c = read_checkpoint(path);
  MonetModel staged = model;
  assign_tensors(staged, c.tensors);
  model = std::move(staged);
}

}  // namespace monet
