#include "ido/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>

#include "ido/config.hpp"
#include "ido/error.hpp"

namespace ido::checkpoint {

namespace {

constexpr char kMagic[8] = {'I', 'D', 'O', 'C', 'K', 'P', 'T', '1'};
static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

struct Parsed {
  Header header;
  config::Json arrays;
  std::vector<double> values;
};

Parsed parse(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DependencyError("missing checkpoint: " + path.string());
  char magic[8];
  std::uint32_t len = 0;
  if (!is.read(magic, 8) || std::memcmp(magic, kMagic, 8) != 0) throw FormatError(path.string() + ": bad magic");
  if (!is.read(reinterpret_cast<char*>(&len), 4)) throw FormatError(path.string() + ": truncated");
  std::string text(len, '\0');
  if (!is.read(text.data(), len)) throw FormatError(path.string() + ": truncated header");
  Parsed p;
  try {
    const auto j = config::Json::parse(text);
    p.header.stage = parse_stage(j.at("stage").get<std::string>());
    p.header.model = config::model_from_json(j.at("model"));
    p.arrays = j.at("arrays");
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
  std::size_t total = 0;
  for (const auto& a : p.arrays) total += shape_numel(a.at("shape").get<std::vector<int>>());
  p.values.resize(total);
  if (!is.read(reinterpret_cast<char*>(p.values.data()), static_cast<std::streamsize>(total * sizeof(double))))
    throw FormatError(path.string() + ": truncated data");
  if (is.peek() != std::char_traits<char>::eof()) throw FormatError(path.string() + ": trailing bytes");
  return p;
}

// The part of the model config a stage's parameters depend on.
config::Json stage_config(const ModelConfig& c, Stage stage) {
  const auto j = config::to_json(c);
  switch (stage) {
    case Stage::Flow: return {j["image_channels"], j["voxel_bins"], j["flow"]};
    case Stage::Gate: return {j["gate"], j["residual"]["layout"]};
    case Stage::Residual: return {j["image_channels"], j["voxel_bins"], j["residual"]};
    case Stage::Fusion: return {j["image_channels"], j["voxel_bins"], j["fusion"]};
  }
  return {};
}

}  // namespace

void save(const std::filesystem::path& path, Stage stage, const ModelConfig& config,
          const std::vector<const nn::ParamSet*>& params) {
  config::Json arrays = config::Json::array();
  for (const auto* set : params)
    for (const auto& [name, var] : set->entries()) arrays.push_back({{"name", name}, {"shape", var->value.shape()}});
  const config::Json header{{"stage", std::string(stage_name(stage))}, {"model", config::to_json(config)}, {"arrays", arrays}};
  const std::string text = header.dump();
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw FormatError("cannot write checkpoint: " + path.string());
  const auto len = static_cast<std::uint32_t>(text.size());
  os.write(kMagic, 8);
  os.write(reinterpret_cast<const char*>(&len), 4);
  os.write(text.data(), static_cast<std::streamsize>(text.size()));
  for (const auto* set : params)
    for (const auto& [name, var] : set->entries())
      os.write(reinterpret_cast<const char*>(var->value.data()),
               static_cast<std::streamsize>(var->value.size() * sizeof(double)));
  if (!os) throw FormatError("write failed: " + path.string());
}

void save(const std::filesystem::path& path, const Model& model, Stage stage) {
  save(path, stage, model.config(), model.stage_params(stage));
}

Header read_header(const std::filesystem::path& path) { return parse(path).header; }

void load(const std::filesystem::path& path, Model& model) {
  const Parsed p = parse(path);
  if (stage_config(p.header.model, p.header.stage) != stage_config(model.config(), p.header.stage))
    throw ConfigError(path.string() + ": checkpoint was written for a different model config");
  std::size_t offset = 0, index = 0;
  const auto sets = model.stage_params(p.header.stage);
  for (auto* set : sets)
    for (const auto& [name, var] : set->entries()) {
      if (index >= p.arrays.size()) throw FormatError(path.string() + ": missing array " + name);
      const auto& a = p.arrays[index++];
      if (a.at("name").get<std::string>() != name || a.at("shape").get<std::vector<int>>() != var->value.shape())
        throw FormatError(path.string() + ": array mismatch at " + name);
      std::copy_n(p.values.begin() + static_cast<std::ptrdiff_t>(offset), var->value.size(), var->value.data());
      offset += var->value.size();
    }
  if (index != p.arrays.size()) throw FormatError(path.string() + ": unexpected extra arrays");
}

}  // namespace ido::checkpoint
