#include "aru/serialize.hpp"

#include <json.hpp>

#include <bit>
#include <cstring>
#include <fstream>
#include <map>
#include <stdexcept>

static_assert(std::endian::native == std::endian::little,
              "checkpoint format assumes a little-endian host");

namespace aru {

namespace {

constexpr char kMagic[8] = {'A', 'R', 'U', 'F', 'C', 'K', 'P', 'T'};
constexpr std::uint32_t kVersion = 1;

void put_bytes(std::ofstream& out, const void* data, std::size_t n) {
  out.write(static_cast<const char*>(data), static_cast<std::streamsize>(n));
}

template <typename T>
void put(std::ofstream& out, T v) {
  put_bytes(out, &v, sizeof(T));
}

void put_string(std::ofstream& out, const std::string& s) {
  put<std::uint32_t>(out, static_cast<std::uint32_t>(s.size()));
  put_bytes(out, s.data(), s.size());
}

void get_bytes(std::ifstream& in, void* data, std::size_t n) {
  in.read(static_cast<char*>(data), static_cast<std::streamsize>(n));
  if (!in) throw std::runtime_error("checkpoint: truncated file");
}

template <typename T>
T get(std::ifstream& in) {
  T v;
  get_bytes(in, &v, sizeof(T));
  return v;
}

std::string get_string(std::ifstream& in) {
  const auto n = get<std::uint32_t>(in);
  std::string s(n, '\0');
  get_bytes(in, s.data(), n);
  return s;
}

}  // namespace

void save_checkpoint(const Checkpoint& ckpt, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path);
  const ModelConfig& cfg = ckpt.model.config;
  put_bytes(out, kMagic, sizeof(kMagic));
  put(out, kVersion);
  put<std::uint64_t>(out, ckpt.train_steps);

  put<std::int32_t>(out, cfg.rnn_units);
  for (int h : cfg.hidden_sizes) put<std::int32_t>(out, h);
  for (int f : cfg.ff2_sizes) put<std::int32_t>(out, f);
  put<std::int32_t>(out, cfg.encoder_len);
  put<std::int32_t>(out, cfg.horizon);
  put<std::uint8_t>(out, static_cast<std::uint8_t>(cfg.head));
  put(out, cfg.direct_var_floor);
  put<std::uint8_t>(out, cfg.differentiate_local_fit ? 1 : 0);

  put<std::uint32_t>(out, static_cast<std::uint32_t>(cfg.features.cat_cardinality.size()));
  for (std::size_t i = 0; i < cfg.features.cat_cardinality.size(); ++i) {
    put<std::uint32_t>(out, static_cast<std::uint32_t>(cfg.features.cat_cardinality[i]));
    put<std::uint32_t>(out, static_cast<std::uint32_t>(cfg.features.cat_embed_dim[i]));
  }
  put<std::uint32_t>(out, static_cast<std::uint32_t>(cfg.features.continuous));

  put<std::int32_t>(out, cfg.aru.feature_dim);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(cfg.aru.aging.size()));
  for (double a : cfg.aru.aging) put(out, a);
  put(out, cfg.aru.ridge);

  put<std::uint32_t>(out, static_cast<std::uint32_t>(ckpt.cont_names.size()));
  for (const auto& n : ckpt.cont_names) put_string(out, n);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(ckpt.cat_names.size()));
  for (const auto& n : ckpt.cat_names) put_string(out, n);
  put_string(out, ckpt.time_features);
  put<std::uint8_t>(out, ckpt.scale_scope == ScaleScope::Window ? 1 : 0);

  const auto blocks = param_blocks(ckpt.model.params);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(blocks.size()));
  for (const auto& b : blocks) {
    put<std::uint64_t>(out, static_cast<std::uint64_t>(b.size));
    put_bytes(out, b.data, static_cast<std::size_t>(b.size) * sizeof(double));
  }
  if (!out) throw std::runtime_error("write failed for " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path);
  char magic[8];
  get_bytes(in, magic, sizeof(magic));
  if (std::memcmp(magic, kMagic, sizeof(kMagic)) != 0)
    throw std::runtime_error(path + ": not a checkpoint file");
  if (get<std::uint32_t>(in) != kVersion)
    throw std::runtime_error(path + ": unsupported checkpoint version");

  Checkpoint ckpt;
  ckpt.train_steps = get<std::uint64_t>(in);
  ModelConfig& cfg = ckpt.model.config;
  cfg.rnn_units = get<std::int32_t>(in);
  for (int i = 0; i < 3; ++i) cfg.hidden_sizes[i] = get<std::int32_t>(in);
  for (int i = 0; i < 2; ++i) cfg.ff2_sizes[i] = get<std::int32_t>(in);
  cfg.encoder_len = get<std::int32_t>(in);
  cfg.horizon = get<std::int32_t>(in);
  cfg.head = static_cast<Head>(get<std::uint8_t>(in));
  cfg.direct_var_floor = get<double>(in);
  cfg.differentiate_local_fit = get<std::uint8_t>(in) != 0;

  const auto n_cat = get<std::uint32_t>(in);
  for (std::uint32_t i = 0; i < n_cat; ++i) {
    cfg.features.cat_cardinality.push_back(static_cast<int>(get<std::uint32_t>(in)));
    cfg.features.cat_embed_dim.push_back(static_cast<int>(get<std::uint32_t>(in)));
  }
  cfg.features.continuous = static_cast<int>(get<std::uint32_t>(in));

  cfg.aru.feature_dim = get<std::int32_t>(in);
  const auto n_aging = get<std::uint32_t>(in);
  for (std::uint32_t i = 0; i < n_aging; ++i) cfg.aru.aging.push_back(get<double>(in));
  cfg.aru.ridge = get<double>(in);

  const auto n_cont_names = get<std::uint32_t>(in);
  for (std::uint32_t i = 0; i < n_cont_names; ++i)
    ckpt.cont_names.push_back(get_string(in));
  const auto n_cat_names = get<std::uint32_t>(in);
  for (std::uint32_t i = 0; i < n_cat_names; ++i)
    ckpt.cat_names.push_back(get_string(in));
  ckpt.time_features = get_string(in);
  ckpt.scale_scope = get<std::uint8_t>(in) != 0 ? ScaleScope::Window : ScaleScope::Series;

  ckpt.model.params = zero_params(cfg);
  auto blocks = param_blocks(ckpt.model.params);
  const auto n_blocks = get<std::uint32_t>(in);
  if (n_blocks != blocks.size())
    throw std::runtime_error(path + ": parameter block count mismatch");
  for (auto& b : blocks) {
    const auto size = get<std::uint64_t>(in);
    if (size != static_cast<std::uint64_t>(b.size))
      throw std::runtime_error(path + ": size mismatch in block " + b.name);
    get_bytes(in, b.data, static_cast<std::size_t>(b.size) * sizeof(double));
  }
  return ckpt;
}

std::uint64_t file_hash(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::uint64_t h = 1469598103934665603ull;
  char buf[4096];
  while (in.read(buf, sizeof(buf)) || in.gcount() > 0) {
    for (std::streamsize i = 0; i < in.gcount(); ++i) {
      h ^= static_cast<unsigned char>(buf[i]);
      h *= 1099511628211ull;
    }
    if (!in) break;
  }
  return h;
}

std::string scalers_to_json(const ScalerState& sc, const Dataset& ds) {
  nlohmann::json j;
  j["scope"] = sc.scope == ScaleScope::Window ? "window" : "series";
  j["continuous"] = nlohmann::json::array();
  for (std::size_t f = 0; f < sc.cont.size(); ++f)
    j["continuous"].push_back({{"name", ds.cont_names[f]},
                               {"min", sc.cont[f].min},
                               {"max", sc.cont[f].max}});
  j["series"] = nlohmann::json::array();
  for (std::size_t i = 0; i < sc.y_scale.size(); ++i)
    j["series"].push_back({{"id", ds.series[i].id}, {"y_scale", sc.y_scale[i]}});
  return j.dump(2);
}

ScalerState scalers_from_json(const std::string& text, const Dataset& ds) {
  const nlohmann::json j = nlohmann::json::parse(text);
  ScalerState sc;
  sc.scope = j.at("scope").get<std::string>() == "window" ? ScaleScope::Window
                                                          : ScaleScope::Series;
  std::map<std::string, ScalerState::Range> by_name;
  for (const auto& c : j.at("continuous"))
    by_name[c.at("name").get<std::string>()] = {c.at("min").get<double>(),
                                                c.at("max").get<double>()};
  for (const auto& name : ds.cont_names) {
    auto it = by_name.find(name);
    if (it == by_name.end())
      throw std::runtime_error("scalers: no range saved for column " + name);
    sc.cont.push_back(it->second);
  }
  std::map<std::string, double> scale_by_id;
  for (const auto& s : j.at("series"))
    scale_by_id[s.at("id").get<std::string>()] = s.at("y_scale").get<double>();
  for (const auto& s : ds.series) {
    auto it = scale_by_id.find(s.id);
    if (it == scale_by_id.end())
      throw std::runtime_error("scalers: no scale saved for series " + s.id);
    sc.y_scale.push_back(it->second);
  }
  return sc;
}

}  // namespace aru
