#include "aru/cli.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <future>
#include <iostream>
#include <map>
#include <sstream>
#include <thread>

#include "aru/training.hpp"

namespace fs = std::filesystem;

namespace aru {

namespace {

int default_embed_dim(int cardinality) {
  const int d = static_cast<int>(std::ceil(std::sqrt(static_cast<double>(cardinality))));
  return std::clamp(d, 1, 16);
}

// "name" or "name:dim"
std::pair<std::string, int> parse_categorical(const std::string& spec) {
  const auto colon = spec.find(':');
  if (colon == std::string::npos) return {spec, 0};
  return {spec.substr(0, colon), std::stoi(spec.substr(colon + 1))};
}

std::vector<std::string> categorical_names(const RunConfig& cfg) {
  std::vector<std::string> names;
  for (const auto& spec : cfg.categoricals) names.push_back(parse_categorical(spec).first);
  return names;
}

Dataset load_pipeline_data(const RunConfig& cfg) {
  Dataset ds = load_csv(cfg.data_path, categorical_names(cfg));
  if (cfg.time_features != "none")
    ds = add_time_features(ds, granularity_from_string(cfg.time_features));
  return ds;
}

TrainStateMode train_state_mode(const std::string& s) {
  if (s == "zero") return TrainStateMode::Zero;
  if (s == "replay") return TrainStateMode::Replay;
  throw std::invalid_argument("unknown train state mode: " + s);
}

ScaleScope scope_from_string(const std::string& s) {
  if (s == "series") return ScaleScope::Series;
  if (s == "window") return ScaleScope::Window;
  throw std::invalid_argument("unknown scale scope: " + s);
}

void ensure_dir(const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw std::runtime_error("cannot create directory " + dir);
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << text;
  if (!out) throw std::runtime_error("write failed for " + path);
}

}  // namespace

FeatureSchema build_schema(const Dataset& ds, const RunConfig& cfg) {
  std::map<std::string, int> overrides;
  for (const auto& spec : cfg.categoricals) {
    const auto [name, dim] = parse_categorical(spec);
    if (dim > 0) overrides[name] = dim;
  }
  std::map<std::string, int> fixed_cards;
  if (cfg.time_features != "none") {
    const auto tf = time_feature_schema(granularity_from_string(cfg.time_features));
    for (std::size_t i = 0; i < tf.names.size(); ++i)
      fixed_cards[tf.names[i]] = tf.cardinalities[i];
  }

  FeatureSchema schema;
  schema.continuous = static_cast<int>(ds.cont_names.size());
  for (std::size_t f = 0; f < ds.cat_names.size(); ++f) {
    int card = 0;
    if (auto it = fixed_cards.find(ds.cat_names[f]); it != fixed_cards.end()) {
      card = it->second;
    } else {
      for (const Series& s : ds.series)
        for (int code : s.cat[f]) card = std::max(card, code + 1);
    }
    schema.cat_cardinality.push_back(card);
    const auto ov = overrides.find(ds.cat_names[f]);
    schema.cat_embed_dim.push_back(ov != overrides.end() ? ov->second
                                                         : default_embed_dim(card));
  }
  return schema;
}

ModelConfig build_model_config(const Dataset& ds, const RunConfig& cfg) {
  ModelConfig mc;
  apply_preset(mc, cfg.preset);
  mc.encoder_len = cfg.encoder_len;
  mc.horizon = cfg.horizon;
  mc.head = head_from_string(cfg.head);
  mc.features = build_schema(ds, cfg);
  mc.differentiate_local_fit = cfg.differentiate_local_fit;
  if (mc.head != Head::Baseline) {
    mc.aru.feature_dim = mc.h_width();
    mc.aru.aging = cfg.alpha;
    mc.aru.ridge = cfg.ridge;
  }
  mc.validate();
  return mc;
}

void write_effective_config(const RunConfig& cfg, const std::string& command,
                            const std::string& path) {
  std::ostringstream out;
  out.precision(17);
  out << "# effective settings for `" << command << "`\n";
  auto kv = [&](const std::string& k, const auto& v) { out << k << '=' << v << '\n'; };
  auto join = [](const auto& xs) {
    std::ostringstream s;
    for (std::size_t i = 0; i < xs.size(); ++i) s << (i ? "," : "") << xs[i];
    return s.str();
  };
  if (command == "synth" || command == "sweep") {
    kv("n-series", cfg.n_series);
    kv("length", cfg.length);
    kv("gamma", cfg.gamma);
    kv("noise-sigma", cfg.noise_sigma);
    kv("with-ids", cfg.with_ids ? "true" : "false");
  }
  if (command != "synth") {
    kv("preset", cfg.preset);
    kv("head", cfg.head);
    kv("encoder-len", cfg.encoder_len);
    kv("horizon", cfg.horizon);
    kv("alpha", join(cfg.alpha));
    kv("ridge", cfg.ridge);
  }
  if (command == "train" || command == "sweep") {
    kv("stride", cfg.stride);
    kv("epochs", cfg.epochs);
    kv("batch-size", cfg.batch_size);
    kv("learning-rate", cfg.learning_rate);
    kv("clip-norm", cfg.clip_norm);
    kv("scale-scope", cfg.scale_scope);
    kv("train-state", cfg.train_state);
    kv("time-features", cfg.time_features);
    if (!cfg.categoricals.empty()) kv("categorical", join(cfg.categoricals));
  }
  if (command == "eval") {
    kv("protocol", cfg.protocol);
    kv("rolls", cfg.rolls);
    kv("no-adapt", cfg.no_adapt ? "true" : "false");
    kv("emit-forecasts", cfg.emit_forecasts ? "true" : "false");
  }
  if (command == "sweep") {
    kv("lengths", join(cfg.lengths));
    kv("heads", join(cfg.heads));
    kv("horizon", cfg.horizon);
  }
  kv("seed", cfg.seed);
  write_text(path, out.str());
}

int run_synth(const RunConfig& cfg) {
  if (cfg.length < cfg.encoder_len + cfg.horizon)
    throw std::invalid_argument(
        "synth: length " + std::to_string(cfg.length) + " is shorter than encoder+horizon " +
        std::to_string(cfg.encoder_len + cfg.horizon));
  ensure_dir(cfg.out_dir);
  SynthConfig sc;
  sc.n_series = cfg.n_series;
  sc.length = cfg.length;
  sc.gamma = cfg.gamma;
  sc.noise_sigma = cfg.noise_sigma;
  sc.with_series_id = cfg.with_ids;
  sc.seed = cfg.seed;
  const SynthDataset synth = synth_generate(sc);
  write_csv(synth.data, cfg.out_dir + "/data.csv");

  nlohmann::json manifest;
  manifest["n_series"] = sc.n_series;
  manifest["length"] = sc.length;
  manifest["gamma"] = sc.gamma;
  manifest["noise_sigma"] = sc.noise_sigma;
  manifest["with_series_id"] = sc.with_series_id;
  manifest["seed"] = sc.seed;
  manifest["theta"] = nlohmann::json::array();
  for (const Vector& th : synth.theta)
    manifest["theta"].push_back(std::vector<double>(th.data(), th.data() + th.size()));
  write_text(cfg.out_dir + "/manifest.json", manifest.dump(2));
  write_effective_config(cfg, "synth", cfg.out_dir + "/effective.cfg");
  return 0;
}

int run_train(const RunConfig& cfg) {
  ensure_dir(cfg.out_dir);
  const Dataset raw = load_pipeline_data(cfg);

  ModelConfig mc;
  ModelParams warm;
  const ModelParams* warm_ptr = nullptr;
  long start_step = 0;
  const std::string ckpt_path = cfg.out_dir + "/checkpoint.bin";
  if (cfg.resume) {
    Checkpoint prev = load_checkpoint(ckpt_path);
    mc = prev.model.config;
    warm = std::move(prev.model.params);
    warm_ptr = &warm;
    start_step = static_cast<long>(prev.train_steps);
  } else {
    mc = build_model_config(raw, cfg);
  }

  SplitSpec spec;
  spec.protocol = cfg.protocol == "streaming" ? Protocol::Streaming : Protocol::Fixed;
  spec.horizon = mc.horizon;
  spec.n_rolls = cfg.rolls;
  spec.encoder_len = mc.encoder_len;
  const SplitBounds bounds = split(raw, spec);

  ScalerState sc = fit_scalers(raw, bounds.train_end);
  sc.scope = scope_from_string(cfg.scale_scope);

  TrainConfig tc;
  tc.batch_size = cfg.batch_size;
  tc.learning_rate = cfg.learning_rate;
  tc.stride = cfg.stride;
  tc.epochs = cfg.epochs;
  tc.seed = cfg.seed;
  tc.clip_norm = cfg.clip_norm;
  tc.state_mode = train_state_mode(cfg.train_state);

  std::ofstream log(cfg.out_dir + "/train_log.tsv",
                    cfg.resume ? std::ios::app : std::ios::trunc);
  if (!log) throw std::runtime_error("cannot write train log");
  const TrainResult result =
      train_model(mc, tc, raw, sc, bounds, warm_ptr, start_step, &log);

  Checkpoint ckpt;
  ckpt.model = {mc, result.params};
  ckpt.cont_names = raw.cont_names;
  ckpt.cat_names = raw.cat_names;
  ckpt.time_features = cfg.time_features;
  ckpt.scale_scope = sc.scope;
  ckpt.train_steps = static_cast<std::uint64_t>(result.steps);
  save_checkpoint(ckpt, ckpt_path);
  write_text(cfg.out_dir + "/scalers.json", scalers_to_json(sc, raw));
  write_effective_config(cfg, "train", cfg.out_dir + "/effective.cfg");
  return 0;
}

namespace {

void write_forecast_csvs(const std::vector<SeriesForecast>& forecasts,
                         const std::string& dir) {
  for (const SeriesForecast& sf : forecasts) {
    std::ofstream out(dir + "/forecast_" + sf.series_id + ".csv");
    if (!out) throw std::runtime_error("cannot write forecast csv");
    out.precision(17);
    out << "timestamp,y_true,mu,sigma\n";
    for (std::size_t i = 0; i < sf.timestamps.size(); ++i)
      out << sf.timestamps[i] << ',' << sf.y_true[i] << ',' << sf.mu[i] << ','
          << sf.sigma[i] << '\n';
  }
}

}  // namespace

int run_eval(const RunConfig& cfg) {
  ensure_dir(cfg.out_dir);
  const Checkpoint ckpt = load_checkpoint(cfg.checkpoint_path);

  RunConfig data_cfg = cfg;
  data_cfg.time_features = ckpt.time_features;
  data_cfg.categoricals.clear();
  // column typing comes from the checkpoint, so eval needs no feature flags
  std::vector<std::string> cat_cols = ckpt.cat_names;
  if (ckpt.time_features != "none") {
    const auto tf = time_feature_schema(granularity_from_string(ckpt.time_features));
    for (const auto& n : tf.names)
      cat_cols.erase(std::remove(cat_cols.begin(), cat_cols.end(), n), cat_cols.end());
  }
  Dataset raw = load_csv(cfg.data_path, cat_cols);
  if (ckpt.time_features != "none")
    raw = add_time_features(raw, granularity_from_string(ckpt.time_features));
  if (raw.cont_names != ckpt.cont_names || raw.cat_names != ckpt.cat_names)
    throw std::runtime_error("eval: dataset columns do not match the checkpoint");

  const std::string scalers_path =
      cfg.scalers_path.empty()
          ? (fs::path(cfg.checkpoint_path).parent_path() / "scalers.json").string()
          : cfg.scalers_path;
  std::ifstream sj(scalers_path);
  if (!sj) throw std::runtime_error("cannot open " + scalers_path);
  std::stringstream buf;
  buf << sj.rdbuf();
  const ScalerState sc = scalers_from_json(buf.str(), raw);

  SplitSpec spec;
  spec.protocol = cfg.protocol == "streaming" ? Protocol::Streaming : Protocol::Fixed;
  spec.horizon = ckpt.model.config.horizon;
  spec.n_rolls = cfg.rolls;
  spec.encoder_len = ckpt.model.config.encoder_len;
  const SplitBounds bounds = split(raw, spec);

  std::vector<SeriesForecast> forecasts;
  std::vector<SeriesForecast>* dump = cfg.emit_forecasts ? &forecasts : nullptr;
  const EvalReport report =
      spec.protocol == Protocol::Streaming
          ? eval_streaming(ckpt.model, raw, sc, bounds, cfg.rolls, !cfg.no_adapt, dump)
          : eval_fixed(ckpt.model, raw, sc, bounds, dump);

  write_text(cfg.out_dir + "/report.json", report_to_json(report));
  write_text(cfg.out_dir + "/report.txt", report_to_table(report));
  if (cfg.emit_forecasts) write_forecast_csvs(forecasts, cfg.out_dir);
  write_effective_config(cfg, "eval", cfg.out_dir + "/effective.cfg");
  return 0;
}

namespace {

struct SweepCell {
  long length = 0;
  std::string head;
  bool ok = false;
  double rmse = 0, nd = 0;
  std::string error;
};

SweepCell run_sweep_cell(const RunConfig& cfg, long length, const std::string& head) {
  SweepCell cell;
  cell.length = length;
  cell.head = head;
  try {
    const std::string label = "sweep/len=" + std::to_string(length) + "/head=" + head +
                              "/gamma=" + std::to_string(cfg.gamma) +
                              "/ids=" + (cfg.with_ids ? "1" : "0");
    const std::uint64_t cell_seed = cfg.seed ^ fnv1a64(label);

    SynthConfig scfg;
    scfg.n_series = cfg.n_series;
    scfg.length = length;
    scfg.gamma = cfg.gamma;
    scfg.noise_sigma = cfg.noise_sigma;
    scfg.with_series_id = cfg.with_ids;
    scfg.seed = cell_seed;
    const SynthDataset synth = synth_generate(scfg);
    const Dataset& raw = synth.data;

    RunConfig cell_cfg = cfg;
    cell_cfg.head = head;
    cell_cfg.seed = cell_seed;
    const ModelConfig mc = build_model_config(raw, cell_cfg);

    SplitSpec spec;
    spec.protocol = Protocol::Fixed;
    spec.horizon = mc.horizon;
    spec.encoder_len = mc.encoder_len;
    const SplitBounds bounds = split(raw, spec);
    ScalerState sc = fit_scalers(raw, bounds.train_end);

    TrainConfig tc;
    tc.batch_size = cfg.batch_size;
    tc.learning_rate = cfg.learning_rate;
    tc.stride = cfg.stride;
    tc.epochs = cfg.epochs;
    tc.seed = cell_seed;
    tc.clip_norm = cfg.clip_norm;
    tc.state_mode = train_state_mode(cfg.train_state);
    const TrainResult tr = train_model(mc, tc, raw, sc, bounds);

    const Model model{mc, tr.params};
    const EvalReport report = eval_fixed(model, raw, sc, bounds);
    cell.rmse = report.rmse;
    cell.nd = report.nd;
    cell.ok = true;
  } catch (const std::exception& e) {
    cell.error = e.what();
  }
  return cell;
}

}  // namespace

int run_sweep(const RunConfig& cfg) {
  ensure_dir(cfg.out_dir);
  std::vector<std::pair<long, std::string>> grid;
  for (long length : cfg.lengths)
    for (const std::string& head : cfg.heads) grid.emplace_back(length, head);

  const int hw = static_cast<int>(std::thread::hardware_concurrency());
  const int jobs = std::max(1, cfg.jobs > 0 ? cfg.jobs : std::min<int>(hw, 2));

  std::vector<SweepCell> cells(grid.size());
  std::size_t next = 0;
  while (next < grid.size()) {
    std::vector<std::pair<std::size_t, std::future<SweepCell>>> inflight;
    for (int j = 0; j < jobs && next < grid.size(); ++j, ++next)
      inflight.emplace_back(next, std::async(std::launch::async, run_sweep_cell, cfg,
                                             grid[next].first, grid[next].second));
    for (auto& [idx, fut] : inflight) cells[idx] = fut.get();
  }

  std::ostringstream tsv;
  tsv << "length\thead\trmse\tnd\n";
  tsv.precision(10);
  std::ostringstream errors;
  bool all_ok = true;
  for (const SweepCell& c : cells) {
    if (c.ok) {
      tsv << c.length << '\t' << c.head << '\t' << c.rmse << '\t' << c.nd << '\n';
    } else {
      tsv << c.length << '\t' << c.head << "\tnan\tnan\n";
      errors << "length=" << c.length << " head=" << c.head << ": " << c.error << '\n';
      all_ok = false;
    }
  }
  write_text(cfg.out_dir + "/sweep.tsv", tsv.str());
  if (!all_ok) write_text(cfg.out_dir + "/sweep_errors.log", errors.str());
  write_effective_config(cfg, "sweep", cfg.out_dir + "/effective.cfg");
  return all_ok ? 0 : 1;
}

}  // namespace aru
