#pragma once

// Configuration, run-directory persistence and orchestration of the full
// daily-forecast flow: synth/ingest -> features -> train -> evaluate -> report.

#include <chrono>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "phdst/decision.hpp"
#include "phdst/features.hpp"
#include "phdst/ingest.hpp"
#include "phdst/metrics.hpp"
#include "phdst/model.hpp"
#include "phdst/synth.hpp"

namespace phdst::cli {

namespace fs = std::filesystem;
using nlohmann::json;

struct DataPaths {
  std::string toll, weather, calendar, stations, distances;
};

struct PipelineConfig {
  std::uint64_t seed = 0;
  std::string output_dir = "runs";
  std::string run_name;  // empty -> timestamped directory name
  std::optional<DataPaths> data;
  std::optional<synth::SynthConfig> synth_cfg;
  DateRange train_range{};
  DateRange test_range{};
  int window_days = 14;    // H
  int upstream_count = 3;  // eta
  model::TrainConfig train;
  decision::CalibConfig calibration;
  bool interpolate_weather = false;
  double rejection_threshold = 0.05;

  void validate() const {
    if (window_days < 2) throw ValidationError("config: window_days (H) must be >= 2");
    if (upstream_count < 1) throw ValidationError("config: upstream_count (eta) must be >= 1");
    if (!train_range.valid()) throw ValidationError("config: train_range is empty or reversed");
    if (!test_range.valid()) throw ValidationError("config: test_range is empty or reversed");
    if (!(train_range.last < test_range.first))
      throw ValidationError("config: train_range must end before test_range starts");
    if (data.has_value() == synth_cfg.has_value())
      throw ValidationError("config: exactly one of 'data' and 'synth' must be given");
    if (train.hidden < 1) throw ValidationError("config: hidden must be >= 1");
    if (rejection_threshold < 0 || rejection_threshold > 1)
      throw ValidationError("config: rejection_threshold must be in [0,1]");
    train.validate();
    calibration.validate();
    if (synth_cfg) {
      synth_cfg->validate();
      const DateRange r = synth_cfg->range();
      if (!(r.first <= train_range.first && test_range.last <= r.last))
        throw ValidationError("config: synth range must cover train and test ranges");
    }
  }

  DateRange panel_range() const { return {train_range.first, test_range.last}; }
};

namespace detail {

inline void check_keys(const json& j, std::initializer_list<const char*> allowed,
                       const std::string& ctx) {
  if (!j.is_object()) throw ValidationError("config: " + ctx + " must be an object");
  for (const auto& [key, _] : j.items()) {
    bool ok = false;
    for (const char* a : allowed)
      if (key == a) ok = true;
    if (!ok) throw ValidationError("config: unknown key '" + key + "' in " + ctx);
  }
}

inline DateRange range_from_json(const json& j, const std::string& ctx) {
  check_keys(j, {"start", "end"}, ctx);
  return {parse_iso_or_throw(j.at("start").get<std::string>(), ctx.c_str()),
          parse_iso_or_throw(j.at("end").get<std::string>(), ctx.c_str())};
}

template <typename T>
void maybe(const json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

}  // namespace detail

inline PipelineConfig config_from_json(const json& j) {
  detail::check_keys(j,
                     {"seed", "output_dir", "run_name", "data", "synth", "train_range",
                      "test_range", "window_days", "upstream_count", "hidden", "train",
                      "calibration", "interpolate_weather", "rejection_threshold"},
                     "config");
  PipelineConfig c;
  detail::maybe(j, "seed", c.seed);
  detail::maybe(j, "output_dir", c.output_dir);
  detail::maybe(j, "run_name", c.run_name);
  detail::maybe(j, "window_days", c.window_days);
  detail::maybe(j, "upstream_count", c.upstream_count);
  detail::maybe(j, "interpolate_weather", c.interpolate_weather);
  detail::maybe(j, "rejection_threshold", c.rejection_threshold);
  if (!j.contains("train_range") || !j.contains("test_range"))
    throw ValidationError("config: train_range and test_range are required");
  c.train_range = detail::range_from_json(j.at("train_range"), "train_range");
  c.test_range = detail::range_from_json(j.at("test_range"), "test_range");

  if (j.contains("data")) {
    detail::check_keys(j.at("data"), {"toll", "weather", "calendar", "stations", "distances"},
                       "data");
    DataPaths d;
    d.toll = j.at("data").at("toll").get<std::string>();
    d.weather = j.at("data").at("weather").get<std::string>();
    d.calendar = j.at("data").at("calendar").get<std::string>();
    d.stations = j.at("data").at("stations").get<std::string>();
    d.distances = j.at("data").at("distances").get<std::string>();
    c.data = d;
  }
  if (j.contains("synth")) {
    const json& s = j.at("synth");
    detail::check_keys(s,
                       {"stations", "start", "days", "regions", "base_log_mean", "base_log_sigma",
                        "weekend_multiplier", "holiday_multiplier", "weather_multiplier",
                        "weather_probability", "coupling_weight", "noise_level", "vital_boost"},
                       "synth");
    synth::SynthConfig sc;
    detail::maybe(s, "stations", sc.stations);
    if (s.contains("start"))
      sc.start = parse_iso_or_throw(s.at("start").get<std::string>(), "synth.start");
    detail::maybe(s, "days", sc.days);
    detail::maybe(s, "regions", sc.regions);
    detail::maybe(s, "base_log_mean", sc.base_log_mean);
    detail::maybe(s, "base_log_sigma", sc.base_log_sigma);
    detail::maybe(s, "weekend_multiplier", sc.weekend_multiplier);
    detail::maybe(s, "holiday_multiplier", sc.holiday_multiplier);
    detail::maybe(s, "weather_multiplier", sc.weather_multiplier);
    detail::maybe(s, "weather_probability", sc.weather_probability);
    detail::maybe(s, "coupling_weight", sc.coupling_weight);
    detail::maybe(s, "noise_level", sc.noise_level);
    detail::maybe(s, "vital_boost", sc.vital_boost);
    sc.seed = c.seed;
    c.synth_cfg = sc;
  }
  if (j.contains("hidden")) c.train.hidden = j.at("hidden").get<int>();
  if (j.contains("train")) {
    const json& t = j.at("train");
    detail::check_keys(t,
                       {"epochs", "batch_size", "learning_rate", "validation_fraction",
                        "early_stop_patience", "grad_clip_norm", "tie_fcn"},
                       "train");
    detail::maybe(t, "epochs", c.train.epochs);
    detail::maybe(t, "batch_size", c.train.batch_size);
    detail::maybe(t, "learning_rate", c.train.learning_rate);
    detail::maybe(t, "validation_fraction", c.train.validation_fraction);
    detail::maybe(t, "early_stop_patience", c.train.early_stop_patience);
    detail::maybe(t, "grad_clip_norm", c.train.grad_clip_norm);
    detail::maybe(t, "tie_fcn", c.train.tie_fcn);
  }
  if (j.contains("calibration")) {
    const json& k = j.at("calibration");
    detail::check_keys(k, {"enabled", "width", "epochs", "batch_size", "learning_rate"},
                       "calibration");
    detail::maybe(k, "enabled", c.calibration.enabled);
    detail::maybe(k, "width", c.calibration.width);
    detail::maybe(k, "epochs", c.calibration.epochs);
    detail::maybe(k, "batch_size", c.calibration.batch_size);
    detail::maybe(k, "learning_rate", c.calibration.learning_rate);
  }
  c.train.seed = c.seed;
  c.calibration.seed = SplitMix64(c.seed).fork(0xca11).next();
  return c;
}

inline json config_to_json(const PipelineConfig& c) {
  json j;
  j["seed"] = c.seed;
  j["output_dir"] = c.output_dir;
  j["run_name"] = c.run_name;
  j["train_range"] = {{"start", c.train_range.first.iso()}, {"end", c.train_range.last.iso()}};
  j["test_range"] = {{"start", c.test_range.first.iso()}, {"end", c.test_range.last.iso()}};
  j["window_days"] = c.window_days;
  j["upstream_count"] = c.upstream_count;
  j["hidden"] = c.train.hidden;
  j["train"] = {{"epochs", c.train.epochs},
                {"batch_size", c.train.batch_size},
                {"learning_rate", c.train.learning_rate},
                {"validation_fraction", c.train.validation_fraction},
                {"early_stop_patience", c.train.early_stop_patience},
                {"grad_clip_norm", c.train.grad_clip_norm},
                {"tie_fcn", c.train.tie_fcn}};
  j["calibration"] = {{"enabled", c.calibration.enabled},
                      {"width", c.calibration.width},
                      {"epochs", c.calibration.epochs},
                      {"batch_size", c.calibration.batch_size},
                      {"learning_rate", c.calibration.learning_rate}};
  j["interpolate_weather"] = c.interpolate_weather;
  j["rejection_threshold"] = c.rejection_threshold;
  if (c.data) {
    j["data"] = {{"toll", c.data->toll},
                 {"weather", c.data->weather},
                 {"calendar", c.data->calendar},
                 {"stations", c.data->stations},
                 {"distances", c.data->distances}};
  }
  if (c.synth_cfg) {
    const synth::SynthConfig& s = *c.synth_cfg;
    j["synth"] = {{"stations", s.stations},
                  {"start", s.start.iso()},
                  {"days", s.days},
                  {"regions", s.regions},
                  {"base_log_mean", s.base_log_mean},
                  {"base_log_sigma", s.base_log_sigma},
                  {"weekend_multiplier", s.weekend_multiplier},
                  {"holiday_multiplier", s.holiday_multiplier},
                  {"weather_multiplier", s.weather_multiplier},
                  {"weather_probability", s.weather_probability},
                  {"coupling_weight", s.coupling_weight},
                  {"noise_level", s.noise_level},
                  {"vital_boost", s.vital_boost}};
  }
  return j;
}

inline PipelineConfig load_config(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open config " + path);
  json j = json::parse(is, nullptr, false);
  if (j.is_discarded()) throw ValidationError("config: " + path + " is not valid JSON");
  PipelineConfig c = config_from_json(j);
  return c;
}

// --- hashing -----------------------------------------------------------------

inline std::uint64_t fnv1a(std::string_view bytes, std::uint64_t h = 0xcbf29ce484222325ull) {
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

inline std::string hex64(std::uint64_t v) {
  char buf[20];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

inline std::string file_hash(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  if (!is) throw IoError("cannot open " + p.string() + " for hashing");
  std::stringstream buf;
  buf << is.rdbuf();
  return hex64(fnv1a(buf.str()));
}

// --- run layout ----------------------------------------------------------------

struct RunPaths {
  fs::path root;

  fs::path data() const { return root / "data"; }
  fs::path ingest() const { return root / "ingest"; }
  fs::path features() const { return root / "features"; }
  fs::path model() const { return root / "model"; }
  fs::path report() const { return root / "report"; }
};

inline std::string timestamp_name() {
  const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  localtime_r(&t, &tm);
  char buf[40];
  std::strftime(buf, sizeof(buf), "run-%Y%m%d-%H%M%S", &tm);
  return buf;
}

inline RunPaths make_run_dir(const PipelineConfig& cfg) {
  RunPaths rp;
  rp.root = fs::path(cfg.output_dir) / (cfg.run_name.empty() ? timestamp_name() : cfg.run_name);
  fs::create_directories(rp.root);
  return rp;
}

struct LoadedData {
  ingest::ExternalTables tables;
  std::vector<ingest::TollRecord> records;
  ingest::ParseResult parse;
};

inline DataPaths data_dir_paths(const fs::path& dir) {
  return {(dir / "toll.csv").string(), (dir / "weather.csv").string(),
          (dir / "calendar.csv").string(), (dir / "stations.csv").string(),
          (dir / "distances.csv").string()};
}

inline LoadedData load_data(const DataPaths& paths, const PipelineConfig& cfg,
                            std::ostream& log) {
  LoadedData d;
  d.tables = ingest::load_external_tables(paths.weather, paths.calendar, paths.stations,
                                          paths.distances,
                                          {.interpolate_weather = cfg.interpolate_weather}, &log);
  std::ifstream toll(paths.toll, std::ios::binary);
  if (!toll) throw IoError("cannot open " + paths.toll);
  std::unordered_set<std::string> station_set;
  for (const auto& p : d.tables.profiles) station_set.insert(p.station_id);
  d.parse = ingest::parse_toll_records(toll, station_set,
                                       {.rejection_threshold = cfg.rejection_threshold});
  d.records = std::move(d.parse.records);
  return d;
}

// --- pipeline stages -------------------------------------------------------------

inline void stage_synth(const PipelineConfig& cfg, const fs::path& out, std::ostream& log) {
  if (!cfg.synth_cfg) throw ValidationError("synth: config has no 'synth' section");
  const synth::Network net = synth::generate_network(*cfg.synth_cfg);
  const synth::SynthPanel sp = synth::generate_panel(net, *cfg.synth_cfg);
  synth::write_synth_csvs(out, net, sp, cfg.synth_cfg->seed);
  log << "synth: wrote " << cfg.synth_cfg->stations << " stations x " << cfg.synth_cfg->days
      << " days to " << out.string() << "\n";
}

struct IngestOutput {
  ingest::VolumePanel panel;
  ingest::MileageResult mileage;
};

inline IngestOutput stage_ingest(const PipelineConfig& cfg, const LoadedData& d,
                                 const fs::path& out, std::ostream& log) {
  fs::create_directories(out);
  std::vector<std::string> stations;
  for (const auto& p : d.tables.profiles) stations.push_back(p.station_id);
  IngestOutput o{ingest::aggregate_daily_volumes(d.records, stations, cfg.panel_range()),
                 ingest::compute_avg_mileage(d.records, d.tables.distances, cfg.train_range)};

  {
    std::ofstream os(out / "panel.csv", std::ios::binary);
    ingest::save_panel_csv(os, o.panel);
  }
  {
    std::ofstream os(out / "avg_mileage.csv", std::ios::binary);
    csv::write_row(os, std::vector<std::string>{"station_id", "mean_km"});
    for (const auto& [station, km] : o.mileage.mean_km) {
      char buf[40];
      std::snprintf(buf, sizeof(buf), "%.9g", km);
      csv::write_row(os, std::vector<std::string>{station, buf});
    }
  }
  {
    std::ofstream os(out / "rejections.csv", std::ios::binary);
    csv::write_row(os, std::vector<std::string>{"row", "reason"});
    for (const auto& r : d.parse.rejections)
      csv::write_row(os, std::vector<std::string>{std::to_string(r.row), r.reason});
  }
  {
    json s;
    s["rows_seen"] = d.parse.rows_seen;
    s["accepted"] = d.records.size();
    s["rejected"] = d.parse.rejections.size();
    s["mileage_skipped"] = o.mileage.skipped;
    std::ofstream os(out / "ingest_summary.json", std::ios::binary);
    os << s.dump(1) << "\n";
  }
  log << "ingest: " << d.records.size() << " records accepted, " << d.parse.rejections.size()
      << " rejected\n";
  return o;
}

struct FeatureOutput {
  feat::StationBoxCox boxcox;
  feat::VitalFlags flags;
  feat::UpstreamMap upstream;
  feat::Dataset dataset;
};

inline DateRange train_anchor_range(const PipelineConfig& cfg) {
  const Date first_anchor =
      std::max(cfg.panel_range().first + (cfg.window_days - 1), cfg.train_range.first - 1);
  const Date last_anchor = cfg.train_range.last - 1;
  if (!(first_anchor <= last_anchor))
    throw ValidationError("config: train range too short for window_days " +
                          std::to_string(cfg.window_days));
  return {first_anchor, last_anchor};
}

inline FeatureOutput stage_features(const PipelineConfig& cfg, const LoadedData& d,
                                    const IngestOutput& ing, const fs::path& out,
                                    std::ostream& log) {
  fs::create_directories(out);
  FeatureOutput o;
  o.boxcox = feat::fit_station_boxcox(ing.panel, cfg.train_range);
  o.flags = feat::flag_vital(ing.panel, cfg.train_range);
  o.upstream = feat::build_upstream_map(ing.panel.stations, d.tables.distances,
                                        ing.mileage.mean_km, cfg.upstream_count);
  const auto regions = d.tables.station_regions();
  o.dataset = feat::build_dataset(ing.panel, d.tables.weather, d.tables.calendar, regions,
                                  o.upstream, o.boxcox, cfg.window_days, train_anchor_range(cfg));

  {
    std::ofstream os(out / "features.bin", std::ios::binary);
    feat::save_dataset(os, o.dataset);
  }
  auto dump = [&](const char* name, const json& j) {
    std::ofstream os(out / name, std::ios::binary);
    os << j.dump(1) << "\n";
  };
  dump("boxcox.json", feat::boxcox_to_json(o.boxcox, ing.panel.stations));
  dump("upstream.json", feat::upstream_to_json(o.upstream));
  dump("vital.json", feat::vital_to_json(o.flags, ing.panel.stations));
  int vital_count = 0;
  for (auto f : o.flags.flags) vital_count += f;
  log << "features: " << o.dataset.samples.size() << " training samples, " << vital_count
      << " vital station(s)\n";
  return o;
}

inline decision::ModelBundle stage_train(const PipelineConfig& cfg, const FeatureOutput& f,
                                         const decision::Fingerprint& fp, const fs::path& out,
                                         std::ostream& log) {
  fs::create_directories(out);
  model::TrainConfig tc = cfg.train;
  model::TrainResult result = model::train_stage1(f.dataset, tc);

  // Calibration is fit on the stage-1 training-split predictions.
  const std::size_t n = f.dataset.samples.size();
  const std::size_t n_val = static_cast<std::size_t>(tc.validation_fraction * static_cast<double>(n));
  const std::size_t n_train = n - n_val;
  decision::CalibrationNets nets;
  if (cfg.calibration.enabled) {
    std::vector<std::vector<double>> preds(n_train);
    parallel_for(n_train, [&](std::size_t i) {
      preds[i] = model::model_forward(f.dataset.tensor(i), result.params);
    });
    nets = decision::train_calibration(preds, f.dataset, f.boxcox, f.flags, cfg.calibration,
                                       n_train, &log);
  } else {
    nets.vital = decision::CalibNet::identity(cfg.calibration.width);
    nets.ordinary = decision::CalibNet::identity(cfg.calibration.width);
  }

  decision::ModelBundle bundle;
  bundle.stations = f.dataset.stations;
  bundle.params = std::move(result.params);
  bundle.boxcox = f.boxcox;
  bundle.flags = f.flags;
  bundle.upstream = f.upstream;
  bundle.nets = std::move(nets);
  bundle.fingerprint = fp;
  decision::save_bundle((out / "model.json").string(), bundle);

  {
    std::ofstream os(out / "history.csv", std::ios::binary);
    csv::write_row(os, std::vector<std::string>{"epoch", "train_loss", "val_loss", "seconds"});
    for (std::size_t e = 0; e < result.history.train_loss.size(); ++e) {
      char t[40], v[40], s[40];
      std::snprintf(t, sizeof(t), "%.12g", result.history.train_loss[e]);
      std::snprintf(v, sizeof(v), "%.12g", result.history.val_loss[e]);
      std::snprintf(s, sizeof(s), "%.3f", result.history.seconds[e]);
      csv::write_row(os, std::vector<std::string>{std::to_string(e + 1), t, v, s});
    }
  }
  log << "train: " << result.history.train_loss.size() << " epochs, best epoch "
      << result.history.best_epoch << ", final train loss "
      << (result.history.train_loss.empty() ? 0.0 : result.history.train_loss.back()) << "\n";
  return bundle;
}

inline eval::MetricsReport stage_evaluate(const PipelineConfig& cfg,
                                          const decision::ModelBundle& bundle,
                                          const LoadedData& d, const ingest::VolumePanel& panel,
                                          const fs::path& out, std::ostream& log) {
  fs::create_directories(out);
  const auto regions = d.tables.station_regions();
  eval::EvalInputs inputs{panel,        d.tables.weather, d.tables.calendar, regions,
                          bundle.upstream, bundle.boxcox,  cfg.window_days};
  const std::vector<eval::Baseline> baselines = {eval::Baseline::historical_average,
                                                 eval::Baseline::seasonal_naive,
                                                 eval::Baseline::persistence};
  decision::PredictDiagnostics diag;
  eval::MetricsReport report =
      eval::evaluate_run(bundle, inputs, cfg.test_range, cfg.train_range, baselines, &diag);

  {
    std::ofstream os(out / "metrics_report.json", std::ios::binary);
    os << eval::report_to_json(report).dump(1) << "\n";
  }
  {
    // Re-predict per evaluated day for the predictions artifact.
    std::ofstream os(out / "predictions.csv", std::ios::binary);
    csv::write_row(os, std::vector<std::string>{"station_id", "date", "predicted_exit_volume"});
    for (Date target : report.days) {
      const feat::FeatureTensor x =
          feat::build_feature_tensor(target - 1, panel, d.tables.weather, d.tables.calendar,
                                     regions, bundle.upstream, bundle.boxcox, cfg.window_days);
      const std::vector<double> pred = decision::predict_calibrated(x, bundle);
      for (std::size_t l = 0; l < pred.size(); ++l) {
        char buf[40];
        std::snprintf(buf, sizeof(buf), "%.3f", pred[l]);
        csv::write_row(os, std::vector<std::string>{panel.stations[l], target.iso(), buf});
      }
    }
  }
  log << "evaluate: " << report.days.size() << " days, model mean MAPE "
      << eval::detail::fmt(report.mean_mape("model")) << "%, HA "
      << eval::detail::fmt(report.mean_mape("historical_average")) << "%"
      << (diag.invert_clamped ? " (" + std::to_string(diag.invert_clamped) + " clamped inversions)"
                              : "")
      << "\n";
  return report;
}

// --- whole pipeline ------------------------------------------------------------------

inline decision::Fingerprint make_fingerprint(const PipelineConfig& cfg,
                                              const DataPaths& paths) {
  decision::Fingerprint fp;
  fp.seed = cfg.seed;
  fp.config_hash = hex64(fnv1a(config_to_json(cfg).dump()));
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (const std::string& p : {paths.toll, paths.weather, paths.calendar, paths.stations,
                               paths.distances})
    h = fnv1a(file_hash(p), h);
  fp.data_hash = hex64(h);
  return fp;
}

inline RunPaths run_pipeline(const PipelineConfig& cfg, std::ostream& log) {
  cfg.validate();
  RunPaths rp = make_run_dir(cfg);
  {
    std::ofstream os(rp.root / "config.json", std::ios::binary);
    os << config_to_json(cfg).dump(1) << "\n";
  }

  if (cfg.synth_cfg) {
    stage_synth(cfg, rp.data(), log);
  } else {
    fs::create_directories(rp.data());
    const DataPaths src = *cfg.data;
    const DataPaths dst = data_dir_paths(rp.data());
    fs::copy_file(src.toll, dst.toll, fs::copy_options::overwrite_existing);
    fs::copy_file(src.weather, dst.weather, fs::copy_options::overwrite_existing);
    fs::copy_file(src.calendar, dst.calendar, fs::copy_options::overwrite_existing);
    fs::copy_file(src.stations, dst.stations, fs::copy_options::overwrite_existing);
    fs::copy_file(src.distances, dst.distances, fs::copy_options::overwrite_existing);
  }
  const DataPaths paths = data_dir_paths(rp.data());
  const decision::Fingerprint fp = make_fingerprint(cfg, paths);
  {
    json m;
    m["config_hash"] = fp.config_hash;
    m["data_hash"] = fp.data_hash;
    m["data_files"] = {{"toll", file_hash(paths.toll)},
                       {"weather", file_hash(paths.weather)},
                       {"calendar", file_hash(paths.calendar)},
                       {"stations", file_hash(paths.stations)},
                       {"distances", file_hash(paths.distances)}};
    std::ofstream os(rp.root / "manifest.json", std::ios::binary);
    os << m.dump(1) << "\n";
  }

  const LoadedData data = load_data(paths, cfg, log);
  const IngestOutput ing = stage_ingest(cfg, data, rp.ingest(), log);
  const FeatureOutput feats = stage_features(cfg, data, ing, rp.features(), log);
  const decision::ModelBundle bundle = stage_train(cfg, feats, fp, rp.model(), log);
  const eval::MetricsReport report = stage_evaluate(cfg, bundle, data, ing.panel, rp.report(), log);
  eval::build_report(report, rp.report());
  log << "pipeline: artifacts in " << rp.root.string() << "\n";
  return rp;
}

}  // namespace phdst::cli
