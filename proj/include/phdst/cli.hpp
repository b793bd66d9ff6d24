#pragma once

// Subcommand surface: synth | ingest | features | train | predict | evaluate
// | report | pipeline. Exit codes: 0 success, 1 validation/usage error,
// 2 runtime failure.

#include <algorithm>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "phdst/pipeline.hpp"

namespace phdst::cli {

namespace detail {

struct CommonFlags {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<int> epochs;
  std::optional<int> hidden;
  std::optional<int> window_days;
  std::optional<int> eta;
  std::optional<std::string> output_dir;
  std::optional<std::string> run_name;
  bool interpolate_weather = false;

  PipelineConfig load() const {
    PipelineConfig cfg = load_config(config_path);
    if (seed) {
      cfg.seed = *seed;
      cfg.train.seed = *seed;
      cfg.calibration.seed = SplitMix64(*seed).fork(0xca11).next();
      if (cfg.synth_cfg) cfg.synth_cfg->seed = *seed;
    }
    if (epochs) cfg.train.epochs = *epochs;
    if (hidden) cfg.train.hidden = *hidden;
    if (window_days) cfg.window_days = *window_days;
    if (eta) cfg.upstream_count = *eta;
    if (output_dir) cfg.output_dir = *output_dir;
    if (run_name) cfg.run_name = *run_name;
    if (interpolate_weather) cfg.interpolate_weather = true;
    cfg.validate();
    return cfg;
  }
};

inline void add_common(CLI::App* cmd, CommonFlags& f) {
  cmd->add_option("--config", f.config_path, "pipeline config JSON")->required();
  cmd->add_option("--seed", f.seed, "override the config seed");
  cmd->add_option("--epochs", f.epochs, "override training epochs");
  cmd->add_option("--hidden", f.hidden, "override LSTM hidden size");
  cmd->add_option("--window-days", f.window_days, "override the history window H");
  cmd->add_option("--eta", f.eta, "override the upstream station count");
  cmd->add_option("--output-dir", f.output_dir, "override the output directory");
  cmd->add_option("--run-name", f.run_name, "fixed run directory name");
  cmd->add_flag("--interpolate-weather", f.interpolate_weather,
                "forward-fill missing weather rows instead of failing");
}

inline feat::Dataset load_features_dir(const fs::path& dir, feat::StationBoxCox& boxcox,
                                       feat::VitalFlags& flags, feat::UpstreamMap& upstream) {
  std::ifstream fb(dir / "features.bin", std::ios::binary);
  if (!fb) throw IoError("cannot open " + (dir / "features.bin").string());
  feat::Dataset ds = feat::load_dataset(fb);
  auto load_json = [&](const char* name) {
    std::ifstream is(dir / name);
    if (!is) throw IoError("cannot open " + (dir / name).string());
    json j = json::parse(is, nullptr, false);
    if (j.is_discarded()) throw IoError(std::string(name) + ": invalid JSON");
    return j;
  };
  boxcox = feat::boxcox_from_json(load_json("boxcox.json"), ds.stations);
  flags = feat::vital_from_json(load_json("vital.json"), ds.stations);
  upstream = feat::upstream_from_json(load_json("upstream.json"));
  return ds;
}

}  // namespace detail

inline int run_command(std::vector<std::string> args, std::ostream& out = std::cout,
                       std::ostream& err = std::cerr) {
  CLI::App app{"phdst: daily toll-station traffic volume forecasting"};
  app.require_subcommand(1);

  detail::CommonFlags synth_f, ingest_f, features_f, train_f, evaluate_f, pipeline_f;
  std::string data_dir, ingest_dir, features_dir, out_path, model_path, metrics_path, date_str;

  CLI::App* c_synth = app.add_subcommand("synth", "generate a synthetic dataset (five CSVs + ground truth)");
  detail::add_common(c_synth, synth_f);
  c_synth->add_option("--out", out_path, "output directory for the CSV files")->required();

  CLI::App* c_ingest = app.add_subcommand("ingest", "parse and aggregate raw CSVs into the volume panel");
  detail::add_common(c_ingest, ingest_f);
  c_ingest->add_option("--data", data_dir, "directory with the five input CSVs")->required();
  c_ingest->add_option("--out", out_path, "output directory")->required();

  CLI::App* c_features = app.add_subcommand("features", "build the normalized feature dataset");
  detail::add_common(c_features, features_f);
  c_features->add_option("--data", data_dir, "directory with the five input CSVs")->required();
  c_features->add_option("--ingest", ingest_dir, "ingest artifact directory")->required();
  c_features->add_option("--out", out_path, "output directory")->required();

  CLI::App* c_train = app.add_subcommand("train", "train the network and calibration from features");
  detail::add_common(c_train, train_f);
  c_train->add_option("--features", features_dir, "features artifact directory")->required();
  c_train->add_option("--data", data_dir, "data directory (for the bundle fingerprint)");
  c_train->add_option("--out", out_path, "output directory")->required();

  CLI::App* c_predict = app.add_subcommand("predict", "predict next-day volumes from a model bundle");
  c_predict->add_option("--model", model_path, "model bundle JSON")->required();
  c_predict->add_option("--data", data_dir, "directory with the five input CSVs")->required();
  c_predict->add_option("--date", date_str, "anchor date YYYY-MM-DD (prediction is for the next day)")
      ->required();
  c_predict->add_option("--out", out_path, "predictions CSV path")->required();

  CLI::App* c_evaluate = app.add_subcommand("evaluate", "score a model and baselines over the test range");
  detail::add_common(c_evaluate, evaluate_f);
  c_evaluate->add_option("--model", model_path, "model bundle JSON")->required();
  c_evaluate->add_option("--data", data_dir, "directory with the five input CSVs")->required();
  c_evaluate->add_option("--out", out_path, "output directory")->required();

  CLI::App* c_report = app.add_subcommand("report", "emit CSV/JSON/SVG report files from a metrics report");
  c_report->add_option("--metrics", metrics_path, "metrics_report.json path")->required();
  c_report->add_option("--out", out_path, "output directory")->required();

  CLI::App* c_pipeline = app.add_subcommand("pipeline", "run every phase into a run directory");
  detail::add_common(c_pipeline, pipeline_f);

  try {
    std::reverse(args.begin(), args.end());
    app.parse(std::move(args));
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n" << app.help();
    return 1;
  }

  try {
    if (c_synth->parsed()) {
      PipelineConfig cfg = synth_f.load();
      stage_synth(cfg, out_path, out);
      return 0;
    }
    if (c_ingest->parsed()) {
      PipelineConfig cfg = ingest_f.load();
      const LoadedData d = load_data(data_dir_paths(data_dir), cfg, out);
      stage_ingest(cfg, d, out_path, out);
      return 0;
    }
    if (c_features->parsed()) {
      PipelineConfig cfg = features_f.load();
      const LoadedData d = load_data(data_dir_paths(data_dir), cfg, out);
      IngestOutput ing;
      {
        std::ifstream is(fs::path(ingest_dir) / "panel.csv");
        if (!is) throw IoError("cannot open " + (fs::path(ingest_dir) / "panel.csv").string());
        ing.panel = ingest::load_panel_csv(is);
      }
      {
        std::ifstream is(fs::path(ingest_dir) / "avg_mileage.csv");
        if (!is) throw IoError("cannot open " + (fs::path(ingest_dir) / "avg_mileage.csv").string());
        csv::Reader r(is);
        r.header();
        std::vector<std::string> f;
        while (r.next(f)) ing.mileage.mean_km[f.at(0)] = std::stod(f.at(1));
      }
      stage_features(cfg, d, ing, out_path, out);
      return 0;
    }
    if (c_train->parsed()) {
      PipelineConfig cfg = train_f.load();
      FeatureOutput f;
      f.dataset = detail::load_features_dir(features_dir, f.boxcox, f.flags, f.upstream);
      decision::Fingerprint fp;
      fp.seed = cfg.seed;
      fp.config_hash = hex64(fnv1a(config_to_json(cfg).dump()));
      if (!data_dir.empty()) fp = make_fingerprint(cfg, data_dir_paths(data_dir));
      stage_train(cfg, f, fp, out_path, out);
      return 0;
    }
    if (c_predict->parsed()) {
      const Date anchor = parse_iso_or_throw(date_str, "--date");
      const decision::ModelBundle bundle = decision::load_bundle(model_path);
      const DataPaths paths = data_dir_paths(data_dir);
      PipelineConfig dummy;  // only the parse thresholds are used here
      const LoadedData d = load_data(paths, dummy, err);
      std::vector<std::string> stations;
      for (const auto& p : d.tables.profiles) stations.push_back(p.station_id);
      const DateRange window{anchor - (bundle.params.H - 1), anchor};
      const ingest::VolumePanel panel =
          ingest::aggregate_daily_volumes(d.records, stations, window);
      const auto regions = d.tables.station_regions();
      const feat::FeatureTensor x =
          feat::build_feature_tensor(anchor, panel, d.tables.weather, d.tables.calendar, regions,
                                     bundle.upstream, bundle.boxcox, bundle.params.H);
      const std::vector<double> pred = decision::predict_calibrated(x, bundle);
      std::ofstream os(out_path, std::ios::binary);
      if (!os) throw IoError("cannot write " + out_path);
      csv::write_row(os, std::vector<std::string>{"station_id", "date", "predicted_exit_volume"});
      for (std::size_t l = 0; l < pred.size(); ++l) {
        char buf[40];
        std::snprintf(buf, sizeof(buf), "%.3f", pred[l]);
        csv::write_row(os, std::vector<std::string>{x.stations[l], (anchor + 1).iso(), buf});
      }
      out << "predict: wrote " << pred.size() << " rows to " << out_path << "\n";
      return 0;
    }
    if (c_evaluate->parsed()) {
      PipelineConfig cfg = evaluate_f.load();
      const decision::ModelBundle bundle = decision::load_bundle(model_path);
      const LoadedData d = load_data(data_dir_paths(data_dir), cfg, out);
      std::vector<std::string> stations;
      for (const auto& p : d.tables.profiles) stations.push_back(p.station_id);
      const ingest::VolumePanel panel =
          ingest::aggregate_daily_volumes(d.records, stations, cfg.panel_range());
      stage_evaluate(cfg, bundle, d, panel, out_path, out);
      return 0;
    }
    if (c_report->parsed()) {
      std::ifstream is(metrics_path);
      if (!is) throw IoError("cannot open " + metrics_path);
      json j = json::parse(is, nullptr, false);
      if (j.is_discarded()) throw IoError("metrics report: invalid JSON");
      eval::build_report(eval::report_from_json(j), out_path);
      out << "report: wrote files to " << out_path << "\n";
      return 0;
    }
    if (c_pipeline->parsed()) {
      PipelineConfig cfg = pipeline_f.load();
      run_pipeline(cfg, out);
      return 0;
    }
  } catch (const ValidationError& e) {
    err << "validation error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 2;
  }
  return 1;
}

}  // namespace phdst::cli
