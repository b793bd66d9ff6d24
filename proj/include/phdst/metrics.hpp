#pragma once

// MAPE / RMSE / R-square, naive baselines and the two-perspective evaluation
// (network-wide per day, per station over days) with report emission.

#include <array>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <map>
#include <string>
#include <vector>

#include "json.hpp"
#include "phdst/decision.hpp"
#include "phdst/error.hpp"
#include "phdst/features.hpp"
#include "phdst/ingest.hpp"
#include "phdst/threads.hpp"

namespace phdst::eval {

using ingest::VolumePanel;

inline constexpr std::array<double, 7> kHistogramEdges = {0, 5, 10, 15, 20, 30, 50};

struct Metrics {
  double mape = std::numeric_limits<double>::quiet_NaN();  // percent
  double rmse = std::numeric_limits<double>::quiet_NaN();
  double r2 = std::numeric_limits<double>::quiet_NaN();
  int excluded = 0;  // zero-truth points skipped by MAPE
  int n = 0;
};

// MAPE skips zero-truth points (they are counted in `excluded`); RMSE and
// R-square use every point, with R-square's mean taken over the truth
// vector. A constant truth vector leaves R-square undefined.
inline Metrics compute_metrics(std::span<const double> pred, std::span<const double> truth) {
  if (pred.size() != truth.size() || pred.empty())
    throw ValidationError("compute_metrics: vectors must be equal length and non-empty");
  Metrics m;
  m.n = static_cast<int>(pred.size());

  double ape_sum = 0.0;
  int ape_n = 0;
  double se_sum = 0.0;
  double truth_mean = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double err = pred[i] - truth[i];
    se_sum += err * err;
    truth_mean += truth[i];
    if (truth[i] == 0.0) {
      ++m.excluded;
    } else {
      ape_sum += std::fabs(err / truth[i]);
      ++ape_n;
    }
  }
  truth_mean /= static_cast<double>(truth.size());
  m.rmse = std::sqrt(se_sum / static_cast<double>(truth.size()));
  if (ape_n > 0) m.mape = 100.0 * ape_sum / static_cast<double>(ape_n);
  double ss_tot = 0.0;
  for (double y : truth) ss_tot += (y - truth_mean) * (y - truth_mean);
  if (ss_tot > 0.0) m.r2 = 1.0 - se_sum / ss_tot;
  return m;
}

enum class Baseline { historical_average, seasonal_naive, persistence };

inline const char* baseline_name(Baseline b) {
  switch (b) {
    case Baseline::historical_average: return "historical_average";
    case Baseline::seasonal_naive: return "seasonal_naive";
    default: return "persistence";
  }
}

// Predicts day anchor+1 for every station. HA is the per-station training
// mean; seasonal_naive repeats the volume one week before the target day;
// persistence repeats the anchor day.
inline std::vector<double> baseline_predict(Baseline kind, const VolumePanel& panel,
                                            DateRange train_range, Date anchor) {
  const int L = panel.size();
  std::vector<double> out(L, 0.0);
  switch (kind) {
    case Baseline::historical_average: {
      if (!panel.covers(train_range.first) || !panel.covers(train_range.last))
        throw ValidationError("baseline: training range not covered by panel");
      const int d0 = panel.day_offset(train_range.first);
      const int nd = train_range.size();
      for (int l = 0; l < L; ++l) {
        double acc = 0.0;
        for (int d = 0; d < nd; ++d) acc += static_cast<double>(panel.xtf(l, d0 + d));
        out[l] = acc / nd;
      }
      return out;
    }
    case Baseline::seasonal_naive: {
      const Date source = anchor - 6;  // one week before the target day
      if (!panel.covers(source))
        throw ValidationError("baseline: seasonal lookback day " + source.iso() + " not in panel");
      const int d = panel.day_offset(source);
      for (int l = 0; l < L; ++l) out[l] = static_cast<double>(panel.xtf(l, d));
      return out;
    }
    default: {
      if (!panel.covers(anchor))
        throw ValidationError("baseline: persistence day " + anchor.iso() + " not in panel");
      const int d = panel.day_offset(anchor);
      for (int l = 0; l < L; ++l) out[l] = static_cast<double>(panel.xtf(l, d));
      return out;
    }
  }
}

struct MetricsReport {
  std::vector<std::string> stations;
  std::vector<std::string> columns;  // "model" then the baselines, in order
  std::vector<Date> days;            // evaluated target days
  std::map<std::string, std::vector<Metrics>> per_day;
  std::map<std::string, std::vector<double>> station_mean_mape;  // NaN when never measurable
  std::map<std::string, std::array<int, 7>> histogram;
  std::vector<std::string> skipped;  // "date: reason" for unevaluable days
  int excluded_points = 0;           // zero-truth pairs (shared across columns)

  double mean_over_days(const std::string& column, int field) const {
    double acc = 0.0;
    int n = 0;
    for (const Metrics& m : per_day.at(column)) {
      const double v = field == 0 ? m.mape : field == 1 ? m.rmse : m.r2;
      if (std::isfinite(v)) {
        acc += v;
        ++n;
      }
    }
    return n > 0 ? acc / n : std::numeric_limits<double>::quiet_NaN();
  }
  double mean_mape(const std::string& column) const { return mean_over_days(column, 0); }
  double mean_rmse(const std::string& column) const { return mean_over_days(column, 1); }
  double mean_r2(const std::string& column) const { return mean_over_days(column, 2); }
};

inline int histogram_bucket(double mape) {
  // [0,5) [5,10) [10,15) [15,20) [20,30) [30,50) [50,inf); index 6 also
  // holds stations whose MAPE was never measurable.
  if (!std::isfinite(mape)) return 6;
  for (std::size_t i = kHistogramEdges.size() - 1; i > 0; --i)
    if (mape >= kHistogramEdges[i]) return static_cast<int>(i);
  return 0;
}

using Predictor = std::function<std::vector<double>(const feat::FeatureTensor&)>;

struct EvalInputs {
  const VolumePanel& panel;
  const feat::WeatherTable& weather;
  const feat::CalendarTable& calendar;
  const std::unordered_map<std::string, std::string>& regions;
  const feat::UpstreamMap& upstream;
  const feat::StationBoxCox& boxcox;
  int H = 14;
};

// Scores `predictor` and every baseline on the identical (day, station)
// pairs over the target days in test_range. Days whose features cannot be
// built are skipped and logged, never zero-filled.
inline MetricsReport evaluate_run_with(const Predictor& predictor, const EvalInputs& in,
                                       DateRange test_range, DateRange train_range,
                                       std::span<const Baseline> baselines) {
  if (!test_range.valid()) throw ValidationError("evaluate: empty test range");
  MetricsReport report;
  report.stations = in.panel.stations;
  report.columns.push_back("model");
  for (Baseline b : baselines) report.columns.push_back(baseline_name(b));

  const int L = in.panel.size();
  struct DayOutcome {
    bool ok = false;
    std::string skip_reason;
    Date target;
    std::map<std::string, std::vector<double>> preds;
    std::vector<double> truth;
  };
  std::vector<DayOutcome> outcomes(static_cast<std::size_t>(test_range.size()));

  parallel_for(outcomes.size(), [&](std::size_t i) {
    DayOutcome& oc = outcomes[i];
    const Date target = test_range.first + static_cast<int>(i);
    const Date anchor = target - 1;
    oc.target = target;
    if (!in.panel.covers(target)) {
      oc.skip_reason = "truth day not in panel";
      return;
    }
    try {
      const feat::FeatureTensor x = feat::build_feature_tensor(
          anchor, in.panel, in.weather, in.calendar, in.regions, in.upstream, in.boxcox, in.H);
      oc.preds["model"] = predictor(x);
    } catch (const ValidationError& e) {
      oc.skip_reason = e.what();
      return;
    }
    for (Baseline b : baselines)
      oc.preds[baseline_name(b)] = baseline_predict(b, in.panel, train_range, anchor);
    oc.truth.resize(L);
    const int td = in.panel.day_offset(target);
    for (int l = 0; l < L; ++l) oc.truth[l] = static_cast<double>(in.panel.xtf(l, td));
    oc.ok = true;
  });

  // Per-station accumulators: sum of absolute percentage errors and counts.
  std::map<std::string, std::vector<double>> ape_sum;
  std::map<std::string, std::vector<int>> ape_n;
  for (const std::string& c : report.columns) {
    ape_sum[c].assign(L, 0.0);
    ape_n[c].assign(L, 0);
    report.per_day[c] = {};
  }

  for (DayOutcome& oc : outcomes) {
    if (!oc.ok) {
      report.skipped.push_back(oc.target.iso() + ": " + oc.skip_reason);
      continue;
    }
    report.days.push_back(oc.target);
    for (const std::string& c : report.columns) {
      const Metrics m = compute_metrics(oc.preds.at(c), oc.truth);
      if (c == "model") report.excluded_points += m.excluded;
      report.per_day[c].push_back(m);
      for (int l = 0; l < L; ++l) {
        if (oc.truth[l] == 0.0) continue;
        ape_sum[c][l] += std::fabs((oc.preds.at(c)[l] - oc.truth[l]) / oc.truth[l]);
        ++ape_n[c][l];
      }
    }
  }

  for (const std::string& c : report.columns) {
    auto& means = report.station_mean_mape[c];
    means.assign(L, std::numeric_limits<double>::quiet_NaN());
    auto& hist = report.histogram[c];
    hist.fill(0);
    for (int l = 0; l < L; ++l) {
      if (ape_n[c][l] > 0) means[l] = 100.0 * ape_sum[c][l] / ape_n[c][l];
      ++hist[static_cast<std::size_t>(histogram_bucket(means[l]))];
    }
  }
  return report;
}

inline MetricsReport evaluate_run(const decision::ModelBundle& bundle, const EvalInputs& in,
                                  DateRange test_range, DateRange train_range,
                                  std::span<const Baseline> baselines,
                                  decision::PredictDiagnostics* diag = nullptr) {
  return evaluate_run_with(
      [&](const feat::FeatureTensor& x) { return decision::predict_calibrated(x, bundle, diag); },
      in, test_range, train_range, baselines);
}

// --- report emission --------------------------------------------------------------

namespace detail {

inline std::string fmt(double v) {
  if (!std::isfinite(v)) return "nan";
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.6f", v);
  return buf;
}

inline nlohmann::json num(double v) {
  if (!std::isfinite(v)) return nullptr;
  return v;
}

inline double num_from(const nlohmann::json& j) {
  if (j.is_null()) return std::numeric_limits<double>::quiet_NaN();
  return j.get<double>();
}

inline std::string svg_color(std::size_t i) {
  static const char* colors[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e"};
  return colors[i % 5];
}

}  // namespace detail

inline nlohmann::json report_to_json(const MetricsReport& r) {
  nlohmann::json j;
  j["stations"] = r.stations;
  j["columns"] = r.columns;
  nlohmann::json days = nlohmann::json::array();
  for (Date d : r.days) days.push_back(d.iso());
  j["days"] = days;
  for (const std::string& c : r.columns) {
    nlohmann::json col;
    nlohmann::json per_day = nlohmann::json::array();
    for (const Metrics& m : r.per_day.at(c))
      per_day.push_back({{"mape", detail::num(m.mape)},
                         {"rmse", detail::num(m.rmse)},
                         {"r2", detail::num(m.r2)},
                         {"excluded", m.excluded},
                         {"n", m.n}});
    col["per_day"] = per_day;
    nlohmann::json means = nlohmann::json::array();
    for (double v : r.station_mean_mape.at(c)) means.push_back(detail::num(v));
    col["station_mean_mape"] = means;
    col["histogram"] = r.histogram.at(c);
    col["mean_mape"] = detail::num(r.mean_mape(c));
    col["mean_rmse"] = detail::num(r.mean_rmse(c));
    col["mean_r2"] = detail::num(r.mean_r2(c));
    j["results"][c] = col;
  }
  j["skipped"] = r.skipped;
  j["excluded_points"] = r.excluded_points;
  return j;
}

inline MetricsReport report_from_json(const nlohmann::json& j) {
  MetricsReport r;
  r.stations = j.at("stations").get<std::vector<std::string>>();
  r.columns = j.at("columns").get<std::vector<std::string>>();
  for (const auto& s : j.at("days"))
    r.days.push_back(parse_iso_or_throw(s.get<std::string>(), "report days"));
  for (const std::string& c : r.columns) {
    const nlohmann::json& col = j.at("results").at(c);
    for (const auto& m : col.at("per_day")) {
      Metrics mm;
      mm.mape = detail::num_from(m.at("mape"));
      mm.rmse = detail::num_from(m.at("rmse"));
      mm.r2 = detail::num_from(m.at("r2"));
      mm.excluded = m.at("excluded").get<int>();
      mm.n = m.at("n").get<int>();
      r.per_day[c].push_back(mm);
    }
    for (const auto& v : col.at("station_mean_mape"))
      r.station_mean_mape[c].push_back(detail::num_from(v));
    r.histogram[c] = col.at("histogram").get<std::array<int, 7>>();
  }
  r.skipped = j.at("skipped").get<std::vector<std::string>>();
  r.excluded_points = j.at("excluded_points").get<int>();
  return r;
}

// Writes metrics_by_day.csv, metrics_by_station.csv, histogram.csv,
// summary.json and the two SVG charts. Byte-deterministic for a given report.
inline void build_report(const MetricsReport& r, const std::filesystem::path& dir) {
  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(dir, ec);
  auto open = [&](const char* name) {
    std::ofstream os(dir / name, std::ios::binary);
    if (!os) throw IoError(std::string("cannot write report file ") + name);
    return os;
  };

  {
    auto os = open("metrics_by_day.csv");
    std::vector<std::string> head{"date"};
    for (const std::string& c : r.columns) {
      head.push_back(c + "_mape");
      head.push_back(c + "_rmse");
      head.push_back(c + "_r2");
    }
    head.push_back("excluded");
    csv::write_row(os, head);
    for (std::size_t i = 0; i < r.days.size(); ++i) {
      std::vector<std::string> row{r.days[i].iso()};
      for (const std::string& c : r.columns) {
        const Metrics& m = r.per_day.at(c)[i];
        row.push_back(detail::fmt(m.mape));
        row.push_back(detail::fmt(m.rmse));
        row.push_back(detail::fmt(m.r2));
      }
      row.push_back(std::to_string(r.per_day.at("model")[i].excluded));
      csv::write_row(os, row);
    }
  }
  {
    auto os = open("metrics_by_station.csv");
    std::vector<std::string> head{"station_id"};
    for (const std::string& c : r.columns) head.push_back(c + "_mean_mape");
    csv::write_row(os, head);
    for (std::size_t l = 0; l < r.stations.size(); ++l) {
      std::vector<std::string> row{r.stations[l]};
      for (const std::string& c : r.columns) row.push_back(detail::fmt(r.station_mean_mape.at(c)[l]));
      csv::write_row(os, row);
    }
  }
  {
    auto os = open("histogram.csv");
    std::vector<std::string> head{"bucket_low", "bucket_high"};
    for (const std::string& c : r.columns) head.push_back(c + "_count");
    csv::write_row(os, head);
    for (std::size_t b = 0; b < 7; ++b) {
      std::vector<std::string> row;
      char buf[16];
      std::snprintf(buf, sizeof(buf), "%g", kHistogramEdges[b]);
      row.push_back(buf);
      if (b + 1 < kHistogramEdges.size()) {
        std::snprintf(buf, sizeof(buf), "%g", kHistogramEdges[b + 1]);
        row.push_back(buf);
      } else {
        row.push_back("inf");
      }
      for (const std::string& c : r.columns) row.push_back(std::to_string(r.histogram.at(c)[b]));
      csv::write_row(os, row);
    }
  }
  {
    auto os = open("summary.json");
    os << report_to_json(r).dump(1) << "\n";
  }

  // Per-day MAPE line chart.
  {
    auto os = open("mape_by_day.svg");
    const int W = 720, H = 360, ml = 50, mr = 10, mt = 20, mb = 40;
    double ymax = 1.0;
    for (const std::string& c : r.columns)
      for (const Metrics& m : r.per_day.at(c))
        if (std::isfinite(m.mape)) ymax = std::max(ymax, m.mape);
    ymax *= 1.05;
    const std::size_t nd = std::max<std::size_t>(r.days.size(), 2);
    auto px = [&](std::size_t i) {
      return ml + (W - ml - mr) * static_cast<double>(i) / static_cast<double>(nd - 1);
    };
    auto py = [&](double v) { return mt + (H - mt - mb) * (1.0 - v / ymax); };
    char buf[160];
    os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H
       << "\">\n<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    std::snprintf(buf, sizeof(buf),
                  "<line x1=\"%d\" y1=\"%d\" x2=\"%d\" y2=\"%d\" stroke=\"black\"/>\n", ml, H - mb,
                  W - mr, H - mb);
    os << buf;
    std::snprintf(buf, sizeof(buf),
                  "<line x1=\"%d\" y1=\"%d\" x2=\"%d\" y2=\"%d\" stroke=\"black\"/>\n", ml, mt, ml,
                  H - mb);
    os << buf;
    os << "<text x=\"8\" y=\"" << mt + 10 << "\" font-size=\"11\">MAPE %</text>\n";
    for (std::size_t ci = 0; ci < r.columns.size(); ++ci) {
      const std::string& c = r.columns[ci];
      os << "<polyline fill=\"none\" stroke=\"" << detail::svg_color(ci) << "\" points=\"";
      for (std::size_t i = 0; i < r.days.size(); ++i) {
        const double v = r.per_day.at(c)[i].mape;
        if (!std::isfinite(v)) continue;
        std::snprintf(buf, sizeof(buf), "%.2f,%.2f ", px(i), py(v));
        os << buf;
      }
      os << "\"/>\n";
      std::snprintf(buf, sizeof(buf),
                    "<text x=\"%d\" y=\"%d\" font-size=\"11\" fill=\"%s\">%s</text>\n", ml + 8,
                    mt + 14 + static_cast<int>(ci) * 14, detail::svg_color(ci).c_str(), c.c_str());
      os << buf;
    }
    os << "</svg>\n";
  }

  // Histogram of per-station mean MAPE.
  {
    auto os = open("histogram.svg");
    const int W = 720, H = 360, ml = 50, mr = 10, mt = 20, mb = 40;
    int cmax = 1;
    for (const std::string& c : r.columns)
      for (std::size_t b = 0; b < 7; ++b) cmax = std::max(cmax, r.histogram.at(c)[b]);
    char buf[200];
    os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H
       << "\">\n<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    const double band = static_cast<double>(W - ml - mr) / 7.0;
    const double bar = band / (static_cast<double>(r.columns.size()) + 1.0);
    for (std::size_t b = 0; b < 7; ++b) {
      for (std::size_t ci = 0; ci < r.columns.size(); ++ci) {
        const int count = r.histogram.at(r.columns[ci])[b];
        const double h = (H - mt - mb) * static_cast<double>(count) / cmax;
        std::snprintf(buf, sizeof(buf),
                      "<rect x=\"%.2f\" y=\"%.2f\" width=\"%.2f\" height=\"%.2f\" fill=\"%s\"/>\n",
                      ml + band * b + bar * (0.5 + static_cast<double>(ci)), H - mb - h, bar, h,
                      detail::svg_color(ci).c_str());
        os << buf;
      }
      std::snprintf(buf, sizeof(buf), "<text x=\"%.2f\" y=\"%d\" font-size=\"10\">%g%s</text>\n",
                    ml + band * b + 2, H - mb + 14, kHistogramEdges[b],
                    b == 6 ? "+" : "");
      os << buf;
    }
    std::snprintf(buf, sizeof(buf),
                  "<line x1=\"%d\" y1=\"%d\" x2=\"%d\" y2=\"%d\" stroke=\"black\"/>\n", ml, H - mb,
                  W - mr, H - mb);
    os << buf;
    os << "<text x=\"8\" y=\"" << mt + 10 << "\" font-size=\"11\">stations</text>\n";
    os << "</svg>\n";
  }
}

}  // namespace phdst::eval
