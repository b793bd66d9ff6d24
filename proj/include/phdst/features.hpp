#pragma once

// Feature pre-processing: weather/date category encoding, upstream dependent
// station discovery, vital-few flagging and assembly of the L x H x N input
// tensor with Box-Cox normalized entry volumes.

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "json.hpp"
#include "phdst/boxcox.hpp"
#include "phdst/date.hpp"
#include "phdst/error.hpp"
#include "phdst/ingest.hpp"

namespace phdst::feat {

using ingest::CalendarTable;
using ingest::DistanceTable;
using ingest::VolumePanel;
using ingest::WeatherLevels;
using ingest::WeatherTable;

// 1 when the day counts as extreme weather: any of visibility/rain/snow at
// level >= 2, or wind/temperature at level >= 3.
inline int encode_weather(const WeatherLevels& w) {
  for (int level : {w.visibility, w.rain, w.snow, w.wind, w.temperature})
    if (level < 0 || level > 4) throw ValidationError("encode_weather: level out of range 0-4");
  const bool extreme = w.visibility >= 2 || w.rain >= 2 || w.snow >= 2 || w.wind >= 3 ||
                       w.temperature >= 3;
  return extreme ? 1 : 0;
}

// 2 = holiday, 1 = weekend, 0 = ordinary day. Holiday wins over weekend.
inline int encode_date(Date d, const CalendarTable& calendar) {
  if (calendar.is_holiday(d)) return 2;
  return d.is_weekend() ? 1 : 0;
}

// The eta stations whose route distance from l is closest to the mean trip
// mileage observed at l; ties fall back to ascending station id.
inline std::vector<std::string> discover_upstream(const std::string& l,
                                                  std::span<const std::string> stations,
                                                  const DistanceTable& distances,
                                                  const std::map<std::string, double>& avg_mileage,
                                                  int eta) {
  if (eta < 1) throw ValidationError("discover_upstream: eta must be >= 1");
  auto it = avg_mileage.find(l);
  if (it == avg_mileage.end())
    throw ValidationError("discover_upstream: no mileage for station " + l);
  const double mileage = it->second;

  std::vector<std::pair<double, std::string>> ranked;
  for (const std::string& other : stations) {
    if (other == l) continue;
    ranked.emplace_back(std::fabs(distances.at(l, other) - mileage), other);
  }
  if (ranked.size() < static_cast<std::size_t>(eta))
    throw ValidationError("discover_upstream: fewer than eta candidate stations for " + l);
  std::sort(ranked.begin(), ranked.end());
  std::vector<std::string> out(eta);
  for (int j = 0; j < eta; ++j) out[j] = ranked[j].second;
  return out;
}

struct UpstreamMap {
  int eta = 0;
  std::map<std::string, std::vector<std::string>> lists;

  const std::vector<std::string>& at(const std::string& l) const {
    auto it = lists.find(l);
    if (it == lists.end()) throw ValidationError("upstream map: missing station " + l);
    return it->second;
  }
};

inline UpstreamMap build_upstream_map(std::span<const std::string> stations,
                                      const DistanceTable& distances,
                                      const std::map<std::string, double>& avg_mileage, int eta) {
  UpstreamMap m;
  m.eta = eta;
  for (const std::string& l : stations)
    m.lists.emplace(l, discover_upstream(l, stations, distances, avg_mileage, eta));
  return m;
}

// Per-station flags, aligned with the panel's station order.
struct VitalFlags {
  std::vector<std::uint8_t> flags;

  bool vital(int station) const { return flags[station] != 0; }
};

// A station is vital when its mean daily exit volume over the training range
// exceeds the cross-station mean of those means by more than three standard
// deviations (population sigma).
inline VitalFlags flag_vital(const VolumePanel& panel, DateRange training) {
  if (!panel.covers(training.first) || !panel.covers(training.last))
    throw ValidationError("flag_vital: training range not covered by panel");
  const int L = panel.size();
  VitalFlags out;
  out.flags.assign(L, 0);
  if (L < 2) return out;  // sigma undefined for a single station

  std::vector<double> means(L, 0.0);
  const int d0 = panel.day_offset(training.first);
  const int nd = training.size();
  for (int l = 0; l < L; ++l) {
    double acc = 0.0;
    for (int d = 0; d < nd; ++d) acc += static_cast<double>(panel.xtf(l, d0 + d));
    means[l] = acc / nd;
  }
  double mu = 0.0;
  for (double m : means) mu += m;
  mu /= L;
  double var = 0.0;
  for (double m : means) var += (m - mu) * (m - mu);
  const double sigma = std::sqrt(var / L);
  for (int l = 0; l < L; ++l)
    if (means[l] > mu + 3.0 * sigma) out.flags[l] = 1;
  return out;
}

// Box-Cox parameters per station: exit-volume params normalize targets,
// entry-volume params normalize the upstream features.
struct StationBoxCox {
  std::vector<BoxCoxParams> exit_params;
  std::vector<BoxCoxParams> entry_params;
};

// Per-station fits are restricted to lambda >= 0. The unconstrained MLE on
// strongly clustered daily series (weekday/weekend modes) runs to negative
// lambda, whose bounded image collapses the normalized scale to ~1e-7 —
// those stations then vanish from the training loss and their inverse
// transform amplifies prediction error without bound. Non-negative lambda
// keeps the transform well conditioned on count data.
inline StationBoxCox fit_station_boxcox(const VolumePanel& panel, DateRange training) {
  if (!panel.covers(training.first) || !panel.covers(training.last))
    throw ValidationError("fit_station_boxcox: training range not covered by panel");
  const int L = panel.size();
  const int d0 = panel.day_offset(training.first);
  const int nd = training.size();
  StationBoxCox out;
  out.exit_params.resize(L);
  out.entry_params.resize(L);
  std::vector<double> series(nd);
  for (int l = 0; l < L; ++l) {
    for (int d = 0; d < nd; ++d) series[d] = static_cast<double>(panel.xtf(l, d0 + d));
    out.exit_params[l] = fit_boxcox(series, 0.0, 2.0);
    for (int d = 0; d < nd; ++d) series[d] = static_cast<double>(panel.ntf(l, d0 + d));
    out.entry_params[l] = fit_boxcox(series, 0.0, 2.0);
  }
  return out;
}

// The model input X for one anchor day d: for each station l and window day h,
// slot 0 is the weather category, slot 1 the date category, slots 2..N-1 the
// Box-Cox normalized entry volumes of l's upstream dependent stations on h.
struct FeatureTensor {
  int L = 0, H = 0, N = 0;
  Date anchor;
  std::vector<std::string> stations;
  std::vector<double> x;  // row-major [l][h][n]

  double& at(int l, int h, int n) {
    return x[(static_cast<std::size_t>(l) * H + h) * N + n];
  }
  double at(int l, int h, int n) const {
    return x[(static_cast<std::size_t>(l) * H + h) * N + n];
  }
};

inline FeatureTensor build_feature_tensor(Date anchor, const VolumePanel& panel,
                                          const WeatherTable& weather,
                                          const CalendarTable& calendar,
                                          const std::unordered_map<std::string, std::string>& regions,
                                          const UpstreamMap& upstream,
                                          const StationBoxCox& boxcox, int H) {
  if (H < 1) throw ValidationError("build_feature_tensor: H must be >= 1");
  const Date window_start = anchor - (H - 1);
  if (!panel.covers(window_start) || !panel.covers(anchor))
    throw ValidationError("build_feature_tensor: panel missing days " + window_start.iso() + ".." +
                          anchor.iso());
  const int L = panel.size();
  const int N = upstream.eta + 2;

  FeatureTensor t;
  t.L = L;
  t.H = H;
  t.N = N;
  t.anchor = anchor;
  t.stations = panel.stations;
  t.x.resize(static_cast<std::size_t>(L) * H * N);

  std::vector<int> date_cat(H);
  for (int h = 0; h < H; ++h) date_cat[h] = encode_date(window_start + h, calendar);

  for (int l = 0; l < L; ++l) {
    auto rit = regions.find(panel.stations[l]);
    if (rit == regions.end())
      throw ValidationError("build_feature_tensor: no region for station " + panel.stations[l]);
    const std::vector<std::string>& ups = upstream.at(panel.stations[l]);
    std::vector<int> up_idx(ups.size());
    for (std::size_t j = 0; j < ups.size(); ++j) {
      auto sit = panel.station_index.find(ups[j]);
      if (sit == panel.station_index.end())
        throw ValidationError("build_feature_tensor: upstream station not in panel: " + ups[j]);
      up_idx[j] = sit->second;
    }
    for (int h = 0; h < H; ++h) {
      const Date day = window_start + h;
      auto levels = weather.get(rit->second, day);
      if (!levels)
        throw ValidationError("build_feature_tensor: no weather for region " + rit->second +
                              " on " + day.iso());
      t.at(l, h, 0) = static_cast<double>(encode_weather(*levels));
      t.at(l, h, 1) = static_cast<double>(date_cat[h]);
      const int day_off = panel.day_offset(day);
      for (std::size_t j = 0; j < up_idx.size(); ++j) {
        const double volume = static_cast<double>(panel.ntf(up_idx[j], day_off));
        t.at(l, h, 2 + static_cast<int>(j)) = boxcox_apply(volume, boxcox.entry_params[up_idx[j]]);
      }
    }
  }
  return t;
}

struct Sample {
  Date anchor;
  std::vector<double> x;           // row-major [l][h][n]
  std::vector<double> target_norm;  // Box-Cox of next-day exit volumes
  std::vector<double> target_raw;   // next-day exit volumes
};

struct Dataset {
  int L = 0, H = 0, N = 0;
  std::vector<std::string> stations;
  std::vector<Sample> samples;

  FeatureTensor tensor(std::size_t i) const {
    FeatureTensor t;
    t.L = L;
    t.H = H;
    t.N = N;
    t.anchor = samples[i].anchor;
    t.stations = stations;
    t.x = samples[i].x;
    return t;
  }
};

// Sliding-window samples (stride 1) for every anchor day in `anchors`;
// each target is the Box-Cox normalized exit volume on the following day.
inline Dataset build_dataset(const VolumePanel& panel, const WeatherTable& weather,
                             const CalendarTable& calendar,
                             const std::unordered_map<std::string, std::string>& regions,
                             const UpstreamMap& upstream, const StationBoxCox& boxcox, int H,
                             DateRange anchors) {
  if (!anchors.valid()) throw ValidationError("build_dataset: empty anchor range");
  const int L = panel.size();
  Dataset ds;
  ds.L = L;
  ds.H = H;
  ds.N = upstream.eta + 2;
  ds.stations = panel.stations;
  for (Date d = anchors.first; d <= anchors.last; ++d) {
    if (!panel.covers(d - (H - 1)) || !panel.covers(d + 1))
      throw ValidationError("build_dataset: anchor " + d.iso() + " needs days " +
                            (d - (H - 1)).iso() + ".." + (d + 1).iso() + " in the panel");
    FeatureTensor t = build_feature_tensor(d, panel, weather, calendar, regions, upstream, boxcox, H);
    Sample s;
    s.anchor = d;
    s.x = std::move(t.x);
    s.target_norm.resize(L);
    s.target_raw.resize(L);
    const int next = panel.day_offset(d + 1);
    for (int l = 0; l < L; ++l) {
      s.target_raw[l] = static_cast<double>(panel.xtf(l, next));
      s.target_norm[l] = boxcox_apply(s.target_raw[l], boxcox.exit_params[l]);
    }
    ds.samples.push_back(std::move(s));
  }
  if (ds.samples.empty()) throw ValidationError("build_dataset: range yields zero samples");
  return ds;
}

// Widest anchor range with a full H-day history and a next-day target.
inline DateRange feasible_anchor_range(const VolumePanel& panel, int H) {
  DateRange r{panel.first_day + (H - 1), panel.days().last - 1};
  if (!r.valid()) throw ValidationError("feasible_anchor_range: panel shorter than H+1 days");
  return r;
}

// --- serialization -----------------------------------------------------------

static_assert(std::endian::native == std::endian::little,
              "feature container assumes a little-endian host");

namespace detail {

inline void w_u32(std::ostream& os, std::uint32_t v) { os.write(reinterpret_cast<const char*>(&v), 4); }
inline void w_i32(std::ostream& os, std::int32_t v) { os.write(reinterpret_cast<const char*>(&v), 4); }
inline void w_f64(std::ostream& os, double v) { os.write(reinterpret_cast<const char*>(&v), 8); }
inline std::uint32_t r_u32(std::istream& is) {
  std::uint32_t v = 0;
  if (!is.read(reinterpret_cast<char*>(&v), 4)) throw IoError("feature file: truncated");
  return v;
}
inline std::int32_t r_i32(std::istream& is) {
  std::int32_t v = 0;
  if (!is.read(reinterpret_cast<char*>(&v), 4)) throw IoError("feature file: truncated");
  return v;
}
inline double r_f64(std::istream& is) {
  double v = 0;
  if (!is.read(reinterpret_cast<char*>(&v), 8)) throw IoError("feature file: truncated");
  return v;
}

}  // namespace detail

inline constexpr char kFeatureMagic[8] = {'P', 'H', 'D', 'F', 'E', 'A', 'T', '\0'};
inline constexpr std::uint32_t kFeatureVersion = 1;

inline void save_dataset(std::ostream& os, const Dataset& ds) {
  os.write(kFeatureMagic, 8);
  detail::w_u32(os, kFeatureVersion);
  detail::w_u32(os, static_cast<std::uint32_t>(ds.L));
  detail::w_u32(os, static_cast<std::uint32_t>(ds.H));
  detail::w_u32(os, static_cast<std::uint32_t>(ds.N));
  detail::w_u32(os, static_cast<std::uint32_t>(ds.samples.size()));
  for (const std::string& s : ds.stations) {
    detail::w_u32(os, static_cast<std::uint32_t>(s.size()));
    os.write(s.data(), static_cast<std::streamsize>(s.size()));
  }
  for (const Sample& s : ds.samples) {
    detail::w_i32(os, s.anchor.days);
    for (double v : s.x) detail::w_f64(os, v);
    for (double v : s.target_norm) detail::w_f64(os, v);
    for (double v : s.target_raw) detail::w_f64(os, v);
  }
  if (!os) throw IoError("feature file: write failed");
}

inline Dataset load_dataset(std::istream& is) {
  char magic[8] = {};
  if (!is.read(magic, 8) || std::memcmp(magic, kFeatureMagic, 8) != 0)
    throw IoError("feature file: bad magic");
  const std::uint32_t version = detail::r_u32(is);
  if (version != kFeatureVersion)
    throw IoError("feature file: unsupported version " + std::to_string(version));
  Dataset ds;
  ds.L = static_cast<int>(detail::r_u32(is));
  ds.H = static_cast<int>(detail::r_u32(is));
  ds.N = static_cast<int>(detail::r_u32(is));
  const std::uint32_t count = detail::r_u32(is);
  ds.stations.resize(ds.L);
  for (int l = 0; l < ds.L; ++l) {
    const std::uint32_t len = detail::r_u32(is);
    ds.stations[l].resize(len);
    if (!is.read(ds.stations[l].data(), len)) throw IoError("feature file: truncated");
  }
  const std::size_t xsize = static_cast<std::size_t>(ds.L) * ds.H * ds.N;
  ds.samples.resize(count);
  for (std::uint32_t i = 0; i < count; ++i) {
    Sample& s = ds.samples[i];
    s.anchor = Date{detail::r_i32(is)};
    s.x.resize(xsize);
    for (double& v : s.x) v = detail::r_f64(is);
    s.target_norm.resize(ds.L);
    for (double& v : s.target_norm) v = detail::r_f64(is);
    s.target_raw.resize(ds.L);
    for (double& v : s.target_raw) v = detail::r_f64(is);
  }
  return ds;
}

inline nlohmann::json boxcox_to_json(const StationBoxCox& b, std::span<const std::string> stations) {
  nlohmann::json j;
  for (std::size_t l = 0; l < stations.size(); ++l) {
    j[stations[l]] = {
        {"exit", {{"lambda", b.exit_params[l].lambda}, {"shift", b.exit_params[l].shift},
                  {"degenerate", b.exit_params[l].degenerate}}},
        {"entry", {{"lambda", b.entry_params[l].lambda}, {"shift", b.entry_params[l].shift},
                   {"degenerate", b.entry_params[l].degenerate}}}};
  }
  return j;
}

inline StationBoxCox boxcox_from_json(const nlohmann::json& j,
                                      std::span<const std::string> stations) {
  StationBoxCox b;
  b.exit_params.resize(stations.size());
  b.entry_params.resize(stations.size());
  for (std::size_t l = 0; l < stations.size(); ++l) {
    const nlohmann::json& e = j.at(stations[l]);
    b.exit_params[l] = {e.at("exit").at("lambda").get<double>(),
                        e.at("exit").at("shift").get<double>(),
                        e.at("exit").at("degenerate").get<bool>()};
    b.entry_params[l] = {e.at("entry").at("lambda").get<double>(),
                         e.at("entry").at("shift").get<double>(),
                         e.at("entry").at("degenerate").get<bool>()};
  }
  return b;
}

inline nlohmann::json upstream_to_json(const UpstreamMap& m) {
  nlohmann::json j;
  j["eta"] = m.eta;
  j["stations"] = nlohmann::json::object();
  for (const auto& [l, ups] : m.lists) j["stations"][l] = ups;
  return j;
}

inline UpstreamMap upstream_from_json(const nlohmann::json& j) {
  UpstreamMap m;
  m.eta = j.at("eta").get<int>();
  for (const auto& [l, ups] : j.at("stations").items())
    m.lists[l] = ups.get<std::vector<std::string>>();
  return m;
}

inline nlohmann::json vital_to_json(const VitalFlags& v, std::span<const std::string> stations) {
  nlohmann::json j;
  for (std::size_t l = 0; l < stations.size(); ++l) j[stations[l]] = static_cast<int>(v.flags[l]);
  return j;
}

inline VitalFlags vital_from_json(const nlohmann::json& j, std::span<const std::string> stations) {
  VitalFlags v;
  v.flags.resize(stations.size());
  for (std::size_t l = 0; l < stations.size(); ++l)
    v.flags[l] = static_cast<std::uint8_t>(j.at(stations[l]).get<int>());
  return v;
}

}  // namespace phdst::feat
