#pragma once

// Synthetic highway networks and volume panels with known latent structure:
// log-normal station bases (long tail), weekend/holiday calendar effects,
// regional extreme-weather shocks, upstream coupling and optional record-level
// expansion that aggregates back to the exact panel.

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <numeric>
#include <string>
#include <vector>

#include "json.hpp"
#include "phdst/date.hpp"
#include "phdst/error.hpp"
#include "phdst/ingest.hpp"
#include "phdst/rng.hpp"

namespace phdst::synth {

using ingest::DistanceTable;
using ingest::StationProfile;
using ingest::TollRecord;
using ingest::VolumePanel;
using ingest::WeatherLevels;
using ingest::WeatherTable;

struct SynthConfig {
  int stations = 20;
  Date start = Date::from_ymd(2017, 4, 1);
  int days = 180;
  std::uint64_t seed = 1;
  int regions = 4;
  double base_log_mean = 5.5;    // log-normal base volume parameters
  double base_log_sigma = 1.0;
  double weekend_multiplier = 1.4;
  double holiday_multiplier = 1.6;
  double weather_multiplier = 0.75;
  double weather_probability = 0.03;  // extreme-weather chance per region-day
  double coupling_weight = 0.4;       // upstream share of a station's exit pattern
  double noise_level = 0.04;          // log-normal observation noise sigma
  // When > 0, station 0's base volume is forced to this multiple of the
  // median base, producing exactly one dominant (vital-few) station.
  double vital_boost = 0.0;

  void validate() const {
    if (stations < 5) throw ValidationError("synth: stations must be >= 5");
    if (days < 2) throw ValidationError("synth: days must be >= 2");
    if (regions < 1 || regions > stations) throw ValidationError("synth: bad region count");
    if (weekend_multiplier <= 0 || holiday_multiplier <= 0 || weather_multiplier <= 0)
      throw ValidationError("synth: multipliers must be positive");
    if (weather_probability < 0 || weather_probability > 1)
      throw ValidationError("synth: weather probability must be in [0,1]");
    if (coupling_weight < 0 || coupling_weight > 1)
      throw ValidationError("synth: coupling weight must be in [0,1]");
    if (noise_level < 0) throw ValidationError("synth: noise level must be >= 0");
    if (vital_boost < 0) throw ValidationError("synth: vital boost must be >= 0");
  }

  DateRange range() const { return {start, start + (days - 1)}; }
};

struct Network {
  std::vector<StationProfile> profiles;
  DistanceTable distances;

  std::vector<std::string> station_ids() const {
    std::vector<std::string> ids;
    ids.reserve(profiles.size());
    for (const auto& p : profiles) ids.push_back(p.station_id);
    return ids;
  }
};

// Random connected route graph (spanning tree plus a few chords) with
// integer edge lengths; the distance table is all-pairs shortest paths,
// hence symmetric and triangle consistent. Integer kilometres survive the
// CSV round trip exactly.
inline Network generate_network(const SynthConfig& cfg) {
  cfg.validate();
  SplitMix64 rng = SplitMix64(cfg.seed).fork(0x6e65);
  const int L = cfg.stations;

  Network net;
  for (int i = 0; i < L; ++i) {
    char id[16], name[32];
    std::snprintf(id, sizeof(id), "S%03d", i + 1);
    std::snprintf(name, sizeof(name), "Station %03d", i + 1);
    const int region = static_cast<int>(rng.range(1, cfg.regions));
    net.profiles.push_back({id, name, "R" + std::to_string(region)});
  }

  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> dist(static_cast<std::size_t>(L) * L, inf);
  auto d = [&](int a, int b) -> double& { return dist[static_cast<std::size_t>(a) * L + b]; };
  for (int i = 0; i < L; ++i) d(i, i) = 0.0;
  auto add_edge = [&](int a, int b, double w) {
    if (w < d(a, b)) d(a, b) = d(b, a) = w;
  };
  for (int i = 1; i < L; ++i)
    add_edge(i, static_cast<int>(rng.range(0, i - 1)), static_cast<double>(rng.range(8, 45)));
  for (int e = 0; e < std::max(1, L / 4); ++e) {
    const int a = static_cast<int>(rng.range(0, L - 1));
    const int b = static_cast<int>(rng.range(0, L - 1));
    if (a != b) add_edge(a, b, static_cast<double>(rng.range(8, 45)));
  }
  for (int k = 0; k < L; ++k)
    for (int i = 0; i < L; ++i)
      for (int j = 0; j < L; ++j)
        if (d(i, k) + d(k, j) < d(i, j)) d(i, j) = d(i, k) + d(k, j);

  for (int i = 0; i < L; ++i)
    for (int j = i + 1; j < L; ++j)
      net.distances.put(net.profiles[i].station_id, net.profiles[j].station_id, d(i, j));
  return net;
}

// Every latent factor behind a generated panel, kept for test assertions.
struct GroundTruth {
  std::vector<std::string> stations;
  std::vector<std::string> regions;      // per station
  std::vector<double> base_exit;
  std::vector<double> base_entry;
  std::map<std::string, std::vector<std::string>> upstream;  // designated, not discovered
  std::vector<double> calendar_factor;                       // per day
  std::map<std::string, std::vector<std::uint8_t>> weather_event;  // region -> per day
  int vital_station = -1;
  double weather_multiplier = 1.0;
  double coupling_weight = 0.0;
  double noise_level = 0.0;
};

struct SynthPanel {
  VolumePanel panel;
  WeatherTable weather;
  ingest::CalendarTable calendar;
  GroundTruth truth;
};

namespace detail {

// Scales `raw` so its rounded values sum to `target` (largest remainder,
// ties to the lower index).
inline std::vector<std::int64_t> apportion(const std::vector<double>& raw, std::int64_t target) {
  const double total = std::accumulate(raw.begin(), raw.end(), 0.0);
  std::vector<std::int64_t> out(raw.size(), 0);
  if (target <= 0 || total <= 0.0) return out;
  std::vector<double> scaled(raw.size());
  std::int64_t floor_sum = 0;
  for (std::size_t i = 0; i < raw.size(); ++i) {
    scaled[i] = raw[i] * static_cast<double>(target) / total;
    out[i] = static_cast<std::int64_t>(std::floor(scaled[i]));
    floor_sum += out[i];
  }
  std::vector<std::size_t> order(raw.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return scaled[a] - std::floor(scaled[a]) > scaled[b] - std::floor(scaled[b]);
  });
  for (std::int64_t r = target - floor_sum, i = 0; r > 0; --r, ++i) ++out[order[i % order.size()]];
  return out;
}

}  // namespace detail

inline SynthPanel generate_panel(const Network& net, const SynthConfig& cfg) {
  cfg.validate();
  const int L = cfg.stations;
  const int D = cfg.days;
  if (static_cast<int>(net.profiles.size()) != L)
    throw ValidationError("generate_panel: network size does not match config");

  SynthPanel out;
  GroundTruth& gt = out.truth;
  gt.stations = net.station_ids();
  gt.weather_multiplier = cfg.weather_multiplier;
  gt.coupling_weight = cfg.coupling_weight;
  gt.noise_level = cfg.noise_level;
  for (const auto& p : net.profiles) gt.regions.push_back(p.region);

  // Station base levels.
  SplitMix64 base_rng = SplitMix64(cfg.seed).fork(0xba5e);
  gt.base_exit.resize(L);
  gt.base_entry.resize(L);
  for (int l = 0; l < L; ++l) {
    gt.base_exit[l] = std::exp(base_rng.normal(cfg.base_log_mean, cfg.base_log_sigma));
    gt.base_entry[l] = gt.base_exit[l] * base_rng.uniform(0.85, 1.15);
  }
  if (cfg.vital_boost > 0.0) {
    std::vector<double> sorted = gt.base_exit;
    std::sort(sorted.begin(), sorted.end());
    const double median = sorted[sorted.size() / 2];
    gt.base_exit[0] = cfg.vital_boost * median;
    gt.base_entry[0] = gt.base_exit[0] * base_rng.uniform(0.85, 1.15);
    gt.vital_station = 0;
  }

  // Designated upstream stations: the three whose distance from l is closest
  // to the median distance, mirroring how dependent stations are discovered.
  const int eta_true = 3;
  for (int l = 0; l < L; ++l) {
    std::vector<std::pair<double, std::string>> others;
    std::vector<double> ds;
    for (int j = 0; j < L; ++j) {
      if (j == l) continue;
      const double dj = net.distances.at(gt.stations[l], gt.stations[j]);
      others.emplace_back(dj, gt.stations[j]);
      ds.push_back(dj);
    }
    std::sort(ds.begin(), ds.end());
    const double target = ds[ds.size() / 2];
    std::sort(others.begin(), others.end(), [&](const auto& a, const auto& b) {
      const double da = std::fabs(a.first - target), db = std::fabs(b.first - target);
      return da != db ? da < db : a.second < b.second;
    });
    std::vector<std::string>& ups = gt.upstream[gt.stations[l]];
    for (int j = 0; j < eta_true && j < static_cast<int>(others.size()); ++j)
      ups.push_back(others[j].second);
  }

  // Calendar: weekends from the date, holiday blocks drawn from the seed.
  SplitMix64 cal_rng = SplitMix64(cfg.seed).fork(0xca1e);
  const int blocks = std::max(1, D / 60);
  for (int b = 0; b < blocks; ++b) {
    const int start = static_cast<int>(cal_rng.range(0, D - 1));
    const int len = static_cast<int>(cal_rng.range(2, 5));
    for (int i = start; i < std::min(D, start + len); ++i)
      out.calendar.holidays.insert((cfg.start + i).days);
  }
  gt.calendar_factor.resize(D);
  for (int d = 0; d < D; ++d) {
    const Date day = cfg.start + d;
    gt.calendar_factor[d] = out.calendar.is_holiday(day) ? cfg.holiday_multiplier
                            : day.is_weekend()           ? cfg.weekend_multiplier
                                                         : 1.0;
  }

  // Weather: quiet levels below the extreme thresholds unless an event fires.
  SplitMix64 wx_rng = SplitMix64(cfg.seed).fork(0x7ea7);
  std::vector<std::string> region_ids;
  for (int r = 1; r <= cfg.regions; ++r) region_ids.push_back("R" + std::to_string(r));
  for (const std::string& region : region_ids) {
    auto& events = gt.weather_event[region];
    events.assign(D, 0);
    for (int d = 0; d < D; ++d) {
      WeatherLevels w;
      w.visibility = static_cast<int>(wx_rng.range(0, 1));
      w.rain = static_cast<int>(wx_rng.range(0, 1));
      w.snow = 0;
      w.wind = static_cast<int>(wx_rng.range(0, 2));
      w.temperature = static_cast<int>(wx_rng.range(0, 2));
      const bool event = wx_rng.uniform() < cfg.weather_probability;
      if (event) {
        events[d] = 1;
        switch (wx_rng.range(0, 4)) {
          case 0: w.visibility = static_cast<int>(wx_rng.range(2, 4)); break;
          case 1: w.rain = static_cast<int>(wx_rng.range(2, 4)); break;
          case 2: w.snow = static_cast<int>(wx_rng.range(2, 4)); break;
          case 3: w.wind = static_cast<int>(wx_rng.range(3, 4)); break;
          default: w.temperature = static_cast<int>(wx_rng.range(3, 4)); break;
        }
      }
      out.weather.put(region, cfg.start + d, w);
    }
  }

  // Volumes. Entry flows carry each station's own calendar/weather/noise
  // pattern; exit flows mix the station's own pattern with the mean relative
  // entry pattern of its designated upstream stations, so upstream entry
  // history genuinely carries signal about exit volumes.
  SplitMix64 noise_rng = SplitMix64(cfg.seed).fork(0x0153);
  std::vector<int> region_of(L);
  for (int l = 0; l < L; ++l)
    region_of[l] = static_cast<int>(std::find(region_ids.begin(), region_ids.end(), gt.regions[l]) -
                                    region_ids.begin());

  std::vector<double> rel_entry(static_cast<std::size_t>(L) * D);
  std::vector<double> raw_entry(static_cast<std::size_t>(L) * D);
  for (int l = 0; l < L; ++l) {
    for (int d = 0; d < D; ++d) {
      const double wfac = gt.weather_event[region_ids[region_of[l]]][d] ? cfg.weather_multiplier : 1.0;
      const double eps = cfg.noise_level > 0 ? std::exp(noise_rng.normal(0.0, cfg.noise_level))
                                             : (noise_rng.next(), 1.0);
      const double rel = gt.calendar_factor[d] * wfac * eps;
      rel_entry[static_cast<std::size_t>(l) * D + d] = rel;
      raw_entry[static_cast<std::size_t>(l) * D + d] = gt.base_entry[l] * rel;
    }
  }

  out.panel = VolumePanel::zeros(gt.stations, cfg.range());
  for (int l = 0; l < L; ++l) {
    const auto& ups = gt.upstream[gt.stations[l]];
    std::vector<int> up_idx;
    for (const auto& u : ups)
      up_idx.push_back(out.panel.station_index.at(u));
    for (int d = 0; d < D; ++d) {
      const double wfac = gt.weather_event[region_ids[region_of[l]]][d] ? cfg.weather_multiplier : 1.0;
      const double eps = cfg.noise_level > 0 ? std::exp(noise_rng.normal(0.0, cfg.noise_level))
                                             : (noise_rng.next(), 1.0);
      const double own = gt.calendar_factor[d] * wfac * eps;
      double up_mean = 0.0;
      for (int u : up_idx) up_mean += rel_entry[static_cast<std::size_t>(u) * D + d];
      up_mean /= static_cast<double>(up_idx.size());
      const double rel = (1.0 - cfg.coupling_weight) * own + cfg.coupling_weight * up_mean;
      out.panel.xtf(l, d) = std::llround(gt.base_exit[l] * rel);
    }
  }

  // Balance each day's entry total to the exit total so record expansion is
  // always feasible.
  std::vector<double> raw_day(L);
  for (int d = 0; d < D; ++d) {
    std::int64_t exit_total = 0;
    for (int l = 0; l < L; ++l) exit_total += out.panel.xtf(l, d);
    for (int l = 0; l < L; ++l) raw_day[l] = raw_entry[static_cast<std::size_t>(l) * D + d];
    const std::vector<std::int64_t> entries = detail::apportion(raw_day, exit_total);
    for (int l = 0; l < L; ++l) out.panel.ntf(l, d) = entries[l];
  }
  return out;
}

// Expands a day-balanced panel into individual toll records whose daily
// aggregation reproduces the panel exactly. Entry stations are drawn with
// preference for the designated upstream stations, constrained to each
// day's remaining entry budget.
inline std::vector<TollRecord> expand_to_records(
    const VolumePanel& panel, const Network& net, std::uint64_t seed,
    const std::map<std::string, std::vector<std::string>>* preferred_upstream = nullptr) {
  const int L = panel.size();
  const int D = panel.num_days;
  for (int d = 0; d < D; ++d) {
    std::int64_t x = 0, n = 0;
    for (int l = 0; l < L; ++l) {
      x += panel.xtf(l, d);
      n += panel.ntf(l, d);
    }
    if (x != n)
      throw ValidationError("expand_to_records: day " + (panel.first_day + d).iso() +
                            " entry/exit totals differ (" + std::to_string(n) + " vs " +
                            std::to_string(x) + ")");
  }

  std::vector<std::vector<int>> preferred_idx(L);
  if (preferred_upstream) {
    for (int l = 0; l < L; ++l) {
      auto it = preferred_upstream->find(panel.stations[l]);
      if (it == preferred_upstream->end()) continue;
      for (const auto& u : it->second)
        if (auto sit = panel.station_index.find(u); sit != panel.station_index.end())
          preferred_idx[l].push_back(sit->second);
    }
  }

  std::vector<TollRecord> records;
  SplitMix64 seed_rng(seed);
  std::vector<std::int64_t> budget(L);
  for (int d = 0; d < D; ++d) {
    SplitMix64 rng = seed_rng.fork(static_cast<std::uint64_t>(d) + 1);
    for (int l = 0; l < L; ++l) budget[l] = panel.ntf(l, d);
    std::int64_t remaining = std::accumulate(budget.begin(), budget.end(), std::int64_t{0});
    const Date day = panel.first_day + d;

    for (int l = 0; l < L; ++l) {
      for (std::int64_t r = 0; r < panel.xtf(l, d); ++r) {
        // Weighted draw by remaining budget; 75% of trips try upstream first.
        int entry = -1;
        std::int64_t pref_total = 0;
        for (int u : preferred_idx[l]) pref_total += budget[u];
        if (pref_total > 0 && rng.uniform() < 0.75) {
          std::int64_t pick = rng.range(1, pref_total);
          for (int u : preferred_idx[l]) {
            pick -= budget[u];
            if (pick <= 0) {
              entry = u;
              break;
            }
          }
        } else {
          std::int64_t pick = rng.range(1, remaining);
          for (int u = 0; u < L; ++u) {
            pick -= budget[u];
            if (pick <= 0) {
              entry = u;
              break;
            }
          }
        }
        --budget[entry];
        --remaining;

        const double km = net.distances.at(panel.stations[entry], panel.stations[l]);
        const int duration = 240 + static_cast<int>(km * 40.0) + static_cast<int>(rng.range(0, 600));
        const int entry_sec = static_cast<int>(rng.range(0, 86399 - std::min(duration, 80000)));
        const int exit_sec = std::min(entry_sec + duration, 86399);

        TollRecord rec;
        char buf[24];
        std::snprintf(buf, sizeof(buf), "C%04d", static_cast<int>(rng.range(0, 9999)));
        rec.collector_id = buf;
        std::snprintf(buf, sizeof(buf), "V%06llx",
                      static_cast<unsigned long long>(rng.next() & 0xffffff));
        rec.vehicle_license = buf;
        rec.vehicle_type = static_cast<int>(rng.range(1, 4));
        std::snprintf(buf, sizeof(buf), "P%08d", static_cast<int>(rng.range(0, 99999999)));
        rec.card_id = buf;
        std::snprintf(buf, sizeof(buf), "E%05d", static_cast<int>(rng.range(0, 99999)));
        rec.etc_id = buf;
        std::snprintf(buf, sizeof(buf), "U%05d", static_cast<int>(rng.range(0, 99999)));
        rec.etc_cpu_id = buf;
        rec.entry_time = {day, entry_sec};
        rec.exit_time = {day, exit_sec};
        rec.entry_station = panel.stations[entry];
        rec.entry_lane = static_cast<int>(rng.range(1, 4));
        rec.exit_station = panel.stations[l];
        rec.exit_lane = static_cast<int>(rng.range(1, 4));
        records.push_back(std::move(rec));
      }
    }
    if (remaining != 0)
      throw NumericError("expand_to_records: entry budget not fully consumed on " + day.iso());
  }
  return records;
}

inline nlohmann::json ground_truth_to_json(const GroundTruth& gt) {
  nlohmann::json j;
  j["stations"] = gt.stations;
  j["regions"] = gt.regions;
  j["base_exit"] = gt.base_exit;
  j["base_entry"] = gt.base_entry;
  j["upstream"] = gt.upstream;
  j["calendar_factor"] = gt.calendar_factor;
  j["weather_event"] = gt.weather_event;
  j["vital_station"] = gt.vital_station;
  j["weather_multiplier"] = gt.weather_multiplier;
  j["coupling_weight"] = gt.coupling_weight;
  j["noise_level"] = gt.noise_level;
  return j;
}

// Writes the five ingest CSVs plus ground_truth.json into `dir`.
inline void write_synth_csvs(const std::filesystem::path& dir, const Network& net,
                             const SynthPanel& sp, std::uint64_t seed) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  auto open = [&](const char* name) {
    std::ofstream os(dir / name, std::ios::binary);
    if (!os) throw IoError(std::string("cannot write ") + name);
    return os;
  };

  {
    auto os = open("stations.csv");
    csv::write_row(os, std::vector<std::string>{"station_id", "name", "region"});
    for (const auto& p : net.profiles)
      csv::write_row(os, std::vector<std::string>{p.station_id, p.name, p.region});
  }
  {
    auto os = open("distances.csv");
    csv::write_row(os, std::vector<std::string>{"from_station", "to_station", "km"});
    for (const auto& [key, km] : net.distances.km) {
      char buf[32];
      std::snprintf(buf, sizeof(buf), "%.0f", km);
      csv::write_row(os, std::vector<std::string>{key.first, key.second, buf});
    }
  }
  {
    auto os = open("weather.csv");
    csv::write_row(os, std::vector<std::string>{"region", "date", "visibility_level", "rain_level",
                                                "snow_level", "wind_level", "temperature_level"});
    for (const auto& [key, w] : sp.weather.rows)
      csv::write_row(os, std::vector<std::string>{
                             key.first, Date{key.second}.iso(), std::to_string(w.visibility),
                             std::to_string(w.rain), std::to_string(w.snow), std::to_string(w.wind),
                             std::to_string(w.temperature)});
  }
  {
    auto os = open("calendar.csv");
    csv::write_row(os, std::vector<std::string>{"date", "kind"});
    for (std::int32_t d : sp.calendar.holidays)
      csv::write_row(os, std::vector<std::string>{Date{d}.iso(), "holiday"});
  }
  {
    auto os = open("toll.csv");
    const auto records = expand_to_records(sp.panel, net, seed, &sp.truth.upstream);
    ingest::serialize_toll_records(os, records);
  }
  {
    auto os = open("ground_truth.json");
    os << ground_truth_to_json(sp.truth).dump(1) << "\n";
  }
}

}  // namespace phdst::synth
