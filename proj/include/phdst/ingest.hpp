#pragma once

// Raw-data ingestion: toll-record parsing, daily volume aggregation and the
// external weather / calendar / station / distance tables.

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "phdst/csv.hpp"
#include "phdst/date.hpp"
#include "phdst/error.hpp"

namespace phdst::ingest {

// One vehicle passage. Entity fields are opaque, possibly anonymized,
// but never empty.
struct TollRecord {
  std::string collector_id;
  std::string vehicle_license;
  int vehicle_type = 0;
  std::string card_id;
  std::string etc_id;
  std::string etc_cpu_id;
  DateTime entry_time;
  DateTime exit_time;
  std::string entry_station;
  int entry_lane = 0;
  std::string exit_station;
  int exit_lane = 0;

  friend bool operator==(const TollRecord&, const TollRecord&) = default;
};

inline const std::vector<std::string>& toll_header() {
  static const std::vector<std::string> h = {
      "collector_id", "vehicle_license", "vehicle_type", "card_id",
      "etc_id",       "etc_cpu_id",      "entry_time",   "exit_time",
      "entry_station", "entry_lane",     "exit_station", "exit_lane"};
  return h;
}

struct Rejection {
  std::size_t row;  // 1-based data row number (header excluded)
  std::string reason;
};

struct ParseResult {
  std::vector<TollRecord> records;
  std::vector<Rejection> rejections;
  std::size_t rows_seen = 0;
};

struct ParseOptions {
  // Fraction of rejected rows above which the parse is treated as fatal;
  // silently losing more than this would bias the volume counts.
  double rejection_threshold = 0.05;
};

inline ParseResult parse_toll_records(std::istream& in,
                                      const std::unordered_set<std::string>& stations,
                                      const ParseOptions& opts = {}) {
  csv::Reader reader(in);
  std::vector<std::string> header;
  if (!reader.next(header)) throw ValidationError("toll csv: missing header");
  if (header != toll_header()) throw ValidationError("toll csv: header does not match the 12-column toll schema");

  ParseResult result;
  std::vector<std::string> f;
  auto reject = [&](std::size_t row, std::string reason) {
    result.rejections.push_back({row, std::move(reason)});
  };
  std::size_t row = 0;
  while (reader.next(f)) {
    ++row;
    ++result.rows_seen;
    if (f.size() != 12) {
      reject(row, "column count");
      continue;
    }
    if (std::any_of(f.begin(), f.end(), [](const std::string& s) { return s.empty(); })) {
      reject(row, "empty field");
      continue;
    }
    auto entry_time = parse_timestamp(f[6]);
    auto exit_time = parse_timestamp(f[7]);
    if (!entry_time || !exit_time) {
      reject(row, "bad timestamp");
      continue;
    }
    if (*exit_time < *entry_time) {
      reject(row, "time order");
      continue;
    }
    if (!stations.count(f[8]) || !stations.count(f[10])) {
      reject(row, "unknown station");
      continue;
    }
    int vehicle_type = 0, entry_lane = 0, exit_lane = 0;
    try {
      vehicle_type = std::stoi(f[2]);
      entry_lane = std::stoi(f[9]);
      exit_lane = std::stoi(f[11]);
    } catch (const std::exception&) {
      reject(row, "bad integer field");
      continue;
    }
    if (entry_lane <= 0 || exit_lane <= 0) {
      reject(row, "lane not positive");
      continue;
    }
    result.records.push_back(TollRecord{f[0], f[1], vehicle_type, f[3], f[4], f[5], *entry_time,
                                        *exit_time, f[8], entry_lane, f[10], exit_lane});
  }
  if (result.rows_seen > 0) {
    const double rate = static_cast<double>(result.rejections.size()) / result.rows_seen;
    if (rate > opts.rejection_threshold) {
      std::ostringstream msg;
      msg << "toll csv: rejection rate " << rate << " exceeds threshold " << opts.rejection_threshold
          << " (" << result.rejections.size() << "/" << result.rows_seen << " rows)";
      throw ValidationError(msg.str());
    }
  }
  return result;
}

inline void serialize_toll_records(std::ostream& os, std::span<const TollRecord> records) {
  csv::write_row(os, toll_header());
  std::vector<std::string> f(12);
  for (const TollRecord& r : records) {
    f[0] = r.collector_id;
    f[1] = r.vehicle_license;
    f[2] = std::to_string(r.vehicle_type);
    f[3] = r.card_id;
    f[4] = r.etc_id;
    f[5] = r.etc_cpu_id;
    f[6] = format_timestamp(r.entry_time);
    f[7] = format_timestamp(r.exit_time);
    f[8] = r.entry_station;
    f[9] = std::to_string(r.entry_lane);
    f[10] = r.exit_station;
    f[11] = std::to_string(r.exit_lane);
    csv::write_row(os, f);
  }
}

// Per (station, day) exit and entry volume counts over a contiguous
// day range. Matrices are [station x day], row-major.
struct VolumePanel {
  std::vector<std::string> stations;
  Date first_day;
  int num_days = 0;
  std::vector<std::int64_t> exit_counts;   // xTF
  std::vector<std::int64_t> entry_counts;  // nTF
  std::unordered_map<std::string, int> station_index;

  static VolumePanel zeros(std::vector<std::string> stations, DateRange days) {
    if (stations.empty()) throw ValidationError("volume panel: empty station list");
    if (!days.valid()) throw ValidationError("volume panel: empty day range");
    VolumePanel p;
    p.stations = std::move(stations);
    p.first_day = days.first;
    p.num_days = days.size();
    p.exit_counts.assign(p.stations.size() * static_cast<std::size_t>(p.num_days), 0);
    p.entry_counts.assign(p.stations.size() * static_cast<std::size_t>(p.num_days), 0);
    for (std::size_t i = 0; i < p.stations.size(); ++i)
      p.station_index.emplace(p.stations[i], static_cast<int>(i));
    return p;
  }

  int size() const { return static_cast<int>(stations.size()); }
  DateRange days() const { return {first_day, first_day + (num_days - 1)}; }
  int day_offset(Date d) const { return d.days - first_day.days; }
  bool covers(Date d) const { return d >= first_day && day_offset(d) < num_days; }

  std::int64_t& xtf(int station, int day) { return exit_counts[idx(station, day)]; }
  std::int64_t xtf(int station, int day) const { return exit_counts[idx(station, day)]; }
  std::int64_t& ntf(int station, int day) { return entry_counts[idx(station, day)]; }
  std::int64_t ntf(int station, int day) const { return entry_counts[idx(station, day)]; }

 private:
  std::size_t idx(int station, int day) const {
    return static_cast<std::size_t>(station) * num_days + day;
  }
};

inline VolumePanel aggregate_daily_volumes(std::span<const TollRecord> records,
                                           std::vector<std::string> stations, DateRange days) {
  VolumePanel panel = VolumePanel::zeros(std::move(stations), days);
  for (const TollRecord& r : records) {
    if (auto it = panel.station_index.find(r.exit_station);
        it != panel.station_index.end() && panel.covers(r.exit_time.date))
      ++panel.xtf(it->second, panel.day_offset(r.exit_time.date));
    if (auto it = panel.station_index.find(r.entry_station);
        it != panel.station_index.end() && panel.covers(r.entry_time.date))
      ++panel.ntf(it->second, panel.day_offset(r.entry_time.date));
  }
  return panel;
}

struct StationProfile {
  std::string station_id;
  std::string name;
  std::string region;
};

struct WeatherLevels {
  int visibility = 0;
  int rain = 0;
  int snow = 0;
  int wind = 0;
  int temperature = 0;

  friend bool operator==(const WeatherLevels&, const WeatherLevels&) = default;
};

struct WeatherTable {
  std::map<std::pair<std::string, std::int32_t>, WeatherLevels> rows;
  std::set<std::string> regions;

  void put(const std::string& region, Date d, WeatherLevels levels) {
    rows[{region, d.days}] = levels;
    regions.insert(region);
  }
  std::optional<WeatherLevels> get(const std::string& region, Date d) const {
    auto it = rows.find({region, d.days});
    if (it == rows.end()) return std::nullopt;
    return it->second;
  }
};

struct CalendarTable {
  std::set<std::int32_t> holidays;

  bool is_holiday(Date d) const { return holidays.count(d.days) > 0; }
};

// Route distances between station pairs, stored symmetric.
struct DistanceTable {
  std::map<std::pair<std::string, std::string>, double> km;

  static std::pair<std::string, std::string> key(const std::string& a, const std::string& b) {
    return a <= b ? std::make_pair(a, b) : std::make_pair(b, a);
  }
  void put(const std::string& a, const std::string& b, double d) { km[key(a, b)] = d; }
  bool contains(const std::string& a, const std::string& b) const {
    return a == b || km.count(key(a, b)) > 0;
  }
  double at(const std::string& a, const std::string& b) const {
    if (a == b) return 0.0;
    auto it = km.find(key(a, b));
    if (it == km.end()) throw ValidationError("distance table: missing pair " + a + "," + b);
    return it->second;
  }
};

struct ExternalTables {
  WeatherTable weather;
  CalendarTable calendar;
  std::vector<StationProfile> profiles;
  DistanceTable distances;

  std::unordered_map<std::string, std::string> station_regions() const {
    std::unordered_map<std::string, std::string> m;
    for (const auto& p : profiles) m.emplace(p.station_id, p.region);
    return m;
  }
};

struct LoadOptions {
  bool interpolate_weather = false;  // forward-fill gaps instead of failing
};

namespace detail {

inline std::ifstream open_or_throw(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path);
  return in;
}

inline void expect_header(const std::vector<std::string>& got,
                          const std::vector<std::string>& want, const std::string& what) {
  if (got != want) throw ValidationError(what + ": unexpected header");
}

inline int parse_level(const std::string& s, const std::string& what) {
  int v = -1;
  try {
    v = std::stoi(s);
  } catch (const std::exception&) {
    throw ValidationError(what + ": bad severity level '" + s + "'");
  }
  if (v < 0 || v > 4) throw ValidationError(what + ": severity level out of range 0-4");
  return v;
}

}  // namespace detail

inline ExternalTables load_external_tables(const std::string& weather_path,
                                           const std::string& calendar_path,
                                           const std::string& stations_path,
                                           const std::string& distances_path,
                                           const LoadOptions& opts = {},
                                           std::ostream* warnings = nullptr) {
  ExternalTables t;
  std::vector<std::string> f;

  {
    auto in = detail::open_or_throw(stations_path);
    csv::Reader r(in);
    detail::expect_header(r.header(), {"station_id", "name", "region"}, "stations csv");
    std::unordered_set<std::string> seen;
    while (r.next(f)) {
      if (f.size() != 3) throw ValidationError("stations csv: bad column count");
      if (!seen.insert(f[0]).second)
        throw ValidationError("stations csv: duplicate station_id " + f[0]);
      t.profiles.push_back({f[0], f[1], f[2]});
    }
    if (t.profiles.empty()) throw ValidationError("stations csv: no stations");
  }

  {
    auto in = detail::open_or_throw(weather_path);
    csv::Reader r(in);
    detail::expect_header(r.header(),
                          {"region", "date", "visibility_level", "rain_level", "snow_level",
                           "wind_level", "temperature_level"},
                          "weather csv");
    while (r.next(f)) {
      if (f.size() != 7) throw ValidationError("weather csv: bad column count");
      Date d = parse_iso_or_throw(f[1], "weather csv");
      WeatherLevels w{detail::parse_level(f[2], "weather csv"), detail::parse_level(f[3], "weather csv"),
                      detail::parse_level(f[4], "weather csv"), detail::parse_level(f[5], "weather csv"),
                      detail::parse_level(f[6], "weather csv")};
      if (t.weather.get(f[0], d))
        throw ValidationError("weather csv: duplicate row for " + f[0] + " " + d.iso());
      t.weather.put(f[0], d, w);
    }
  }

  // Every region referenced by a station must exist in the weather data.
  for (const auto& p : t.profiles) {
    if (!t.weather.regions.count(p.region))
      throw ValidationError("stations csv: station " + p.station_id + " references unknown region " +
                            p.region);
  }

  // Weather coverage must be contiguous per region over the range the file
  // itself spans; gaps are fatal unless forward-fill was requested.
  if (!t.weather.rows.empty()) {
    Date lo{t.weather.rows.begin()->first.second}, hi{lo};
    for (const auto& [k, v] : t.weather.rows) {
      lo = std::min(lo, Date{k.second});
      hi = std::max(hi, Date{k.second});
    }
    for (const auto& region : t.weather.regions) {
      std::optional<WeatherLevels> prev;
      for (Date d = lo; d <= hi; ++d) {
        auto cur = t.weather.get(region, d);
        if (cur) {
          prev = cur;
          continue;
        }
        if (!opts.interpolate_weather || !prev)
          throw ValidationError("weather csv: missing row for region " + region + " on " + d.iso());
        t.weather.put(region, d, *prev);
        if (warnings) *warnings << "warning: weather forward-filled for " << region << " on "
                                << d.iso() << "\n";
      }
    }
  }

  {
    auto in = detail::open_or_throw(calendar_path);
    csv::Reader r(in);
    detail::expect_header(r.header(), {"date", "kind"}, "calendar csv");
    while (r.next(f)) {
      if (f.size() != 2) throw ValidationError("calendar csv: bad column count");
      if (f[1] != "holiday") throw ValidationError("calendar csv: unknown kind '" + f[1] + "'");
      Date d = parse_iso_or_throw(f[0], "calendar csv");
      if (!t.calendar.holidays.insert(d.days).second)
        throw ValidationError("calendar csv: duplicate holiday " + d.iso());
    }
  }

  {
    auto in = detail::open_or_throw(distances_path);
    csv::Reader r(in);
    detail::expect_header(r.header(), {"from_station", "to_station", "km"}, "distances csv");
    while (r.next(f)) {
      if (f.size() != 3) throw ValidationError("distances csv: bad column count");
      double d = 0;
      try {
        d = std::stod(f[2]);
      } catch (const std::exception&) {
        throw ValidationError("distances csv: bad km value '" + f[2] + "'");
      }
      if (f[0] == f[1]) {
        if (d != 0.0) throw ValidationError("distances csv: self-distance must be 0 for " + f[0]);
        continue;
      }
      if (d <= 0) throw ValidationError("distances csv: non-positive distance " + f[0] + "," + f[1]);
      auto key = DistanceTable::key(f[0], f[1]);
      if (auto it = t.distances.km.find(key); it != t.distances.km.end() && it->second != d)
        throw ValidationError("distances csv: contradictory distance for " + f[0] + "," + f[1]);
      t.distances.km[key] = d;
    }
  }

  return t;
}

struct MileageResult {
  std::map<std::string, double> mean_km;  // stations with no exits are absent
  std::size_t skipped = 0;                // records without a distance entry
};

// Mean trip distance over records exiting each station, optionally
// restricted to exits inside a date range.
inline MileageResult compute_avg_mileage(std::span<const TollRecord> records,
                                         const DistanceTable& distances,
                                         std::optional<DateRange> exit_range = std::nullopt) {
  std::map<std::string, std::pair<double, std::int64_t>> acc;
  MileageResult out;
  for (const TollRecord& r : records) {
    if (exit_range && !exit_range->contains(r.exit_time.date)) continue;
    if (!distances.contains(r.entry_station, r.exit_station)) {
      ++out.skipped;
      continue;
    }
    auto& [sum, n] = acc[r.exit_station];
    sum += distances.at(r.entry_station, r.exit_station);
    ++n;
  }
  for (const auto& [station, sn] : acc) out.mean_km[station] = sn.first / sn.second;
  return out;
}

// --- run-directory artifacts ------------------------------------------------

inline void save_panel_csv(std::ostream& os, const VolumePanel& p) {
  csv::write_row(os, std::vector<std::string>{"station_id", "date", "exit_volume", "entry_volume"});
  std::vector<std::string> f(4);
  for (int l = 0; l < p.size(); ++l) {
    for (int d = 0; d < p.num_days; ++d) {
      f[0] = p.stations[l];
      f[1] = (p.first_day + d).iso();
      f[2] = std::to_string(p.xtf(l, d));
      f[3] = std::to_string(p.ntf(l, d));
      csv::write_row(os, f);
    }
  }
}

inline VolumePanel load_panel_csv(std::istream& in) {
  csv::Reader r(in);
  detail::expect_header(r.header(), {"station_id", "date", "exit_volume", "entry_volume"},
                        "panel csv");
  std::vector<std::string> stations;
  std::unordered_set<std::string> seen;
  std::vector<std::tuple<std::string, Date, std::int64_t, std::int64_t>> rows;
  std::optional<Date> lo, hi;
  std::vector<std::string> f;
  while (r.next(f)) {
    if (f.size() != 4) throw ValidationError("panel csv: bad column count");
    Date d = parse_iso_or_throw(f[1], "panel csv");
    rows.emplace_back(f[0], d, std::stoll(f[2]), std::stoll(f[3]));
    if (seen.insert(f[0]).second) stations.push_back(f[0]);
    lo = lo ? std::min(*lo, d) : d;
    hi = hi ? std::max(*hi, d) : d;
  }
  if (rows.empty()) throw ValidationError("panel csv: empty");
  VolumePanel p = VolumePanel::zeros(std::move(stations), {*lo, *hi});
  for (auto& [station, d, x, n] : rows) {
    int l = p.station_index.at(station);
    p.xtf(l, p.day_offset(d)) = x;
    p.ntf(l, p.day_offset(d)) = n;
  }
  return p;
}

}  // namespace phdst::ingest
