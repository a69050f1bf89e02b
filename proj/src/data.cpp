#include "aru/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "aru/rng.hpp"

namespace aru {

namespace {

std::vector<std::string> split_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::stringstream ss(line);
  while (std::getline(ss, cell, ',')) out.push_back(cell);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

double parse_double(const std::string& s, long line_no, const std::string& col) {
  try {
    std::size_t used = 0;
    double v = std::stod(s, &used);
    if (used != s.size()) throw std::invalid_argument("trailing characters");
    return v;
  } catch (const std::exception&) {
    throw std::runtime_error("csv line " + std::to_string(line_no) +
                             ": cannot parse '" + s + "' in column " + col);
  }
}

long long parse_int(const std::string& s, long line_no, const std::string& col) {
  long long v = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size())
    throw std::runtime_error("csv line " + std::to_string(line_no) +
                             ": cannot parse '" + s + "' in column " + col);
  return v;
}

long long floor_div(long long a, long long b) {
  long long q = a / b, r = a % b;
  return (r != 0 && (r < 0) != (b < 0)) ? q - 1 : q;
}

struct CivilDate {
  int year;
  unsigned month;  // 1..12
  unsigned day;    // 1..31
};

// Howard Hinnant's civil-from-days; proleptic Gregorian, day 0 = 1970-01-01.
CivilDate civil_from_days(long long z) {
  z += 719468;
  const long long era = (z >= 0 ? z : z - 146096) / 146097;
  const unsigned doe = static_cast<unsigned>(z - era * 146097);
  const unsigned yoe = (doe - doe / 1460 + doe / 36524 - doe / 146096) / 365;
  const long long y = static_cast<long long>(yoe) + era * 400;
  const unsigned doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
  const unsigned mp = (5 * doy + 2) / 153;
  const unsigned d = doy - (153 * mp + 2) / 5 + 1;
  const unsigned m = mp < 10 ? mp + 3 : mp - 9;
  return {static_cast<int>(y + (m <= 2)), m, d};
}

long long days_from_civil(int y, unsigned m, unsigned d) {
  y -= m <= 2;
  const long long era = (y >= 0 ? y : y - 399) / 400;
  const unsigned yoe = static_cast<unsigned>(y - era * 400);
  const unsigned doy = (153 * (m + (m > 2 ? -3 : 9)) + 2) / 5 + d - 1;
  const unsigned doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
  return era * 146097 + static_cast<long long>(doe) - 719468;
}

int day_of_week(long long days) {  // Monday = 0; day 0 was a Thursday
  return static_cast<int>(((days + 3) % 7 + 7) % 7);
}

}  // namespace

Dataset load_csv(const std::string& path,
                 const std::vector<std::string>& categoricals) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);

  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error(path + ": empty file");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  const std::vector<std::string> header = split_line(line);

  auto col_of = [&](const std::string& name) {
    auto it = std::find(header.begin(), header.end(), name);
    return it == header.end() ? -1 : static_cast<int>(it - header.begin());
  };
  const int id_col = col_of("series_id");
  const int t_col = col_of("timestamp");
  const int y_col = col_of("y");
  if (id_col < 0 || t_col < 0 || y_col < 0)
    throw std::runtime_error(path + ": header must name series_id, timestamp, y");

  Dataset ds;
  std::vector<int> cont_cols, cat_cols;
  for (int c = 0; c < static_cast<int>(header.size()); ++c) {
    if (c == id_col || c == t_col || c == y_col) continue;
    const bool is_cat = std::find(categoricals.begin(), categoricals.end(),
                                  header[c]) != categoricals.end();
    if (is_cat) {
      cat_cols.push_back(c);
      ds.cat_names.push_back(header[c]);
    } else {
      cont_cols.push_back(c);
      ds.cont_names.push_back(header[c]);
    }
  }
  for (const std::string& name : categoricals)
    if (std::find(header.begin(), header.end(), name) == header.end())
      throw std::runtime_error(path + ": categorical column '" + name +
                               "' not in header");

  struct Row {
    long long t;
    double y;
    std::vector<double> cont;
    std::vector<int> cat;
  };
  std::map<std::string, std::vector<Row>> grouped;

  long line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const std::vector<std::string> cells = split_line(line);
    if (cells.size() != header.size())
      throw std::runtime_error("csv line " + std::to_string(line_no) + ": expected " +
                               std::to_string(header.size()) + " cells, got " +
                               std::to_string(cells.size()));
    Row row;
    row.t = parse_int(cells[t_col], line_no, "timestamp");
    row.y = parse_double(cells[y_col], line_no, "y");
    for (std::size_t i = 0; i < cont_cols.size(); ++i)
      row.cont.push_back(parse_double(cells[cont_cols[i]], line_no, ds.cont_names[i]));
    for (std::size_t i = 0; i < cat_cols.size(); ++i) {
      const long long v = parse_int(cells[cat_cols[i]], line_no, ds.cat_names[i]);
      if (v < 0)
        throw std::runtime_error("csv line " + std::to_string(line_no) +
                                 ": negative categorical code");
      row.cat.push_back(static_cast<int>(v));
    }
    grouped[cells[id_col]].push_back(std::move(row));
  }

  for (auto& [id, rows] : grouped) {
    std::stable_sort(rows.begin(), rows.end(),
                     [](const Row& a, const Row& b) { return a.t < b.t; });
    Series s;
    s.id = id;
    s.cont.resize(cont_cols.size());
    s.cat.resize(cat_cols.size());
    long long spacing = 0;
    for (std::size_t r = 0; r < rows.size(); ++r) {
      if (r > 0) {
        const long long d = rows[r].t - rows[r - 1].t;
        if (d <= 0)
          throw std::runtime_error("series " + id + ": duplicate timestamp " +
                                   std::to_string(rows[r].t));
        if (r == 1) spacing = d;
        if (d != spacing)
          throw std::runtime_error("series " + id + ": irregular spacing at timestamp " +
                                   std::to_string(rows[r].t));
      }
      s.t.push_back(rows[r].t);
      s.y.push_back(rows[r].y);
      for (std::size_t i = 0; i < cont_cols.size(); ++i) s.cont[i].push_back(rows[r].cont[i]);
      for (std::size_t i = 0; i < cat_cols.size(); ++i) s.cat[i].push_back(rows[r].cat[i]);
    }
    ds.series.push_back(std::move(s));
  }
  return ds;
}

void write_csv(const Dataset& ds, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << "series_id,timestamp,y";
  for (const std::string& n : ds.cont_names) out << ',' << n;
  for (const std::string& n : ds.cat_names) out << ',' << n;
  out << '\n';
  out.precision(17);
  for (const Series& s : ds.series) {
    for (long i = 0; i < s.length(); ++i) {
      out << s.id << ',' << s.t[i] << ',' << s.y[i];
      for (const auto& col : s.cont) out << ',' << col[i];
      for (const auto& col : s.cat) out << ',' << col[i];
      out << '\n';
    }
  }
  if (!out) throw std::runtime_error("write failed for " + path);
}

Granularity granularity_from_string(const std::string& name) {
  if (name == "hourly") return Granularity::Hourly;
  if (name == "daily") return Granularity::Daily;
  if (name == "weekly") return Granularity::Weekly;
  if (name == "monthly") return Granularity::Monthly;
  throw std::invalid_argument("unknown granularity: " + name);
}

std::string to_string(Granularity g) {
  switch (g) {
    case Granularity::Hourly: return "hourly";
    case Granularity::Daily: return "daily";
    case Granularity::Weekly: return "weekly";
    case Granularity::Monthly: return "monthly";
  }
  return "?";
}

TimeFeatureSchema time_feature_schema(Granularity g) {
  switch (g) {
    case Granularity::Hourly:
      return {{"hour_of_day", "day_of_week", "month_of_year"}, {24, 7, 12}};
    case Granularity::Daily:
      return {{"day_of_month", "month_of_year"}, {31, 12}};
    case Granularity::Weekly:
      return {{"month_of_year", "week_of_year"}, {12, 53}};
    case Granularity::Monthly:
      return {{"month_of_year"}, {12}};
  }
  return {};
}

std::vector<int> time_features(long long timestamp, Granularity g) {
  if (g == Granularity::Monthly) {
    // timestamp is months since 1970-01
    return {static_cast<int>(((timestamp % 12) + 12) % 12)};
  }
  const long long seconds = timestamp;
  const long long days = floor_div(seconds, 86400);
  const CivilDate cd = civil_from_days(days);
  const int month = static_cast<int>(cd.month) - 1;
  switch (g) {
    case Granularity::Hourly: {
      const int hour = static_cast<int>(((seconds % 86400) + 86400) % 86400 / 3600);
      return {hour, day_of_week(days), month};
    }
    case Granularity::Daily:
      return {static_cast<int>(cd.day) - 1, month};
    case Granularity::Weekly: {
      const long long jan1 = days_from_civil(cd.year, 1, 1);
      const int week = static_cast<int>((days - jan1) / 7);
      return {month, week};
    }
    default:
      return {};
  }
}

Dataset add_time_features(const Dataset& ds, Granularity g) {
  const TimeFeatureSchema schema = time_feature_schema(g);
  Dataset out = ds;
  for (const std::string& name : schema.names) out.cat_names.push_back(name);
  for (Series& s : out.series) {
    const std::size_t base = s.cat.size();
    s.cat.resize(base + schema.names.size());
    for (long i = 0; i < s.length(); ++i) {
      const std::vector<int> codes = time_features(s.t[i], g);
      for (std::size_t f = 0; f < codes.size(); ++f) s.cat[base + f].push_back(codes[f]);
    }
  }
  return out;
}

double scale_continuous(double x, const ScalerState::Range& r) {
  const double span = r.max - r.min;
  const double scaled = span > 0.0 ? (x - r.min) / span : 0.0;
  return std::clamp(scaled, -0.5, 1.5);
}

double target_scale(const double* y, long n) {
  if (n <= 0) throw std::invalid_argument("target_scale: empty range");
  const double mean = std::accumulate(y, y + n, 0.0) / static_cast<double>(n);
  double scale = 1.0 + mean;
  if (std::abs(scale) < 1.0) scale = scale < 0.0 ? -1.0 : 1.0;
  return scale;
}

ScalerState fit_scalers(const Dataset& ds, const std::vector<long>& train_end) {
  if (train_end.size() != ds.series.size())
    throw std::invalid_argument("fit_scalers: bounds/series mismatch");
  ScalerState sc;
  sc.cont.resize(ds.cont_names.size());
  bool any = false;
  for (std::size_t f = 0; f < ds.cont_names.size(); ++f) {
    double lo = std::numeric_limits<double>::infinity();
    double hi = -lo;
    for (std::size_t i = 0; i < ds.series.size(); ++i) {
      for (long t = 0; t < train_end[i]; ++t) {
        lo = std::min(lo, ds.series[i].cont[f][t]);
        hi = std::max(hi, ds.series[i].cont[f][t]);
      }
    }
    sc.cont[f] = {lo, hi};
  }
  for (std::size_t i = 0; i < ds.series.size(); ++i) {
    if (train_end[i] <= 0)
      throw std::invalid_argument("fit_scalers: empty training slice for series " +
                                  ds.series[i].id);
    any = true;
    sc.y_scale.push_back(target_scale(ds.series[i].y.data(), train_end[i]));
  }
  if (!any) throw std::invalid_argument("fit_scalers: empty training slice");
  return sc;
}

Dataset apply_scalers(const Dataset& ds, const ScalerState& sc) {
  Dataset out = ds;
  for (std::size_t i = 0; i < out.series.size(); ++i) {
    Series& s = out.series[i];
    for (std::size_t f = 0; f < s.cont.size(); ++f)
      for (double& x : s.cont[f]) x = scale_continuous(x, sc.cont[f]);
    const double scale = sc.y_scale[i];
    for (double& v : s.y) v /= scale;
  }
  return out;
}

SynthDataset synth_generate(const SynthConfig& cfg) {
  if (!(cfg.gamma > 0.0)) throw std::invalid_argument("synth: gamma must be positive");
  if (cfg.n_series < 1 || cfg.length < 1)
    throw std::invalid_argument("synth: need at least one series and one step");

  SynthDataset out;
  Dataset& ds = out.data;
  for (int h = 0; h < 24; ++h) ds.cont_names.push_back("hod_" + std::to_string(h));
  for (int d = 0; d < 7; ++d) ds.cont_names.push_back("dow_" + std::to_string(d));
  if (cfg.with_series_id) ds.cat_names.push_back("sid");

  constexpr int kDim = 24 + 7 + 1;
  for (int i = 0; i < cfg.n_series; ++i) {
    Rng theta_rng(cfg.seed, "synth/theta/" + std::to_string(i));
    Rng noise_rng(cfg.seed, "synth/noise/" + std::to_string(i));
    Vector theta(kDim);
    for (int k = 0; k < kDim; ++k) theta[k] = theta_rng.uniform(-cfg.gamma, cfg.gamma);
    out.theta.push_back(theta);

    Series s;
    s.id = "s" + std::to_string(i);
    s.cont.resize(ds.cont_names.size());
    if (cfg.with_series_id) s.cat.resize(1);
    for (long t = 0; t < cfg.length; ++t) {
      const long long ts = 3600LL * t;
      const auto tf = time_features(ts, Granularity::Hourly);
      const int hod = tf[0], dow = tf[1];
      double y = theta[hod] + theta[24 + dow] + theta[31];
      y += cfg.noise_sigma * noise_rng.normal();
      s.t.push_back(ts);
      s.y.push_back(y);
      for (int h = 0; h < 24; ++h) s.cont[h].push_back(h == hod ? 1.0 : 0.0);
      for (int d = 0; d < 7; ++d) s.cont[24 + d].push_back(d == dow ? 1.0 : 0.0);
      if (cfg.with_series_id) s.cat[0].push_back(i);
    }
    ds.series.push_back(std::move(s));
  }
  return out;
}

SplitBounds split(const Dataset& ds, const SplitSpec& spec) {
  SplitBounds bounds;
  const long k = spec.horizon;
  const long test_len = spec.protocol == Protocol::Fixed ? k : k * spec.n_rolls;
  for (const Series& s : ds.series) {
    const long t = s.length();
    if (t < spec.encoder_len + k)
      throw std::runtime_error("series " + s.id + " too short: length " +
                               std::to_string(t) + " < encoder+horizon " +
                               std::to_string(spec.encoder_len + k));
    const long val_end = t - test_len;
    const long train_end = val_end - test_len;
    if (train_end < spec.encoder_len + k)
      throw std::runtime_error("series " + s.id +
                               " too short for split: training range " +
                               std::to_string(train_end) + " cannot hold a window");
    bounds.train_end.push_back(train_end);
    bounds.val_end.push_back(val_end);
  }
  return bounds;
}

}  // namespace aru
