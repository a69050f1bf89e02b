#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>

#include "aru/data.hpp"
#include "aru/rng.hpp"
#include "oracles.hpp"

using namespace aru;

namespace {

std::string temp_csv(const std::string& name, const std::string& body) {
  const auto path = std::filesystem::temp_directory_path() / name;
  std::ofstream out(path);
  out << body;
  return path.string();
}

}  // namespace

TEST_CASE("csv loading groups and sorts") {
  const std::string path = temp_csv("aru_two_series.csv",
                                    "series_id,timestamp,y,temp\n"
                                    "a,0,1.0,10\n"
                                    "b,0,5.0,12\n"
                                    "a,3600,2.0,11\n"
                                    "b,3600,6.0,13\n");
  const Dataset ds = load_csv(path);
  REQUIRE(ds.series.size() == 2);
  CHECK(ds.series[0].id == "a");
  CHECK(ds.series[0].length() == 2);
  CHECK(ds.series[1].length() == 2);
  CHECK(ds.cont_names == std::vector<std::string>{"temp"});
  CHECK(ds.series[0].y[1] == 2.0);

  // Shuffled rows load to the identical dataset.
  const std::string shuffled = temp_csv("aru_shuffled.csv",
                                        "series_id,timestamp,y,temp\n"
                                        "b,3600,6.0,13\n"
                                        "a,3600,2.0,11\n"
                                        "b,0,5.0,12\n"
                                        "a,0,1.0,10\n");
  const Dataset ds2 = load_csv(shuffled);
  REQUIRE(ds2.series.size() == 2);
  for (int i = 0; i < 2; ++i) {
    CHECK(ds2.series[i].id == ds.series[i].id);
    CHECK(ds2.series[i].t == ds.series[i].t);
    CHECK(ds2.series[i].y == ds.series[i].y);
    CHECK(ds2.series[i].cont == ds.series[i].cont);
  }
}

TEST_CASE("csv errors carry context") {
  const std::string missing = temp_csv("aru_missing.csv", "series_id,y\na,1.0\n");
  CHECK_THROWS_WITH_AS(load_csv(missing),
                       doctest::Contains("must name series_id, timestamp, y"),
                       std::runtime_error);

  const std::string bad_row = temp_csv("aru_bad_row.csv",
                                       "series_id,timestamp,y\n"
                                       "a,0,1.0\n"
                                       "a,3600,oops\n");
  CHECK_THROWS_WITH_AS(load_csv(bad_row), doctest::Contains("line 3"), std::runtime_error);

  const std::string gap = temp_csv("aru_gap.csv",
                                   "series_id,timestamp,y\n"
                                   "a,0,1.0\n"
                                   "a,3600,2.0\n"
                                   "a,10800,3.0\n");
  CHECK_THROWS_WITH_AS(load_csv(gap), doctest::Contains("irregular"), std::runtime_error);
}

TEST_CASE("time features at the epoch anchor") {
  auto hourly = time_features(0, Granularity::Hourly);
  CHECK(hourly[0] == 0);  // hour
  CHECK(hourly[1] == 3);  // Thursday, Monday = 0
  CHECK(hourly[2] == 0);  // January

  hourly = time_features(3600, Granularity::Hourly);
  CHECK(hourly[0] == 1);
  CHECK(hourly[1] == 3);
  CHECK(hourly[2] == 0);
}

TEST_CASE("day-of-week has weekly periodicity") {
  Rng rng(3, "data/dow");
  for (int trial = 0; trial < 50; ++trial) {
    const long long t = static_cast<long long>(rng.below(4000000000ull)) - 1000000000;
    const auto a = time_features(t, Granularity::Hourly);
    const auto b = time_features(t + 7 * 86400, Granularity::Hourly);
    CHECK(a[1] == b[1]);
  }
}

TEST_CASE("daily, weekly, monthly schemas") {
  // 2001-03-15 00:00 UTC = 984614400.
  const auto daily = time_features(984614400, Granularity::Daily);
  CHECK(daily[0] == 14);  // day-of-month, zero based
  CHECK(daily[1] == 2);   // March

  const auto weekly = time_features(984614400, Granularity::Weekly);
  CHECK(weekly[0] == 2);
  CHECK(weekly[1] == 73 / 7);  // 73 days into the year

  // Monthly timestamps are months since 1970-01.
  CHECK(time_features(0, Granularity::Monthly)[0] == 0);
  CHECK(time_features(13, Granularity::Monthly)[0] == 1);
  CHECK(time_feature_schema(Granularity::Hourly).cardinalities ==
        std::vector<int>{24, 7, 12});
}

TEST_CASE("target scale formula and scaling round trip") {
  const double ys[] = {1.0, 2.0, 3.0};
  CHECK(target_scale(ys, 3) == doctest::Approx(3.0));

  Dataset ds;
  ds.cont_names = {"flat", "x"};
  Series s;
  s.id = "a";
  for (int i = 0; i < 4; ++i) {
    s.t.push_back(i * 3600);
    s.y.push_back(i + 1.0);
  }
  s.cont = {{5.0, 5.0, 5.0, 5.0}, {0.0, 2.0, 4.0, 8.0}};
  ds.series.push_back(s);

  const ScalerState sc = fit_scalers(ds, {3});
  CHECK(sc.y_scale[0] == doctest::Approx(3.0));  // 1 + mean(1,2,3)
  const Dataset scaled = apply_scalers(ds, sc);
  CHECK(scaled.series[0].cont[0][0] == 0.0);  // constant feature maps to 0
  CHECK(scaled.series[0].cont[1][1] == doctest::Approx(0.5));
  CHECK(scaled.series[0].y[0] == doctest::Approx(1.0 / 3.0));
  CHECK(scaled.series[0].y[2] == doctest::Approx(1.0));

  // Round trip within 1e-12.
  for (int i = 0; i < 4; ++i)
    CHECK(scaled.series[0].y[i] * sc.y_scale[0] ==
          doctest::Approx(ds.series[0].y[i]).epsilon(1e-12));

  // Test-range values beyond the training max are clamped to [-0.5, 1.5].
  CHECK(scaled.series[0].cont[1][3] == doctest::Approx(1.5));
}

TEST_CASE("target scale never amplifies a series") {
  const double near_zero[] = {-1.2, 0.4, 0.2};  // mean -0.2, raw scale 0.8
  CHECK(target_scale(near_zero, 3) == 1.0);
  const double negative[] = {-4.0, -4.0};
  CHECK(target_scale(negative, 2) == -3.0);
}

TEST_CASE("synthetic generator is seeded, linear, and id-toggled") {
  SynthConfig cfg;
  cfg.n_series = 3;
  cfg.length = 400;
  cfg.gamma = 5.0;
  cfg.seed = 99;
  const SynthDataset a = synth_generate(cfg);
  const SynthDataset b = synth_generate(cfg);
  CHECK(a.data.series[1].y == b.data.series[1].y);  // bitwise regeneration
  CHECK(a.data.cont_names.size() == 31);
  CHECK(a.data.cat_names.empty());

  cfg.with_series_id = true;
  const SynthDataset c = synth_generate(cfg);
  CHECK(c.data.cat_names == std::vector<std::string>{"sid"});
  CHECK(c.data.series[2].cat[0][5] == 2);
  // Only the id column differs.
  CHECK(c.data.series[1].y == a.data.series[1].y);
  CHECK(c.data.series[1].cont == a.data.series[1].cont);
}

TEST_CASE("least squares on generated data recovers the generating function") {
  // The one-hot design is rank deficient (hour block, day block and bias sum
  // to the same column), so coordinates are identifiable only up to the null
  // space; the fitted function values are identifiable and must match.
  SynthConfig cfg;
  cfg.n_series = 2;
  cfg.length = 5000;
  cfg.gamma = 20.0;
  cfg.seed = 7;
  const SynthDataset synth = synth_generate(cfg);

  for (int i = 0; i < cfg.n_series; ++i) {
    const Series& s = synth.data.series[i];
    std::vector<oracle::Vec> xs;
    oracle::Vec ys;
    for (long t = 0; t < s.length(); ++t) {
      oracle::Vec x(31);
      for (int f = 0; f < 31; ++f) x[f] = s.cont[f][t];
      xs.push_back(std::move(x));
      ys.push_back(s.y[t]);
    }
    const oracle::Vec theta_hat = oracle::weighted_ridge(xs, ys, 1.0, 1e-8);
    for (int hod = 0; hod < 24; ++hod)
      for (int dow = 0; dow < 7; ++dow) {
        const double truth =
            synth.theta[i][hod] + synth.theta[i][24 + dow] + synth.theta[i][31];
        const double fitted = theta_hat[hod] + theta_hat[24 + dow] + theta_hat[31];
        CHECK(std::abs(fitted - truth) <= 0.6);
      }
  }
}

TEST_CASE("gamma to zero leaves pure noise") {
  SynthConfig cfg;
  cfg.n_series = 1;
  cfg.length = 5000;
  cfg.gamma = 1e-9;
  cfg.seed = 5;
  const SynthDataset synth = synth_generate(cfg);
  double sq = 0;
  for (double y : synth.data.series[0].y) sq += y * y;
  const double rmse_of_zero_predictor = std::sqrt(sq / cfg.length);
  CHECK(rmse_of_zero_predictor == doctest::Approx(1.0).epsilon(0.05));
}

TEST_CASE("chronological split boundaries") {
  Dataset ds;
  Series s;
  s.id = "a";
  for (int i = 0; i < 100; ++i) {
    s.t.push_back(i);
    s.y.push_back(i);
  }
  ds.series.push_back(s);

  SplitSpec spec;
  spec.protocol = Protocol::Fixed;
  spec.horizon = 24;
  spec.encoder_len = 8;
  const SplitBounds b = split(ds, spec);
  CHECK(b.train_end[0] == 52);
  CHECK(b.val_end[0] == 76);

  SplitSpec stream;
  stream.protocol = Protocol::Streaming;
  stream.horizon = 24;
  stream.n_rolls = 7;
  stream.encoder_len = 8;
  Dataset longer;
  Series s2;
  s2.id = "b";
  for (int i = 0; i < 2000; ++i) {
    s2.t.push_back(i);
    s2.y.push_back(0.0);
  }
  longer.series.push_back(s2);
  const SplitBounds bs = split(longer, stream);
  CHECK(bs.val_end[0] == 2000 - 7 * 24);
  CHECK(bs.train_end[0] == 2000 - 2 * 7 * 24);

  SplitSpec tight;
  tight.protocol = Protocol::Fixed;
  tight.horizon = 24;
  tight.encoder_len = 80;
  CHECK_THROWS_WITH_AS(split(ds, tight), doctest::Contains("series a"),
                       std::runtime_error);
}

TEST_CASE("no test-range leakage into scalers") {
  SynthConfig cfg;
  cfg.n_series = 2;
  cfg.length = 300;
  cfg.gamma = 3.0;
  cfg.seed = 17;
  SynthDataset synth = synth_generate(cfg);
  SplitSpec spec;
  spec.protocol = Protocol::Fixed;
  spec.horizon = 24;
  spec.encoder_len = 24;
  const SplitBounds bounds = split(synth.data, spec);
  const ScalerState before = fit_scalers(synth.data, bounds.train_end);

  // Corrupt the test range only.
  for (Series& s : synth.data.series)
    for (long t = bounds.val_end[0]; t < s.length(); ++t) s.y[t] += 1e6;
  const ScalerState after = fit_scalers(synth.data, bounds.train_end);
  CHECK(before.y_scale == after.y_scale);
  for (std::size_t f = 0; f < before.cont.size(); ++f) {
    CHECK(before.cont[f].min == after.cont[f].min);
    CHECK(before.cont[f].max == after.cont[f].max);
  }
}

TEST_CASE("derived time feature columns append to the dataset") {
  Dataset ds;
  ds.cont_names = {"x"};
  Series s;
  s.id = "a";
  for (int i = 0; i < 30; ++i) {
    s.t.push_back(i * 3600);
    s.y.push_back(0.0);
  }
  s.cont = {std::vector<double>(30, 1.0)};
  ds.series.push_back(s);
  const Dataset out = add_time_features(ds, Granularity::Hourly);
  CHECK(out.cat_names ==
        std::vector<std::string>{"hour_of_day", "day_of_week", "month_of_year"});
  CHECK(out.series[0].cat[0][5] == 5);
  CHECK(out.series[0].cat[0][25] == 1);
  CHECK(out.series[0].cat[1][0] == 3);
}

TEST_CASE("csv write/load round trip") {
  SynthConfig cfg;
  cfg.n_series = 2;
  cfg.length = 60;
  cfg.gamma = 2.0;
  cfg.seed = 23;
  cfg.with_series_id = true;
  const SynthDataset synth = synth_generate(cfg);
  const auto path =
      (std::filesystem::temp_directory_path() / "aru_roundtrip.csv").string();
  write_csv(synth.data, path);
  const Dataset back = load_csv(path, {"sid"});
  REQUIRE(back.series.size() == 2);
  CHECK(back.cont_names == synth.data.cont_names);
  CHECK(back.cat_names == synth.data.cat_names);
  for (int i = 0; i < 2; ++i) {
    CHECK(back.series[i].y == synth.data.series[i].y);
    CHECK(back.series[i].cat == synth.data.series[i].cat);
  }
}
