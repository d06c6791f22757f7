#include "test_util.hpp"

#include "mdf/features.hpp"

using namespace mdf;
using namespace mdf::features;
using mdf::testing::normal_vector;

namespace {

/// Straight evaluation of the moment definitions in long double.
Moments oracle_moments(const std::vector<double>& x) {
  long double mu = 0;
  for (double v : x) mu += v;
  mu /= x.size();
  long double var = 0;
  for (double v : x) var += std::pow(v - mu, 2);
  var /= x.size();
  const long double sd = std::sqrt(var);
  long double z = 0, k = 0;
  for (double v : x) {
    z += std::pow((v - mu) / sd, 3);
    k += std::pow((v - mu) / sd, 4);
  }
  return {static_cast<double>(mu), static_cast<double>(sd), static_cast<double>(z / x.size()),
          static_cast<double>(k / x.size())};
}

DenoisedFrame frame_of(double value, std::int64_t t, std::size_t len = 4) {
  return DenoisedFrame(SensorId(PipelineId(1), 1), Timestamp(t), std::vector<double>(len, value));
}

}  // namespace

TEST_CASE("moment examples") {
  CHECK_ERRC(compute_moments(std::vector<double>(6, 2.5)), Errc::DegenerateWindow);
  CHECK_ERRC(compute_moments(std::vector<double>{1.0}), Errc::TooShort);
  CHECK_ERRC(compute_moments(std::vector<double>{1.0, std::nan("")}), Errc::NonFinite);

  const auto alt = compute_moments(std::vector<double>{-1, 1, -1, 1});
  CHECK(alt.mu == doctest::Approx(0.0));
  CHECK(alt.sigma == doctest::Approx(1.0));
  CHECK(alt.zeta == doctest::Approx(0.0));
  CHECK(alt.kappa == doctest::Approx(1.0));

  // oracle values: mu 1/4, sigma sqrt(3)/4, zeta 2/sqrt(3), kappa 7/3
  const auto m = compute_moments(std::vector<double>{0, 0, 0, 1});
  CHECK(m.mu == doctest::Approx(0.25));
  CHECK(m.sigma == doctest::Approx(0.4330127019));
  CHECK(m.zeta == doctest::Approx(1.1547005384));
  CHECK(m.kappa == doctest::Approx(2.3333333333));
  const auto o = oracle_moments({0, 0, 0, 1});
  CHECK(m.zeta == doctest::Approx(o.zeta).epsilon(1e-12));
}

TEST_CASE("moment invariance and Pearson bound on random windows") {
  Rng rng(31);
  for (int trial = 0; trial < 300; ++trial) {
    const auto n = 2 + rng.below(60);
    std::vector<double> x(n);
    for (auto& v : x) v = trial % 2 ? rng.normal() : std::exp(rng.normal());
    const auto m = compute_moments(x);
    CHECK(m.kappa >= 1.0 + m.zeta * m.zeta - 1e-9);

    const double a = rng.uniform(0.1, 10.0);
    const double b = rng.normal(0.0, 5.0);
    std::vector<double> y(n);
    for (std::size_t i = 0; i < n; ++i) y[i] = a * x[i] + b;
    const auto my = compute_moments(y);
    CHECK(my.mu == doctest::Approx(a * m.mu + b).epsilon(1e-9).scale(1.0));
    CHECK(my.sigma == doctest::Approx(a * m.sigma).epsilon(1e-9));
    CHECK(std::abs(my.zeta - m.zeta) < 1e-9);
    CHECK(std::abs(my.kappa - m.kappa) < 1e-9 * std::max(1.0, m.kappa));
  }
}

TEST_CASE("scalar feature stream") {
  SUBCASE("constant stream yields degenerate windows") {
    std::vector<DenoisedFrame> frames;
    for (int t = 0; t < 8; ++t) frames.push_back(frame_of(3.0, t));
    const auto res = frame_stream_features(frames, 4);
    REQUIRE(res.size() == 2);
    for (const auto& r : res) {
      CHECK_FALSE(r.ok());
      CHECK(std::get<Errc>(r.outcome) == Errc::DegenerateWindow);
    }
  }
  SUBCASE("alternating frame means") {
    std::vector<DenoisedFrame> frames;
    for (int t = 0; t < 9; ++t) frames.push_back(frame_of(t % 2 ? 1.0 : -1.0, 100 * t));
    const auto res = frame_stream_features(frames, 4);
    REQUIRE(res.size() == 2);
    const auto& fv = std::get<FeatureVector>(res[0].outcome);
    CHECK(fv.mu == doctest::Approx(0.0));
    CHECK(fv.sigma == doctest::Approx(1.0));
    CHECK(fv.zeta == doctest::Approx(0.0));
    CHECK(fv.kappa == doctest::Approx(1.0));
    CHECK(fv.window_end.millis() == 300);
    CHECK(res[1].window_end.millis() == 700);
  }
  SUBCASE("random stream matches oracle on frame summaries") {
    Rng rng(12);
    std::vector<DenoisedFrame> frames;
    std::vector<double> summaries;
    for (int t = 0; t < 64; ++t) {
      auto v = normal_vector(rng, 16);
      double s = 0;
      for (double x : v) s += x;
      summaries.push_back(s / 16);
      frames.emplace_back(SensorId(PipelineId(2), 1), Timestamp(t), std::move(v));
    }
    const auto res = frame_stream_features(frames, 32);
    REQUIRE(res.size() == 2);
    for (std::size_t w = 0; w < 2; ++w) {
      const auto o = oracle_moments({summaries.begin() + 32 * w, summaries.begin() + 32 * (w + 1)});
      const auto& fv = std::get<FeatureVector>(res[w].outcome);
      CHECK(fv.mu == doctest::Approx(o.mu).epsilon(1e-12));
      CHECK(fv.kappa == doctest::Approx(o.kappa).epsilon(1e-12));
    }
  }
  SUBCASE("errors") {
    std::vector<DenoisedFrame> frames{frame_of(1.0, 0), frame_of(2.0, 1)};
    CHECK_ERRC(frame_stream_features(frames, 4), Errc::TooShort);
    frames.push_back(frame_of(1.0, 0));
    frames.push_back(frame_of(1.0, 5));
    CHECK_ERRC(frame_stream_features(frames, 2), Errc::NonMonotoneTime);
  }
}

TEST_CASE("feature vector json payload") {
  const FeatureVector fv{SensorId(PipelineId(3), 2), Timestamp(1234), 0.5, 1.5, -0.25, 3.0};
  const auto doc = to_json(fv);
  CHECK(doc.at("pipeline") == 3);
  CHECK(doc.at("t_ms") == 1234);
  CHECK(feature_from_json(doc) == fv);
  CHECK_ERRC(feature_from_json(nlohmann::json{{"pipeline", 1}}), Errc::SchemaViolation);
}

TEST_CASE("element moments") {
  std::vector<DenoisedFrame> frames;
  for (int t = 0; t < 4; ++t) {
    frames.emplace_back(SensorId(PipelineId(3), 1), Timestamp(t), std::vector<double>{t % 2 ? 1.0 : -1.0, 7.0});
  }
  const auto maps = element_moments(frames);
  CHECK(maps.mu[0] == doctest::Approx(0.0));
  CHECK(maps.sigma[0] == doctest::Approx(1.0));
  CHECK(maps.kappa[0] == doctest::Approx(1.0));
  CHECK(maps.mu[1] == doctest::Approx(7.0));
  CHECK(maps.sigma[1] == 0.0);
  CHECK(maps.kappa[1] == 0.0);
}

TEST_CASE("grid resizing") {
  Rng rng(3);
  Matrix m(32, 32);
  for (Eigen::Index i = 0; i < m.size(); ++i) m(i) = rng.normal();
  CHECK(resize_grid(m) == m);

  const auto c = resize_grid(Matrix::Constant(7, 13, 2.5));
  CHECK(c.rows() == 32);
  CHECK((c.array() - 2.5).abs().maxCoeff() < 1e-12);

  Matrix corners(2, 2);
  corners << 0, 1, 1, 0;
  // bilinear closed form at the square center: (0 + 1 + 1 + 0) / 4
  CHECK(bilinear_sample(corners, 0.5, 0.5) == doctest::Approx(0.5));
  const auto up = resize_grid(corners);
  CHECK(up(0, 0) == 0.0);
  CHECK(up(0, 31) == 1.0);
  CHECK(up(31, 31) == 0.0);

  for (int trial = 0; trial < 50; ++trial) {
    const auto rows = 1 + static_cast<int>(rng.below(70));
    const auto cols = 1 + static_cast<int>(rng.below(70));
    Matrix r(rows, cols);
    for (Eigen::Index i = 0; i < r.size(); ++i) r(i) = rng.normal();
    const auto out = resize_grid(r);
    CHECK(out.minCoeff() >= r.minCoeff() - 1e-12);
    CHECK(out.maxCoeff() <= r.maxCoeff() + 1e-12);
  }
  CHECK_ERRC(resize_grid(Matrix(0, 0)), Errc::EmptyMatrix);
}

TEST_CASE("block decimation averages blocks") {
  Matrix m(4, 4);
  m << 1, 1, 2, 2,
       1, 1, 2, 2,
       3, 3, 4, 4,
       3, 3, 4, 4;
  const auto d = block_decimate(m, 2, 2);
  CHECK(d(0, 0) == 1.0);
  CHECK(d(0, 1) == 2.0);
  CHECK(d(1, 0) == 3.0);
  CHECK(d(1, 1) == 4.0);
}

TEST_CASE("min-max normalization") {
  Matrix row(1, 3);
  row << 0, 5, 10;
  const auto n = minmax_normalize(row);
  CHECK(n(0, 0) == 0.0);
  CHECK(n(0, 1) == doctest::Approx(0.5));
  CHECK(n(0, 2) == 1.0);
  CHECK((minmax_normalize(Matrix::Constant(3, 3, 7.0)).array() == 0.5).all());
  Matrix unit(2, 2);
  unit << 0, 0.25, 1, 0.75;
  CHECK(minmax_normalize(unit) == unit);
}

TEST_CASE("feature fusion") {
  Rng rng(10);
  std::map<PipelineId, Matrix> per;
  for (int p = 1; p <= 3; ++p) {
    Matrix m(10 + p * 5, 20);
    for (Eigen::Index i = 0; i < m.size(); ++i) m(i) = rng.normal(0.0, p);
    per.emplace(PipelineId(p), m);
  }
  const auto one = fuse_features(per, {PipelineId(1)});
  CHECK(one.channel_count() == 1);

  const auto two = fuse_features(per, {PipelineId(2), PipelineId(1)}, Timestamp(77));
  REQUIRE(two.channel_count() == 2);
  CHECK(two.channels[0].first == PipelineId(1));
  CHECK(two.channels[1].first == PipelineId(2));
  CHECK(two.window_end.millis() == 77);
  for (const auto& [p, m] : two.channels) {
    CHECK(m.rows() == 32);
    CHECK(m.cols() == 32);
    CHECK(m.minCoeff() >= 0.0);
    CHECK(m.maxCoeff() <= 1.0);
    // composition of the resize and normalize oracles
    CHECK(m.isApprox(minmax_normalize(resize_grid(per.at(p)))));
  }

  const auto three = fuse_features(per, {PipelineId(1), PipelineId(2), PipelineId(3)});
  CHECK(three.channel_count() == 3);
  const auto again = fuse_features(per, {PipelineId(1), PipelineId(2), PipelineId(3)});
  for (std::size_t c = 0; c < 3; ++c) CHECK(three.channels[c].second == again.channels[c].second);

  CHECK_ERRC(fuse_features(per, {PipelineId(4)}), Errc::MissingPipeline);
  CHECK_ERRC(fuse_features(per, {}), Errc::InvalidArgument);

  const auto back = grid_from_json(to_json(two));
  CHECK(back.channels[1].second == two.channels[1].second);
}

TEST_CASE("pipeline feature matrices have fixed layouts") {
  Rng rng(1);
  auto maps_of = [&](std::size_t len) {
    return MomentMaps{normal_vector(rng, len), normal_vector(rng, len), normal_vector(rng, len), normal_vector(rng, len)};
  };
  std::vector<MomentMaps> radar(6, maps_of(512));
  const auto r = pipeline_feature_matrix(PipelineId(1), radar);
  CHECK(r.rows() == 24);
  CHECK(r.cols() == 32);
  std::vector<MomentMaps> thz{maps_of(1024)};
  const auto t = pipeline_feature_matrix(PipelineId(2), thz);
  CHECK(t.rows() == 32);
  CHECK(t.cols() == 32);
  std::vector<MomentMaps> ir{maps_of(64), maps_of(64), maps_of(64)};
  const auto i = pipeline_feature_matrix(PipelineId(3), ir);
  CHECK(i.rows() == 24);
  CHECK(i.cols() == 32);
  CHECK(i.minCoeff() >= 0.0);
  CHECK(i.maxCoeff() <= 1.0);
}
