#include <cmath>
#include <filesystem>
#include <fstream>

#include "mdf/cloud.hpp"
#include "test_util.hpp"

using namespace mdf;
using namespace mdf::cloud;
using transport::Json;

namespace {

FeatureGrid grid_from(const Eigen::VectorXd& v, int side = 4, int channels = 2) {
  FeatureGrid g;
  for (int c = 0; c < channels; ++c) {
    Eigen::MatrixXd m(side, side);
    for (int i = 0; i < side; ++i) {
      for (int j = 0; j < side; ++j) m(i, j) = v(c * side * side + i * side + j);
    }
    g.channels.emplace_back(PipelineId(c + 1), m);
  }
  return g;
}

/// Gaussian blobs around per-class means.
LabeledDataset blobs(std::size_t per_class, std::size_t classes, double spread, std::uint64_t seed) {
  Rng rng(seed);
  const int d = 32;
  std::vector<Eigen::VectorXd> means;
  for (std::size_t c = 0; c < classes; ++c) {
    Eigen::VectorXd m(d);
    for (int i = 0; i < d; ++i) m(i) = rng.uniform(0.0, 1.0);
    means.push_back(m);
  }
  LabeledDataset ds;
  for (std::size_t c = 0; c < classes; ++c) ds.class_names.push_back("k" + std::to_string(c));
  for (std::size_t i = 0; i < per_class; ++i) {
    for (std::size_t c = 0; c < classes; ++c) {
      Eigen::VectorXd x = means[c];
      for (int k = 0; k < d; ++k) x(k) += rng.normal(0.0, spread);
      ds.samples.push_back({grid_from(x), c});
    }
  }
  return ds;
}

TrainConfig small_config() {
  TrainConfig c;
  c.epochs = 40;
  c.seed = 5;
  return c;
}

}  // namespace

TEST_CASE("stratified split is 80/20 per class and deterministic") {
  const auto ds = blobs(10, 3, 0.1, 1);
  const auto [train, test] = split_dataset(ds, 0.8, 9);
  CHECK(train.class_counts() == std::vector<std::size_t>{8, 8, 8});
  CHECK(test.class_counts() == std::vector<std::size_t>{2, 2, 2});
  const auto [train2, test2] = split_dataset(ds, 0.8, 9);
  for (std::size_t i = 0; i < train.samples.size(); ++i) {
    CHECK(flatten(train.samples[i].grid) == flatten(train2.samples[i].grid));
  }
  auto one = ds;
  one.samples.resize(4);  // class 0 keeps two samples, classes 1 and 2 only one
  CHECK_ERRC(split_dataset(one, 0.8, 1), Errc::TooFewSamples);
}

TEST_CASE("a single-class model predicts that class everywhere") {
  auto ds = blobs(6, 1, 0.1, 2);
  const auto m = train_classifier(ds, small_config());
  Rng rng(3);
  for (int i = 0; i < 10; ++i) {
    const auto v = mdf::testing::normal_vector(rng, 32);
    const auto p = classify(m, grid_from(Eigen::Map<const Eigen::VectorXd>(v.data(), 32)));
    CHECK(p.label == 0);
    CHECK(p.softmax(0) == doctest::Approx(1.0));
  }
}

TEST_CASE("separated blobs are learned and agree with a nearest-centroid oracle") {
  const auto ds = blobs(40, 2, 0.15, 4);
  const auto [train, test] = split_dataset(ds, 0.8, 1);
  const auto mlp = train_classifier(train, small_config());
  const auto eval = evaluate(mlp, test);
  CHECK(eval.accuracy >= 0.99);

  // oracle: class means in raw input space, Euclidean nearest
  std::vector<Eigen::VectorXd> mean(2, Eigen::VectorXd::Zero(32));
  std::vector<int> n(2, 0);
  for (const auto& s : train.samples) {
    mean[s.label] += flatten(s.grid);
    ++n[s.label];
  }
  for (int c = 0; c < 2; ++c) mean[c] /= n[c];
  int agree = 0;
  for (const auto& s : test.samples) {
    const auto x = flatten(s.grid);
    const std::size_t oracle = (x - mean[0]).norm() <= (x - mean[1]).norm() ? 0 : 1;
    agree += classify(mlp, s.grid).label == oracle;
  }
  CHECK(agree == static_cast<int>(test.samples.size()));

  auto cfg = small_config();
  cfg.kind = ModelKind::NearestCentroid;
  const auto nc = train_classifier(train, cfg);
  for (const auto& s : test.samples) {
    const auto x = flatten(s.grid);
    const std::size_t oracle = (x - mean[0]).norm() <= (x - mean[1]).norm() ? 0 : 1;
    CHECK(classify(nc, s.grid).label == oracle);
  }
}

TEST_CASE("training loss decreases over the first epochs on separable data") {
  const auto ds = blobs(20, 3, 0.1, 6);
  const auto m = train_classifier(ds, small_config());
  REQUIRE(m.epoch_losses.size() == 40);
  for (std::size_t e = 1; e < 5; ++e) CHECK(m.epoch_losses[e] < m.epoch_losses[e - 1]);
}

TEST_CASE("analytic gradient matches central differences") {
  for (std::uint64_t trial = 0; trial < 10; ++trial) {
    Rng rng(100 + trial);
    auto p = init_mlp(12, 64, 32, 4, trial);
    // non-zero biases so every block is exercised
    for (Eigen::Index i = 0; i < p.b1.size(); ++i) p.b1(i) = rng.normal(0.0, 0.1);
    for (Eigen::Index i = 0; i < p.b3.size(); ++i) p.b3(i) = rng.normal(0.0, 0.1);
    Eigen::MatrixXd x(12, 3);
    for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = rng.normal();
    const std::vector<std::size_t> y{rng.below(4), rng.below(4), rng.below(4)};
    const double l2 = 1e-3;
    const auto [loss, grad] = loss_and_gradient(p, x, y, l2);
    auto theta = p.pack();
    Eigen::VectorXd numeric(theta.size());
    const double h = 1e-5;
    auto q = p;
    for (Eigen::Index i = 0; i < theta.size(); ++i) {
      const double keep = theta(i);
      theta(i) = keep + h;
      q.unpack(theta);
      const double up = loss_and_gradient(q, x, y, l2).first;
      theta(i) = keep - h;
      q.unpack(theta);
      const double down = loss_and_gradient(q, x, y, l2).first;
      theta(i) = keep;
      numeric(i) = (up - down) / (2.0 * h);
    }
    const double rel = (grad - numeric).norm() / std::max(grad.norm(), numeric.norm());
    CHECK(rel < 1e-4);
  }
}

TEST_CASE("argmax ties go to the lowest index") {
  CHECK(argmax_lowest(Eigen::Vector3d(0.7, 0.2, 0.1)) == 0);
  CHECK(argmax_lowest(Eigen::Vector2d(0.5, 0.5)) == 0);
  CHECK(argmax_lowest(Eigen::Vector3d(0.1, 0.45, 0.45)) == 1);
}

TEST_CASE("relabeling classes permutes outputs") {
  auto ds = blobs(10, 3, 0.2, 8);
  auto cfg = small_config();
  cfg.kind = ModelKind::NearestCentroid;
  const auto a = train_classifier(ds, cfg);
  const std::vector<std::size_t> perm{2, 0, 1};
  auto permuted = ds;
  permuted.class_names = {ds.class_names[1], ds.class_names[2], ds.class_names[0]};
  for (auto& s : permuted.samples) s.label = perm[s.label];
  const auto b = train_classifier(permuted, cfg);
  for (const auto& s : ds.samples) {
    const auto pa = a.predict_proba(s.grid);
    const auto pb = b.predict_proba(s.grid);
    CHECK(pa.sum() == doctest::Approx(1.0).epsilon(1e-9));
    for (std::size_t c = 0; c < 3; ++c) CHECK(pa(static_cast<Eigen::Index>(c)) == doctest::Approx(pb(static_cast<Eigen::Index>(perm[c]))));
  }
}

TEST_CASE("channel mismatch is rejected") {
  const auto ds = blobs(4, 2, 0.1, 1);
  const auto m = train_classifier(ds, small_config());
  auto g = ds.samples[0].grid;
  g.channels.pop_back();
  CHECK_ERRC(classify(m, g), Errc::ChannelMismatch);
  g = ds.samples[0].grid;
  g.channels[1].first = PipelineId(3);
  CHECK_ERRC(classify(m, g), Errc::ChannelMismatch);
  auto mixed = ds;
  mixed.samples[1].grid.channels.pop_back();
  CHECK_ERRC(train_classifier(mixed, small_config()), Errc::InconsistentChannels);
  CHECK_ERRC(train_classifier(LabeledDataset{{}, {"a"}}, small_config()), Errc::EmptyInput);
}

TEST_CASE("confusion-matrix metrics") {
  ConfusionMatrix perfect{Eigen::MatrixXi::Zero(3, 3)};
  perfect.counts.diagonal() << 4, 5, 6;
  auto e = metrics_from(perfect, {"a", "b", "c"});
  CHECK(e.accuracy == 1.0);
  CHECK(e.precision == std::vector<double>{1, 1, 1});

  ConfusionMatrix zeros{Eigen::MatrixXi::Zero(2, 2)};
  zeros.counts << 10, 0, 10, 0;
  e = metrics_from(zeros, {"a", "b"});
  CHECK(e.accuracy == 0.5);
  CHECK(e.recall == std::vector<double>{1.0, 0.0});
  CHECK(e.precision == std::vector<double>{0.5, 0.0});
  CHECK(e.support == std::vector<int>{10, 10});

  // scalars recomputed from the matrix agree exactly
  Rng rng(4);
  ConfusionMatrix r{Eigen::MatrixXi::Zero(4, 4)};
  for (int i = 0; i < 200; ++i) ++r.counts(static_cast<Eigen::Index>(rng.below(4)), static_cast<Eigen::Index>(rng.below(4)));
  e = metrics_from(r, {"a", "b", "c", "d"});
  CHECK(e.accuracy == static_cast<double>(r.counts.trace()) / 200.0);
  for (int j = 0; j < 4; ++j) {
    CHECK(e.precision[j] == static_cast<double>(r.counts(j, j)) / r.counts.col(j).sum());
    CHECK(e.recall[j] == static_cast<double>(r.counts(j, j)) / r.counts.row(j).sum());
  }
  const auto csv = metrics_csv(e);
  CHECK(csv.rfind("class,precision,recall,support\n", 0) == 0);
  CHECK(to_json(e).at("confusion").size() == 4);
}

TEST_CASE("a fixed model on random labels scores about 1/K") {
  const std::size_t k = 4, n = 4000;
  auto train = blobs(5, k, 0.1, 10);
  auto cfg = small_config();
  cfg.kind = ModelKind::NearestCentroid;
  const auto m = train_classifier(train, cfg);
  Rng rng(11);
  LabeledDataset test{{}, train.class_names};
  for (std::size_t i = 0; i < n; ++i) {
    Eigen::VectorXd x(32);
    for (int j = 0; j < 32; ++j) x(j) = rng.uniform(0.0, 1.0);
    test.samples.push_back({grid_from(x), rng.below(k)});
  }
  const auto e = evaluate(m, test);
  const double p = 1.0 / k;
  const double se = std::sqrt(p * (1 - p) / n);
  CHECK(std::abs(e.accuracy - p) < 5 * se);
}

TEST_CASE("fusion gain report") {
  auto r = fusion_gain_report({{"radar", 0.788}}, 0.969);
  CHECK(r.gain == doctest::Approx(0.181));
  CHECK_FALSE(r.violation);
  r = fusion_gain_report({{"radar", 0.8}, {"thz", 0.7}}, 0.8);
  CHECK(r.gain == 0.0);
  CHECK_FALSE(r.violation);
  r = fusion_gain_report({{"radar", 0.9}}, 0.85);
  CHECK(r.violation);
  CHECK(to_json(r).at("violation") == true);
}

TEST_CASE("model files round trip") {
  const auto ds = blobs(6, 3, 0.2, 12);
  const auto dir = std::filesystem::temp_directory_path() / "mdf_cloud_models";
  std::filesystem::create_directories(dir);
  for (auto kind : {ModelKind::ReferenceMlp, ModelKind::NearestCentroid}) {
    auto cfg = small_config();
    cfg.kind = kind;
    const auto m = train_classifier(ds, cfg);
    const auto path = (dir / "m.bin").string();
    save_model(m, path);
    const auto back = load_model(path);
    CHECK(back.class_names == m.class_names);
    for (const auto& s : ds.samples) {
      CHECK((back.predict_proba(s.grid) - m.predict_proba(s.grid)).cwiseAbs().maxCoeff() == 0.0);
    }
    // truncated weight block
    std::string bytes;
    {
      std::ifstream in(path, std::ios::binary);
      bytes.assign(std::istreambuf_iterator<char>(in), {});
    }
    std::ofstream(path, std::ios::binary) << bytes.substr(0, bytes.size() - 8);
    CHECK_ERRC(load_model(path), Errc::SchemaViolation);
  }
  std::ofstream((dir / "junk").string()) << "not json\n";
  CHECK_ERRC(load_model((dir / "junk").string()), Errc::SchemaViolation);
  CHECK_ERRC(load_model((dir / "absent").string()), Errc::MissingFile);
  std::filesystem::remove_all(dir);
}

TEST_CASE("cloud service classifies grids and measures latency") {
  const auto ds = blobs(6, 2, 0.1, 13);
  transport::ManualClock clock(1000.0);
  CloudService svc("c1", clock.clock());
  auto grid = features::to_json(ds.samples[0].grid);
  grid["function"] = "motion";
  grid["ingest_ms"] = 960.5;
  const transport::Message msg{"edge/c1/motion", 960, transport::Kind::Grid, grid};
  CHECK_ERRC(svc.handle(msg), Errc::NotFound);
  svc.set_model(HrcFunction::MotionDetection, train_classifier(ds, small_config()));
  const auto out = svc.handle(msg);
  CHECK(out.topic == "cloud/c1/motion");
  CHECK_NOTHROW(transport::validate_payload(out.kind, out.payload));
  CHECK(out.payload.at("latency_ms").get<double>() == doctest::Approx(39.5));
  CHECK(out.payload.at("class") == 0);
  CHECK(svc.latency().stats(HrcFunction::MotionDetection).count == 1);
}
