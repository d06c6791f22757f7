#include "mdf/cloud.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

namespace mdf::cloud {

using transport::Json;
using RowMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

namespace {

bool same_layout(const FeatureGrid& a, const FeatureGrid& b) {
  if (a.channels.size() != b.channels.size()) return false;
  for (std::size_t c = 0; c < a.channels.size(); ++c) {
    if (a.channels[c].first != b.channels[c].first) return false;
    if (a.channels[c].second.rows() != b.channels[c].second.rows() ||
        a.channels[c].second.cols() != b.channels[c].second.cols()) {
      return false;
    }
  }
  return true;
}

MatrixXd softmax_columns(const MatrixXd& z) {
  MatrixXd p(z.rows(), z.cols());
  for (Eigen::Index j = 0; j < z.cols(); ++j) {
    const auto col = z.col(j);
    const Eigen::ArrayXd e = (col.array() - col.maxCoeff()).exp();
    p.col(j) = (e / e.sum()).matrix();
  }
  return p;
}

void append_row_major(VectorXd& out, Eigen::Index& at, const MatrixXd& m) {
  const RowMajor r = m;
  out.segment(at, r.size()) = Eigen::Map<const VectorXd>(r.data(), r.size());
  at += r.size();
}

void read_row_major(const VectorXd& in, Eigen::Index& at, MatrixXd& m) {
  m = Eigen::Map<const RowMajor>(in.data() + at, m.rows(), m.cols());
  at += m.size();
}

void append_vec(VectorXd& out, Eigen::Index& at, const VectorXd& v) {
  out.segment(at, v.size()) = v;
  at += v.size();
}

void read_vec(const VectorXd& in, Eigen::Index& at, VectorXd& v) {
  v = in.segment(at, v.size());
  at += v.size();
}

}  // namespace

//=============================================================================
// Datasets
//=============================================================================

void LabeledDataset::validate() const {
  for (const auto& s : samples) {
    if (s.label >= class_names.size()) throw Error(Errc::InvalidArgument, "label outside the class list");
    if (!same_layout(s.grid, samples.front().grid)) {
      throw Error(Errc::InconsistentChannels, "samples differ in channels or grid shape");
    }
  }
}

std::vector<std::size_t> LabeledDataset::class_counts() const {
  std::vector<std::size_t> n(class_names.size(), 0);
  for (const auto& s : samples) ++n.at(s.label);
  return n;
}

LabeledDataset make_dataset(const std::vector<std::pair<FeatureGrid, std::string>>& labeled,
                            const std::vector<std::string>& class_names) {
  LabeledDataset ds;
  ds.class_names = class_names;
  for (const auto& [grid, label] : labeled) {
    const auto it = std::find(class_names.begin(), class_names.end(), label);
    if (it == class_names.end()) continue;
    ds.samples.push_back({grid, static_cast<std::size_t>(it - class_names.begin())});
  }
  ds.validate();
  return ds;
}

std::pair<LabeledDataset, LabeledDataset> split_dataset(const LabeledDataset& ds, double fraction,
                                                        std::uint64_t seed) {
  if (!(fraction > 0.0 && fraction < 1.0)) throw Error(Errc::InvalidArgument, "split fraction must be in (0, 1)");
  std::vector<std::vector<std::size_t>> by_class(ds.class_names.size());
  for (std::size_t i = 0; i < ds.samples.size(); ++i) by_class.at(ds.samples[i].label).push_back(i);
  std::vector<bool> to_train(ds.samples.size(), false);
  for (std::size_t c = 0; c < by_class.size(); ++c) {
    auto& idx = by_class[c];
    if (idx.size() < 2) {
      throw Error(Errc::TooFewSamples, "class '" + ds.class_names[c] + "' needs at least 2 samples to split");
    }
    Rng rng(mix_seed(seed, c));
    for (std::size_t i = idx.size(); i > 1; --i) std::swap(idx[i - 1], idx[rng.below(i)]);
    const auto n = static_cast<double>(idx.size());
    const auto k = std::clamp<std::size_t>(static_cast<std::size_t>(std::lround(fraction * n)), 1, idx.size() - 1);
    for (std::size_t i = 0; i < k; ++i) to_train[idx[i]] = true;
  }
  LabeledDataset train{{}, ds.class_names}, test{{}, ds.class_names};
  for (std::size_t i = 0; i < ds.samples.size(); ++i) (to_train[i] ? train : test).samples.push_back(ds.samples[i]);
  return {std::move(train), std::move(test)};
}

VectorXd flatten(const FeatureGrid& grid) {
  Eigen::Index n = 0;
  for (const auto& [p, m] : grid.channels) n += m.size();
  VectorXd out(n);
  Eigen::Index at = 0;
  for (const auto& [p, m] : grid.channels) append_row_major(out, at, m);
  return out;
}

//=============================================================================
// Reference network
//=============================================================================

std::string_view model_kind_name(ModelKind k) {
  return k == ModelKind::ReferenceMlp ? "reference_mlp" : "nearest_centroid";
}

ModelKind model_kind_from_name(std::string_view name) {
  if (name == "reference_mlp") return ModelKind::ReferenceMlp;
  if (name == "nearest_centroid") return ModelKind::NearestCentroid;
  throw Error(Errc::SchemaViolation, "unknown model kind '" + std::string(name) + "'");
}

Json to_json(const TrainConfig& c) {
  return {{"kind", model_kind_name(c.kind)}, {"epochs", c.epochs},       {"learning_rate", c.learning_rate},
          {"momentum", c.momentum},         {"batch_size", c.batch_size}, {"l2", c.l2},
          {"hidden1", c.hidden1},           {"hidden2", c.hidden2},       {"seed", c.seed}};
}

TrainConfig train_config_from_json(const Json& doc) {
  TrainConfig c;
  try {
    c.kind = model_kind_from_name(doc.value("kind", std::string(model_kind_name(c.kind))));
    c.epochs = doc.value("epochs", c.epochs);
    c.learning_rate = doc.value("learning_rate", c.learning_rate);
    c.momentum = doc.value("momentum", c.momentum);
    c.batch_size = doc.value("batch_size", c.batch_size);
    c.l2 = doc.value("l2", c.l2);
    c.hidden1 = doc.value("hidden1", c.hidden1);
    c.hidden2 = doc.value("hidden2", c.hidden2);
    c.seed = doc.value("seed", c.seed);
  } catch (const Json::exception& e) {
    throw Error(Errc::BadConfig, std::string("train config: ") + e.what());
  } catch (const Error& e) {
    throw Error(Errc::BadConfig, e.what());
  }
  if (c.batch_size == 0 || c.hidden1 == 0 || c.hidden2 == 0 || !(c.learning_rate > 0.0)) {
    throw Error(Errc::BadConfig, "train config: sizes and learning rate must be positive");
  }
  return c;
}

std::size_t MlpParams::size() const {
  return static_cast<std::size_t>(w1.size() + b1.size() + w2.size() + b2.size() + w3.size() + b3.size());
}

VectorXd MlpParams::pack() const {
  VectorXd out(static_cast<Eigen::Index>(size()));
  Eigen::Index at = 0;
  append_row_major(out, at, w1);
  append_vec(out, at, b1);
  append_row_major(out, at, w2);
  append_vec(out, at, b2);
  append_row_major(out, at, w3);
  append_vec(out, at, b3);
  return out;
}

void MlpParams::unpack(const VectorXd& flat) {
  if (static_cast<std::size_t>(flat.size()) != size()) throw Error(Errc::DimensionMismatch, "parameter vector size");
  Eigen::Index at = 0;
  read_row_major(flat, at, w1);
  read_vec(flat, at, b1);
  read_row_major(flat, at, w2);
  read_vec(flat, at, b2);
  read_row_major(flat, at, w3);
  read_vec(flat, at, b3);
}

MlpParams init_mlp(std::size_t inputs, std::size_t hidden1, std::size_t hidden2, std::size_t classes,
                   std::uint64_t seed) {
  Rng rng(mix_seed(seed, 0x31a9ULL));
  auto xavier = [&](std::size_t out, std::size_t in) {
    const double a = std::sqrt(6.0 / static_cast<double>(in + out));
    MatrixXd w(static_cast<Eigen::Index>(out), static_cast<Eigen::Index>(in));
    for (Eigen::Index i = 0; i < w.rows(); ++i) {
      for (Eigen::Index j = 0; j < w.cols(); ++j) w(i, j) = rng.uniform(-a, a);
    }
    return w;
  };
  MlpParams p;
  p.w1 = xavier(hidden1, inputs);
  p.b1 = VectorXd::Zero(static_cast<Eigen::Index>(hidden1));
  p.w2 = xavier(hidden2, hidden1);
  p.b2 = VectorXd::Zero(static_cast<Eigen::Index>(hidden2));
  p.w3 = xavier(classes, hidden2);
  p.b3 = VectorXd::Zero(static_cast<Eigen::Index>(classes));
  return p;
}

std::pair<double, VectorXd> loss_and_gradient(const MlpParams& p, const MatrixXd& x, const std::vector<std::size_t>& y,
                                              double l2) {
  if (static_cast<std::size_t>(x.cols()) != y.size() || y.empty()) {
    throw Error(Errc::DimensionMismatch, "batch and label counts differ");
  }
  if (x.rows() != p.w1.cols()) throw Error(Errc::DimensionMismatch, "input width");
  const auto n = static_cast<double>(y.size());
  const MatrixXd h1 = ((p.w1 * x).colwise() + p.b1).array().tanh().matrix();
  const MatrixXd h2 = ((p.w2 * h1).colwise() + p.b2).array().tanh().matrix();
  const MatrixXd prob = softmax_columns((p.w3 * h2).colwise() + p.b3);

  double loss = 0.0;
  MatrixXd dz = prob;
  for (std::size_t j = 0; j < y.size(); ++j) {
    const auto c = static_cast<Eigen::Index>(y[j]);
    if (c >= prob.rows()) throw Error(Errc::InvalidArgument, "label outside the output layer");
    loss -= std::log(std::max(prob(c, static_cast<Eigen::Index>(j)), 1e-300));
    dz(c, static_cast<Eigen::Index>(j)) -= 1.0;
  }
  loss /= n;
  loss += 0.5 * l2 * (p.w1.squaredNorm() + p.w2.squaredNorm() + p.w3.squaredNorm());
  dz /= n;

  MlpParams g;
  g.w3 = dz * h2.transpose() + l2 * p.w3;
  g.b3 = dz.rowwise().sum();
  const MatrixXd da2 = ((p.w3.transpose() * dz).array() * (1.0 - h2.array().square())).matrix();
  g.w2 = da2 * h1.transpose() + l2 * p.w2;
  g.b2 = da2.rowwise().sum();
  const MatrixXd da1 = ((p.w2.transpose() * da2).array() * (1.0 - h1.array().square())).matrix();
  g.w1 = da1 * x.transpose() + l2 * p.w1;
  g.b1 = da1.rowwise().sum();
  return {loss, g.pack()};
}

//=============================================================================
// Models
//=============================================================================

VectorXd ClassifierModel::predict_proba(const FeatureGrid& grid) const {
  if (grid.channels.size() != channels.size()) {
    throw Error(Errc::ChannelMismatch, "grid has " + std::to_string(grid.channels.size()) + " channels, model " +
                                           std::to_string(channels.size()));
  }
  for (std::size_t c = 0; c < channels.size(); ++c) {
    const auto& [p, m] = grid.channels[c];
    if (p != channels[c] || m.rows() != rows || m.cols() != cols) {
      throw Error(Errc::ChannelMismatch, "grid channels differ from the model's");
    }
  }
  const VectorXd x = (flatten(grid) - input_mean) * input_scale;
  if (kind == ModelKind::NearestCentroid) {
    VectorXd logits(centroids.cols());
    for (Eigen::Index k = 0; k < centroids.cols(); ++k) {
      logits(k) = -(x - centroids.col(k)).squaredNorm() / static_cast<double>(x.size());
    }
    return softmax_columns(logits);
  }
  const VectorXd h1 = (mlp.w1 * x + mlp.b1).array().tanh().matrix();
  const VectorXd h2 = (mlp.w2 * h1 + mlp.b2).array().tanh().matrix();
  return softmax_columns(mlp.w3 * h2 + mlp.b3);
}

ClassifierModel train_classifier(const LabeledDataset& train, const TrainConfig& config) {
  if (train.samples.empty()) throw Error(Errc::EmptyInput, "empty training set");
  if (train.class_names.empty()) throw Error(Errc::InvalidArgument, "no classes");
  train.validate();

  ClassifierModel m;
  m.kind = config.kind;
  m.config = config;
  m.class_names = train.class_names;
  const auto& first = train.samples.front().grid;
  for (const auto& [p, mat] : first.channels) m.channels.push_back(p);
  m.rows = static_cast<int>(first.channels.front().second.rows());
  m.cols = static_cast<int>(first.channels.front().second.cols());

  // centre each input and scale by the pooled deviation
  const auto n = train.samples.size();
  MatrixXd raw(flatten(first).size(), static_cast<Eigen::Index>(n));
  for (std::size_t i = 0; i < n; ++i) raw.col(static_cast<Eigen::Index>(i)) = flatten(train.samples[i].grid);
  m.input_mean = raw.rowwise().mean();
  const double rms = std::sqrt((raw.colwise() - m.input_mean).squaredNorm() / static_cast<double>(raw.size()));
  m.input_scale = rms > 1e-12 ? 1.0 / rms : 1.0;
  const MatrixXd x = (raw.colwise() - m.input_mean) * m.input_scale;
  std::vector<std::size_t> y;
  for (const auto& s : train.samples) y.push_back(s.label);
  const auto k = static_cast<Eigen::Index>(m.class_count());

  if (config.kind == ModelKind::NearestCentroid) {
    m.centroids = MatrixXd::Zero(x.rows(), k);
    Eigen::VectorXi counts = Eigen::VectorXi::Zero(k);
    for (std::size_t i = 0; i < n; ++i) {
      m.centroids.col(static_cast<Eigen::Index>(y[i])) += x.col(static_cast<Eigen::Index>(i));
      ++counts(static_cast<Eigen::Index>(y[i]));
    }
    for (Eigen::Index c = 0; c < k; ++c) {
      // an absent class gets a centroid no sample can reach
      if (counts(c) > 0) {
        m.centroids.col(c) /= counts(c);
      } else {
        m.centroids.col(c).setConstant(1e6);
      }
    }
    return m;
  }

  m.mlp = init_mlp(static_cast<std::size_t>(x.rows()), config.hidden1, config.hidden2, m.class_count(), config.seed);
  VectorXd theta = m.mlp.pack();
  VectorXd velocity = VectorXd::Zero(theta.size());
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  MlpParams work = m.mlp;
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    Rng rng(mix_seed(config.seed, 0xe90cULL + epoch));
    for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);
    for (std::size_t start = 0; start < n; start += config.batch_size) {
      const auto end = std::min(n, start + config.batch_size);
      MatrixXd xb(x.rows(), static_cast<Eigen::Index>(end - start));
      std::vector<std::size_t> yb;
      for (std::size_t i = start; i < end; ++i) {
        xb.col(static_cast<Eigen::Index>(i - start)) = x.col(static_cast<Eigen::Index>(order[i]));
        yb.push_back(y[order[i]]);
      }
      work.unpack(theta);
      const auto [loss, grad] = loss_and_gradient(work, xb, yb, config.l2);
      velocity = config.momentum * velocity - config.learning_rate * grad;
      theta += velocity;
    }
    work.unpack(theta);
    m.epoch_losses.push_back(loss_and_gradient(work, x, y, config.l2).first);
  }
  m.mlp = std::move(work);
  return m;
}

std::size_t argmax_lowest(const VectorXd& v) {
  if (v.size() == 0) throw Error(Errc::EmptyInput, "argmax of an empty vector");
  Eigen::Index best = 0;
  for (Eigen::Index i = 1; i < v.size(); ++i) {
    if (v(i) > v(best)) best = i;
  }
  return static_cast<std::size_t>(best);
}

Prediction classify(const ClassifierModel& model, const FeatureGrid& grid) {
  auto p = model.predict_proba(grid);
  const auto label = argmax_lowest(p);
  return {label, std::move(p)};
}

//=============================================================================
// Metrics
//=============================================================================

Evaluation metrics_from(const ConfusionMatrix& m, std::vector<std::string> class_names) {
  const auto k = m.counts.rows();
  if (m.counts.cols() != k || static_cast<std::size_t>(k) != class_names.size()) {
    throw Error(Errc::DimensionMismatch, "confusion matrix shape");
  }
  Evaluation e;
  e.class_names = std::move(class_names);
  e.matrix = m;
  const long total = m.counts.sum();
  e.accuracy = total > 0 ? static_cast<double>(m.counts.trace()) / static_cast<double>(total) : 0.0;
  for (Eigen::Index j = 0; j < k; ++j) {
    const long col = m.counts.col(j).sum();
    const long row = m.counts.row(j).sum();
    e.precision.push_back(col > 0 ? static_cast<double>(m.counts(j, j)) / static_cast<double>(col) : 0.0);
    e.recall.push_back(row > 0 ? static_cast<double>(m.counts(j, j)) / static_cast<double>(row) : 0.0);
    e.support.push_back(static_cast<int>(row));
  }
  return e;
}

Evaluation evaluate(const ClassifierModel& model, const LabeledDataset& test) {
  if (test.samples.empty()) throw Error(Errc::EmptyInput, "empty test set");
  const auto k = static_cast<Eigen::Index>(model.class_count());
  ConfusionMatrix m{Eigen::MatrixXi::Zero(k, k)};
  for (const auto& s : test.samples) {
    const auto pred = classify(model, s.grid);
    ++m.counts(static_cast<Eigen::Index>(s.label), static_cast<Eigen::Index>(pred.label));
  }
  return metrics_from(m, model.class_names);
}

Json to_json(const Evaluation& e) {
  Json rows = Json::array();
  for (Eigen::Index i = 0; i < e.matrix.counts.rows(); ++i) {
    Json r = Json::array();
    for (Eigen::Index j = 0; j < e.matrix.counts.cols(); ++j) r.push_back(e.matrix.counts(i, j));
    rows.push_back(r);
  }
  return {{"classes", e.class_names}, {"confusion", rows},     {"precision", e.precision},
          {"recall", e.recall},       {"support", e.support}, {"accuracy", e.accuracy}};
}

std::string metrics_csv(const Evaluation& e) {
  std::ostringstream out;
  out.precision(17);
  out << "class,precision,recall,support\n";
  for (std::size_t i = 0; i < e.class_names.size(); ++i) {
    out << e.class_names[i] << ',' << e.precision[i] << ',' << e.recall[i] << ',' << e.support[i] << '\n';
  }
  return out.str();
}

FusionGainReport fusion_gain_report(const std::map<std::string, double>& single, double fused, double tolerance) {
  FusionGainReport r;
  r.single = single;
  r.fused = fused;
  for (const auto& [name, acc] : single) r.best_single = std::max(r.best_single, acc);
  r.gain = fused - r.best_single;
  r.violation = fused < r.best_single - tolerance;
  return r;
}

Json to_json(const FusionGainReport& r) {
  return {{"single", r.single}, {"fused", r.fused},       {"best_single", r.best_single},
          {"gain", r.gain},     {"violation", r.violation}};
}

//=============================================================================
// Model file
//=============================================================================

namespace {

struct Block {
  std::string name;
  Eigen::Index rows;
  Eigen::Index cols;
};

std::vector<Block> blocks_of(const ClassifierModel& m) {
  std::vector<Block> out{{"input_mean", m.input_mean.size(), 1}};
  if (m.kind == ModelKind::NearestCentroid) {
    out.push_back({"centroids", m.centroids.rows(), m.centroids.cols()});
  } else {
    out.push_back({"w1", m.mlp.w1.rows(), m.mlp.w1.cols()});
    out.push_back({"b1", m.mlp.b1.size(), 1});
    out.push_back({"w2", m.mlp.w2.rows(), m.mlp.w2.cols()});
    out.push_back({"b2", m.mlp.b2.size(), 1});
    out.push_back({"w3", m.mlp.w3.rows(), m.mlp.w3.cols()});
    out.push_back({"b3", m.mlp.b3.size(), 1});
  }
  return out;
}

void write_le(std::ostream& out, const VectorXd& v) {
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    auto bits = std::bit_cast<std::uint64_t>(v(i));
    unsigned char bytes[8];
    for (int b = 0; b < 8; ++b) bytes[b] = static_cast<unsigned char>(bits >> (8 * b));
    out.write(reinterpret_cast<const char*>(bytes), 8);
  }
}

VectorXd read_le(const std::string& blob, std::size_t offset, Eigen::Index n) {
  VectorXd v(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    std::uint64_t bits = 0;
    for (int b = 0; b < 8; ++b) {
      bits |= static_cast<std::uint64_t>(static_cast<unsigned char>(blob[offset + static_cast<std::size_t>(i) * 8 + b]))
              << (8 * b);
    }
    v(i) = std::bit_cast<double>(bits);
  }
  return v;
}

}  // namespace

void save_model(const ClassifierModel& m, const std::string& path) {
  Json blocks = Json::array();
  VectorXd data(0);
  Eigen::Index total = 0;
  for (const auto& b : blocks_of(m)) {
    blocks.push_back({{"name", b.name}, {"rows", b.rows}, {"cols", b.cols}});
    total += b.rows * b.cols;
  }
  data.resize(total);
  Eigen::Index at = 0;
  append_vec(data, at, m.input_mean);
  if (m.kind == ModelKind::NearestCentroid) {
    append_row_major(data, at, m.centroids);
  } else {
    data.segment(at, static_cast<Eigen::Index>(m.mlp.size())) = m.mlp.pack();
  }
  Json channels = Json::array();
  for (auto p : m.channels) channels.push_back(p.index());
  const Json header = {{"format", "mdf-model"},
                       {"version", 1},
                       {"kind", model_kind_name(m.kind)},
                       {"config", to_json(m.config)},
                       {"class_names", m.class_names},
                       {"channels", channels},
                       {"rows", m.rows},
                       {"cols", m.cols},
                       {"input_scale", m.input_scale},
                       {"epoch_losses", m.epoch_losses},
                       {"byte_order", "little"},
                       {"blocks", blocks}};
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(Errc::Io, "cannot write model " + path);
  out << header.dump() << '\n';
  write_le(out, data);
  if (!out) throw Error(Errc::Io, "short write on model " + path);
}

ClassifierModel load_model(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Errc::MissingFile, "model not found: " + path);
  std::string line;
  std::getline(in, line);
  const std::string blob((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  ClassifierModel m;
  try {
    const auto h = Json::parse(line);
    if (h.at("format") != "mdf-model" || h.at("version") != 1) throw Error(Errc::SchemaViolation, "not a model file");
    m.kind = model_kind_from_name(h.at("kind").get<std::string>());
    m.config = train_config_from_json(h.at("config"));
    m.class_names = h.at("class_names").get<std::vector<std::string>>();
    for (const auto& c : h.at("channels")) m.channels.emplace_back(c.get<int>());
    m.rows = h.at("rows").get<int>();
    m.cols = h.at("cols").get<int>();
    m.input_scale = h.at("input_scale").get<double>();
    m.epoch_losses = h.value("epoch_losses", std::vector<double>{});
    std::size_t offset = 0;
    for (const auto& b : h.at("blocks")) {
      const auto name = b.at("name").get<std::string>();
      const auto rows = b.at("rows").get<Eigen::Index>();
      const auto cols = b.at("cols").get<Eigen::Index>();
      if (rows < 0 || cols < 0 || offset + static_cast<std::size_t>(rows * cols) * 8 > blob.size()) {
        throw Error(Errc::SchemaViolation, "weight block '" + name + "' runs past the end of the file");
      }
      const VectorXd v = read_le(blob, offset, rows * cols);
      offset += static_cast<std::size_t>(rows * cols) * 8;
      const MatrixXd mat = Eigen::Map<const RowMajor>(v.data(), rows, cols);
      if (name == "input_mean") m.input_mean = v;
      else if (name == "centroids") m.centroids = mat;
      else if (name == "w1") m.mlp.w1 = mat;
      else if (name == "b1") m.mlp.b1 = v;
      else if (name == "w2") m.mlp.w2 = mat;
      else if (name == "b2") m.mlp.b2 = v;
      else if (name == "w3") m.mlp.w3 = mat;
      else if (name == "b3") m.mlp.b3 = v;
      else throw Error(Errc::SchemaViolation, "unknown weight block '" + name + "'");
    }
    if (offset != blob.size()) throw Error(Errc::SchemaViolation, "trailing bytes after the weight block");
  } catch (const Json::exception& e) {
    throw Error(Errc::SchemaViolation, std::string("model header: ") + e.what());
  } catch (const Error& e) {
    if (e.code() == Errc::SchemaViolation) throw;
    throw Error(Errc::SchemaViolation, e.what());
  }
  const auto d = static_cast<Eigen::Index>(m.channels.size()) * m.rows * m.cols;
  const auto k = static_cast<Eigen::Index>(m.class_names.size());
  const bool ok = m.input_mean.size() == d &&
                  (m.kind == ModelKind::NearestCentroid
                       ? (m.centroids.rows() == d && m.centroids.cols() == k)
                       : (m.mlp.w1.cols() == d && m.mlp.w3.rows() == k && m.mlp.b1.size() == m.mlp.w1.rows() &&
                          m.mlp.w2.cols() == m.mlp.w1.rows() && m.mlp.w3.cols() == m.mlp.w2.rows()));
  if (!ok) throw Error(Errc::SchemaViolation, "weight shapes disagree with the header");
  return m;
}

//=============================================================================
// Service
//=============================================================================

CloudService::CloudService(std::string cell, transport::Clock clock) : cell_(std::move(cell)), clock_(std::move(clock)) {}

void CloudService::set_model(HrcFunction f, ClassifierModel model) { models_.insert_or_assign(f, std::move(model)); }

bool CloudService::has_model(HrcFunction f) const { return models_.count(f) > 0; }

std::vector<std::string> CloudService::topics() const {
  std::vector<std::string> out;
  for (const auto& [f, m] : models_) out.push_back(transport::Topic::result(cell_, f).str());
  return out;
}

transport::Message CloudService::handle(const transport::Message& grid) {
  if (grid.kind != transport::Kind::Grid) throw Error(Errc::SchemaViolation, "expected a grid message");
  transport::validate_payload(grid.kind, grid.payload);
  const auto t = transport::Topic::parse(grid.topic);
  const auto f = function_from_name(grid.payload.value("function", t.segments().back()));
  const auto it = models_.find(f);
  if (it == models_.end()) throw Error(Errc::NotFound, "no model for " + std::string(function_name(f)));
  const auto g = features::grid_from_json(grid.payload);
  const auto pred = classify(it->second, g);
  const double ingest = grid.payload.value("ingest_ms", static_cast<double>(grid.t_ms));
  const double now = clock_();
  const double latency = latency_.record(f, ingest, now);
  Json payload = {{"function", function_name(f)},
                  {"class", pred.label},
                  {"label", it->second.class_names[pred.label]},
                  {"softmax", std::vector<double>(pred.softmax.data(), pred.softmax.data() + pred.softmax.size())},
                  {"window_end_ms", g.window_end.millis()},
                  {"ingest_ms", ingest},
                  {"classified_ms", now},
                  {"latency_ms", latency}};
  if (grid.payload.contains("window")) payload["window"] = grid.payload.at("window");
  return {transport::Topic::result(cell_, f).str(), std::llround(now), transport::Kind::Classification,
          std::move(payload)};
}

}  // namespace mdf::cloud
