#pragma once

#include <map>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "mdf/core.hpp"
#include "mdf/features.hpp"
#include "mdf/transport.hpp"

/// Cloud tier: datasets of fused grids, the reference classifier, metrics and
/// the classification service.
namespace mdf::cloud {

using features::FeatureGrid;
using Eigen::MatrixXd;
using Eigen::VectorXd;

struct Sample {
  FeatureGrid grid;
  std::size_t label = 0;
};

struct LabeledDataset {
  std::vector<Sample> samples;
  std::vector<std::string> class_names;

  /// Throws InvalidArgument on out-of-range labels, InconsistentChannels when
  /// samples disagree on channels or shape.
  void validate() const;
  std::vector<std::size_t> class_counts() const;
};

/// Dataset from (grid, label) pairs; labels outside class_names are skipped.
LabeledDataset make_dataset(const std::vector<std::pair<FeatureGrid, std::string>>& labeled,
                            const std::vector<std::string>& class_names);

/// Stratified split: round(fraction * n_c) of each class go to training,
/// clamped so both parts keep a sample when n_c >= 2. Throws TooFewSamples
/// when a class has fewer than 2 samples.
std::pair<LabeledDataset, LabeledDataset> split_dataset(const LabeledDataset& ds, double fraction, std::uint64_t seed);

/// Flattened grid: channels in ascending pipeline order, each row-major.
VectorXd flatten(const FeatureGrid& grid);

enum class ModelKind { ReferenceMlp, NearestCentroid };

std::string_view model_kind_name(ModelKind k);
ModelKind model_kind_from_name(std::string_view name);

struct TrainConfig {
  ModelKind kind = ModelKind::ReferenceMlp;
  std::size_t epochs = 60;
  double learning_rate = 0.02;
  double momentum = 0.9;
  std::size_t batch_size = 16;
  double l2 = 1e-4;
  std::size_t hidden1 = 64;
  std::size_t hidden2 = 32;
  std::uint64_t seed = 1;
};

nlohmann::json to_json(const TrainConfig& c);
TrainConfig train_config_from_json(const nlohmann::json& doc);

/// x -> tanh(W1 x + b1) -> tanh(W2 h1 + b2) -> softmax(W3 h2 + b3).
struct MlpParams {
  MatrixXd w1, w2, w3;
  VectorXd b1, b2, b3;

  std::size_t size() const;
  /// w1, b1, w2, b2, w3, b3, each matrix row-major.
  VectorXd pack() const;
  void unpack(const VectorXd& flat);
};

/// Mean cross-entropy (plus 0.5 * l2 * |W|^2 over weight matrices) of a batch
/// given as columns of x, and its gradient in pack() order.
std::pair<double, VectorXd> loss_and_gradient(const MlpParams& p, const MatrixXd& x, const std::vector<std::size_t>& y,
                                              double l2 = 0.0);

/// Xavier-uniform weights, zero biases.
MlpParams init_mlp(std::size_t inputs, std::size_t hidden1, std::size_t hidden2, std::size_t classes,
                   std::uint64_t seed);

class ClassifierModel {
 public:
  ModelKind kind = ModelKind::ReferenceMlp;
  TrainConfig config;
  std::vector<std::string> class_names;
  std::vector<PipelineId> channels;
  int rows = 0;
  int cols = 0;
  VectorXd input_mean;    // subtracted before the network
  double input_scale = 1.0;
  MlpParams mlp;
  MatrixXd centroids;     // one column per class (NearestCentroid)
  std::vector<double> epoch_losses;

  std::size_t class_count() const noexcept { return class_names.size(); }
  /// Softmax over classes; throws ChannelMismatch when the grid does not match.
  VectorXd predict_proba(const FeatureGrid& grid) const;
};

/// Throws EmptyInput on an empty set, InconsistentChannels on mixed grids.
ClassifierModel train_classifier(const LabeledDataset& train, const TrainConfig& config);

struct Prediction {
  std::size_t label = 0;
  VectorXd softmax;
};

/// Argmax with ties to the lowest index.
std::size_t argmax_lowest(const VectorXd& v);
Prediction classify(const ClassifierModel& model, const FeatureGrid& grid);

/// Rows are actual classes, columns predictions.
struct ConfusionMatrix {
  Eigen::MatrixXi counts;
};

struct Evaluation {
  std::vector<std::string> class_names;
  ConfusionMatrix matrix;
  std::vector<double> precision;
  std::vector<double> recall;
  std::vector<int> support;
  double accuracy = 0.0;
};

/// Metrics from a confusion matrix: accuracy = trace / total, empty predicted
/// columns give precision 0, empty rows recall 0.
Evaluation metrics_from(const ConfusionMatrix& m, std::vector<std::string> class_names);
Evaluation evaluate(const ClassifierModel& model, const LabeledDataset& test);

nlohmann::json to_json(const Evaluation& e);
/// class,precision,recall,support
std::string metrics_csv(const Evaluation& e);

struct FusionGainReport {
  std::map<std::string, double> single;  // selection name -> accuracy
  double fused = 0.0;
  double best_single = 0.0;
  double gain = 0.0;                     // fused - best_single
  bool violation = false;                // fused < best_single - tolerance
};

FusionGainReport fusion_gain_report(const std::map<std::string, double>& single, double fused,
                                    double tolerance = 0.02);
nlohmann::json to_json(const FusionGainReport& r);

/// Header line of JSON, then the weight block as little-endian doubles.
void save_model(const ClassifierModel& model, const std::string& path);
/// Throws MissingFile or SchemaViolation.
ClassifierModel load_model(const std::string& path);

/// Classifies grid messages and builds the result messages, recording the
/// ingest-to-classification latency per function.
class CloudService {
 public:
  CloudService(std::string cell, transport::Clock clock);

  void set_model(HrcFunction f, ClassifierModel model);
  bool has_model(HrcFunction f) const;

  /// Classification message for a grid message; latency_ms is clock now minus
  /// the grid's ingest_ms. Throws NotFound without a model for the function.
  transport::Message handle(const transport::Message& grid);

  const transport::LatencyRecorder& latency() const noexcept { return latency_; }
  std::vector<std::string> topics() const;

 private:
  std::string cell_;
  transport::Clock clock_;
  std::map<HrcFunction, ClassifierModel> models_;
  transport::LatencyRecorder latency_;
};

}  // namespace mdf::cloud
