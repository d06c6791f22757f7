#pragma once

#include <map>
#include <set>
#include <span>
#include <utility>
#include <variant>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "mdf/core.hpp"

namespace mdf::features {

using Matrix = Eigen::MatrixXd;

constexpr int kGridSide = 32;
constexpr std::size_t kDefaultWindow = 32;
constexpr double kDegenerateSigma = 1e-12;

/// Population mean, deviation, skewness and kurtosis of a window.
struct Moments {
  double mu = 0.0;
  double sigma = 0.0;
  double zeta = 0.0;
  double kappa = 0.0;
};

/// Throws TooShort for fewer than 2 samples, NonFinite on NaN/inf and
/// DegenerateWindow when sigma < 1e-12.
Moments compute_moments(std::span<const double> window);

struct FeatureVector {
  SensorId sensor;
  Timestamp window_end;
  double mu = 0.0;
  double sigma = 0.0;
  double zeta = 0.0;
  double kappa = 0.0;

  friend bool operator==(const FeatureVector&, const FeatureVector&) = default;
};

nlohmann::json to_json(const FeatureVector& fv);
FeatureVector feature_from_json(const nlohmann::json& doc);

/// One window of the scalar feature stream: either features or the reason the
/// window produced none.
struct WindowResult {
  SensorId sensor;
  Timestamp window_end;
  std::variant<FeatureVector, Errc> outcome;

  bool ok() const noexcept { return std::holds_alternative<FeatureVector>(outcome); }
};

/// Mean over the elements of a frame.
double frame_summary(const DenoisedFrame& frame);

/// Summarizes each frame by its element mean and computes moments over
/// consecutive non-overlapping windows of window_len frames. A trailing
/// partial window is dropped. Throws TooShort when fewer than window_len
/// frames are given, MixedSensors or NonMonotoneTime on a malformed stream.
std::vector<WindowResult> frame_stream_features(std::span<const DenoisedFrame> frames,
                                                std::size_t window_len = kDefaultWindow);

/// Per-position moments over a window of equally sized frames. Positions with
/// zero deviation get zeta = kappa = 0.
struct MomentMaps {
  std::vector<double> mu;
  std::vector<double> sigma;
  std::vector<double> zeta;
  std::vector<double> kappa;
};

MomentMaps element_moments(std::span<const DenoisedFrame> window);

/// Bilinear value at (u, v) in the unit square, u along rows, v along columns.
double bilinear_sample(const Matrix& m, double u, double v);

/// Bilinear resampling onto a rows x cols grid. Exact pass-through when the
/// shape already matches. Throws EmptyMatrix for an empty input.
Matrix resize_grid(const Matrix& m, int rows = kGridSide, int cols = kGridSide);

/// Block-mean decimation to a smaller shape.
Matrix block_decimate(const Matrix& m, int rows, int cols);

/// (x - min) / (max - min); a constant matrix maps to 0.5 everywhere.
Matrix minmax_normalize(const Matrix& m);

/// Lays the per-sensor moment maps of one pipeline out as a 2D matrix, each
/// moment block min-max normalized on its own.
Matrix pipeline_feature_matrix(PipelineId pipeline, std::span<const MomentMaps> per_sensor);

struct FeatureGrid {
  std::vector<std::pair<PipelineId, Matrix>> channels;  // ascending pipeline
  Timestamp window_end;

  std::size_t channel_count() const noexcept { return channels.size(); }
};

/// Resizes, normalizes and stacks the selected pipelines' matrices. Throws
/// InvalidArgument on an empty selection and MissingPipeline when a selected
/// matrix is absent.
FeatureGrid fuse_features(const std::map<PipelineId, Matrix>& per_pipeline,
                          const std::set<PipelineId>& selection, Timestamp window_end = Timestamp{});

nlohmann::json to_json(const FeatureGrid& grid);
FeatureGrid grid_from_json(const nlohmann::json& doc);

}  // namespace mdf::features
