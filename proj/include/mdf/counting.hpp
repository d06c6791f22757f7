#pragma once

#include <complex>
#include <optional>
#include <span>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "mdf/core.hpp"

/// Training-free worker counting from multi-antenna CSI.
namespace mdf::counting {

using Complex = std::complex<double>;

/// Beamformed power over time for one steering angle.
struct SpatialStream {
  double angle_rad = 0.0;
  std::vector<double> samples;
};

/// Half-wavelength ULA weights exp(-j pi k sin(theta)) / sqrt(M).
std::vector<Complex> steering_weights(double angle_rad, int antennas = kCsiAntennas);

/// Mean over subcarriers of |w(theta) . X_s(t)|^2, one stream per angle.
/// Throws DimensionMismatch for non-CSI frames, InvalidArgument without angles.
std::vector<SpatialStream> beam_scan(std::span<const RawFrame> frames, std::span<const double> angles);

/// Subtracts the per-element session mean, removing static paths (the LOS).
std::vector<RawFrame> remove_static(std::span<const RawFrame> frames);

/// Angles whose sines are the centres of the M orthogonal beams.
std::vector<double> orthogonal_beams(int antennas = kCsiAntennas);

struct JadeResult {
  Eigen::MatrixXd sources;    // n_sources x T, unit variance
  Eigen::MatrixXd unmixing;   // sources = unmixing * (x - mean)
  Eigen::MatrixXd mixing;     // columns map sources back to the streams
  int sweeps = 0;
  double off_diagonal = 0.0;  // residual off-diagonal mass of the cumulant set
  bool converged = false;
};

/// JADE on rows of x. Jacobi sweeps stop once the off-diagonal mass drops by
/// less than 1e-9 of its value, or after 100 sweeps (converged = false).
/// Throws InvalidArgument when n_sources exceeds the stream count, TooShort
/// when T < 10 * streams, RankDeficient when the covariance rank is too low.
JadeResult jade_separate(const Eigen::MatrixXd& x, int n_sources);

/// Derivative transform used by cDDTW; endpoints copy their neighbours.
std::vector<double> derivative(std::span<const double> x);

/// DTW with squared cost on derivatives under a Sakoe-Chiba band of half-width
/// ceil(window_frac * max length), widened to the length difference when the
/// series differ in length. Throws TooShort below 3 samples.
double cddtw_distance(std::span<const double> a, std::span<const double> b, double window_frac);

/// Plain DTW with squared cost and an optional band (nullopt = unconstrained).
double dtw_distance(std::span<const double> a, std::span<const double> b, std::optional<std::size_t> band);

Eigen::MatrixXd build_distance_matrix(const std::vector<std::vector<double>>& series, double window_frac);

enum class Linkage { Single, Average, Complete };

/// Cluster id per point; ids numbered by first appearance.
std::vector<int> hac_cluster(const Eigen::MatrixXd& d, Linkage linkage, double cut);

/// Add-one smoothed histogram KL(P || Q) on equal-mass bins of the pooled
/// sample. Throws TooFewSamples below 30 samples.
double kl_divergence(std::span<const double> p, std::span<const double> q, int bins);

double pearson(std::span<const double> a, std::span<const double> b);

/// Demotes occupied streams that correlate above `threshold` with a stronger
/// occupied neighbour. Decisions use the original predictions.
std::vector<bool> false_positive_filter(const std::vector<SpatialStream>& streams, const std::vector<bool>& occupied,
                                        double threshold = 0.9);

/// Thresholds estimated from empty-room sessions.
struct CountCalibration {
  double cv2_floor = 0.0;       // activity gate on var / mean^2
  double noise_var = 0.0;       // mean per-stream variance of the empty room
  double kl_mean = 0.0;
  double kl_sd = 0.0;
  double kl_threshold = 0.0;    // kl_mean + kl_k * kl_sd
};

struct CountConfig {
  std::vector<double> scan_angles = orthogonal_beams();
  double gate_k = 6.0;             // cv2 floor = mean + gate_k * sd of the empty room
  double eigen_rel = 0.02;         // source eigenvalues relative to the largest
  double occupancy_factor = 10.0;  // activity floor in units of noise variance
  double window_frac = 0.01;
  Linkage linkage = Linkage::Average;
  double cut_per_sample = 0.2;     // HAC cut on per-sample cDDTW of unit-derivative sources
  int kl_bins = 20;
  double kl_k = 3.0;
  double fp_threshold = 0.9;
  std::size_t min_frames = 200;
  CountCalibration calibration;
};

nlohmann::json to_json(const CountConfig& c);
CountConfig count_config_from_json(const nlohmann::json& doc);

/// Fits the gate, noise level and KL threshold from empty sessions.
CountCalibration calibrate_counting(const std::vector<std::vector<RawFrame>>& empty_sessions,
                                    const CountConfig& config);

/// KL divergence of each neighbouring stream pair (i, i+1).
std::vector<double> neighbour_kl(const std::vector<SpatialStream>& streams, int bins);

struct CountResult {
  int count = 0;
  std::vector<double> stream_cv2;
  std::vector<bool> active;
  std::vector<bool> occupied_after_filter;
  std::vector<double> pair_kl;
  int n_sources = 0;
  std::vector<int> clusters;
  Eigen::MatrixXd distances;  // cDDTW between sources, per sample
  std::vector<double> cluster_activity;
};

nlohmann::json to_json(const CountResult& r);

/// LOS removal, beam scan, activity gating, JADE, cDDTW distances, HAC and the
/// occupancy threshold. Capped at the antenna count. Throws TooShort for
/// sessions under config.min_frames.
CountResult estimate_count(std::span<const RawFrame> session, const CountConfig& config);

}  // namespace mdf::counting
