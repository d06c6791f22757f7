#pragma once

#include <complex>
#include <span>
#include <variant>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "mdf/core.hpp"

/// Pipeline-specific pre-processing: background estimation from empty-cell
/// recordings and per-frame denoising.
namespace mdf::prep {

using Complex = std::complex<double>;

/// Mean and covariance of the empty-cell radar spectrum together with the
/// symmetric inverse square root used for whitening.
struct RadarBackground {
  Eigen::VectorXd mean;
  Eigen::MatrixXd covariance;  // includes the regularization term
  double eigen_floor = 0.0;
  Eigen::MatrixXd inv_sqrt;    // C^{-1/2}, eigenvalues floored at eigen_floor

  /// Recomputes eigen_floor and inv_sqrt from covariance.
  void refresh_whitening();
};

/// Population mean/covariance (divide by count) of equally sized vectors plus
/// regularization * I. Works for any dimension; the radar entry point below
/// adds frame validation.
RadarBackground estimate_whitening(std::span<const std::vector<double>> samples,
                                   double regularization);

RadarBackground estimate_radar_background(std::span<const RawFrame> empty_frames,
                                          double regularization);

/// C^{-1/2} (x - mean).
std::vector<double> whiten(std::span<const double> x, const RadarBackground& bg);

DenoisedFrame radar_denoise(const RawFrame& frame, const RadarBackground& bg);

/// Non-overlapping averages of `window` consecutive radar frames, stamped with
/// the last frame of each group. A trailing partial group is dropped.
std::vector<RawFrame> average_frames(std::span<const RawFrame> frames, std::size_t window = 8);

struct ThzBackground {
  std::vector<double> b;
  std::vector<double> sigma;
};

constexpr double kThzSigmaFloor = 1e-9;

ThzBackground estimate_thz_background(std::span<const RawFrame> empty_frames);
DenoisedFrame thz_denoise(const RawFrame& frame, const ThzBackground& bg);
/// Inverse of thz_denoise: x -> sigma * x + b.
std::vector<double> thz_restore(std::span<const double> denoised, const ThzBackground& bg);

struct IrBackground {
  std::vector<double> frame;  // degrees C
};

IrBackground estimate_ir_background(std::span<const RawFrame> empty_frames);
DenoisedFrame ir_denoise(const RawFrame& frame, const IrBackground& bg);

struct CsiCalibration {
  std::vector<Complex> weights;  // unit L2 norm, one per antenna
  std::vector<Complex> los;      // beamformed LOS estimate per subcarrier
};

/// Complex sample of subcarrier s at antenna k from an interleaved CSI frame.
Complex csi_sample(const RawFrame& frame, int subcarrier, int antenna);

/// Scales weights to unit norm. Throws InvalidArgument on a zero vector.
std::vector<Complex> normalize_weights(std::vector<Complex> weights);

/// w . X(s) = sum_k w_k X_k(s) for every subcarrier s.
std::vector<Complex> beamform(const RawFrame& frame, std::span<const Complex> weights);

/// Per-subcarrier average of the beamformed quiet frames.
std::vector<Complex> estimate_los(std::span<const RawFrame> quiet_frames,
                                  std::span<const Complex> weights);

/// w . X - L~, interleaved real/imag per subcarrier.
DenoisedFrame csi_isolate(const RawFrame& frame, const CsiCalibration& cal);

/// Calibration parameters of one sensor, tagged by kind.
struct BackgroundModel {
  SensorId sensor;
  std::variant<RadarBackground, ThzBackground, IrBackground, CsiCalibration> params;

  std::string_view kind() const noexcept;
};

/// Dispatches to the pre-processing operator matching the model kind. Throws
/// DimensionMismatch when the frame pipeline differs from the model kind and
/// MixedSensors when the frame comes from another sensor.
DenoisedFrame denoise(const RawFrame& frame, const BackgroundModel& model);

/// {"pipeline", "sensor", "kind", "params"}
nlohmann::json to_json(const BackgroundModel& model);
BackgroundModel background_from_json(const nlohmann::json& doc);

}  // namespace mdf::prep
