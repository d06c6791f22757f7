#pragma once

#include <array>
#include <cstdint>
#include <limits>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace mdf {

//=============================================================================
// Errors
//=============================================================================

enum class Errc {
  InvalidArgument,
  NonFinite,
  EmptyInput,
  MixedSensors,
  DimensionMismatch,
  NonMonotoneTime,
  DegenerateWindow,
  TooShort,
  EmptyMatrix,
  MissingPipeline,
  UnknownTopic,
  BadFilter,
  NotFound,
  ClockSkew,
  UnknownPipeline,
  TooFewSamples,
  InconsistentChannels,
  ChannelMismatch,
  RankDeficient,
  NonConvergence,
  OutOfRange,
  HorizonTooShort,
  NoGroundTruth,
  BadConfig,
  MissingFile,
  SchemaViolation,
  Io,
  Timeout,
};

std::string_view errc_name(Errc code);
/// Inverse of errc_name; unknown names map to InvalidArgument.
Errc errc_from_name(std::string_view name);

class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& what);
  Errc code() const noexcept { return code_; }

 private:
  Errc code_;
};

//=============================================================================
// Identifiers
//=============================================================================

enum class PipelineKind { Radar = 1, Thz = 2, Ir = 3, Csi = 4 };

constexpr int kPipelineCount = 4;
constexpr int kRadarBins = 512;       // N_FFT
constexpr int kThzSide = 32;
constexpr int kThzPixels = kThzSide * kThzSide;
constexpr int kIrSide = 8;
constexpr int kIrPixels = kIrSide * kIrSide;  // N_TP
constexpr int kCsiAntennas = 4;
constexpr int kCsiSubcarriers = 52;
constexpr int kCsiValues = kCsiSubcarriers * kCsiAntennas * 2;

class PipelineId {
 public:
  /// Throws UnknownPipeline unless 1 <= index <= 4.
  explicit PipelineId(int index);
  PipelineId(PipelineKind kind) : index_(static_cast<int>(kind)) {}

  int index() const noexcept { return index_; }
  PipelineKind kind() const noexcept { return static_cast<PipelineKind>(index_); }

  /// Number of values in one raw frame of this pipeline.
  std::size_t frame_length() const noexcept;
  /// Configured sensor count M of the pipeline.
  int max_sensors() const noexcept;
  std::string_view name() const noexcept;

  friend auto operator<=>(const PipelineId&, const PipelineId&) = default;

  static std::array<PipelineId, kPipelineCount> all();

 private:
  int index_;
};

class SensorId {
 public:
  SensorId(PipelineId pipeline, int k);

  PipelineId pipeline() const noexcept { return pipeline_; }
  int k() const noexcept { return k_; }

  friend auto operator<=>(const SensorId&, const SensorId&) = default;

 private:
  PipelineId pipeline_;
  int k_;
};

/// The three HRC functions served by the platform.
enum class HrcFunction { WorkerCounting, MotionDetection, CoPresence };

/// "counting", "motion", "copresence".
std::string_view function_name(HrcFunction f) noexcept;
/// Throws InvalidArgument for anything else.
HrcFunction function_from_name(std::string_view name);

/// Milliseconds since scenario start.
class Timestamp {
 public:
  constexpr Timestamp() = default;
  explicit Timestamp(std::int64_t millis);

  constexpr std::int64_t millis() const noexcept { return millis_; }

  friend auto operator<=>(const Timestamp&, const Timestamp&) = default;

 private:
  std::int64_t millis_ = 0;
};

//=============================================================================
// Frames
//=============================================================================

class RawFrame {
 public:
  /// Rejects a values length that differs from the pipeline's frame length
  /// and any non-finite entry.
  RawFrame(SensorId sensor, Timestamp at, std::vector<double> values);

  const SensorId& sensor() const noexcept { return sensor_; }
  Timestamp at() const noexcept { return at_; }
  const std::vector<double>& values() const& noexcept { return values_; }
  std::vector<double> values() && noexcept { return std::move(values_); }

  friend bool operator==(const RawFrame&, const RawFrame&) = default;

 private:
  SensorId sensor_;
  Timestamp at_;
  std::vector<double> values_;
};

/// Pre-processed frame. Same length as its source, except for CSI where the
/// beamformer reduces antennas to one complex sample per subcarrier.
class DenoisedFrame {
 public:
  DenoisedFrame(SensorId sensor, Timestamp at, std::vector<double> values);

  const SensorId& sensor() const noexcept { return sensor_; }
  Timestamp at() const noexcept { return at_; }
  const std::vector<double>& values() const& noexcept { return values_; }
  std::vector<double> values() && noexcept { return std::move(values_); }

 private:
  SensorId sensor_;
  Timestamp at_;
  std::vector<double> values_;
};

/// Accepts frames of one sensor and rejects decreasing timestamps.
template <typename Frame>
class StreamBuilder {
 public:
  void push(Frame frame) {
    if (!frames_.empty()) {
      if (!(frame.sensor() == frames_.back().sensor())) {
        throw Error(Errc::MixedSensors, "stream holds frames of one sensor only");
      }
      if (frame.at() < frames_.back().at()) {
        throw Error(Errc::NonMonotoneTime, "timestamp decreased within sensor stream");
      }
    }
    frames_.push_back(std::move(frame));
  }
  const std::vector<Frame>& frames() const noexcept { return frames_; }
  std::vector<Frame> take() && { return std::move(frames_); }

 private:
  std::vector<Frame> frames_;
};

//=============================================================================
// Randomness
//=============================================================================

/// Deterministic random stream: the 64-bit Mersenne Twister (fixed by the
/// C++ standard) with hand-written uniform and normal transforms, so draws do
/// not depend on the standard library's distribution implementations.
class Rng {
 public:
  explicit Rng(std::uint64_t seed);

  std::uint64_t next_u64() { return engine_(); }
  /// Uniform on [0, 1).
  double uniform();
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  /// Uniform integer on [0, n).
  std::uint64_t below(std::uint64_t n);
  /// Standard normal via Box-Muller.
  double normal();
  double normal(double mean, double stddev) { return mean + stddev * normal(); }

 private:
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

Rng make_rng(std::uint64_t seed);

/// splitmix64 finalizer; combines seeds into per-frame stream seeds.
std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b);

/// FNV-1a 64-bit hash, hex encoded. Used for config digests.
std::string fnv1a_hex(std::string_view bytes);

void require_finite(std::span<const double> values, std::string_view what);

}  // namespace mdf
