#include "mdf/core.hpp"

#include <cmath>
#include <cstdio>
#include <numbers>

namespace mdf {

std::string_view errc_name(Errc code) {
  switch (code) {
    case Errc::InvalidArgument: return "InvalidArgument";
    case Errc::NonFinite: return "NonFinite";
    case Errc::EmptyInput: return "EmptyInput";
    case Errc::MixedSensors: return "MixedSensors";
    case Errc::DimensionMismatch: return "DimensionMismatch";
    case Errc::NonMonotoneTime: return "NonMonotoneTime";
    case Errc::DegenerateWindow: return "DegenerateWindow";
    case Errc::TooShort: return "TooShort";
    case Errc::EmptyMatrix: return "EmptyMatrix";
    case Errc::MissingPipeline: return "MissingPipeline";
    case Errc::UnknownTopic: return "UnknownTopic";
    case Errc::BadFilter: return "BadFilter";
    case Errc::NotFound: return "NotFound";
    case Errc::ClockSkew: return "ClockSkew";
    case Errc::UnknownPipeline: return "UnknownPipeline";
    case Errc::TooFewSamples: return "TooFewSamples";
    case Errc::InconsistentChannels: return "InconsistentChannels";
    case Errc::ChannelMismatch: return "ChannelMismatch";
    case Errc::RankDeficient: return "RankDeficient";
    case Errc::NonConvergence: return "NonConvergence";
    case Errc::OutOfRange: return "OutOfRange";
    case Errc::HorizonTooShort: return "HorizonTooShort";
    case Errc::NoGroundTruth: return "NoGroundTruth";
    case Errc::BadConfig: return "BadConfig";
    case Errc::MissingFile: return "MissingFile";
    case Errc::SchemaViolation: return "SchemaViolation";
    case Errc::Io: return "Io";
    case Errc::Timeout: return "Timeout";
  }
  return "Unknown";
}

Error::Error(Errc code, const std::string& what)
    : std::runtime_error(std::string(errc_name(code)) + ": " + what), code_(code) {}

Errc errc_from_name(std::string_view name) {
  for (int c = 0; c <= static_cast<int>(Errc::Timeout); ++c) {
    if (errc_name(static_cast<Errc>(c)) == name) return static_cast<Errc>(c);
  }
  return Errc::InvalidArgument;
}

std::string_view function_name(HrcFunction f) noexcept {
  switch (f) {
    case HrcFunction::WorkerCounting: return "counting";
    case HrcFunction::MotionDetection: return "motion";
    case HrcFunction::CoPresence: return "copresence";
  }
  return "counting";
}

HrcFunction function_from_name(std::string_view name) {
  for (auto f : {HrcFunction::WorkerCounting, HrcFunction::MotionDetection, HrcFunction::CoPresence}) {
    if (function_name(f) == name) return f;
  }
  throw Error(Errc::InvalidArgument, "unknown HRC function '" + std::string(name) + "'");
}

PipelineId::PipelineId(int index) : index_(index) {
  if (index < 1 || index > kPipelineCount) {
    throw Error(Errc::UnknownPipeline, "pipeline index " + std::to_string(index));
  }
}

std::size_t PipelineId::frame_length() const noexcept {
  switch (kind()) {
    case PipelineKind::Radar: return kRadarBins;
    case PipelineKind::Thz: return kThzPixels;
    case PipelineKind::Ir: return kIrPixels;
    case PipelineKind::Csi: return kCsiValues;
  }
  return 0;
}

int PipelineId::max_sensors() const noexcept {
  switch (kind()) {
    case PipelineKind::Radar: return 6;
    case PipelineKind::Thz: return kThzPixels;
    case PipelineKind::Ir: return 3;
    case PipelineKind::Csi: return kCsiAntennas;
  }
  return 0;
}

std::string_view PipelineId::name() const noexcept {
  switch (kind()) {
    case PipelineKind::Radar: return "fmcw_radar";
    case PipelineKind::Thz: return "thz_camera";
    case PipelineKind::Ir: return "ir_array";
    case PipelineKind::Csi: return "csi_array";
  }
  return "";
}

std::array<PipelineId, kPipelineCount> PipelineId::all() {
  return {PipelineId(1), PipelineId(2), PipelineId(3), PipelineId(4)};
}

SensorId::SensorId(PipelineId pipeline, int k) : pipeline_(pipeline), k_(k) {
  if (k < 1 || k > pipeline.max_sensors()) {
    throw Error(Errc::InvalidArgument, "sensor index " + std::to_string(k) + " outside 1.." +
                                           std::to_string(pipeline.max_sensors()));
  }
}

Timestamp::Timestamp(std::int64_t millis) : millis_(millis) {
  if (millis < 0) throw Error(Errc::InvalidArgument, "negative timestamp");
}

void require_finite(std::span<const double> values, std::string_view what) {
  for (double v : values) {
    if (!std::isfinite(v)) throw Error(Errc::NonFinite, std::string(what) + " has non-finite entry");
  }
}

RawFrame::RawFrame(SensorId sensor, Timestamp at, std::vector<double> values)
    : sensor_(sensor), at_(at), values_(std::move(values)) {
  if (values_.size() != sensor_.pipeline().frame_length()) {
    throw Error(Errc::DimensionMismatch,
                "pipeline " + std::to_string(sensor_.pipeline().index()) + " frame needs " +
                    std::to_string(sensor_.pipeline().frame_length()) + " values, got " +
                    std::to_string(values_.size()));
  }
  require_finite(values_, "raw frame");
}

DenoisedFrame::DenoisedFrame(SensorId sensor, Timestamp at, std::vector<double> values)
    : sensor_(sensor), at_(at), values_(std::move(values)) {
  if (values_.empty()) throw Error(Errc::EmptyInput, "denoised frame is empty");
  require_finite(values_, "denoised frame");
}

Rng::Rng(std::uint64_t seed) : engine_(seed) {}

double Rng::uniform() {
  // 53 high bits -> [0, 1)
  return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
}

std::uint64_t Rng::below(std::uint64_t n) {
  if (n == 0) throw Error(Errc::InvalidArgument, "below(0)");
  const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                              std::numeric_limits<std::uint64_t>::max() % n;
  std::uint64_t x;
  do {
    x = engine_();
  } while (x >= limit);
  return x % n;
}

double Rng::normal() {
  if (has_spare_) {
    has_spare_ = false;
    return spare_;
  }
  double u1 = uniform();
  while (u1 <= 0.0) u1 = uniform();
  const double u2 = uniform();
  const double r = std::sqrt(-2.0 * std::log(u1));
  const double a = 2.0 * std::numbers::pi * u2;
  spare_ = r * std::sin(a);
  has_spare_ = true;
  return r * std::cos(a);
}

Rng make_rng(std::uint64_t seed) { return Rng(seed); }

std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b) {
  std::uint64_t z = a + 0x9e3779b97f4a7c15ULL * (b + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

std::string fnv1a_hex(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace mdf
