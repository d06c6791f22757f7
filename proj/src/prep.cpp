#include "mdf/prep.hpp"

#include <algorithm>
#include <cmath>

namespace mdf::prep {

namespace {

void require_pipeline(const RawFrame& frame, PipelineKind kind) {
  if (frame.sensor().pipeline().kind() != kind) {
    throw Error(Errc::DimensionMismatch, "frame from pipeline " +
                                             std::to_string(frame.sensor().pipeline().index()) +
                                             " given to pipeline " +
                                             std::to_string(static_cast<int>(kind)) + " operator");
  }
}

void require_same_sensor(std::span<const RawFrame> frames) {
  for (const auto& f : frames) {
    if (!(f.sensor() == frames.front().sensor())) {
      throw Error(Errc::MixedSensors, "background frames come from several sensors");
    }
  }
}

void require_min_frames(std::span<const RawFrame> frames, std::size_t n) {
  if (frames.size() < n) {
    throw Error(Errc::EmptyInput, "need at least " + std::to_string(n) + " empty-cell frames, got " +
                                      std::to_string(frames.size()));
  }
}

}  // namespace

void RadarBackground::refresh_whitening() {
  const auto dim = covariance.rows();
  eigen_floor = std::max(1e-9, 1e-9 * covariance.trace() / static_cast<double>(dim));
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(covariance);
  Eigen::VectorXd inv_sqrt_vals =
      eig.eigenvalues().unaryExpr([this](double l) { return 1.0 / std::sqrt(std::max(l, eigen_floor)); });
  inv_sqrt = eig.eigenvectors() * inv_sqrt_vals.asDiagonal() * eig.eigenvectors().transpose();
}

RadarBackground estimate_whitening(std::span<const std::vector<double>> samples,
                                   double regularization) {
  if (samples.size() < 2) throw Error(Errc::EmptyInput, "whitening needs at least 2 samples");
  if (regularization < 0.0) throw Error(Errc::InvalidArgument, "negative regularization");
  const auto dim = static_cast<Eigen::Index>(samples.front().size());
  if (dim == 0) throw Error(Errc::EmptyInput, "zero-length samples");

  Eigen::MatrixXd data(dim, static_cast<Eigen::Index>(samples.size()));
  for (std::size_t j = 0; j < samples.size(); ++j) {
    if (static_cast<Eigen::Index>(samples[j].size()) != dim) {
      throw Error(Errc::DimensionMismatch, "samples differ in length");
    }
    data.col(static_cast<Eigen::Index>(j)) = Eigen::Map<const Eigen::VectorXd>(samples[j].data(), dim);
  }

  RadarBackground bg;
  const double n = static_cast<double>(samples.size());
  bg.mean = data.rowwise().mean();
  data.colwise() -= bg.mean;
  bg.covariance = (data * data.transpose()) / n;
  bg.covariance = 0.5 * (bg.covariance + bg.covariance.transpose());
  bg.covariance.diagonal().array() += regularization;
  bg.refresh_whitening();
  return bg;
}

RadarBackground estimate_radar_background(std::span<const RawFrame> empty_frames,
                                          double regularization) {
  require_min_frames(empty_frames, 2);
  require_same_sensor(empty_frames);
  require_pipeline(empty_frames.front(), PipelineKind::Radar);
  std::vector<std::vector<double>> samples;
  samples.reserve(empty_frames.size());
  for (const auto& f : empty_frames) samples.emplace_back(f.values().begin(), f.values().end());
  return estimate_whitening(samples, regularization);
}

std::vector<double> whiten(std::span<const double> x, const RadarBackground& bg) {
  if (static_cast<Eigen::Index>(x.size()) != bg.mean.size()) {
    throw Error(Errc::DimensionMismatch, "whiten: vector length " + std::to_string(x.size()) +
                                             " vs background " + std::to_string(bg.mean.size()));
  }
  const Eigen::VectorXd centered =
      Eigen::Map<const Eigen::VectorXd>(x.data(), static_cast<Eigen::Index>(x.size())) - bg.mean;
  const Eigen::VectorXd out = bg.inv_sqrt * centered;
  return {out.data(), out.data() + out.size()};
}

DenoisedFrame radar_denoise(const RawFrame& frame, const RadarBackground& bg) {
  require_pipeline(frame, PipelineKind::Radar);
  return DenoisedFrame(frame.sensor(), frame.at(), whiten(frame.values(), bg));
}

std::vector<RawFrame> average_frames(std::span<const RawFrame> frames, std::size_t window) {
  if (window == 0) throw Error(Errc::InvalidArgument, "averaging window must be positive");
  std::vector<RawFrame> out;
  for (std::size_t start = 0; start + window <= frames.size(); start += window) {
    const auto group = frames.subspan(start, window);
    require_same_sensor(group);
    std::vector<double> acc(group.front().values().size(), 0.0);
    for (const auto& f : group) {
      for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += f.values()[i];
    }
    for (double& v : acc) v /= static_cast<double>(window);
    out.emplace_back(group.back().sensor(), group.back().at(), std::move(acc));
  }
  return out;
}

ThzBackground estimate_thz_background(std::span<const RawFrame> empty_frames) {
  require_min_frames(empty_frames, 2);
  require_same_sensor(empty_frames);
  require_pipeline(empty_frames.front(), PipelineKind::Thz);
  const std::size_t n_pix = empty_frames.front().values().size();
  ThzBackground bg{std::vector<double>(n_pix, 0.0), std::vector<double>(n_pix, 0.0)};
  const double n = static_cast<double>(empty_frames.size());
  for (const auto& f : empty_frames) {
    for (std::size_t i = 0; i < n_pix; ++i) bg.b[i] += f.values()[i];
  }
  for (double& b : bg.b) b /= n;
  for (const auto& f : empty_frames) {
    for (std::size_t i = 0; i < n_pix; ++i) {
      const double d = f.values()[i] - bg.b[i];
      bg.sigma[i] += d * d;
    }
  }
  for (double& s : bg.sigma) s = std::sqrt(s / n);
  return bg;
}

DenoisedFrame thz_denoise(const RawFrame& frame, const ThzBackground& bg) {
  require_pipeline(frame, PipelineKind::Thz);
  const auto x = frame.values();
  if (bg.b.size() != x.size() || bg.sigma.size() != x.size()) {
    throw Error(Errc::DimensionMismatch, "THz background size differs from frame");
  }
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    out[i] = (x[i] - bg.b[i]) / std::max(bg.sigma[i], kThzSigmaFloor);
  }
  return DenoisedFrame(frame.sensor(), frame.at(), std::move(out));
}

std::vector<double> thz_restore(std::span<const double> denoised, const ThzBackground& bg) {
  if (bg.b.size() != denoised.size()) throw Error(Errc::DimensionMismatch, "THz restore size");
  std::vector<double> out(denoised.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = std::max(bg.sigma[i], kThzSigmaFloor) * denoised[i] + bg.b[i];
  }
  return out;
}

IrBackground estimate_ir_background(std::span<const RawFrame> empty_frames) {
  require_min_frames(empty_frames, 1);
  require_same_sensor(empty_frames);
  require_pipeline(empty_frames.front(), PipelineKind::Ir);
  IrBackground bg{std::vector<double>(empty_frames.front().values().size(), 0.0)};
  for (const auto& f : empty_frames) {
    for (std::size_t i = 0; i < bg.frame.size(); ++i) bg.frame[i] += f.values()[i];
  }
  for (double& v : bg.frame) v /= static_cast<double>(empty_frames.size());
  return bg;
}

DenoisedFrame ir_denoise(const RawFrame& frame, const IrBackground& bg) {
  require_pipeline(frame, PipelineKind::Ir);
  const auto x = frame.values();
  if (bg.frame.size() != x.size()) throw Error(Errc::DimensionMismatch, "IR background size");
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] - bg.frame[i];
  return DenoisedFrame(frame.sensor(), frame.at(), std::move(out));
}

Complex csi_sample(const RawFrame& frame, int subcarrier, int antenna) {
  const auto v = frame.values();
  const auto idx = static_cast<std::size_t>((subcarrier * kCsiAntennas + antenna) * 2);
  return {v[idx], v[idx + 1]};
}

std::vector<Complex> normalize_weights(std::vector<Complex> weights) {
  double norm = 0.0;
  for (const auto& w : weights) norm += std::norm(w);
  norm = std::sqrt(norm);
  if (norm <= 0.0) throw Error(Errc::InvalidArgument, "zero beamforming weights");
  for (auto& w : weights) w /= norm;
  return weights;
}

std::vector<Complex> beamform(const RawFrame& frame, std::span<const Complex> weights) {
  require_pipeline(frame, PipelineKind::Csi);
  if (weights.size() != static_cast<std::size_t>(kCsiAntennas)) {
    throw Error(Errc::DimensionMismatch, "need one weight per antenna");
  }
  std::vector<Complex> out(kCsiSubcarriers);
  for (int s = 0; s < kCsiSubcarriers; ++s) {
    Complex acc{};
    for (int k = 0; k < kCsiAntennas; ++k) acc += weights[static_cast<std::size_t>(k)] * csi_sample(frame, s, k);
    out[static_cast<std::size_t>(s)] = acc;
  }
  return out;
}

std::vector<Complex> estimate_los(std::span<const RawFrame> quiet_frames,
                                  std::span<const Complex> weights) {
  require_min_frames(quiet_frames, 1);
  std::vector<Complex> acc(kCsiSubcarriers);
  for (const auto& f : quiet_frames) {
    const auto y = beamform(f, weights);
    for (std::size_t s = 0; s < acc.size(); ++s) acc[s] += y[s];
  }
  for (auto& v : acc) v /= static_cast<double>(quiet_frames.size());
  return acc;
}

DenoisedFrame csi_isolate(const RawFrame& frame, const CsiCalibration& cal) {
  if (cal.los.size() != static_cast<std::size_t>(kCsiSubcarriers)) {
    throw Error(Errc::DimensionMismatch, "LOS estimate needs one value per subcarrier");
  }
  double norm = 0.0;
  for (const auto& w : cal.weights) norm += std::norm(w);
  if (std::abs(std::sqrt(norm) - 1.0) > 1e-9) {
    throw Error(Errc::InvalidArgument, "calibration weights must have unit norm");
  }
  const auto y = beamform(frame, cal.weights);
  std::vector<double> out(2 * y.size());
  for (std::size_t s = 0; s < y.size(); ++s) {
    const Complex r = y[s] - cal.los[s];
    out[2 * s] = r.real();
    out[2 * s + 1] = r.imag();
  }
  return DenoisedFrame(frame.sensor(), frame.at(), std::move(out));
}

std::string_view BackgroundModel::kind() const noexcept {
  switch (params.index()) {
    case 0: return "radar";
    case 1: return "thz";
    case 2: return "ir";
    default: return "csi";
  }
}

DenoisedFrame denoise(const RawFrame& frame, const BackgroundModel& model) {
  if (!(frame.sensor() == model.sensor)) {
    if (frame.sensor().pipeline() != model.sensor.pipeline()) {
      throw Error(Errc::DimensionMismatch, "frame pipeline differs from background pipeline");
    }
    throw Error(Errc::MixedSensors, "frame sensor differs from background sensor");
  }
  return std::visit(
      [&frame](const auto& p) -> DenoisedFrame {
        using T = std::decay_t<decltype(p)>;
        if constexpr (std::is_same_v<T, RadarBackground>) return radar_denoise(frame, p);
        else if constexpr (std::is_same_v<T, ThzBackground>) return thz_denoise(frame, p);
        else if constexpr (std::is_same_v<T, IrBackground>) return ir_denoise(frame, p);
        else return csi_isolate(frame, p);
      },
      model.params);
}

namespace {

nlohmann::json complex_to_json(std::span<const Complex> v) {
  auto arr = nlohmann::json::array();
  for (const auto& c : v) arr.push_back({c.real(), c.imag()});
  return arr;
}

std::vector<Complex> complex_from_json(const nlohmann::json& arr) {
  std::vector<Complex> out;
  for (const auto& c : arr) out.emplace_back(c.at(0).get<double>(), c.at(1).get<double>());
  return out;
}

PipelineKind kind_pipeline(std::string_view kind) {
  if (kind == "radar") return PipelineKind::Radar;
  if (kind == "thz") return PipelineKind::Thz;
  if (kind == "ir") return PipelineKind::Ir;
  if (kind == "csi") return PipelineKind::Csi;
  throw Error(Errc::SchemaViolation, "unknown background kind '" + std::string(kind) + "'");
}

}  // namespace

nlohmann::json to_json(const BackgroundModel& model) {
  nlohmann::json params;
  std::visit(
      [&params](const auto& p) {
        using T = std::decay_t<decltype(p)>;
        if constexpr (std::is_same_v<T, RadarBackground>) {
          const auto n = p.mean.size();
          params["mean"] = std::vector<double>(p.mean.data(), p.mean.data() + n);
          std::vector<double> cov;
          cov.reserve(static_cast<std::size_t>(n * n));
          for (Eigen::Index r = 0; r < n; ++r)
            for (Eigen::Index c = 0; c < n; ++c) cov.push_back(p.covariance(r, c));
          params["covariance"] = std::move(cov);
          params["eigen_floor"] = p.eigen_floor;
        } else if constexpr (std::is_same_v<T, ThzBackground>) {
          params["b"] = p.b;
          params["sigma"] = p.sigma;
        } else if constexpr (std::is_same_v<T, IrBackground>) {
          params["frame"] = p.frame;
        } else {
          params["weights"] = complex_to_json(p.weights);
          params["los"] = complex_to_json(p.los);
        }
      },
      model.params);
  return {{"pipeline", model.sensor.pipeline().index()},
          {"sensor", model.sensor.k()},
          {"kind", model.kind()},
          {"params", std::move(params)}};
}

BackgroundModel background_from_json(const nlohmann::json& doc) {
  try {
    const SensorId sensor(PipelineId(doc.at("pipeline").get<int>()), doc.at("sensor").get<int>());
    const auto kind = doc.at("kind").get<std::string>();
    if (kind_pipeline(kind) != sensor.pipeline().kind()) {
      throw Error(Errc::SchemaViolation, "background kind does not match pipeline");
    }
    const auto& p = doc.at("params");
    BackgroundModel model{sensor, IrBackground{}};
    if (kind == "radar") {
      RadarBackground bg;
      const auto mean = p.at("mean").get<std::vector<double>>();
      const auto cov = p.at("covariance").get<std::vector<double>>();
      const auto n = static_cast<Eigen::Index>(mean.size());
      if (static_cast<Eigen::Index>(cov.size()) != n * n) {
        throw Error(Errc::SchemaViolation, "covariance size is not mean length squared");
      }
      bg.mean = Eigen::Map<const Eigen::VectorXd>(mean.data(), n);
      bg.covariance = Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
          cov.data(), n, n);
      bg.refresh_whitening();
      model.params = std::move(bg);
    } else if (kind == "thz") {
      model.params = ThzBackground{p.at("b").get<std::vector<double>>(), p.at("sigma").get<std::vector<double>>()};
    } else if (kind == "ir") {
      model.params = IrBackground{p.at("frame").get<std::vector<double>>()};
    } else {
      model.params = CsiCalibration{complex_from_json(p.at("weights")), complex_from_json(p.at("los"))};
    }
    return model;
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::SchemaViolation, std::string("background model: ") + e.what());
  }
}

}  // namespace mdf::prep
