#include "mdf/features.hpp"

#include <algorithm>
#include <cmath>

namespace mdf::features {

Moments compute_moments(std::span<const double> window) {
  if (window.size() < 2) throw Error(Errc::TooShort, "moment window needs at least 2 samples");
  require_finite(window, "moment window");
  const double n = static_cast<double>(window.size());
  double mu = 0.0;
  for (double x : window) mu += x;
  mu /= n;
  double m2 = 0.0, m3 = 0.0, m4 = 0.0;
  for (double x : window) {
    const double d = x - mu;
    const double d2 = d * d;
    m2 += d2;
    m3 += d2 * d;
    m4 += d2 * d2;
  }
  m2 /= n;
  m3 /= n;
  m4 /= n;
  const double sigma = std::sqrt(m2);
  if (sigma < kDegenerateSigma) throw Error(Errc::DegenerateWindow, "zero deviation window");
  return {mu, sigma, m3 / (m2 * sigma), m4 / (m2 * m2)};
}

nlohmann::json to_json(const FeatureVector& fv) {
  return {{"pipeline", fv.sensor.pipeline().index()},
          {"sensor", fv.sensor.k()},
          {"t_ms", fv.window_end.millis()},
          {"mu", fv.mu},
          {"sigma", fv.sigma},
          {"zeta", fv.zeta},
          {"kappa", fv.kappa}};
}

FeatureVector feature_from_json(const nlohmann::json& doc) {
  try {
    return {SensorId(PipelineId(doc.at("pipeline").get<int>()), doc.at("sensor").get<int>()),
            Timestamp(doc.at("t_ms").get<std::int64_t>()),
            doc.at("mu").get<double>(),
            doc.at("sigma").get<double>(),
            doc.at("zeta").get<double>(),
            doc.at("kappa").get<double>()};
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::SchemaViolation, std::string("feature vector: ") + e.what());
  }
}

double frame_summary(const DenoisedFrame& frame) {
  double acc = 0.0;
  for (double v : frame.values()) acc += v;
  return acc / static_cast<double>(frame.values().size());
}

namespace {

void check_stream(std::span<const DenoisedFrame> frames) {
  for (std::size_t i = 1; i < frames.size(); ++i) {
    if (!(frames[i].sensor() == frames[0].sensor())) {
      throw Error(Errc::MixedSensors, "feature stream mixes sensors");
    }
    if (frames[i].at() < frames[i - 1].at()) {
      throw Error(Errc::NonMonotoneTime, "feature stream not time-ordered");
    }
  }
}

}  // namespace

std::vector<WindowResult> frame_stream_features(std::span<const DenoisedFrame> frames,
                                                std::size_t window_len) {
  if (window_len < 2) throw Error(Errc::TooShort, "window length must be at least 2");
  if (frames.size() < window_len) {
    throw Error(Errc::TooShort, "stream of " + std::to_string(frames.size()) +
                                    " frames is shorter than window " + std::to_string(window_len));
  }
  check_stream(frames);
  std::vector<WindowResult> out;
  std::vector<double> summaries(window_len);
  for (std::size_t start = 0; start + window_len <= frames.size(); start += window_len) {
    for (std::size_t i = 0; i < window_len; ++i) summaries[i] = frame_summary(frames[start + i]);
    const auto& last = frames[start + window_len - 1];
    WindowResult result{last.sensor(), last.at(), Errc::DegenerateWindow};
    try {
      const auto m = compute_moments(summaries);
      result.outcome = FeatureVector{last.sensor(), last.at(), m.mu, m.sigma, m.zeta, m.kappa};
    } catch (const Error& e) {
      result.outcome = e.code();
    }
    out.push_back(std::move(result));
  }
  return out;
}

MomentMaps element_moments(std::span<const DenoisedFrame> window) {
  if (window.size() < 2) throw Error(Errc::TooShort, "moment window needs at least 2 frames");
  const std::size_t len = window.front().values().size();
  for (const auto& f : window) {
    if (f.values().size() != len) throw Error(Errc::DimensionMismatch, "frames differ in length");
  }
  const double n = static_cast<double>(window.size());
  MomentMaps maps{std::vector<double>(len, 0.0), std::vector<double>(len, 0.0),
                  std::vector<double>(len, 0.0), std::vector<double>(len, 0.0)};
  for (const auto& f : window) {
    const auto v = f.values();
    for (std::size_t i = 0; i < len; ++i) maps.mu[i] += v[i];
  }
  for (double& m : maps.mu) m /= n;
  std::vector<double> m2(len, 0.0), m3(len, 0.0), m4(len, 0.0);
  for (const auto& f : window) {
    const auto v = f.values();
    for (std::size_t i = 0; i < len; ++i) {
      const double d = v[i] - maps.mu[i];
      const double d2 = d * d;
      m2[i] += d2;
      m3[i] += d2 * d;
      m4[i] += d2 * d2;
    }
  }
  for (std::size_t i = 0; i < len; ++i) {
    const double var = m2[i] / n;
    maps.sigma[i] = std::sqrt(var);
    if (maps.sigma[i] >= kDegenerateSigma) {
      maps.zeta[i] = (m3[i] / n) / (var * maps.sigma[i]);
      maps.kappa[i] = (m4[i] / n) / (var * var);
    }
  }
  return maps;
}

double bilinear_sample(const Matrix& m, double u, double v) {
  if (m.size() == 0) throw Error(Errc::EmptyMatrix, "bilinear sample of empty matrix");
  const double y = std::clamp(u, 0.0, 1.0) * static_cast<double>(m.rows() - 1);
  const double x = std::clamp(v, 0.0, 1.0) * static_cast<double>(m.cols() - 1);
  const auto y0 = static_cast<Eigen::Index>(std::floor(y));
  const auto x0 = static_cast<Eigen::Index>(std::floor(x));
  const auto y1 = std::min<Eigen::Index>(y0 + 1, m.rows() - 1);
  const auto x1 = std::min<Eigen::Index>(x0 + 1, m.cols() - 1);
  const double fy = y - static_cast<double>(y0);
  const double fx = x - static_cast<double>(x0);
  const double top = (1.0 - fx) * m(y0, x0) + fx * m(y0, x1);
  const double bottom = (1.0 - fx) * m(y1, x0) + fx * m(y1, x1);
  return (1.0 - fy) * top + fy * bottom;
}

Matrix resize_grid(const Matrix& m, int rows, int cols) {
  if (m.size() == 0) throw Error(Errc::EmptyMatrix, "resize of empty matrix");
  if (rows < 1 || cols < 1) throw Error(Errc::InvalidArgument, "target shape must be positive");
  if (m.rows() == rows && m.cols() == cols) return m;
  Matrix out(rows, cols);
  for (int i = 0; i < rows; ++i) {
    const double u = rows == 1 ? 0.0 : static_cast<double>(i) / (rows - 1);
    for (int j = 0; j < cols; ++j) {
      const double v = cols == 1 ? 0.0 : static_cast<double>(j) / (cols - 1);
      out(i, j) = bilinear_sample(m, u, v);
    }
  }
  return out;
}

Matrix block_decimate(const Matrix& m, int rows, int cols) {
  if (m.size() == 0) throw Error(Errc::EmptyMatrix, "decimation of empty matrix");
  if (rows < 1 || cols < 1 || rows > m.rows() || cols > m.cols()) {
    throw Error(Errc::InvalidArgument, "decimation target must be smaller than the input");
  }
  Matrix out(rows, cols);
  for (int i = 0; i < rows; ++i) {
    const Eigen::Index r0 = i * m.rows() / rows;
    const Eigen::Index r1 = (i + 1) * m.rows() / rows;
    for (int j = 0; j < cols; ++j) {
      const Eigen::Index c0 = j * m.cols() / cols;
      const Eigen::Index c1 = (j + 1) * m.cols() / cols;
      out(i, j) = m.block(r0, c0, r1 - r0, c1 - c0).mean();
    }
  }
  return out;
}

Matrix minmax_normalize(const Matrix& m) {
  if (m.size() == 0) return m;
  const double lo = m.minCoeff();
  const double hi = m.maxCoeff();
  if (!(hi > lo)) return Matrix::Constant(m.rows(), m.cols(), 0.5);
  return (m.array() - lo) / (hi - lo);
}

namespace {

using RowMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

Matrix as_matrix(const std::vector<double>& v, Eigen::Index rows, Eigen::Index cols) {
  return Eigen::Map<const RowMajor>(v.data(), rows, cols);
}

const std::vector<double>& moment(const MomentMaps& m, int which) {
  switch (which) {
    case 0: return m.mu;
    case 1: return m.sigma;
    case 2: return m.zeta;
    default: return m.kappa;
  }
}

}  // namespace

Matrix pipeline_feature_matrix(PipelineId pipeline, std::span<const MomentMaps> per_sensor) {
  if (per_sensor.empty()) throw Error(Errc::EmptyInput, "no sensors for feature matrix");
  const auto n_sensors = static_cast<Eigen::Index>(per_sensor.size());
  const std::size_t len = per_sensor.front().mu.size();
  for (const auto& m : per_sensor) {
    if (m.mu.size() != len) throw Error(Errc::DimensionMismatch, "sensor maps differ in length");
  }

  switch (pipeline.kind()) {
    case PipelineKind::Radar: {
      // rows: moment-major blocks of sensors; cols: range bins decimated to 32
      Matrix out(4 * n_sensors, kGridSide);
      for (int mom = 0; mom < 4; ++mom) {
        Matrix block(n_sensors, static_cast<Eigen::Index>(len));
        for (Eigen::Index s = 0; s < n_sensors; ++s) {
          block.row(s) = as_matrix(moment(per_sensor[static_cast<std::size_t>(s)], mom), 1,
                                   static_cast<Eigen::Index>(len));
        }
        out.middleRows(mom * n_sensors, n_sensors) =
            minmax_normalize(block_decimate(block, static_cast<int>(n_sensors), kGridSide));
      }
      return out;
    }
    case PipelineKind::Thz: {
      if (len != static_cast<std::size_t>(kThzPixels)) throw Error(Errc::DimensionMismatch, "THz map size");
      constexpr int half = kGridSide / 2;
      Matrix out(kGridSide, kGridSide);
      for (int mom = 0; mom < 4; ++mom) {
        Matrix acc = Matrix::Zero(kThzSide, kThzSide);
        for (const auto& m : per_sensor) acc += as_matrix(moment(m, mom), kThzSide, kThzSide);
        out.block((mom / 2) * half, (mom % 2) * half, half, half) =
            minmax_normalize(block_decimate(acc / static_cast<double>(n_sensors), half, half));
      }
      return out;
    }
    case PipelineKind::Ir: {
      if (len != static_cast<std::size_t>(kIrPixels)) throw Error(Errc::DimensionMismatch, "IR map size");
      Matrix out(n_sensors * kIrSide, 4 * kIrSide);
      for (int mom = 0; mom < 4; ++mom) {
        Matrix block(n_sensors * kIrSide, kIrSide);
        for (Eigen::Index s = 0; s < n_sensors; ++s) {
          block.middleRows(s * kIrSide, kIrSide) =
              as_matrix(moment(per_sensor[static_cast<std::size_t>(s)], mom), kIrSide, kIrSide);
        }
        out.middleCols(mom * kIrSide, kIrSide) = minmax_normalize(block);
      }
      return out;
    }
    case PipelineKind::Csi: {
      Matrix out(4 * n_sensors, static_cast<Eigen::Index>(len));
      for (int mom = 0; mom < 4; ++mom) {
        Matrix block(n_sensors, static_cast<Eigen::Index>(len));
        for (Eigen::Index s = 0; s < n_sensors; ++s) {
          block.row(s) = as_matrix(moment(per_sensor[static_cast<std::size_t>(s)], mom), 1,
                                   static_cast<Eigen::Index>(len));
        }
        out.middleRows(mom * n_sensors, n_sensors) = minmax_normalize(block);
      }
      return out;
    }
  }
  throw Error(Errc::UnknownPipeline, "feature matrix");
}

FeatureGrid fuse_features(const std::map<PipelineId, Matrix>& per_pipeline,
                          const std::set<PipelineId>& selection, Timestamp window_end) {
  if (selection.empty()) throw Error(Errc::InvalidArgument, "empty pipeline selection");
  FeatureGrid grid{{}, window_end};
  for (const auto& pipeline : selection) {
    const auto it = per_pipeline.find(pipeline);
    if (it == per_pipeline.end()) {
      throw Error(Errc::MissingPipeline, "no features for pipeline " + std::to_string(pipeline.index()));
    }
    grid.channels.emplace_back(pipeline, minmax_normalize(resize_grid(it->second)));
  }
  return grid;
}

nlohmann::json to_json(const FeatureGrid& grid) {
  auto channels = nlohmann::json::array();
  for (const auto& [pipeline, m] : grid.channels) {
    std::vector<double> flat;
    flat.reserve(static_cast<std::size_t>(m.size()));
    for (Eigen::Index r = 0; r < m.rows(); ++r)
      for (Eigen::Index c = 0; c < m.cols(); ++c) flat.push_back(m(r, c));
    channels.push_back({{"pipeline", pipeline.index()}, {"rows", m.rows()}, {"cols", m.cols()}, {"data", flat}});
  }
  return {{"t_ms", grid.window_end.millis()}, {"channels", channels}};
}

FeatureGrid grid_from_json(const nlohmann::json& doc) {
  try {
    FeatureGrid grid{{}, Timestamp(doc.at("t_ms").get<std::int64_t>())};
    for (const auto& ch : doc.at("channels")) {
      const auto rows = ch.at("rows").get<Eigen::Index>();
      const auto cols = ch.at("cols").get<Eigen::Index>();
      const auto data = ch.at("data").get<std::vector<double>>();
      if (static_cast<Eigen::Index>(data.size()) != rows * cols) {
        throw Error(Errc::SchemaViolation, "grid channel data size");
      }
      grid.channels.emplace_back(PipelineId(ch.at("pipeline").get<int>()), as_matrix(data, rows, cols));
    }
    return grid;
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::SchemaViolation, std::string("feature grid: ") + e.what());
  }
}

}  // namespace mdf::features
