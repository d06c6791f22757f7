#include "mdf/counting.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>

namespace mdf::counting {

using Eigen::MatrixXd;
using Eigen::VectorXd;
using Json = nlohmann::json;

namespace {

void require_csi(const RawFrame& f) {
  if (f.sensor().pipeline().kind() != PipelineKind::Csi || f.values().size() != static_cast<std::size_t>(kCsiValues)) {
    throw Error(Errc::DimensionMismatch, "counting needs CSI frames");
  }
}

double mean_of(std::span<const double> x) { return std::accumulate(x.begin(), x.end(), 0.0) / static_cast<double>(x.size()); }

double var_of(std::span<const double> x) {
  const double m = mean_of(x);
  double s = 0.0;
  for (double v : x) s += (v - m) * (v - m);
  return s / static_cast<double>(x.size());
}

double cv2_of(std::span<const double> x) {
  const double m = mean_of(x);
  return m > 0.0 ? var_of(x) / (m * m) : 0.0;
}

std::pair<double, double> mean_sd(const std::vector<double>& v) {
  if (v.empty()) return {0.0, 0.0};
  return {mean_of(v), std::sqrt(var_of(v))};
}

}  // namespace

//=============================================================================
// Beam scanning
//=============================================================================

std::vector<Complex> steering_weights(double angle_rad, int antennas) {
  std::vector<Complex> w;
  const double norm = 1.0 / std::sqrt(static_cast<double>(antennas));
  for (int k = 0; k < antennas; ++k) w.push_back(std::polar(norm, -std::numbers::pi * k * std::sin(angle_rad)));
  return w;
}

std::vector<double> orthogonal_beams(int antennas) {
  std::vector<double> out;
  for (int i = 0; i < antennas; ++i) out.push_back(std::asin(-1.0 + (2.0 * i + 1.0) / antennas));
  return out;
}

std::vector<SpatialStream> beam_scan(std::span<const RawFrame> frames, std::span<const double> angles) {
  if (angles.empty()) throw Error(Errc::InvalidArgument, "beam scan needs at least one angle");
  std::vector<SpatialStream> out;
  std::vector<std::vector<Complex>> weights;
  for (double a : angles) {
    if (!(std::abs(a) < std::numbers::pi / 2)) throw Error(Errc::InvalidArgument, "steering angle outside (-pi/2, pi/2)");
    out.push_back({a, {}});
    out.back().samples.reserve(frames.size());
    weights.push_back(steering_weights(a));
  }
  for (const auto& f : frames) {
    require_csi(f);
    const auto& v = f.values();
    for (std::size_t b = 0; b < weights.size(); ++b) {
      double p = 0.0;
      for (int s = 0; s < kCsiSubcarriers; ++s) {
        Complex y;
        for (int k = 0; k < kCsiAntennas; ++k) {
          const auto i = static_cast<std::size_t>((s * kCsiAntennas + k) * 2);
          y += weights[b][static_cast<std::size_t>(k)] * Complex(v[i], v[i + 1]);
        }
        p += std::norm(y);
      }
      out[b].samples.push_back(p / kCsiSubcarriers);
    }
  }
  return out;
}

std::vector<RawFrame> remove_static(std::span<const RawFrame> frames) {
  if (frames.empty()) return {};
  std::vector<double> mean(static_cast<std::size_t>(kCsiValues), 0.0);
  for (const auto& f : frames) {
    require_csi(f);
    const auto& v = f.values();
    for (std::size_t i = 0; i < mean.size(); ++i) mean[i] += v[i];
  }
  for (auto& m : mean) m /= static_cast<double>(frames.size());
  std::vector<RawFrame> out;
  out.reserve(frames.size());
  for (const auto& f : frames) {
    auto v = f.values();
    for (std::size_t i = 0; i < v.size(); ++i) v[i] -= mean[i];
    out.emplace_back(f.sensor(), f.at(), std::move(v));
  }
  return out;
}

//=============================================================================
// JADE
//=============================================================================

JadeResult jade_separate(const MatrixXd& x, int n_sources) {
  const auto n = x.rows();
  const auto t = x.cols();
  if (n_sources < 1 || n_sources > n) throw Error(Errc::InvalidArgument, "n_sources must be in [1, streams]");
  if (t < 10 * n) throw Error(Errc::TooShort, "JADE needs at least 10 samples per stream");
  const auto m = static_cast<Eigen::Index>(n_sources);

  const VectorXd mean = x.rowwise().mean();
  const MatrixXd xc = x.colwise() - mean;
  const MatrixXd cov = xc * xc.transpose() / static_cast<double>(t);
  Eigen::SelfAdjointEigenSolver<MatrixXd> es(cov);
  const VectorXd lam = es.eigenvalues().tail(m);           // ascending
  const MatrixXd e = es.eigenvectors().rightCols(m);
  const double top = std::max(es.eigenvalues().maxCoeff(), 0.0);
  if (top <= 0.0 || lam.minCoeff() <= 1e-12 * top) {
    throw Error(Errc::RankDeficient, "covariance rank below the requested source count");
  }
  const MatrixXd w = lam.cwiseSqrt().cwiseInverse().asDiagonal() * e.transpose();
  const MatrixXd z = w * xc;

  // fourth-order cumulant matrices of the whitened data
  std::vector<MatrixXd> cm;
  const MatrixXd eye = MatrixXd::Identity(m, m);
  for (Eigen::Index i = 0; i < m; ++i) {
    const Eigen::ArrayXd xi = z.row(i).transpose().array();
    {
      const MatrixXd q = (z.array().rowwise() * (xi * xi).transpose()).matrix() * z.transpose() / static_cast<double>(t);
      MatrixXd c = q - eye;
      c(i, i) -= 2.0;
      cm.push_back(c);
    }
    for (Eigen::Index j = 0; j < i; ++j) {
      const Eigen::ArrayXd xj = z.row(j).transpose().array();
      MatrixXd c = (z.array().rowwise() * (xi * xj).transpose()).matrix() * z.transpose() / static_cast<double>(t);
      c(i, j) -= 1.0;
      c(j, i) -= 1.0;
      cm.push_back(std::sqrt(2.0) * c);
    }
  }
  auto off_mass = [&] {
    double s = 0.0;
    for (const auto& c : cm) s += c.squaredNorm() - c.diagonal().squaredNorm();
    return s;
  };

  JadeResult r;
  MatrixXd v = MatrixXd::Identity(m, m);
  double off = off_mass();
  for (r.sweeps = 0; r.sweeps < 100;) {
    ++r.sweeps;
    for (Eigen::Index p = 0; p < m - 1; ++p) {
      for (Eigen::Index q = p + 1; q < m; ++q) {
        double gpp = 0.0, gqq = 0.0, gpq = 0.0;
        for (const auto& c : cm) {
          const double g1 = c(p, p) - c(q, q);
          const double g2 = c(p, q) + c(q, p);
          gpp += g1 * g1;
          gqq += g2 * g2;
          gpq += g1 * g2;
        }
        const double ton = gpp - gqq;
        const double toff = 2.0 * gpq;
        const double theta = 0.5 * std::atan2(toff, ton + std::sqrt(ton * ton + toff * toff));
        if (std::abs(theta) < 1e-12) continue;
        const double c = std::cos(theta), s = std::sin(theta);
        for (Eigen::Index k = 0; k < m; ++k) {
          const double a = v(k, p), b = v(k, q);
          v(k, p) = c * a + s * b;
          v(k, q) = -s * a + c * b;
        }
        for (auto& mat : cm) {
          for (Eigen::Index k = 0; k < m; ++k) {
            const double a = mat(p, k), b = mat(q, k);
            mat(p, k) = c * a + s * b;
            mat(q, k) = -s * a + c * b;
          }
          for (Eigen::Index k = 0; k < m; ++k) {
            const double a = mat(k, p), b = mat(k, q);
            mat(k, p) = c * a + s * b;
            mat(k, q) = -s * a + c * b;
          }
        }
      }
    }
    const double next = off_mass();
    const double drop = off - next;
    off = next;
    if (drop < 1e-9 * std::max(off + drop, 1e-300)) {
      r.converged = true;
      break;
    }
  }
  r.off_diagonal = off;
  r.unmixing = v.transpose() * w;
  r.sources = v.transpose() * z;
  r.mixing = e * lam.cwiseSqrt().asDiagonal() * v;
  return r;
}

//=============================================================================
// cDDTW and HAC
//=============================================================================

std::vector<double> derivative(std::span<const double> x) {
  if (x.size() < 3) throw Error(Errc::TooShort, "derivative needs at least 3 samples");
  std::vector<double> d(x.size());
  for (std::size_t i = 1; i + 1 < x.size(); ++i) d[i] = ((x[i] - x[i - 1]) + (x[i + 1] - x[i - 1]) / 2.0) / 2.0;
  d.front() = d[1];
  d.back() = d[x.size() - 2];
  return d;
}

double dtw_distance(std::span<const double> a, std::span<const double> b, std::optional<std::size_t> band) {
  const std::size_t n = a.size(), m = b.size();
  if (n == 0 || m == 0) throw Error(Errc::TooShort, "DTW of an empty series");
  const double inf = std::numeric_limits<double>::infinity();
  const std::size_t w = band ? std::max(*band, n > m ? n - m : m - n) : std::max(n, m);
  std::vector<double> prev(m + 1, inf), cur(m + 1, inf);
  prev[0] = 0.0;
  for (std::size_t i = 1; i <= n; ++i) {
    std::fill(cur.begin(), cur.end(), inf);
    const std::size_t lo = i > w ? i - w : 1;
    const std::size_t hi = std::min(m, i + w);
    for (std::size_t j = lo; j <= hi; ++j) {
      const double c = (a[i - 1] - b[j - 1]) * (a[i - 1] - b[j - 1]);
      cur[j] = c + std::min({prev[j], cur[j - 1], prev[j - 1]});
    }
    std::swap(prev, cur);
  }
  return prev[m];
}

double cddtw_distance(std::span<const double> a, std::span<const double> b, double window_frac) {
  if (!(window_frac > 0.0 && window_frac <= 1.0)) throw Error(Errc::InvalidArgument, "window_frac must be in (0, 1]");
  if (a.size() < 3 || b.size() < 3) throw Error(Errc::TooShort, "cDDTW needs at least 3 samples");
  const auto da = derivative(a);
  const auto db = derivative(b);
  const auto band = static_cast<std::size_t>(std::ceil(window_frac * static_cast<double>(std::max(a.size(), b.size()))));
  return dtw_distance(da, db, band);
}

MatrixXd build_distance_matrix(const std::vector<std::vector<double>>& series, double window_frac) {
  if (series.size() < 2) throw Error(Errc::InvalidArgument, "distance matrix needs at least 2 series");
  const auto n = static_cast<Eigen::Index>(series.size());
  MatrixXd d = MatrixXd::Zero(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = i + 1; j < n; ++j) {
      d(i, j) = d(j, i) = cddtw_distance(series[static_cast<std::size_t>(i)], series[static_cast<std::size_t>(j)],
                                         window_frac);
    }
  }
  return d;
}

std::vector<int> hac_cluster(const MatrixXd& d, Linkage linkage, double cut) {
  const auto n = static_cast<std::size_t>(d.rows());
  if (d.rows() != d.cols()) throw Error(Errc::DimensionMismatch, "distance matrix must be square");
  std::vector<std::vector<std::size_t>> clusters;
  for (std::size_t i = 0; i < n; ++i) clusters.push_back({i});
  auto link = [&](const std::vector<std::size_t>& a, const std::vector<std::size_t>& b) {
    double best = linkage == Linkage::Single ? std::numeric_limits<double>::infinity() : 0.0;
    for (auto i : a) {
      for (auto j : b) {
        const double v = d(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
        if (linkage == Linkage::Single) best = std::min(best, v);
        else if (linkage == Linkage::Complete) best = std::max(best, v);
        else best += v;
      }
    }
    return linkage == Linkage::Average ? best / static_cast<double>(a.size() * b.size()) : best;
  };
  while (clusters.size() > 1) {
    // clusters stay ordered by their smallest member, so the first minimum
    // found is the lowest index pair
    std::size_t ba = 0, bb = 1;
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t a = 0; a < clusters.size(); ++a) {
      for (std::size_t b = a + 1; b < clusters.size(); ++b) {
        const double v = link(clusters[a], clusters[b]);
        if (v < best) {
          best = v;
          ba = a;
          bb = b;
        }
      }
    }
    if (best > cut) break;
    clusters[ba].insert(clusters[ba].end(), clusters[bb].begin(), clusters[bb].end());
    std::sort(clusters[ba].begin(), clusters[ba].end());
    clusters.erase(clusters.begin() + static_cast<std::ptrdiff_t>(bb));
  }
  std::vector<int> labels(n, -1);
  for (std::size_t c = 0; c < clusters.size(); ++c) {
    for (auto i : clusters[c]) labels[i] = static_cast<int>(c);
  }
  return labels;
}

//=============================================================================
// Occupancy analysis
//=============================================================================

double kl_divergence(std::span<const double> p, std::span<const double> q, int bins) {
  if (p.size() < 30 || q.size() < 30) throw Error(Errc::TooFewSamples, "KL divergence needs at least 30 samples each");
  if (bins < 1) throw Error(Errc::InvalidArgument, "bins must be positive");
  std::vector<double> pooled(p.begin(), p.end());
  pooled.insert(pooled.end(), q.begin(), q.end());
  require_finite(pooled, "KL samples");
  std::sort(pooled.begin(), pooled.end());
  // equal-mass bins of the pooled sample, so a few extreme values cannot
  // squeeze the bulk of both samples into one or two bins
  std::vector<double> edges;
  for (int b = 1; b < bins; ++b) edges.push_back(pooled[pooled.size() * static_cast<std::size_t>(b) / bins]);
  auto hist = [&](std::span<const double> s) {
    std::vector<double> h(static_cast<std::size_t>(bins), 1.0);
    for (double v : s) ++h[static_cast<std::size_t>(std::upper_bound(edges.begin(), edges.end(), v) - edges.begin())];
    const double total = static_cast<double>(s.size()) + bins;
    for (auto& x : h) x /= total;
    return h;
  };
  const auto hp = hist(p), hq = hist(q);
  double kl = 0.0;
  for (std::size_t i = 0; i < hp.size(); ++i) kl += hp[i] * std::log(hp[i] / hq[i]);
  return std::max(kl, 0.0);
}

double pearson(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size() || a.size() < 2) throw Error(Errc::DimensionMismatch, "pearson needs equal lengths >= 2");
  const double ma = mean_of(a), mb = mean_of(b);
  double sab = 0.0, saa = 0.0, sbb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    sab += (a[i] - ma) * (b[i] - mb);
    saa += (a[i] - ma) * (a[i] - ma);
    sbb += (b[i] - mb) * (b[i] - mb);
  }
  return saa > 0.0 && sbb > 0.0 ? sab / std::sqrt(saa * sbb) : 0.0;
}

std::vector<bool> false_positive_filter(const std::vector<SpatialStream>& streams, const std::vector<bool>& occupied,
                                        double threshold) {
  if (streams.size() != occupied.size()) throw Error(Errc::DimensionMismatch, "one prediction per stream");
  auto out = occupied;
  for (std::size_t i = 0; i < streams.size(); ++i) {
    if (!occupied[i]) continue;
    const double own = mean_of(streams[i].samples);
    for (std::size_t j : {i - 1, i + 1}) {
      if (j >= streams.size() || !occupied[j]) continue;  // i - 1 wraps for i = 0
      if (pearson(streams[i].samples, streams[j].samples) > threshold && mean_of(streams[j].samples) > own) {
        out[i] = false;
      }
    }
  }
  return out;
}

std::vector<double> neighbour_kl(const std::vector<SpatialStream>& streams, int bins) {
  std::vector<double> out;
  for (std::size_t i = 0; i + 1 < streams.size(); ++i) {
    out.push_back(kl_divergence(streams[i].samples, streams[i + 1].samples, bins));
  }
  return out;
}

//=============================================================================
// Counting
//=============================================================================

Json to_json(const CountConfig& c) {
  return {{"scan_angles_rad", c.scan_angles},
          {"gate_k", c.gate_k},
          {"eigen_rel", c.eigen_rel},
          {"occupancy_factor", c.occupancy_factor},
          {"window_frac", c.window_frac},
          {"linkage", c.linkage == Linkage::Single ? "single" : c.linkage == Linkage::Complete ? "complete" : "average"},
          {"cut_per_sample", c.cut_per_sample},
          {"kl_bins", c.kl_bins},
          {"kl_k", c.kl_k},
          {"fp_threshold", c.fp_threshold},
          {"min_frames", c.min_frames},
          {"calibration",
           {{"cv2_floor", c.calibration.cv2_floor},
            {"noise_var", c.calibration.noise_var},
            {"kl_mean", c.calibration.kl_mean},
            {"kl_sd", c.calibration.kl_sd},
            {"kl_threshold", c.calibration.kl_threshold}}}};
}

CountConfig count_config_from_json(const Json& doc) {
  CountConfig c;
  try {
    c.scan_angles = doc.value("scan_angles_rad", c.scan_angles);
    c.gate_k = doc.value("gate_k", c.gate_k);
    c.eigen_rel = doc.value("eigen_rel", c.eigen_rel);
    c.occupancy_factor = doc.value("occupancy_factor", c.occupancy_factor);
    c.window_frac = doc.value("window_frac", c.window_frac);
    const auto link = doc.value("linkage", std::string("average"));
    if (link == "single") c.linkage = Linkage::Single;
    else if (link == "complete") c.linkage = Linkage::Complete;
    else if (link == "average") c.linkage = Linkage::Average;
    else throw Error(Errc::BadConfig, "unknown linkage '" + link + "'");
    c.cut_per_sample = doc.value("cut_per_sample", c.cut_per_sample);
    c.kl_bins = doc.value("kl_bins", c.kl_bins);
    c.kl_k = doc.value("kl_k", c.kl_k);
    c.fp_threshold = doc.value("fp_threshold", c.fp_threshold);
    c.min_frames = doc.value("min_frames", c.min_frames);
    if (doc.contains("calibration")) {
      const auto& k = doc.at("calibration");
      c.calibration.cv2_floor = k.value("cv2_floor", 0.0);
      c.calibration.noise_var = k.value("noise_var", 0.0);
      c.calibration.kl_mean = k.value("kl_mean", 0.0);
      c.calibration.kl_sd = k.value("kl_sd", 0.0);
      c.calibration.kl_threshold = k.value("kl_threshold", 0.0);
    }
  } catch (const Json::exception& e) {
    throw Error(Errc::BadConfig, std::string("count config: ") + e.what());
  }
  if (c.scan_angles.empty()) throw Error(Errc::BadConfig, "count config: no scan angles");
  return c;
}

CountCalibration calibrate_counting(const std::vector<std::vector<RawFrame>>& empty_sessions,
                                    const CountConfig& config) {
  if (empty_sessions.empty()) throw Error(Errc::EmptyInput, "no empty-room sessions");
  std::vector<double> cv2, var, kl;
  for (const auto& s : empty_sessions) {
    const auto streams = beam_scan(remove_static(s), config.scan_angles);
    for (const auto& st : streams) {
      cv2.push_back(cv2_of(st.samples));
      var.push_back(var_of(st.samples));
    }
    for (double v : neighbour_kl(streams, config.kl_bins)) kl.push_back(v);
  }
  CountCalibration c;
  const auto [cm, cs] = mean_sd(cv2);
  c.cv2_floor = cm + config.gate_k * cs;
  c.noise_var = mean_of(var);
  std::tie(c.kl_mean, c.kl_sd) = mean_sd(kl);
  c.kl_threshold = c.kl_mean + config.kl_k * c.kl_sd;
  return c;
}

Json to_json(const CountResult& r) {
  Json j{{"estimated_count", r.count},     {"stream_cv2", r.stream_cv2},
          {"active", r.active},             {"occupied_after_filter", r.occupied_after_filter},
          {"pair_kl", r.pair_kl},           {"n_sources", r.n_sources},
          {"clusters", r.clusters},         {"cluster_activity", r.cluster_activity}};
  Json rows = Json::array();
  for (Eigen::Index i = 0; i < r.distances.rows(); ++i) {
    rows.push_back(std::vector<double>(r.distances.row(i).begin(), r.distances.row(i).end()));
  }
  j["source_distances"] = rows;
  return j;
}

CountResult estimate_count(std::span<const RawFrame> session, const CountConfig& config) {
  if (session.size() < config.min_frames) {
    throw Error(Errc::TooShort, "counting session has " + std::to_string(session.size()) + " frames, needs " +
                                    std::to_string(config.min_frames));
  }
  CountResult r;
  const auto streams = beam_scan(remove_static(session), config.scan_angles);
  for (const auto& s : streams) {
    r.stream_cv2.push_back(cv2_of(s.samples));
    r.active.push_back(r.stream_cv2.back() > config.calibration.cv2_floor);
  }
  r.pair_kl = neighbour_kl(streams, config.kl_bins);
  r.occupied_after_filter = false_positive_filter(streams, r.active, config.fp_threshold);

  std::vector<std::size_t> idx;
  for (std::size_t i = 0; i < streams.size(); ++i) {
    if (r.active[i]) idx.push_back(i);
  }
  if (idx.empty()) return r;

  const auto t = static_cast<Eigen::Index>(session.size());
  MatrixXd x(static_cast<Eigen::Index>(idx.size()), t);
  for (std::size_t i = 0; i < idx.size(); ++i) {
    x.row(static_cast<Eigen::Index>(i)) = Eigen::Map<const VectorXd>(streams[idx[i]].samples.data(), t).transpose();
  }
  const MatrixXd xc = x.colwise() - x.rowwise().mean();
  const VectorXd lam = Eigen::SelfAdjointEigenSolver<MatrixXd>(xc * xc.transpose() / static_cast<double>(t)).eigenvalues();
  const double floor = config.occupancy_factor * config.calibration.noise_var;
  const double gate = std::max(config.eigen_rel * lam.maxCoeff(), floor);
  int n_src = 0;
  for (Eigen::Index i = 0; i < lam.size(); ++i) n_src += lam(i) > gate;
  n_src = std::min({n_src, kCsiAntennas, static_cast<int>(idx.size())});
  r.n_sources = n_src;
  if (n_src == 0) return r;

  const auto jade = jade_separate(x, n_src);
  std::vector<std::vector<double>> sources;
  std::vector<double> activity;
  for (Eigen::Index s = 0; s < jade.sources.rows(); ++s) {
    // orient each source so it adds power to the stream it loads most
    const auto col = jade.mixing.col(s);
    Eigen::Index top = 0;
    col.cwiseAbs().maxCoeff(&top);
    const double sign = col(top) < 0.0 ? -1.0 : 1.0;
    VectorXd row = sign * jade.sources.row(s).transpose();
    // unit-RMS derivative, so the cut reads as a per-sample shape distance
    std::vector<double> series(row.data(), row.data() + row.size());
    const auto dx = derivative(series);
    double ms = 0.0;
    for (double v : dx) ms += v * v;
    const double scale = std::max(std::sqrt(ms / static_cast<double>(dx.size())), 1e-12);
    for (auto& v : series) v /= scale;
    sources.push_back(std::move(series));
    activity.push_back(col.squaredNorm());
  }
  if (sources.size() == 1) {
    r.clusters = {0};
  } else {
    const auto d = build_distance_matrix(sources, config.window_frac);
    r.clusters = hac_cluster(d, config.linkage, config.cut_per_sample * static_cast<double>(t));
    r.distances = d / static_cast<double>(t);
  }
  const int n_clusters = *std::max_element(r.clusters.begin(), r.clusters.end()) + 1;
  r.cluster_activity.assign(static_cast<std::size_t>(n_clusters), 0.0);
  for (std::size_t s = 0; s < sources.size(); ++s) r.cluster_activity[static_cast<std::size_t>(r.clusters[s])] += activity[s];
  for (double a : r.cluster_activity) r.count += a > floor;
  r.count = std::min(r.count, kCsiAntennas);
  return r;
}

}  // namespace mdf::counting
