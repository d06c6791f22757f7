#include "mdf/safety.hpp"

#include <cmath>
#include <algorithm>

namespace mdf::safety {

using Json = nlohmann::json;

namespace {

struct Field {
  const char* key;
  double SafetyParams::*member;
};

constexpr Field kFields[] = {
    {"v_w_mps", &SafetyParams::v_w}, {"v_r_mps", &SafetyParams::v_r}, {"v_s_mps", &SafetyParams::v_s},
    {"T_w_s", &SafetyParams::T_w},   {"T_r_s", &SafetyParams::T_r},   {"T_s_s", &SafetyParams::T_s},
    {"Z_w_m", &SafetyParams::Z_w},   {"Z_r_m", &SafetyParams::Z_r},
};

double trapezoid(const std::function<double(double)>& f, double a, double b, double step) {
  if (b <= a) return 0.0;
  const auto n = std::max<long>(1, std::lround(std::ceil((b - a) / step - 1e-9)));
  const double h = (b - a) / static_cast<double>(n);
  double sum = 0.5 * (f(a) + f(b));
  for (long i = 1; i < n; ++i) sum += f(a + static_cast<double>(i) * h);
  return sum * h;
}

}  // namespace

void SafetyParams::validate() const {
  for (const auto& f : kFields) {
    const double v = this->*f.member;
    if (!std::isfinite(v) || v < 0.0) {
      throw Error(Errc::InvalidArgument, std::string("safety parameter ") + f.key + " must be finite and >= 0");
    }
  }
}

Json to_json(const SafetyParams& p) {
  Json j = Json::object();
  for (const auto& f : kFields) j[f.key] = p.*f.member;
  return j;
}

SafetyParams safety_params_from_json(const Json& doc) {
  if (!doc.is_object()) throw Error(Errc::BadConfig, "safety config must be an object");
  SafetyParams p;
  for (const auto& f : kFields) {
    const bool optional = std::string_view(f.key) == "Z_r_m";
    if (!doc.contains(f.key)) {
      if (optional) continue;
      throw Error(Errc::BadConfig, std::string("safety config lacks ") + f.key);
    }
    if (!doc.at(f.key).is_number()) throw Error(Errc::BadConfig, std::string("safety field ") + f.key + " is not a number");
    p.*f.member = doc.at(f.key).get<double>();
  }
  try {
    p.validate();
  } catch (const Error& e) {
    throw Error(Errc::BadConfig, e.what());
  }
  return p;
}

double protective_distance(const SafetyParams& p) {
  return p.v_w * (p.T_w + p.T_r + p.T_s) + p.v_r * (p.T_w + p.T_r) + p.v_s * p.T_s + p.Z_w + p.Z_r;
}

SpeedProfiles SpeedProfiles::constant(const SafetyParams& p, double horizon_s) {
  return {[v = p.v_w](double) { return v; }, [v = p.v_r](double) { return v; }, [v = p.v_s](double) { return v; },
          horizon_s};
}

double protective_distance_integral(const SpeedProfiles& profiles, const SafetyParams& params, double step_s) {
  params.validate();
  if (!(step_s > 0.0)) throw Error(Errc::InvalidArgument, "integration step must be positive");
  const double t_react = params.T_w + params.T_r;
  const double t_end = t_react + params.T_s;
  if (profiles.horizon_s + 1e-12 < t_end) {
    throw Error(Errc::HorizonTooShort, "speed profiles end at " + std::to_string(profiles.horizon_s) +
                                           " s, need " + std::to_string(t_end) + " s");
  }
  if (!profiles.v_w || !profiles.v_r || !profiles.v_s) throw Error(Errc::InvalidArgument, "missing speed profile");
  return trapezoid(profiles.v_w, 0.0, t_end, step_s) + trapezoid(profiles.v_r, 0.0, t_react, step_s) +
         trapezoid(profiles.v_s, t_react, t_end, step_s) + params.Z_r + params.Z_w;
}

std::string_view mode_name(SsmMode m) noexcept {
  switch (m) {
    case SsmMode::Run: return "Run";
    case SsmMode::Slow: return "Slow";
    case SsmMode::ProtectiveStop: return "ProtectiveStop";
  }
  return "?";
}

std::pair<SsmState, SsmMode> ssm_step(const SsmState& state, double d, double d_p, double hysteresis, Timestamp t) {
  if (!(d >= 0.0) || !std::isfinite(d)) throw Error(Errc::InvalidArgument, "distance must be finite and >= 0");
  SsmState next = state;
  next.last_d = d;
  next.last_update = t;
  if (state.mode == SsmMode::ProtectiveStop && d <= d_p + 2.0 * hysteresis) {
    next.mode = SsmMode::ProtectiveStop;
  } else if (d <= d_p) {
    next.mode = SsmMode::ProtectiveStop;
  } else if (d <= d_p + hysteresis) {
    next.mode = SsmMode::Slow;
  } else {
    next.mode = SsmMode::Run;
  }
  return {next, next.mode};
}

SsmMonitor::SsmMonitor(std::string cell, double d_p, double hysteresis)
    : cell_(std::move(cell)), d_p_(d_p), hysteresis_(hysteresis) {
  if (!(d_p >= 0.0) || !(hysteresis >= 0.0)) throw Error(Errc::InvalidArgument, "d_p and hysteresis must be >= 0");
}

transport::Message SsmMonitor::update(Timestamp t, double d) {
  auto [next, mode] = ssm_step(state_, d, d_p_, hysteresis_, t);
  state_ = next;
  return {transport::Topic::ssm(cell_).str(), t.millis(), transport::Kind::Ssm,
          Json{{"t_ms", t.millis()}, {"d_m", d}, {"d_p_m", d_p_}, {"mode", mode_name(mode)}}};
}

Json to_json(const Uncertainty& u) {
  return {{"Z_w_m", u.Z_w}, {"T_w_s", u.T_w}, {"n_positions", u.n_positions}, {"n_latencies", u.n_latencies}};
}

Uncertainty evaluate_uncertainty(const std::vector<std::pair<std::string, std::string>>& predicted_truth,
                                 const std::map<std::string, Eigen::Vector2d>& landmarks,
                                 std::span<const double> latencies_ms) {
  Uncertainty u;
  double err = 0.0;
  for (const auto& [pred, truth] : predicted_truth) {
    const auto p = landmarks.find(pred);
    const auto q = landmarks.find(truth);
    if (p == landmarks.end() || q == landmarks.end()) continue;
    err += (p->second - q->second).norm();
    ++u.n_positions;
  }
  if (u.n_positions == 0) throw Error(Errc::NoGroundTruth, "no predictions with landmark ground truth");
  if (latencies_ms.empty()) throw Error(Errc::NoGroundTruth, "no latency samples");
  double lat = 0.0;
  for (double v : latencies_ms) lat += v;
  u.n_latencies = latencies_ms.size();
  u.Z_w = err / static_cast<double>(u.n_positions);
  u.T_w = lat / static_cast<double>(u.n_latencies) / 1000.0;
  return u;
}

}  // namespace mdf::safety
