#pragma once

#include <functional>
#include <map>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "mdf/core.hpp"
#include "mdf/transport.hpp"

/// Speed-and-separation monitoring: protective distance and the robot command monitor.
namespace mdf::safety {

/// Speeds in m/s, times in s, distances in m.
struct SafetyParams {
  double v_w = 0.0;  // worker speed toward the robot
  double v_r = 0.0;  // robot speed toward the worker
  double v_s = 0.0;  // mean robot speed while stopping
  double T_w = 0.0;  // worker detection latency
  double T_r = 0.0;  // stop-command activation time
  double T_s = 0.0;  // stopping time
  double Z_w = 0.0;  // worker localization uncertainty
  double Z_r = 0.0;  // robot localization uncertainty

  /// Throws InvalidArgument for negative or non-finite fields.
  void validate() const;
};

/// Unit-suffixed fields ("v_w_mps", "T_w_s", "Z_w_m", ...). Z_r_m is optional.
nlohmann::json to_json(const SafetyParams& p);
/// Throws BadConfig for missing, non-numeric or invalid fields.
SafetyParams safety_params_from_json(const nlohmann::json& doc);

/// Constant-speed form: v_w(T_w+T_r+T_s) + v_r(T_w+T_r) + v_s T_s + Z_w + Z_r.
double protective_distance(const SafetyParams& p);

/// Speed functions of time since t_0, in seconds.
struct SpeedProfiles {
  std::function<double(double)> v_w;
  std::function<double(double)> v_r;
  std::function<double(double)> v_s;
  double horizon_s = 0.0;  // profiles are defined on [0, horizon_s]

  static SpeedProfiles constant(const SafetyParams& p, double horizon_s);
};

/// Trapezoidal integral of the worker, robot and stopping speeds over their
/// intervals at `step_s`, plus Z_r + Z_w. Speeds and latencies come from
/// `profiles`; times and Z terms from `params`. Throws HorizonTooShort when the
/// profiles end before T_w + T_r + T_s.
double protective_distance_integral(const SpeedProfiles& profiles, const SafetyParams& params, double step_s = 1e-3);

enum class SsmMode { Run, Slow, ProtectiveStop };

std::string_view mode_name(SsmMode m) noexcept;

struct SsmState {
  SsmMode mode = SsmMode::Run;
  double last_d = 0.0;
  Timestamp last_update;
};

/// Run above d_p + h, Slow in (d_p, d_p + h], ProtectiveStop at or below d_p.
/// A stop holds until d exceeds d_p + 2h. Throws InvalidArgument for d < 0.
std::pair<SsmState, SsmMode> ssm_step(const SsmState& state, double d, double d_p, double hysteresis,
                                      Timestamp t = Timestamp(0));

/// One monitor per cell. Emits {"t_ms","d_m","d_p_m","mode"} on cloud/<cell>/ssm.
class SsmMonitor {
 public:
  SsmMonitor(std::string cell, double d_p, double hysteresis);

  transport::Message update(Timestamp t, double d);
  const SsmState& state() const noexcept { return state_; }
  double d_p() const noexcept { return d_p_; }

 private:
  std::string cell_;
  double d_p_;
  double hysteresis_;
  SsmState state_;
};

/// Measured localization error and latency for one function.
struct Uncertainty {
  double Z_w = 0.0;  // m
  double T_w = 0.0;  // s
  std::size_t n_positions = 0;
  std::size_t n_latencies = 0;
};

nlohmann::json to_json(const Uncertainty& u);

/// Z_w is the mean distance between predicted and true landmark positions,
/// skipping pairs where either label has no coordinates. T_w is the mean of
/// `latencies_ms`, in seconds. Throws NoGroundTruth when either is empty.
Uncertainty evaluate_uncertainty(const std::vector<std::pair<std::string, std::string>>& predicted_truth,
                                 const std::map<std::string, Eigen::Vector2d>& landmarks,
                                 std::span<const double> latencies_ms);

}  // namespace mdf::safety
