#pragma once

#include <complex>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "mdf/core.hpp"
#include "mdf/transport.hpp"

/// Parametric generators for the four sensor pipelines and a scenario runner
/// producing replayable captures with ground truth.
namespace mdf::simgen {

using Complex = std::complex<double>;

struct Point {
  double x = 0.0;
  double y = 0.0;
};

double distance(Point a, Point b);

constexpr double kRangeBin = 0.025;  // c / 2B at 6 GHz
constexpr int kSubFrames = 8;

/// Where a worker stands during [start_ms, end_ms). An empty landmark keeps
/// the worker out of the cell.
struct Segment {
  std::int64_t start_ms = 0;
  std::int64_t end_ms = 0;
  std::string landmark;
};

/// One worker reflector of a CSI session: angle off array broadside,
/// amplitude and the frequency of its body modulation.
struct CsiReflector {
  double angle_rad = 0.0;
  double amplitude = 1.0;
  double mod_hz = 0.5;
  double mod_phase = 0.0;
};

/// CSI scene: per-antenna LOS, reflectors and receiver noise.
struct CsiScene {
  std::vector<Complex> los;         // one per antenna
  double los_slope = 0.15;          // LOS phase advance per subcarrier (rad)
  std::vector<CsiReflector> reflectors;
  double noise_sd = 0.05;           // per real component
  double mod_depth = 0.8;
  std::uint64_t seed = 0;
};

/// A CSI recording interval with a fixed scene.
struct CsiSession {
  std::int64_t start_ms = 0;
  std::int64_t end_ms = 0;
  CsiScene scene;
};

struct Noise {
  double radar = 0.3;     // per sub-frame, per bin
  double thz_scale = 1.0; // multiplies the per-pixel sigma field
  double ir_netd = 0.08;  // deg C
};

struct Scenario {
  std::string name = "scenario";
  double width = 5.5;
  double depth = 4.0;
  Point robot{2.75, 2.4};
  std::map<std::string, Point> landmarks;
  /// Landmarks whose posture adds arm motion (seen by the THz camera).
  std::vector<std::string> arm_motion;
  std::vector<std::vector<Segment>> workers;
  HrcFunction function = HrcFunction::MotionDetection;
  std::vector<std::string> classes;  // label order for classification
  std::vector<int> pipelines{1, 2, 3};
  std::int64_t frame_period_ms = 100;
  std::int64_t csi_period_ms = 50;
  std::size_t window_len = 32;
  std::int64_t calibration_ms = 0;
  std::int64_t duration_ms = 0;
  std::vector<CsiSession> csi_sessions;
  Noise noise;
  double walk_sd = 0.1;
  std::uint64_t seed = 1;

  /// Throws BadConfig when landmarks fall outside the cell, tracks overlap or
  /// run backwards, or names are unknown.
  void validate() const;
};

nlohmann::json to_json(const Scenario& s);
Scenario scenario_from_json(const nlohmann::json& doc);

/// Landmark layouts.
std::map<std::string, Point> motion_landmarks();
std::map<std::string, Point> copresence_landmarks();
std::vector<std::string> motion_classes();      // 1,2A,2B,3,4,5A,5B,6
std::vector<std::string> copresence_classes();  // empty,A,B,C,D,E

/// Sensor placements.
Point radar_position(int k);
/// THz line of sight: source and camera on y = kThzLineY.
constexpr double kThzLineY = 3.2;

/// Position of worker w at time t, or nothing when absent. Includes the
/// bounded random walk around the landmark.
std::optional<Point> worker_position(const Scenario& s, std::size_t w, std::int64_t t_ms);
/// Landmark label of worker w at t ("" when absent).
std::string worker_landmark(const Scenario& s, std::size_t w, std::int64_t t_ms);
/// Distance of the nearest present worker to the robot; nothing when empty.
std::optional<double> true_distance(const Scenario& s, std::int64_t t_ms);

/// Noiseless empty-cell radar spectrum of sensor k at time t.
std::vector<double> radar_background(const Scenario& s, int k, std::int64_t t_ms);
/// Peak bin of a body at range r. Throws OutOfRange beyond 512 bins.
int range_bin(double r);

RawFrame sim_radar_frame(const Scenario& s, int k, std::int64_t t_ms);
/// Mean intensity b and deviation sigma of each THz pixel.
std::vector<double> thz_mean_field();
std::vector<double> thz_sigma_field();
RawFrame sim_thz_frame(const Scenario& s, std::int64_t t_ms);
/// Floor temperature field seen by IR sensor k.
std::vector<double> ir_background(const Scenario& s, int k);
/// Pixel (row, col) of sensor k that sees floor point p, or nothing.
std::optional<std::pair<int, int>> ir_projection(int k, Point p);
/// Warm robot arm seen by the IR sensors, sweeping in front of the base.
Point robot_arm_position(const Scenario& s, std::int64_t t_ms);
RawFrame sim_ir_frame(const Scenario& s, int k, std::int64_t t_ms);
RawFrame sim_csi_frame(const CsiScene& scene, int k, std::int64_t t_ms);

/// Scene with the given reflectors, a random LOS and distinct modulations.
CsiScene counting_scene(const std::vector<double>& angles_rad, std::uint64_t seed, double noise_sd = 0.05);
/// Well separated angles for 1..4 workers.
std::vector<double> separated_angles(std::size_t n);
/// Receiver frames (CSI sensor 1, all antennas) sampled every period_ms.
std::vector<RawFrame> sim_csi_session(const CsiScene& scene, std::int64_t start_ms, std::int64_t end_ms,
                                      std::int64_t period_ms);

/// One label row per feature window.
struct WindowLabel {
  std::int64_t window_end_ms = 0;
  HrcFunction function = HrcFunction::MotionDetection;
  std::string label;
  double true_d_m = -1.0;  // -1 when the cell is empty
};

struct Capture {
  std::vector<transport::Message> messages;  // frames in time order
  std::vector<WindowLabel> labels;
  std::vector<std::pair<std::int64_t, double>> distances;  // (t_ms, d_m), empty cell skipped
  nlohmann::json manifest;
};

/// Deterministic in the scenario seed.
Capture run_scenario(const Scenario& s, const std::string& cell = "c1");

/// Frames in time order without the transport envelope.
std::vector<RawFrame> scenario_frames(const Scenario& s);
std::vector<WindowLabel> scenario_labels(const Scenario& s);

/// capture.ndjson, labels.csv, distance.csv, manifest.json under dir.
void write_capture_dir(const Capture& c, const std::string& dir);
std::vector<WindowLabel> read_labels(const std::string& path);
void write_labels(const std::string& path, const std::vector<WindowLabel>& labels);

struct ScenarioOptions {
  std::size_t windows_per_class = 30;
  std::size_t calibration_windows = 10;
  bool noiseless = false;
  std::uint64_t seed = 7;
};

/// Shuffled one-window segments over the motion landmarks.
Scenario motion_scenario(const ScenarioOptions& o);
/// Same for the co-presence positions plus empty windows.
Scenario copresence_scenario(const ScenarioOptions& o);
/// CSI counting sessions with 0..4 workers, `per_count` sessions each.
Scenario counting_scenario(std::size_t per_count, std::uint64_t seed, std::int64_t session_ms = 30000);

}  // namespace mdf::simgen
