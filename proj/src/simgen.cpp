#include "mdf/simgen.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <sstream>

namespace mdf::simgen {

using transport::Json;

namespace {

constexpr double kPi = std::numbers::pi;
constexpr int kWalkTerms = 6;

std::uint64_t sensor_code(int pipeline, int k) { return static_cast<std::uint64_t>(pipeline * 16 + k); }

Rng frame_rng(std::uint64_t seed, int pipeline, int k, std::int64_t t_ms) {
  return Rng(mix_seed(mix_seed(seed, sensor_code(pipeline, k)), static_cast<std::uint64_t>(t_ms)));
}

double gauss(double x, double sd) { return std::exp(-x * x / (2.0 * sd * sd)); }

/// Index of the segment of worker w covering t, if any.
std::optional<std::size_t> segment_at(const Scenario& s, std::size_t w, std::int64_t t) {
  if (w >= s.workers.size()) return std::nullopt;
  const auto& segs = s.workers[w];
  auto it = std::upper_bound(segs.begin(), segs.end(), t,
                             [](std::int64_t v, const Segment& seg) { return v < seg.start_ms; });
  if (it == segs.begin()) return std::nullopt;
  --it;
  if (t >= it->end_ms || it->landmark.empty()) return std::nullopt;
  return static_cast<std::size_t>(it - segs.begin());
}

bool has_arm_motion(const Scenario& s, const std::string& landmark) {
  return std::find(s.arm_motion.begin(), s.arm_motion.end(), landmark) != s.arm_motion.end();
}

struct IrRect {
  double x0, x1, y0, y1;
};

IrRect ir_rect(int k) {
  switch (k) {
    case 1: return {0.0, 2.2, 0.0, 4.0};
    case 2: return {1.65, 3.85, 0.0, 4.0};
    default: return {3.3, 5.5, 0.0, 4.0};
  }
}

Point ir_pixel_center(int k, int row, int col) {
  const auto r = ir_rect(k);
  return {r.x0 + (col + 0.5) * (r.x1 - r.x0) / kIrSide, r.y0 + (row + 0.5) * (r.y1 - r.y0) / kIrSide};
}

Json point_json(Point p) { return Json::array({p.x, p.y}); }
Point point_from(const Json& j) { return {j.at(0).get<double>(), j.at(1).get<double>()}; }

[[noreturn]] void bad(const std::string& what) { throw Error(Errc::BadConfig, "scenario: " + what); }

}  // namespace

double distance(Point a, Point b) { return std::hypot(a.x - b.x, a.y - b.y); }

//=============================================================================
// Layouts
//=============================================================================

std::map<std::string, Point> motion_landmarks() {
  return {{"1", {0.8, 1.0}},  {"2A", {1.5, 3.0}}, {"2B", {1.5, 3.0}}, {"3", {2.75, 0.8}},
          {"4", {4.7, 1.0}},  {"5A", {4.0, 3.0}}, {"5B", {4.0, 3.0}}, {"6", {0.6, 2.4}}};
}

std::map<std::string, Point> copresence_landmarks() {
  return {{"A", {2.15, 2.0}}, {"B", {2.45, 1.65}}, {"C", {3.05, 1.65}}, {"D", {3.35, 2.0}}, {"E", {2.75, 1.55}}};
}

std::vector<std::string> motion_classes() { return {"1", "2A", "2B", "3", "4", "5A", "5B", "6"}; }
std::vector<std::string> copresence_classes() { return {"empty", "A", "B", "C", "D", "E"}; }

Point radar_position(int k) {
  static const Point pos[6] = {{0.0, 0.0}, {2.75, 0.0}, {5.5, 0.0}, {0.0, 4.0}, {5.5, 4.0}, {2.75, 4.0}};
  if (k < 1 || k > 6) throw Error(Errc::InvalidArgument, "radar index out of range");
  return pos[k - 1];
}

//=============================================================================
// Workers
//=============================================================================

std::optional<Point> worker_position(const Scenario& s, std::size_t w, std::int64_t t_ms) {
  const auto seg = segment_at(s, w, t_ms);
  if (!seg) return std::nullopt;
  const auto& lm = s.workers[w][*seg].landmark;
  const auto it = s.landmarks.find(lm);
  if (it == s.landmarks.end()) throw Error(Errc::BadConfig, "unknown landmark '" + lm + "'");
  // Band-limited wander around the landmark: a sum of slow sinusoids with
  // stationary deviation walk_sd per axis.
  Rng rng(mix_seed(mix_seed(s.seed, 0x57a1ULL + w), *seg));
  const double amp = s.walk_sd * std::sqrt(2.0 / kWalkTerms);
  const double ts = static_cast<double>(t_ms) / 1000.0;
  Point p = it->second;
  for (int axis = 0; axis < 2; ++axis) {
    double off = 0.0;
    for (int i = 0; i < kWalkTerms; ++i) {
      const double f = rng.uniform(0.03, 0.4);
      const double phi = rng.uniform(0.0, 2.0 * kPi);
      off += amp * std::sin(2.0 * kPi * f * ts + phi);
    }
    (axis == 0 ? p.x : p.y) += off;
  }
  p.x = std::clamp(p.x, 0.05, s.width - 0.05);
  p.y = std::clamp(p.y, 0.05, s.depth - 0.05);
  return p;
}

std::string worker_landmark(const Scenario& s, std::size_t w, std::int64_t t_ms) {
  const auto seg = segment_at(s, w, t_ms);
  return seg ? s.workers[w][*seg].landmark : std::string();
}

std::optional<double> true_distance(const Scenario& s, std::int64_t t_ms) {
  std::optional<double> best;
  for (std::size_t w = 0; w < s.workers.size(); ++w) {
    if (const auto p = worker_position(s, w, t_ms)) {
      const double d = distance(*p, s.robot);
      if (!best || d < *best) best = d;
    }
  }
  return best;
}

//=============================================================================
// Radar
//=============================================================================

int range_bin(double r) {
  if (!(r >= 0.0) || r >= kRadarBins * kRangeBin) {
    throw Error(Errc::OutOfRange, "range " + std::to_string(r) + " m beyond the last bin");
  }
  return static_cast<int>(std::lround(r / kRangeBin));
}

std::vector<double> radar_background(const Scenario& s, int k, std::int64_t t_ms) {
  const Point at = radar_position(k);
  std::vector<double> out(kRadarBins);
  const double walls[4] = {at.x, s.width - at.x, at.y, s.depth - at.y};
  const double r_robot = distance(at, s.robot);
  const double ts = static_cast<double>(t_ms) / 1000.0;
  const double robot_amp = 2.0 / (1.0 + r_robot) * (1.0 + 0.3 * std::sin(2.0 * kPi * 0.2 * ts + 0.7 * k));
  for (int n = 0; n < kRadarBins; ++n) {
    const double r = n * kRangeBin;
    double v = 1.0 * std::exp(-r / 2.0) + 0.15;
    for (double wd : walls) {
      if (wd > 0.05) v += 0.8 / (1.0 + wd / 2.0) * gauss((r - wd) / kRangeBin, 3.0);
    }
    v += robot_amp * gauss((r - r_robot) / kRangeBin, 2.0);
    out[static_cast<std::size_t>(n)] = v;
  }
  return out;
}

RawFrame sim_radar_frame(const Scenario& s, int k, std::int64_t t_ms) {
  auto signal = radar_background(s, k, t_ms);
  const Point at = radar_position(k);
  for (std::size_t w = 0; w < s.workers.size(); ++w) {
    const auto p = worker_position(s, w, t_ms);
    if (!p) continue;
    const double r = distance(*p, at);
    (void)range_bin(r);
    const double amp = 4.0 / (1.0 + r);
    const double centre = r / kRangeBin;
    const int lo = std::max(0, static_cast<int>(centre) - 12);
    const int hi = std::min(kRadarBins - 1, static_cast<int>(centre) + 12);
    for (int n = lo; n <= hi; ++n) signal[static_cast<std::size_t>(n)] += amp * gauss(n - centre, 2.0);
  }
  std::vector<double> out(kRadarBins, 0.0);
  if (s.noise.radar > 0.0) {
    auto rng = frame_rng(s.seed, 1, k, t_ms);
    for (int sub = 0; sub < kSubFrames; ++sub) {
      for (int n = 0; n < kRadarBins; ++n) out[static_cast<std::size_t>(n)] += rng.normal(0.0, s.noise.radar);
    }
  }
  for (int n = 0; n < kRadarBins; ++n) {
    out[static_cast<std::size_t>(n)] = signal[static_cast<std::size_t>(n)] + out[static_cast<std::size_t>(n)] / kSubFrames;
  }
  return RawFrame(SensorId(PipelineId(1), k), Timestamp(t_ms), std::move(out));
}

//=============================================================================
// THz camera
//=============================================================================
// The camera looks along y = kThzLineY. Columns map to lateral offset across
// 1.6 m, rows to height across 2 m; a body between source and camera blocks
// the beam over its silhouette.

namespace {

constexpr double kThzSpan = 1.6;

double thz_column_of(double y) { return 15.5 + (y - kThzLineY) / kThzSpan * kThzSide; }

}  // namespace

std::vector<double> thz_mean_field() {
  std::vector<double> b(kThzPixels);
  for (int i = 0; i < kThzSide; ++i) {
    for (int j = 0; j < kThzSide; ++j) {
      b[static_cast<std::size_t>(i * kThzSide + j)] = 8.0 * gauss(std::hypot(i - 15.5, j - 15.5), 10.0) + 2.0;
    }
  }
  return b;
}

std::vector<double> thz_sigma_field() {
  auto s = thz_mean_field();
  for (auto& v : s) v = 0.15 + 0.03 * v;
  return s;
}

RawFrame sim_thz_frame(const Scenario& s, std::int64_t t_ms) {
  static const auto b = thz_mean_field();
  static const auto sigma = thz_sigma_field();
  std::vector<double> occlusion(kThzPixels, 0.0);
  const double ts = static_cast<double>(t_ms) / 1000.0;
  for (std::size_t w = 0; w < s.workers.size(); ++w) {
    const auto p = worker_position(s, w, t_ms);
    if (!p) continue;
    const double c = thz_column_of(p->y);
    const bool arm = has_arm_motion(s, worker_landmark(s, w, t_ms));
    // arm sweep between 4 and 12 columns beside the torso
    const double reach = 4.0 + 8.0 * (0.5 + 0.5 * std::sin(2.0 * kPi * 0.6 * ts + 1.3 * static_cast<double>(w)));
    for (int i = 0; i < kThzSide; ++i) {
      const double height = (31.5 - i) / kThzSide * 2.0;
      for (int j = 0; j < kThzSide; ++j) {
        double occ = height < 1.8 ? 0.7 * gauss(j - c, 3.0) : 0.0;
        if (arm && height > 1.1 && height < 1.5) occ += 0.6 * gauss(j - (c + reach), 2.0);
        auto& o = occlusion[static_cast<std::size_t>(i * kThzSide + j)];
        o = std::min(0.95, o + occ);
      }
    }
  }
  std::vector<double> out(kThzPixels);
  auto rng = frame_rng(s.seed, 2, 1, t_ms);
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double noise = s.noise.thz_scale > 0.0 ? rng.normal(0.0, sigma[i] * s.noise.thz_scale) : 0.0;
    out[i] = b[i] * (1.0 - occlusion[i]) + noise;
  }
  return RawFrame(SensorId(PipelineId(2), 1), Timestamp(t_ms), std::move(out));
}

//=============================================================================
// IR arrays
//=============================================================================

std::optional<std::pair<int, int>> ir_projection(int k, Point p) {
  const auto r = ir_rect(k);
  if (p.x < r.x0 || p.x >= r.x1 || p.y < r.y0 || p.y >= r.y1) return std::nullopt;
  const int col = static_cast<int>((p.x - r.x0) / (r.x1 - r.x0) * kIrSide);
  const int row = static_cast<int>((p.y - r.y0) / (r.y1 - r.y0) * kIrSide);
  return std::pair{std::min(row, kIrSide - 1), std::min(col, kIrSide - 1)};
}

std::vector<double> ir_background(const Scenario& s, int k) {
  std::vector<double> out(kIrPixels);
  for (int row = 0; row < kIrSide; ++row) {
    for (int col = 0; col < kIrSide; ++col) {
      const Point c = ir_pixel_center(k, row, col);
      out[static_cast<std::size_t>(row * kIrSide + col)] =
          21.0 + 0.4 * c.x / s.width + 0.3 * c.y / s.depth + 4.0 * gauss(distance(c, s.robot), 0.35);
    }
  }
  return out;
}

Point robot_arm_position(const Scenario& s, std::int64_t t_ms) {
  const double ts = static_cast<double>(t_ms) / 1000.0;
  return {s.robot.x + 0.6 * std::sin(2.0 * kPi * 0.07 * ts), s.robot.y - 0.3 + 0.25 * std::sin(2.0 * kPi * 0.11 * ts)};
}

RawFrame sim_ir_frame(const Scenario& s, int k, std::int64_t t_ms) {
  if (k < 1 || k > kIrSide) throw Error(Errc::InvalidArgument, "IR sensor index");
  auto out = ir_background(s, k);
  const double ts = static_cast<double>(t_ms) / 1000.0;
  // warm arm joints sweeping in front of the base; absent from the static background
  const Point arm = robot_arm_position(s, t_ms);
  for (int row = 0; row < kIrSide; ++row) {
    for (int col = 0; col < kIrSide; ++col) {
      out[static_cast<std::size_t>(row * kIrSide + col)] += 2.5 * gauss(distance(ir_pixel_center(k, row, col), arm), 0.3);
    }
  }
  for (std::size_t w = 0; w < s.workers.size(); ++w) {
    const auto p = worker_position(s, w, t_ms);
    if (!p) continue;
    // clothing and posture make the apparent body contrast drift
    const double contrast = 2.2 + 0.8 * std::sin(2.0 * kPi * ts / 23.0 + 1.3 * static_cast<double>(w));
    for (int row = 0; row < kIrSide; ++row) {
      for (int col = 0; col < kIrSide; ++col) {
        out[static_cast<std::size_t>(row * kIrSide + col)] +=
            contrast * gauss(distance(ir_pixel_center(k, row, col), *p), 0.25);
      }
    }
  }
  if (s.noise.ir_netd > 0.0) {
    auto rng = frame_rng(s.seed, 3, k, t_ms);
    for (auto& v : out) v += rng.normal(0.0, s.noise.ir_netd);
  }
  return RawFrame(SensorId(PipelineId(3), k), Timestamp(t_ms), std::move(out));
}

//=============================================================================
// CSI
//=============================================================================

RawFrame sim_csi_frame(const CsiScene& scene, int k, std::int64_t t_ms) {
  if (scene.los.size() != static_cast<std::size_t>(kCsiAntennas)) {
    throw Error(Errc::InvalidArgument, "CSI scene needs one LOS term per antenna");
  }
  auto rng = frame_rng(scene.seed, 4, k, t_ms);
  const double ts = static_cast<double>(t_ms) / 1000.0;
  std::vector<double> mod(scene.reflectors.size());
  for (std::size_t r = 0; r < mod.size(); ++r) {
    const auto& rf = scene.reflectors[r];
    mod[r] = rf.amplitude * (1.0 + scene.mod_depth * std::sin(2.0 * kPi * rf.mod_hz * ts + rf.mod_phase));
  }
  std::vector<double> out(kCsiValues);
  for (int s = 0; s < kCsiSubcarriers; ++s) {
    // scattering phase of each body, fresh per subcarrier and frame
    std::vector<Complex> body(mod.size());
    for (std::size_t r = 0; r < mod.size(); ++r) body[r] = std::polar(mod[r], rng.uniform(0.0, 2.0 * kPi));
    for (int a = 0; a < kCsiAntennas; ++a) {
      Complex x = scene.los[static_cast<std::size_t>(a)] * std::polar(1.0, scene.los_slope * s);
      for (std::size_t r = 0; r < mod.size(); ++r) {
        x += body[r] * std::polar(1.0, kPi * a * std::sin(scene.reflectors[r].angle_rad));
      }
      if (scene.noise_sd > 0.0) x += Complex(rng.normal(0.0, scene.noise_sd), rng.normal(0.0, scene.noise_sd));
      const auto idx = static_cast<std::size_t>((s * kCsiAntennas + a) * 2);
      out[idx] = x.real();
      out[idx + 1] = x.imag();
    }
  }
  return RawFrame(SensorId(PipelineId(4), k), Timestamp(t_ms), std::move(out));
}

std::vector<double> separated_angles(std::size_t n) {
  static const std::vector<std::vector<double>> u = {
      {}, {0.25}, {-0.5, 0.5}, {-0.75, 0.0, 0.75}, {-0.75, -0.25, 0.25, 0.75}};
  if (n >= u.size()) throw Error(Errc::InvalidArgument, "at most 4 separated workers");
  std::vector<double> out;
  for (double v : u[n]) out.push_back(std::asin(v));
  return out;
}

CsiScene counting_scene(const std::vector<double>& angles_rad, std::uint64_t seed, double noise_sd) {
  Rng rng(mix_seed(seed, 0xc51ULL));
  CsiScene scene;
  scene.seed = seed;
  scene.noise_sd = noise_sd;
  for (int a = 0; a < kCsiAntennas; ++a) scene.los.push_back(std::polar(3.0, rng.uniform(0.0, 2.0 * kPi)));
  for (std::size_t i = 0; i < angles_rad.size(); ++i) {
    CsiReflector r;
    r.angle_rad = angles_rad[i];
    r.amplitude = rng.uniform(0.8, 1.2);
    r.mod_hz = 0.3 + 0.4 * static_cast<double>(i) + rng.uniform(0.0, 0.15);
    r.mod_phase = rng.uniform(0.0, 2.0 * kPi);
    scene.reflectors.push_back(r);
  }
  return scene;
}

std::vector<RawFrame> sim_csi_session(const CsiScene& scene, std::int64_t start_ms, std::int64_t end_ms,
                                      std::int64_t period_ms) {
  if (period_ms <= 0) throw Error(Errc::InvalidArgument, "period must be positive");
  std::vector<RawFrame> out;
  for (std::int64_t t = start_ms; t < end_ms; t += period_ms) out.push_back(sim_csi_frame(scene, 1, t));
  return out;
}

//=============================================================================
// Scenarios
//=============================================================================

void Scenario::validate() const {
  if (width <= 0 || depth <= 0) bad("cell dimensions must be positive");
  for (const auto& [name, p] : landmarks) {
    if (p.x < 0 || p.x > width || p.y < 0 || p.y > depth) bad("landmark " + name + " outside the cell");
  }
  for (const auto& segs : workers) {
    std::int64_t last_end = 0;
    for (const auto& seg : segs) {
      if (seg.end_ms < seg.start_ms) bad("segment ends before it starts");
      if (seg.start_ms < last_end) bad("segments overlap or run backwards");
      if (!seg.landmark.empty() && !landmarks.count(seg.landmark)) bad("unknown landmark '" + seg.landmark + "'");
      last_end = seg.end_ms;
    }
  }
  for (int p : pipelines) {
    if (p < 1 || p > 4) bad("pipeline " + std::to_string(p));
  }
  if (frame_period_ms <= 0 || csi_period_ms <= 0) bad("frame periods must be positive");
  if (window_len < 2) bad("window_len must be at least 2");
  for (const auto& cs : csi_sessions) {
    if (cs.end_ms < cs.start_ms) bad("CSI session ends before it starts");
    if (cs.scene.los.size() != static_cast<std::size_t>(kCsiAntennas)) bad("CSI LOS needs 4 antennas");
  }
}

Json to_json(const Scenario& s) {
  Json lms = Json::object();
  for (const auto& [k, p] : s.landmarks) lms[k] = point_json(p);
  Json workers = Json::array();
  for (const auto& segs : s.workers) {
    Json arr = Json::array();
    for (const auto& seg : segs) arr.push_back({{"start_ms", seg.start_ms}, {"end_ms", seg.end_ms}, {"landmark", seg.landmark}});
    workers.push_back(arr);
  }
  Json sessions = Json::array();
  for (const auto& cs : s.csi_sessions) {
    Json los = Json::array();
    for (auto c : cs.scene.los) los.push_back({c.real(), c.imag()});
    Json refl = Json::array();
    for (const auto& r : cs.scene.reflectors) {
      refl.push_back({{"angle_rad", r.angle_rad}, {"amplitude", r.amplitude}, {"mod_hz", r.mod_hz}, {"mod_phase", r.mod_phase}});
    }
    sessions.push_back({{"start_ms", cs.start_ms},
                        {"end_ms", cs.end_ms},
                        {"scene",
                         {{"los", los},
                          {"los_slope", cs.scene.los_slope},
                          {"reflectors", refl},
                          {"noise_sd", cs.scene.noise_sd},
                          {"mod_depth", cs.scene.mod_depth},
                          {"seed", cs.scene.seed}}}});
  }
  return {{"name", s.name},
          {"cell", {{"width_m", s.width}, {"depth_m", s.depth}}},
          {"robot", point_json(s.robot)},
          {"landmarks", lms},
          {"arm_motion", s.arm_motion},
          {"workers", workers},
          {"function", function_name(s.function)},
          {"classes", s.classes},
          {"pipelines", s.pipelines},
          {"frame_period_ms", s.frame_period_ms},
          {"csi_period_ms", s.csi_period_ms},
          {"window_len", s.window_len},
          {"calibration_ms", s.calibration_ms},
          {"duration_ms", s.duration_ms},
          {"csi_sessions", sessions},
          {"noise", {{"radar", s.noise.radar}, {"thz_scale", s.noise.thz_scale}, {"ir_netd", s.noise.ir_netd}}},
          {"walk_sd_m", s.walk_sd},
          {"seed", s.seed}};
}

Scenario scenario_from_json(const Json& doc) {
  Scenario s;
  try {
    s.name = doc.value("name", s.name);
    if (doc.contains("cell")) {
      s.width = doc.at("cell").value("width_m", s.width);
      s.depth = doc.at("cell").value("depth_m", s.depth);
    }
    if (doc.contains("robot")) s.robot = point_from(doc.at("robot"));
    for (const auto& [k, p] : doc.at("landmarks").items()) s.landmarks[k] = point_from(p);
    s.arm_motion = doc.value("arm_motion", std::vector<std::string>{});
    for (const auto& arr : doc.value("workers", Json::array())) {
      std::vector<Segment> segs;
      for (const auto& seg : arr) {
        segs.push_back({seg.at("start_ms").get<std::int64_t>(), seg.at("end_ms").get<std::int64_t>(),
                        seg.at("landmark").get<std::string>()});
      }
      s.workers.push_back(std::move(segs));
    }
    s.function = function_from_name(doc.value("function", std::string("motion")));
    s.classes = doc.value("classes", std::vector<std::string>{});
    s.pipelines = doc.value("pipelines", s.pipelines);
    s.frame_period_ms = doc.value("frame_period_ms", s.frame_period_ms);
    s.csi_period_ms = doc.value("csi_period_ms", s.csi_period_ms);
    s.window_len = doc.value("window_len", s.window_len);
    s.calibration_ms = doc.value("calibration_ms", s.calibration_ms);
    s.duration_ms = doc.at("duration_ms").get<std::int64_t>();
    for (const auto& cs : doc.value("csi_sessions", Json::array())) {
      CsiSession out;
      out.start_ms = cs.at("start_ms").get<std::int64_t>();
      out.end_ms = cs.at("end_ms").get<std::int64_t>();
      const auto& sc = cs.at("scene");
      for (const auto& c : sc.at("los")) out.scene.los.emplace_back(c.at(0).get<double>(), c.at(1).get<double>());
      out.scene.los_slope = sc.value("los_slope", out.scene.los_slope);
      out.scene.noise_sd = sc.value("noise_sd", out.scene.noise_sd);
      out.scene.mod_depth = sc.value("mod_depth", out.scene.mod_depth);
      out.scene.seed = sc.value("seed", std::uint64_t{0});
      for (const auto& r : sc.value("reflectors", Json::array())) {
        out.scene.reflectors.push_back({r.at("angle_rad").get<double>(), r.value("amplitude", 1.0),
                                        r.value("mod_hz", 0.5), r.value("mod_phase", 0.0)});
      }
      s.csi_sessions.push_back(std::move(out));
    }
    if (doc.contains("noise")) {
      const auto& n = doc.at("noise");
      s.noise.radar = n.value("radar", s.noise.radar);
      s.noise.thz_scale = n.value("thz_scale", s.noise.thz_scale);
      s.noise.ir_netd = n.value("ir_netd", s.noise.ir_netd);
    }
    s.walk_sd = doc.value("walk_sd_m", s.walk_sd);
    s.seed = doc.value("seed", s.seed);
  } catch (const Json::exception& e) {
    bad(e.what());
  } catch (const Error& e) {
    if (e.code() == Errc::BadConfig) throw;
    bad(e.what());
  }
  s.validate();
  return s;
}

std::vector<RawFrame> scenario_frames(const Scenario& s) {
  s.validate();
  std::vector<RawFrame> out;
  const auto has = [&](int p) { return std::find(s.pipelines.begin(), s.pipelines.end(), p) != s.pipelines.end(); };
  std::size_t session = 0;
  std::int64_t next_csi = s.csi_sessions.empty() ? -1 : s.csi_sessions.front().start_ms;
  auto emit_csi_until = [&](std::int64_t limit) {
    while (has(4) && session < s.csi_sessions.size()) {
      const auto& cs = s.csi_sessions[session];
      if (next_csi >= cs.end_ms) {
        if (++session < s.csi_sessions.size()) next_csi = std::max(next_csi, s.csi_sessions[session].start_ms);
        continue;
      }
      if (next_csi > limit) return;
      out.push_back(sim_csi_frame(cs.scene, 1, next_csi));
      next_csi += s.csi_period_ms;
    }
  };
  for (std::int64_t t = 0; t < s.duration_ms; t += s.frame_period_ms) {
    emit_csi_until(t - 1);
    if (has(1)) {
      for (int k = 1; k <= 6; ++k) out.push_back(sim_radar_frame(s, k, t));
    }
    if (has(2)) out.push_back(sim_thz_frame(s, t));
    if (has(3)) {
      for (int k = 1; k <= 3; ++k) out.push_back(sim_ir_frame(s, k, t));
    }
    emit_csi_until(t);
  }
  emit_csi_until(std::numeric_limits<std::int64_t>::max());
  return out;
}

std::vector<WindowLabel> scenario_labels(const Scenario& s) {
  std::vector<WindowLabel> out;
  if (s.function == HrcFunction::WorkerCounting) {
    for (const auto& cs : s.csi_sessions) {
      out.push_back({cs.end_ms, s.function, std::to_string(cs.scene.reflectors.size()), -1.0});
    }
    return out;
  }
  const auto window_ms = static_cast<std::int64_t>(s.window_len) * s.frame_period_ms;
  for (std::int64_t start = 0; start + window_ms <= s.duration_ms; start += window_ms) {
    const auto end = start + window_ms - s.frame_period_ms;
    auto lm = worker_landmark(s, 0, end);
    const auto d = true_distance(s, end);
    out.push_back({end, s.function, lm.empty() ? "empty" : lm, d ? *d : -1.0});
  }
  return out;
}

Capture run_scenario(const Scenario& s, const std::string& cell) {
  Capture c;
  for (auto& f : scenario_frames(s)) {
    const auto topic = transport::Topic::sensor(cell, f.sensor()).str();
    c.messages.push_back({topic, f.at().millis(), transport::Kind::Frame, transport::frame_to_json(f)});
  }
  c.labels = scenario_labels(s);
  for (std::int64_t t = 0; t < s.duration_ms; t += s.frame_period_ms) {
    if (const auto d = true_distance(s, t)) c.distances.emplace_back(t, *d);
  }
  Json sessions = Json::array();
  for (const auto& cs : s.csi_sessions) {
    sessions.push_back({{"start_ms", cs.start_ms},
                        {"end_ms", cs.end_ms},
                        {"true_count", cs.scene.reflectors.size()},
                        {"calibration", cs.end_ms <= s.calibration_ms}});
  }
  c.manifest = {{"scenario", s.name},
                {"cell", cell},
                {"function", function_name(s.function)},
                {"classes", s.classes},
                {"landmarks", to_json(s).at("landmarks")},
                {"robot", point_json(s.robot)},
                {"window_len", s.window_len},
                {"frame_period_ms", s.frame_period_ms},
                {"calibration_end_ms", s.calibration_ms},
                {"duration_ms", s.duration_ms},
                {"sessions", sessions},
                {"seed", s.seed},
                {"frames", c.messages.size()}};
  return c;
}

void write_labels(const std::string& path, const std::vector<WindowLabel>& labels) {
  std::ofstream out(path);
  if (!out) throw Error(Errc::Io, "cannot write " + path);
  out << "window_end_ms,function,label,true_d_m\n";
  out.precision(17);
  for (const auto& l : labels) {
    out << l.window_end_ms << ',' << function_name(l.function) << ',' << l.label << ',' << l.true_d_m << '\n';
  }
}

std::vector<WindowLabel> read_labels(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::MissingFile, "labels not found: " + path);
  std::string line;
  std::getline(in, line);
  if (line != "window_end_ms,function,label,true_d_m") throw Error(Errc::SchemaViolation, "labels header in " + path);
  std::vector<WindowLabel> out;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string t, f, label, d;
    if (!std::getline(ss, t, ',') || !std::getline(ss, f, ',') || !std::getline(ss, label, ',') ||
        !std::getline(ss, d, ',')) {
      throw Error(Errc::SchemaViolation, "labels row '" + line + "'");
    }
    try {
      out.push_back({std::stoll(t), function_from_name(f), label, std::stod(d)});
    } catch (const std::exception& e) {
      throw Error(Errc::SchemaViolation, "labels row '" + line + "': " + e.what());
    }
  }
  return out;
}

void write_capture_dir(const Capture& c, const std::string& dir) {
  std::filesystem::create_directories(dir);
  const std::filesystem::path root(dir);
  transport::write_capture((root / "capture.ndjson").string(), c.messages);
  write_labels((root / "labels.csv").string(), c.labels);
  {
    std::ofstream out(root / "distance.csv");
    out << "t_ms,d_m\n";
    out.precision(17);
    for (const auto& [t, d] : c.distances) out << t << ',' << d << '\n';
  }
  std::ofstream m(root / "manifest.json");
  m << c.manifest.dump(2) << '\n';
  if (!m) throw Error(Errc::Io, "cannot write manifest in " + dir);
}

namespace {

Scenario landmark_scenario(const ScenarioOptions& o, std::map<std::string, Point> landmarks,
                           std::vector<std::string> classes, HrcFunction f, std::vector<int> pipelines) {
  Scenario s;
  s.landmarks = std::move(landmarks);
  s.classes = std::move(classes);
  s.function = f;
  s.pipelines = std::move(pipelines);
  s.seed = o.seed;
  if (o.noiseless) s.noise = {0.0, 0.0, 0.0};
  const auto window_ms = static_cast<std::int64_t>(s.window_len) * s.frame_period_ms;
  s.calibration_ms = static_cast<std::int64_t>(o.calibration_windows) * window_ms;

  std::vector<std::string> order;
  for (std::size_t i = 0; i < o.windows_per_class; ++i) {
    for (const auto& c : s.classes) order.push_back(c);
  }
  Rng rng(mix_seed(o.seed, 0x5e9ULL));
  for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);

  std::vector<Segment> segs;
  std::int64_t t = s.calibration_ms;
  for (const auto& c : order) {
    if (c != "empty") segs.push_back({t, t + window_ms, c});
    t += window_ms;
  }
  s.workers.push_back(std::move(segs));
  s.duration_ms = t;
  return s;
}

}  // namespace

Scenario motion_scenario(const ScenarioOptions& o) {
  auto s = landmark_scenario(o, motion_landmarks(), motion_classes(), HrcFunction::MotionDetection, {1, 2, 3});
  s.name = o.noiseless ? "motion-noiseless" : "motion";
  s.arm_motion = {"2B", "5B"};
  return s;
}

Scenario copresence_scenario(const ScenarioOptions& o) {
  auto s = landmark_scenario(o, copresence_landmarks(), copresence_classes(), HrcFunction::CoPresence, {1, 2, 3});
  s.name = o.noiseless ? "copresence-noiseless" : "copresence";
  return s;
}

Scenario counting_scenario(std::size_t per_count, std::uint64_t seed, std::int64_t session_ms) {
  Scenario s;
  s.name = "counting";
  s.function = HrcFunction::WorkerCounting;
  s.pipelines = {4};
  s.seed = seed;
  s.classes = {"0", "1", "2", "3", "4"};
  constexpr int kCalibrationSessions = 3;
  std::vector<std::size_t> counts;
  for (std::size_t n = 0; n <= 4; ++n) {
    for (std::size_t i = 0; i < per_count; ++i) counts.push_back(n);
  }
  Rng rng(mix_seed(seed, 0xc0ULL));
  for (std::size_t i = counts.size(); i > 1; --i) std::swap(counts[i - 1], counts[rng.below(i)]);
  std::int64_t t = 0;
  for (int i = 0; i < kCalibrationSessions; ++i) {
    s.csi_sessions.push_back({t, t + session_ms, counting_scene({}, mix_seed(seed, 100 + i))});
    t += session_ms;
  }
  s.calibration_ms = t;
  for (std::size_t i = 0; i < counts.size(); ++i) {
    auto angles = separated_angles(counts[i]);
    for (auto& a : angles) a = std::asin(std::clamp(std::sin(a) + rng.uniform(-0.03, 0.03), -0.95, 0.95));
    s.csi_sessions.push_back({t, t + session_ms, counting_scene(angles, mix_seed(seed, 1000 + i))});
    t += session_ms;
  }
  s.duration_ms = t;
  return s;
}

}  // namespace mdf::simgen
