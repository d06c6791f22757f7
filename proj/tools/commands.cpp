#include "commands.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>
#include <thread>

#include "mdf/runner.hpp"

namespace mdf::cli {

namespace fs = std::filesystem;
using Json = nlohmann::json;

namespace {

Json read_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::MissingFile, "cannot open " + path);
  try {
    return Json::parse(in);
  } catch (const Json::parse_error& e) {
    throw Error(Errc::BadConfig, path + ": " + e.what());
  }
}

void write_text(const fs::path& path, const std::string& text) {
  fs::create_directories(path.parent_path().empty() ? fs::path(".") : path.parent_path());
  std::ofstream out(path);
  out << text;
  if (!out) throw Error(Errc::Io, "cannot write " + path.string());
}

void write_json(const fs::path& path, const Json& doc) { write_text(path, doc.dump(2) + "\n"); }

struct CaptureDir {
  std::vector<transport::Message> messages;
  std::vector<RawFrame> frames;
  std::vector<simgen::WindowLabel> labels;
  Json manifest;
};

CaptureDir read_capture_dir(const std::string& dir) {
  const fs::path root(dir);
  if (!fs::is_directory(root)) throw Error(Errc::MissingFile, "capture directory " + dir + " does not exist");
  CaptureDir c;
  c.messages = transport::read_capture((root / "capture.ndjson").string());
  c.manifest = read_json((root / "manifest.json").string());
  if (!c.manifest.is_object() || !c.manifest.contains("function")) {
    throw Error(Errc::SchemaViolation, "manifest.json lacks the function");
  }
  if (fs::exists(root / "labels.csv")) c.labels = simgen::read_labels((root / "labels.csv").string());
  for (const auto& m : c.messages) {
    if (m.kind == transport::Kind::Frame) c.frames.push_back(transport::frame_from_json(m.payload));
  }
  return c;
}

std::int64_t calibration_end(const Json& manifest) { return manifest.value("calibration_end_ms", std::int64_t{0}); }
std::size_t window_len(const Json& manifest) { return manifest.value("window_len", features::kDefaultWindow); }

std::set<PipelineId> pipelines_in(std::span<const RawFrame> frames) {
  std::set<PipelineId> out;
  for (const auto& f : frames) out.insert(f.sensor().pipeline());
  return out;
}

HrcFunction capture_function(const CaptureDir& cap, const Common& c) {
  const auto f = function_from_name(cap.manifest.at("function").get<std::string>());
  if (!c.function.empty() && function_from_name(c.function) != f) {
    throw Error(Errc::BadConfig, "capture holds " + std::string(function_name(f)) + " data, not " + c.function);
  }
  return f;
}

Json selection_json(const std::set<PipelineId>& s) {
  Json a = Json::array();
  for (const auto& p : s) a.push_back(p.index());
  return a;
}

std::string fnv1a(std::string_view bytes) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char ch : bytes) {
    h ^= ch;
    h *= 1099511628211ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

/// Digest of a file's bytes, so reports track the inputs they came from.
std::string file_digest(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return fnv1a(ss.str());
}

std::optional<safety::SafetyParams> safety_params(const Common& c) {
  if (!c.config.empty()) return safety::safety_params_from_json(read_json(c.config));
  const fs::path fallback = fs::path("config") / "safety_params.json";
  if (fs::exists(fallback)) return safety::safety_params_from_json(read_json(fallback.string()));
  return std::nullopt;
}

std::string zone_of(HrcFunction f) { return f == HrcFunction::CoPresence ? "d<1m" : "d>1m"; }

/// d_p at the two robot speeds compared in the evaluation, using measured Z_w, T_w.
Json dp_by_speed(safety::SafetyParams p, double z_w, double t_w) {
  p.Z_w = z_w;
  p.T_w = t_w;
  Json out = Json::object();
  for (double v : {0.5, 0.15}) {
    auto q = p;
    q.v_r = v;
    std::ostringstream key;
    key << "v_r=" << v;
    out[key.str()] = safety::protective_distance(q);
  }
  return out;
}

}  // namespace

std::string digest(const Json& doc) { return fnv1a(doc.dump()); }

//-----------------------------------------------------------------------------

Json cmd_simulate(const Common& c) {
  if (c.config.empty()) throw Error(Errc::BadConfig, "simulate needs --config SCENARIO.json");
  const auto doc = read_json(c.config);
  simgen::Scenario s;
  if (doc.contains("generator")) {
    const auto gen = doc.at("generator").get<std::string>();
    if (gen == "counting") {
      s = simgen::counting_scenario(doc.value("per_count", std::size_t{2}), c.seed.value_or(doc.value("seed", 5ULL)),
                                    doc.value("session_ms", std::int64_t{30000}));
    } else if (gen == "motion" || gen == "copresence") {
      simgen::ScenarioOptions o;
      o.windows_per_class = doc.value("windows_per_class", o.windows_per_class);
      o.calibration_windows = doc.value("calibration_windows", o.calibration_windows);
      o.noiseless = doc.value("noiseless", false);
      o.seed = c.seed.value_or(doc.value("seed", o.seed));
      s = gen == "motion" ? simgen::motion_scenario(o) : simgen::copresence_scenario(o);
    } else {
      throw Error(Errc::BadConfig, "unknown generator '" + gen + "'");
    }
  } else {
    s = simgen::scenario_from_json(doc);
    if (c.seed) s.seed = *c.seed;
  }
  s.validate();
  const auto cap = simgen::run_scenario(s);
  simgen::write_capture_dir(cap, c.out);
  write_json(fs::path(c.out) / "scenario.json", simgen::to_json(s));
  return {{"command", "simulate"}, {"scenario", s.name},     {"seed", s.seed},
          {"frames", cap.messages.size()}, {"labels", cap.labels.size()}, {"out", c.out},
          {"capture_digest", file_digest((fs::path(c.out) / "capture.ndjson").string())}};
}

Json cmd_calibrate(const Common& c, const std::string& capture_dir) {
  const auto cap = read_capture_dir(capture_dir);
  const auto pipes = pipelines_in(cap.frames);
  if (pipes.empty()) throw Error(Errc::EmptyInput, "capture has no frames");
  fs::create_directories(c.out);
  Json report = {{"command", "calibrate"}, {"capture", capture_dir}, {"pipelines", selection_json(pipes)}};

  edge::EdgeConfig ec;
  ec.cell = cap.manifest.value("cell", ec.cell);
  ec.broker = c.broker;
  ec.functions = {capture_function(cap, c)};
  const bool counting = ec.functions.count(HrcFunction::WorkerCounting) > 0;
  std::vector<runner::CountingSession> sessions;
  std::vector<RawFrame> empty_frames;
  std::int64_t t_cal = calibration_end(cap.manifest);
  if (counting) {
    // the empty room is recorded as separate sessions rather than a prefix
    sessions = runner::counting_sessions(cap.frames, cap.manifest);
    for (const auto& s : sessions) {
      if (s.calibration) empty_frames.insert(empty_frames.end(), s.frames.begin(), s.frames.end());
    }
    t_cal = std::numeric_limits<std::int64_t>::max();
  }
  const auto bindings = runner::calibrate_bindings(counting ? std::span<const RawFrame>(empty_frames)
                                                            : std::span<const RawFrame>(cap.frames),
                                                   t_cal, pipes, window_len(cap.manifest));
  for (const auto& b : bindings) {
    const auto file = "background_" + std::to_string(b.pipeline.index()) + ".json";
    write_json(fs::path(c.out) / file, edge::backgrounds_to_json(b.backgrounds));
    std::vector<int> ks;
    for (const auto& s : b.sensors()) ks.push_back(s.k());
    ec.sensors[b.pipeline] = ks;
    ec.window_len[b.pipeline] = b.window_len;
    ec.background_files[b.pipeline] = fs::absolute(fs::path(c.out) / file).string();
  }
  write_json(fs::path(c.out) / "edge_config.json", edge::to_json(ec));
  report["edge_config"] = (fs::path(c.out) / "edge_config.json").string();

  if (counting) {
    std::vector<std::vector<RawFrame>> empty;
    for (const auto& s : sessions) {
      if (s.calibration) empty.push_back(s.frames);
    }
    counting::CountConfig cc;
    cc.calibration = counting::calibrate_counting(empty, cc);
    write_json(fs::path(c.out) / "count_config.json", counting::to_json(cc));
    report["count_config"] = (fs::path(c.out) / "count_config.json").string();
  }
  write_json(fs::path(c.out) / "calibrate_report.json", report);
  return report;
}

Json cmd_train(const Common& c, const std::string& capture_dir, const TrainOptions& o) {
  const auto cap = read_capture_dir(capture_dir);
  const auto f = capture_function(cap, c);
  if (f == HrcFunction::WorkerCounting) throw Error(Errc::BadConfig, "counting is training-free; use count");
  const auto selection = o.pipelines.empty() ? edge::select_pipelines(f) : runner::parse_selection(o.pipelines);
  cloud::TrainConfig tc;
  if (!c.config.empty()) tc = cloud::train_config_from_json(read_json(c.config));
  if (c.seed) tc.seed = *c.seed;

  auto bindings = runner::calibrate_bindings(cap.frames, calibration_end(cap.manifest), selection,
                                             window_len(cap.manifest));
  const auto prepared = runner::extract_windows(std::move(bindings), cap.frames, cap.labels,
                                                calibration_end(cap.manifest));
  const auto classes = cap.manifest.at("classes").get<std::vector<std::string>>();
  const auto ds = cloud::make_dataset(runner::fused_samples(prepared, selection), classes);
  auto model = cloud::train_classifier(ds, tc);
  const auto fit = cloud::evaluate(model, ds);

  fs::create_directories(c.out);
  const auto model_path = (fs::path(c.out) / "model.mdfm").string();
  cloud::save_model(model, model_path);
  Json report = {{"command", "train"},
                 {"function", function_name(f)},
                 {"selection", selection_json(selection)},
                 {"samples", ds.samples.size()},
                 {"train_config", cloud::to_json(tc)},
                 {"training_accuracy", fit.accuracy},
                 {"epoch_losses", model.epoch_losses},
                 {"model", model_path},
                 {"model_digest", file_digest(model_path)}};
  write_json(fs::path(c.out) / "train_report.json", report);
  return report;
}

Json cmd_eval(const Common& c, const std::string& model_path, const std::string& capture_dir, const EvalOptions& o) {
  cloud::ClassifierModel model;
  try {
    model = cloud::load_model(model_path);
  } catch (const Error& e) {
    throw Error(Errc::SchemaViolation, std::string("no usable model: ") + e.what());
  }
  const auto cap = read_capture_dir(capture_dir);
  const auto f = capture_function(cap, c);
  if (f == HrcFunction::WorkerCounting) throw Error(Errc::BadConfig, "counting captures are evaluated by count");
  const std::set<PipelineId> selection(model.channels.begin(), model.channels.end());
  const auto t_cal = calibration_end(cap.manifest);
  auto bindings = runner::calibrate_bindings(cap.frames, t_cal, selection, window_len(cap.manifest));
  const auto geometry = runner::geometry_from_manifest(cap.manifest);
  const auto params = safety_params(c);

  runner::LiveOptions lo;
  lo.cell = cap.manifest.value("cell", lo.cell);
  lo.processing_delay_ms = o.delay_ms;
  const auto live = runner::run_live(cap.messages, std::move(bindings), f, selection, model, geometry, lo);

  // score only windows after calibration, against the model's classes
  std::vector<simgen::WindowLabel> scored;
  for (const auto& l : cap.labels) {
    if (l.window_end_ms >= t_cal) scored.push_back(l);
  }
  const auto pairs = runner::predicted_vs_truth(live.classifications, scored);
  std::map<std::string, std::size_t> index;
  for (std::size_t i = 0; i < model.class_names.size(); ++i) index[model.class_names[i]] = i;
  cloud::ConfusionMatrix cm{Eigen::MatrixXi::Zero(static_cast<Eigen::Index>(index.size()),
                                                  static_cast<Eigen::Index>(index.size()))};
  for (const auto& [pred, truth] : pairs) {
    const auto t = index.find(truth);
    if (t == index.end()) continue;
    cm.counts(static_cast<Eigen::Index>(t->second), static_cast<Eigen::Index>(index.at(pred))) += 1;
  }
  const auto eval = cloud::metrics_from(cm, model.class_names);
  const auto unc = safety::evaluate_uncertainty(pairs, geometry.landmarks, live.latency_samples);

  Json hist = Json::object();
  for (double l : live.latency_samples) {
    const auto bin = static_cast<int>(std::floor(l / 5.0)) * 5;
    hist[std::to_string(bin)] = hist.value(std::to_string(bin), 0) + 1;
  }
  const Json config = {{"model_digest", file_digest(model_path)},
                       {"capture_digest", file_digest((fs::path(capture_dir) / "capture.ndjson").string())},
                       {"selection", selection_json(selection)},
                       {"function", function_name(f)},
                       {"delay_ms", o.delay_ms ? Json(*o.delay_ms) : Json(nullptr)},
                       {"safety_params", params ? safety::to_json(*params) : Json(nullptr)},
                       {"seed", c.seed ? Json(*c.seed) : Json(nullptr)}};
  Json report = {{"command", "eval"},
                 {"function", function_name(f)},
                 {"zone", zone_of(f)},
                 {"selection", selection_json(selection)},
                 {"evaluation", cloud::to_json(eval)},
                 {"Z_w_m", unc.Z_w},
                 {"positions", unc.n_positions},
                 {"windows_classified", live.classifications.size()},
                 {"dead_letters", live.dead_letters},
                 {"seed", config.at("seed")},
                 {"config_digest", digest(config)}};
  // wall-clock latency varies run to run, so it stays out of the digest
  report["report_digest"] = digest(report);
  report["T_w_s"] = unc.T_w;
  report["latency"] = transport::to_json(live.latency);
  report["latency_histogram_ms"] = hist;
  if (params) {
    report["d_p_m"] = dp_by_speed(*params, unc.Z_w, unc.T_w);
    report["safety_params"] = safety::to_json(*params);
  }

  fs::create_directories(c.out);
  write_json(fs::path(c.out) / "report.json", report);
  write_text(fs::path(c.out) / "metrics.csv", cloud::metrics_csv(eval));
  std::ostringstream lat;
  lat.precision(17);
  lat << "window_end_ms,latency_ms\n";
  for (const auto& m : live.classifications) {
    lat << m.payload.at("window_end_ms").get<std::int64_t>() << ',' << m.payload.at("latency_ms").get<double>() << '\n';
  }
  write_text(fs::path(c.out) / "latency.csv", lat.str());
  return report;
}

Json cmd_count(const Common& c, const std::string& capture_dir) {
  const auto cap = read_capture_dir(capture_dir);
  if (capture_function(cap, c) != HrcFunction::WorkerCounting) {
    throw Error(Errc::BadConfig, "count needs a counting capture");
  }
  const auto sessions = runner::counting_sessions(cap.frames, cap.manifest);
  counting::CountConfig cc;
  if (!c.config.empty()) cc = counting::count_config_from_json(read_json(c.config));
  if (cc.calibration.kl_threshold <= 0.0) {
    std::vector<std::vector<RawFrame>> empty;
    for (const auto& s : sessions) {
      if (s.calibration) empty.push_back(s.frames);
    }
    cc.calibration = counting::calibrate_counting(empty, cc);
  }
  Json rows = Json::array();
  std::ostringstream csv;
  csv << "start_ms,end_ms,true_count,estimated_count\n";
  int scored = 0, exact = 0, within_one = 0;
  for (const auto& s : sessions) {
    if (s.calibration) continue;
    const auto r = counting::estimate_count(s.frames, cc);
    auto row = counting::to_json(r);
    row["start_ms"] = s.start_ms;
    row["end_ms"] = s.end_ms;
    row["true_count"] = s.true_count;
    rows.push_back(row);
    csv << s.start_ms << ',' << s.end_ms << ',' << s.true_count << ',' << r.count << '\n';
    if (s.true_count >= 0) {
      ++scored;
      exact += r.count == s.true_count;
      within_one += std::abs(r.count - s.true_count) <= 1;
    }
  }
  Json report = {{"command", "count"},
                 {"sessions", rows},
                 {"scored", scored},
                 {"exact", exact},
                 {"within_one", within_one},
                 {"count_config", counting::to_json(cc)}};
  report["report_digest"] = digest(report);
  fs::create_directories(c.out);
  write_json(fs::path(c.out) / "count_report.json", report);
  write_text(fs::path(c.out) / "count.csv", csv.str());
  return report;
}

Json cmd_safety(const Common& c, const std::string& report_path) {
  if (c.config.empty()) throw Error(Errc::BadConfig, "safety needs --config SAFETY_PARAMS.json");
  const auto params = safety::safety_params_from_json(read_json(c.config));
  const auto rep = read_json(report_path);
  if (!rep.contains("Z_w_m") || !rep.contains("T_w_s") || !rep.contains("function")) {
    throw Error(Errc::SchemaViolation, report_path + " lacks Z_w_m, T_w_s or function");
  }
  const auto f = function_from_name(rep.at("function").get<std::string>());
  const double z_w = rep.at("Z_w_m").get<double>();
  const double t_w = rep.at("T_w_s").get<double>();
  auto measured = params;
  measured.Z_w = z_w;
  measured.T_w = t_w;
  Json report = {{"command", "safety"},
                 {"function", function_name(f)},
                 {"zone", zone_of(f)},
                 {"Z_w_m", z_w},
                 {"T_w_s", t_w},
                 {"params", safety::to_json(measured)},
                 {"d_p_m", safety::protective_distance(measured)},
                 {"d_p_by_speed_m", dp_by_speed(params, z_w, t_w)}};
  fs::create_directories(c.out);
  write_json(fs::path(c.out) / "safety_report.json", report);
  return report;
}

//-----------------------------------------------------------------------------

namespace {

std::vector<edge::PipelineBinding> bindings_from(const edge::EdgeConfig& ec) {
  std::vector<edge::PipelineBinding> out;
  for (const auto& [p, ks] : ec.sensors) {
    const auto file = ec.background_files.find(p);
    if (file == ec.background_files.end()) {
      throw Error(Errc::BadConfig, "edge config has no background for pipeline " + std::to_string(p.index()));
    }
    edge::PipelineBinding b{p, edge::backgrounds_from_json(read_json(file->second)),
                            ec.window_len.count(p) ? ec.window_len.at(p) : features::kDefaultWindow};
    b.validate();
    out.push_back(std::move(b));
  }
  return out;
}

}  // namespace

Json cmd_serve_edge(const Common& c, const ServeOptions& o) {
  if (c.config.empty()) throw Error(Errc::BadConfig, "serve-edge needs --config EDGE_CONFIG.json");
  if (o.capture.empty()) throw Error(Errc::BadConfig, "serve-edge needs --capture DIR to stream");
  const auto ec = edge::edge_config_from_json(read_json(c.config));
  auto bindings = bindings_from(ec);
  const auto cap = read_capture_dir(o.capture);
  const auto f = c.function.empty() ? *ec.functions.begin() : function_from_name(c.function);

  if (c.transport == "inproc") {
    // edge and cloud in one process
    if (o.model.empty()) throw Error(Errc::BadConfig, "in-process serving needs --model");
    cloud::ClassifierModel model;
    try {
      model = cloud::load_model(o.model);
    } catch (const Error& e) {
      throw Error(Errc::SchemaViolation, std::string("no usable model: ") + e.what());
    }
    runner::LiveOptions lo;
    lo.cell = ec.cell;
    const auto params = safety_params(Common{});
    const auto geometry = runner::geometry_from_manifest(cap.manifest);
    const std::set<PipelineId> sel(model.channels.begin(), model.channels.end());
    const auto live = runner::run_live(cap.messages, std::move(bindings), f, sel, model, geometry, lo);
    Json report = {{"command", "serve-edge"},
                   {"transport", "inproc"},
                   {"classified", live.classifications.size()},
                   {"dead_letters", live.dead_letters},
                   {"latency", transport::to_json(live.latency)}};
    fs::create_directories(c.out);
    write_json(fs::path(c.out) / "serve_edge_report.json", report);
    (void)params;
    return report;
  }
  if (c.transport != "tcp") throw Error(Errc::BadConfig, "--transport must be inproc or tcp");

  const auto [host, port] = transport::parse_endpoint(c.broker);
  transport::TcpClient client(host, port);
  edge::EdgeNode node(ec.cell, std::move(bindings), ec.functions, transport::wall_clock());
  for (const auto& t : node.topics()) client.register_topic(t);
  std::size_t published = 0, grids = 0, dead = 0;
  for (const auto& m : cap.messages) {
    if (m.kind != transport::Kind::Frame) continue;
    const auto frame = transport::frame_from_json(m.payload);
    if (!ec.sensors.count(frame.sensor().pipeline())) continue;
    for (const auto& tel : node.ingest(frame)) {
      dead += tel.kind == transport::Kind::DeadLetter;
      client.publish(tel);
      ++published;
    }
    for (const auto& fw : node.take_fused()) {
      if (fw.function != f && !ec.functions.count(fw.function)) continue;
      client.publish(edge::grid_message(ec.cell, fw, m.t_ms));
      ++published;
      ++grids;
    }
  }
  Json report = {{"command", "serve-edge"}, {"transport", "tcp"},  {"broker", c.broker},
                 {"published", published},  {"grids", grids},     {"dead_letters", dead},
                 {"retries", client.retries()}};
  fs::create_directories(c.out);
  write_json(fs::path(c.out) / "serve_edge_report.json", report);
  return report;
}

constexpr double kStartupWaitS = 30.0;

Json cmd_serve_cloud(const Common& c, const ServeOptions& o) {
  if (c.transport != "tcp") {
    throw Error(Errc::BadConfig, "serve-cloud hosts the TCP broker; for one process use serve-edge --transport inproc");
  }
  if (o.model.empty()) throw Error(Errc::BadConfig, "serve-cloud needs --model");
  cloud::ClassifierModel model;
  try {
    model = cloud::load_model(o.model);
  } catch (const Error& e) {
    throw Error(Errc::SchemaViolation, std::string("no usable model: ") + e.what());
  }
  const auto f = function_from_name(c.function.empty() ? "motion" : c.function);
  std::string cell = "c1";
  std::optional<runner::Geometry> geometry;
  if (!o.capture.empty()) {
    const auto manifest = read_json((fs::path(o.capture) / "manifest.json").string());
    cell = manifest.value("cell", cell);
    geometry = runner::geometry_from_manifest(manifest);
  }
  std::optional<safety::SsmMonitor> monitor;
  double d_p = 0.0;
  if (const auto params = safety_params(c); params && geometry) {
    d_p = safety::protective_distance(*params);
    monitor.emplace(cell, d_p, 0.1);
  }

  const auto [host, port] = transport::parse_endpoint(c.broker);
  transport::Broker broker;
  cloud::CloudService service(cell, transport::wall_clock());
  service.set_model(f, model);
  for (const auto& t : service.topics()) broker.register_topic(t);
  broker.register_topic(transport::Topic::ssm(cell).str());
  broker.register_topic(transport::Topic::grid(cell, f).str());
  const auto grids = broker.subscribe(transport::Topic::grid(cell, f).str());
  transport::TcpServer server(broker, port, host);

  std::size_t classified = 0, ssm = 0;
  // the idle clock starts with the first grid; until then the edge gets a startup allowance
  auto last = std::chrono::steady_clock::now();
  const auto idle = std::chrono::duration<double>(o.idle_timeout_s);
  const auto startup = std::chrono::duration<double>(std::max(o.idle_timeout_s, kStartupWaitS));
  while (std::chrono::steady_clock::now() - last < (classified ? idle : startup) &&
         (o.max_windows == 0 || classified < o.max_windows)) {
    const auto g = grids->pop_for(std::chrono::milliseconds(50));
    if (!g) continue;
    last = std::chrono::steady_clock::now();
    const auto result = service.handle(*g);
    broker.publish(result);
    ++classified;
    if (monitor && geometry) {
      const auto lm = geometry->landmarks.find(result.payload.at("label").get<std::string>());
      if (lm != geometry->landmarks.end()) {
        broker.publish(monitor->update(Timestamp(result.payload.at("window_end_ms").get<std::int64_t>()),
                                       (lm->second - geometry->robot).norm()));
        ++ssm;
      }
    }
  }
  server.stop();
  Json report = {{"command", "serve-cloud"},  {"transport", "tcp"}, {"broker", c.broker},
                 {"classified", classified}, {"ssm", ssm},         {"d_p_m", d_p},
                 {"latency", transport::to_json(service.latency().stats(f))}};
  fs::create_directories(c.out);
  write_json(fs::path(c.out) / "serve_cloud_report.json", report);
  return report;
}

}  // namespace mdf::cli
