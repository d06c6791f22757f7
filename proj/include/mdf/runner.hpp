#pragma once

#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "mdf/cloud.hpp"
#include "mdf/core.hpp"
#include "mdf/counting.hpp"
#include "mdf/edge.hpp"
#include "mdf/safety.hpp"
#include "mdf/simgen.hpp"
#include "mdf/transport.hpp"

/// Glue between the simulator, edge, cloud and safety layers: offline window
/// extraction for training and scoring, and the in-process live loop.
namespace mdf::runner {

/// "{1,2}" style name of a pipeline subset.
std::string selection_name(const std::set<PipelineId>& selection);
/// Parses "1,2" or "{1,2}". Throws UnknownPipeline or InvalidArgument.
std::set<PipelineId> parse_selection(std::string_view text);

/// One background model set per pipeline from the frames before
/// `calibration_end_ms`. Throws EmptyInput when a pipeline has none.
std::vector<edge::PipelineBinding> calibrate_bindings(std::span<const RawFrame> frames,
                                                      std::int64_t calibration_end_ms,
                                                      const std::set<PipelineId>& pipelines, std::size_t window_len);

/// Per-pipeline feature matrices of one labeled window.
struct LabeledWindow {
  std::size_t index = 0;
  Timestamp end;
  std::map<PipelineId, features::Matrix> matrices;
  simgen::WindowLabel label;
};

struct PreparedCapture {
  std::vector<edge::PipelineBinding> bindings;
  std::vector<LabeledWindow> windows;  // complete windows with a label, in order
  std::size_t dead_letters = 0;
};

/// Runs every post-calibration frame through one micro-edge per binding and
/// pairs the completed windows with labels by window end time. Windows with a
/// missing pipeline or no label are dropped.
PreparedCapture extract_windows(std::vector<edge::PipelineBinding> bindings, std::span<const RawFrame> frames,
                                const std::vector<simgen::WindowLabel>& labels, std::int64_t calibration_end_ms);

/// Calibrates on the empty prefix, then extracts.
PreparedCapture prepare(const simgen::Scenario& s);

/// Fused grids with their labels for one selection.
std::vector<std::pair<features::FeatureGrid, std::string>> fused_samples(const PreparedCapture& p,
                                                                         const std::set<PipelineId>& selection);

struct SelectionScore {
  std::set<PipelineId> selection;
  cloud::Evaluation evaluation;
  cloud::ClassifierModel model;
};

/// Stratified split, training on `train_fraction`, evaluation on the rest.
SelectionScore score_selection(const PreparedCapture& p, const std::set<PipelineId>& selection,
                               const std::vector<std::string>& classes, const cloud::TrainConfig& config,
                               double train_fraction = 0.7, std::uint64_t split_seed = 11);

/// Landmark table plus robot position, for distances and Z_w.
struct Geometry {
  std::map<std::string, Eigen::Vector2d> landmarks;
  Eigen::Vector2d robot{0.0, 0.0};
};

Geometry geometry_of(const simgen::Scenario& s);
/// From a capture manifest ("landmarks", "robot").
Geometry geometry_from_manifest(const nlohmann::json& manifest);

struct LiveOptions {
  std::string cell = "c1";
  /// Empty: wall clock on both tiers. Otherwise a replay clock: the edge reads
  /// each frame's own time and the cloud reads it plus this delay.
  std::optional<double> processing_delay_ms;
  /// SSM output when set; distance is robot to predicted landmark.
  std::optional<double> d_p;
  double hysteresis = 0.1;
};

struct LiveResult {
  std::vector<transport::Message> classifications;
  std::vector<transport::Message> ssm;
  std::size_t dead_letters = 0;
  std::size_t feature_messages = 0;
  transport::LatencyStats latency;
  std::vector<double> latency_samples;
};

/// Frames go through an in-process broker to an edge node; grid messages go
/// through the broker to the cloud service. Single-threaded and deterministic
/// under the replay clock.
LiveResult run_live(const std::vector<transport::Message>& frames, std::vector<edge::PipelineBinding> bindings,
                    HrcFunction function, const std::set<PipelineId>& selection, const cloud::ClassifierModel& model,
                    const Geometry& geometry, const LiveOptions& options);

/// Predicted vs true label per classified window, matched by window end.
std::vector<std::pair<std::string, std::string>> predicted_vs_truth(const std::vector<transport::Message>& results,
                                                                   const std::vector<simgen::WindowLabel>& labels);

/// Splits a CSI capture into sessions from manifest "sessions".
struct CountingSession {
  std::int64_t start_ms = 0;
  std::int64_t end_ms = 0;
  int true_count = -1;
  bool calibration = false;
  std::vector<RawFrame> frames;
};

std::vector<CountingSession> counting_sessions(std::span<const RawFrame> frames, const nlohmann::json& manifest);

}  // namespace mdf::runner
