#pragma once

#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "mdf/core.hpp"
#include "mdf/features.hpp"
#include "mdf/prep.hpp"
#include "mdf/transport.hpp"

/// Micro-edge runtime: per-pipeline denoising and feature extraction, and the
/// data controller deciding which pipelines feed each HRC function.
namespace mdf::edge {

using features::Matrix;

/// Default pipeline subsets: counting uses CSI, motion detection radar + THz,
/// co-presence radar + THz + IR.
std::set<PipelineId> select_pipelines(HrcFunction f);

/// One pipeline served by a micro-edge. Holds one background model per sensor.
struct PipelineBinding {
  PipelineId pipeline;
  std::vector<prep::BackgroundModel> backgrounds;
  std::size_t window_len = features::kDefaultWindow;

  /// Throws InvalidArgument when empty, DimensionMismatch when a model belongs
  /// to another pipeline, MixedSensors on duplicates.
  void validate() const;
  std::vector<SensorId> sensors() const;
};

/// All sensors of a pipeline have completed the same window.
struct PipelineWindow {
  PipelineId pipeline;
  std::size_t index = 0;       // window number within the stream
  Timestamp window_end;        // latest frame time across sensors
  double ingest_ms = 0.0;      // clock reading when the window completed
  Matrix matrix;               // pipeline_feature_matrix layout
};

/// Stateful micro-edge for one pipeline. Frames of every bound sensor arrive
/// interleaved; each sensor keeps its own window buffer.
class MicroEdge {
 public:
  MicroEdge(PipelineBinding binding, std::string cell, transport::Clock clock);

  /// Denoises the frame and, when it closes a window, appends a feature
  /// vector message (or a dead letter) to the returned telemetry. Pre-processing
  /// failures become dead letters on edge/<cell>/errors.
  std::vector<transport::Message> ingest(const RawFrame& frame);

  /// Completed pipeline windows since the last call, in window order.
  std::vector<PipelineWindow> take_windows();

  const PipelineBinding& binding() const noexcept { return binding_; }
  std::vector<std::string> topics() const;
  /// Index of the window the sensor's next frame falls into.
  std::size_t open_window(int k) const;

 private:
  struct SensorState {
    std::size_t model = 0;  // index into binding_.backgrounds
    std::vector<DenoisedFrame> buffer;
    std::size_t completed = 0;
  };
  struct Pending {
    std::map<int, features::MomentMaps> maps;
    Timestamp end;
  };

  transport::Message dead_letter(const SensorId& sensor, Timestamp at, Errc code, const std::string& what) const;

  PipelineBinding binding_;
  std::string cell_;
  transport::Clock clock_;
  std::map<int, SensorState> sensors_;
  std::map<std::size_t, Pending> pending_;
  std::vector<PipelineWindow> ready_;
};

/// Batch form: runs one stream through a fresh micro-edge and returns the
/// telemetry in emission order.
std::vector<transport::Message> run_micro_edge(const PipelineBinding& binding, std::span<const RawFrame> frames,
                                               const std::string& cell, transport::Clock clock);

/// Controller update {"function": NAME, "pipelines": [i, ...]}.
struct ControllerUpdate {
  HrcFunction function;
  std::set<PipelineId> pipelines;
};

/// Throws SchemaViolation on shape errors, UnknownPipeline for an index
/// outside 1..4, InvalidArgument for an empty subset.
ControllerUpdate parse_update(const nlohmann::json& doc);
nlohmann::json to_json(const ControllerUpdate& u);

using Selection = std::map<HrcFunction, std::set<PipelineId>>;

Selection default_selection();
/// Pure form: the selection after the update.
Selection apply_controller_update(const Selection& current, const nlohmann::json& update);

/// Fused grid for one function and window, ready to publish.
struct FusedWindow {
  HrcFunction function;
  std::size_t index = 0;
  features::FeatureGrid grid;
  double ingest_ms = 0.0;
};

/// Several micro-edges plus the data controller. Updates are staged and take
/// effect when the next window opens, so no fused grid mixes selections.
class EdgeNode {
 public:
  EdgeNode(std::string cell, std::vector<PipelineBinding> bindings, std::set<HrcFunction> functions,
           transport::Clock clock);

  /// Feature telemetry and dead letters produced by the frame.
  std::vector<transport::Message> ingest(const RawFrame& frame);
  /// Grids completed so far, in window order.
  std::vector<FusedWindow> take_fused();

  /// Validates now (throwing on bad updates) and stages for the next window.
  void stage_update(const nlohmann::json& update);
  const Selection& active() const noexcept { return active_; }
  /// Selection in force for an opened window.
  std::optional<Selection> selection_for(std::size_t window) const;

  /// Every topic this node publishes on.
  std::vector<std::string> topics() const;
  const std::string& cell() const noexcept { return cell_; }

 private:
  void open_windows(std::size_t upto);
  void try_fuse(std::size_t index);

  std::string cell_;
  std::set<HrcFunction> functions_;
  transport::Clock clock_;
  std::map<PipelineId, MicroEdge> edges_;
  Selection active_;
  std::vector<ControllerUpdate> staged_;
  std::map<std::size_t, Selection> window_selection_;
  std::map<std::size_t, std::map<PipelineId, PipelineWindow>> windows_;
  std::optional<std::size_t> opened_;
  std::size_t next_fuse_ = 0;
  std::vector<FusedWindow> fused_;
};

/// Grid payload plus "function" and "ingest_ms".
transport::Message grid_message(const std::string& cell, const FusedWindow& w, std::int64_t t_ms);
FusedWindow fused_from_message(const transport::Message& m);

/// Edge process configuration.
struct EdgeConfig {
  std::string cell = "c1";
  std::map<PipelineId, std::vector<int>> sensors;
  std::map<PipelineId, std::size_t> window_len;
  std::map<PipelineId, std::string> background_files;
  std::string broker = "127.0.0.1:1883";
  std::set<HrcFunction> functions;
};

/// {"cell","pipelines":{"1":{"sensors":[..],"window_len":N,"background":PATH}},
///  "broker","functions":[...]}. Throws BadConfig.
EdgeConfig edge_config_from_json(const nlohmann::json& doc);
nlohmann::json to_json(const EdgeConfig& c);

/// Background file: {"models": [BackgroundModel, ...]}.
nlohmann::json backgrounds_to_json(const std::vector<prep::BackgroundModel>& models);
std::vector<prep::BackgroundModel> backgrounds_from_json(const nlohmann::json& doc);

/// Estimates one background model per sensor from empty-cell frames, grouped
/// by sensor. CSI sensors get boresight weights. The radar ridge is
/// radar_regularization times the mean per-bin variance of the recording.
std::vector<prep::BackgroundModel> calibrate(PipelineId pipeline, std::span<const RawFrame> empty_frames,
                                             double radar_regularization = 0.5);

}  // namespace mdf::edge
