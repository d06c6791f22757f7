#pragma once

#include <cstdint>
#include <optional>
#include <string>

#include <json.hpp>

/// Batch and serving entry points behind the `mdf` executable. Each command
/// writes its outputs under `out` and returns the main report document.
namespace mdf::cli {

struct Common {
  std::string config;                 // --config
  std::optional<std::uint64_t> seed;  // --seed
  std::string out = "out";            // --out
  std::string function;               // --function
  std::string transport = "inproc";   // --transport
  std::string broker = "127.0.0.1:1883";
};

/// Scenario file: full scenario JSON, or {"generator": "motion" | "copresence"
/// | "counting", ...options}. Writes a capture directory.
nlohmann::json cmd_simulate(const Common& c);

/// Background models per pipeline from the capture's empty prefix, plus an
/// edge config pointing at them. Counting captures also get count_config.json.
nlohmann::json cmd_calibrate(const Common& c, const std::string& capture_dir);

struct TrainOptions {
  std::string pipelines;  // "1,2"; empty uses the default selection
};

/// Trains on the capture's labeled windows; --config is an optional
/// TrainConfig JSON. Writes model.mdfm and train_report.json.
nlohmann::json cmd_train(const Common& c, const std::string& capture_dir, const TrainOptions& o);

struct EvalOptions {
  std::optional<double> delay_ms;  // replay clock with a stamped processing delay
};

/// Streams the capture through the in-process edge and cloud and writes
/// report.json, metrics.csv and latency.csv. --config names safety params
/// (default config/safety_params.json next to the working directory, optional).
/// A missing or unreadable model is a SchemaViolation.
nlohmann::json cmd_eval(const Common& c, const std::string& model_path, const std::string& capture_dir,
                        const EvalOptions& o);

/// Training-free counting over the capture's sessions; --config is an
/// optional count config. Writes count_report.json and count.csv.
nlohmann::json cmd_count(const Common& c, const std::string& capture_dir);

/// d_p from the safety params with Z_w and T_w replaced by the report's
/// measurements. Writes safety_report.json.
nlohmann::json cmd_safety(const Common& c, const std::string& report_path);

struct ServeOptions {
  std::string capture;         // serve-edge: frames to stream
  std::string model;           // serve-cloud: model for --function
  double idle_timeout_s = 3.0; // serve-cloud stops after this long without grids (first grid starts the clock)
  std::size_t max_windows = 0; // serve-cloud stops after this many results (0 = no limit)
};

/// Edge tier: --config is an edge config; streams the capture's frames
/// through an EdgeNode and publishes telemetry and grids to the broker.
nlohmann::json cmd_serve_edge(const Common& c, const ServeOptions& o);

/// Cloud tier: hosts the broker (TCP on --broker, or in-process), classifies
/// grids for --function, publishes results and SSM commands.
nlohmann::json cmd_serve_cloud(const Common& c, const ServeOptions& o);

/// Stable 64-bit FNV-1a digest of a JSON document's compact dump, as hex.
std::string digest(const nlohmann::json& doc);

}  // namespace mdf::cli
