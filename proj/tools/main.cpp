#include <filesystem>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>

#include "commands.hpp"
#include "mdf/core.hpp"

namespace {

int fail(const mdf::cli::Common& c, const std::string& code, const std::string& message) {
  const nlohmann::json err = {{"error", code}, {"message", message}};
  std::cerr << err.dump() << '\n';
  std::error_code ec;
  std::filesystem::create_directories(c.out, ec);
  if (!ec) std::ofstream(std::filesystem::path(c.out) / "error.json") << err.dump(2) << '\n';
  return 2;
}

}  // namespace

int main(int argc, char** argv) {
  using namespace mdf::cli;
  CLI::App app{"Multi-sensor data fusion for human-robot collaboration cells"};
  app.require_subcommand(1);

  Common c;
  std::uint64_t seed = 0;
  app.add_option("--config", c.config, "Configuration file for the command");
  auto* seed_opt = app.add_option("--seed", seed, "Random seed override");
  app.add_option("--out", c.out, "Output directory")->capture_default_str();
  app.add_option("--function", c.function, "HRC function")
      ->check(CLI::IsMember({"counting", "motion", "copresence"}));
  app.add_option("--transport", c.transport, "Transport binding")
      ->check(CLI::IsMember({"inproc", "tcp"}))
      ->capture_default_str();
  app.add_option("--broker", c.broker, "Broker endpoint HOST:PORT")->capture_default_str();
  app.fallthrough();

  std::string capture, model, report;
  TrainOptions train;
  EvalOptions eval;
  double delay = 0.0;
  ServeOptions serve;

  auto* simulate = app.add_subcommand("simulate", "Generate a synthetic capture from a scenario (--config)");

  auto* calibrate = app.add_subcommand("calibrate", "Background models and edge config from a capture");
  calibrate->add_option("capture", capture, "Capture directory")->required();

  auto* train_cmd = app.add_subcommand("train", "Train the cloud classifier on a labeled capture");
  train_cmd->add_option("capture", capture, "Capture directory")->required();
  train_cmd->add_option("--pipelines", train.pipelines, "Pipeline subset, e.g. 1,2");

  auto* eval_cmd = app.add_subcommand("eval", "Stream a capture through edge and cloud and report");
  eval_cmd->add_option("model", model, "Model file")->required();
  eval_cmd->add_option("capture", capture, "Capture directory")->required();
  auto* delay_opt = eval_cmd->add_option("--delay-ms", delay, "Replay clock with this processing delay");

  auto* count = app.add_subcommand("count", "Training-free worker counting over a CSI capture");
  count->add_option("capture", capture, "Capture directory")->required();

  auto* safety = app.add_subcommand("safety", "Protective distance from an evaluation report");
  safety->add_option("report", report, "report.json from eval")->required();

  auto* serve_edge = app.add_subcommand("serve-edge", "Run the edge tier (--config edge_config.json)");
  serve_edge->add_option("--capture", serve.capture, "Capture directory whose frames are streamed")->required();
  serve_edge->add_option("--model", serve.model, "Model, for --transport inproc");

  auto* serve_cloud = app.add_subcommand("serve-cloud", "Host the broker and classify grids");
  serve_cloud->add_option("--model", serve.model, "Model file")->required();
  serve_cloud->add_option("--capture", serve.capture, "Capture directory for cell geometry");
  serve_cloud->add_option("--idle-timeout", serve.idle_timeout_s, "Stop after this many idle seconds")
      ->capture_default_str();
  serve_cloud->add_option("--max-windows", serve.max_windows, "Stop after this many results");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    return fail(c, "BadConfig", e.what());
  }
  if (*seed_opt) c.seed = seed;
  if (*delay_opt) eval.delay_ms = delay;

  try {
    nlohmann::json out;
    if (*simulate) out = cmd_simulate(c);
    else if (*calibrate) out = cmd_calibrate(c, capture);
    else if (*train_cmd) out = cmd_train(c, capture, train);
    else if (*eval_cmd) out = cmd_eval(c, model, capture, eval);
    else if (*count) out = cmd_count(c, capture);
    else if (*safety) out = cmd_safety(c, report);
    else if (*serve_edge) out = cmd_serve_edge(c, serve);
    else if (*serve_cloud) out = cmd_serve_cloud(c, serve);
    std::cout << out.dump(2) << '\n';
  } catch (const mdf::Error& e) {
    return fail(c, std::string(mdf::errc_name(e.code())), e.what());
  } catch (const nlohmann::json::exception& e) {
    return fail(c, "SchemaViolation", e.what());
  } catch (const std::exception& e) {
    return fail(c, "InvalidArgument", e.what());
  }
  return 0;
}
