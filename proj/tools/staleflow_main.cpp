// SPDX-License-Identifier: Apache-2.0
#include <csignal>
#include <cstdio>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "staleflow/config.hpp"
#include "staleflow/log.hpp"
#include "staleflow/metrics.hpp"
#include "staleflow/queue_service.hpp"
#include "staleflow/sim.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitRuntime = 3;

volatile std::sig_atomic_t g_interrupted = 0;
void on_signal(int) { g_interrupted = 1; }

int classify_exit(staleflow::Errc code) {
  switch (code) {
    case staleflow::Errc::ConfigError:
    case staleflow::Errc::InvalidSpec:
    case staleflow::Errc::NonDeterministicConfig:
      return kExitConfig;
    default:
      return kExitRuntime;
  }
}

int cmd_run(const std::string& config_path, std::int64_t seed_override,
            const std::string& out_path, const std::string& timeline_path,
            const std::string& timeline_json_path) {
  auto config = staleflow::parse_scenario_file(config_path);
  if (!config.ok()) {
    std::fprintf(stderr, "config error: %s\n", config.error().message.c_str());
    return kExitConfig;
  }
  if (seed_override >= 0) config.value().seed = std::uint64_t(seed_override);

  auto result = staleflow::run_scenario(config.value());
  if (!result.ok()) {
    std::fprintf(stderr, "run failed: %s\n", result.error().message.c_str());
    return classify_exit(result.error().code);
  }
  std::string metrics = staleflow::metrics_to_json(result.value().metrics).dump(2) + "\n";
  if (out_path.empty() || out_path == "-") {
    std::fputs(metrics.c_str(), stdout);
  } else if (auto st = staleflow::write_file(out_path, metrics); !st.ok()) {
    std::fprintf(stderr, "cannot write metrics: %s\n", st.error().message.c_str());
    return kExitRuntime;
  }
  if (!timeline_path.empty()) {
    auto st = staleflow::write_file(timeline_path,
                                    staleflow::timeline_to_csv(result.value().trace));
    if (!st.ok()) {
      std::fprintf(stderr, "cannot write timeline: %s\n", st.error().message.c_str());
      return kExitRuntime;
    }
  }
  if (!timeline_json_path.empty()) {
    auto st = staleflow::write_file(
        timeline_json_path, staleflow::timeline_to_json(result.value().trace).dump(2) + "\n");
    if (!st.ok()) {
      std::fprintf(stderr, "cannot write timeline json: %s\n", st.error().message.c_str());
      return kExitRuntime;
    }
  }
  std::fprintf(stderr, "mode=%s mean_step=%.6g steps/hour=%.6g idle=%.4f%%\n",
               result.value().metrics.mode.c_str(), result.value().metrics.mean_step,
               result.value().metrics.steps_per_hour,
               100.0 * result.value().metrics.idle_ratio);
  return kExitOk;
}

int cmd_sweep(const std::string& config_path, const std::string& param,
              const std::string& out_dir) {
  auto base = staleflow::parse_scenario_file(config_path);
  if (!base.ok()) {
    std::fprintf(stderr, "config error: %s\n", base.error().message.c_str());
    return kExitConfig;
  }
  auto eq = param.find('=');
  if (eq == std::string::npos) {
    std::fprintf(stderr, "config error: --param expects KEY=V1,V2,...\n");
    return kExitConfig;
  }
  std::string key = param.substr(0, eq);
  std::vector<std::string> values;
  std::string rest = param.substr(eq + 1);
  std::size_t start = 0;
  while (start <= rest.size()) {
    auto pos = rest.find(',', start);
    if (pos == std::string::npos) {
      values.push_back(rest.substr(start));
      break;
    }
    values.push_back(rest.substr(start, pos - start));
    start = pos + 1;
  }
  if (values.empty()) {
    std::fprintf(stderr, "config error: --param needs at least one value\n");
    return kExitConfig;
  }

  std::printf("%-16s %-16s %12s %12s %10s\n", key.c_str(), "mode", "mean_step", "steps/hour",
              "speedup");
  double baseline = 0.0;
  for (std::size_t i = 0; i < values.size(); ++i) {
    staleflow::ScenarioConfig config = base.value();
    if (auto st = staleflow::apply_override(config, key, values[i]); !st.ok()) {
      std::fprintf(stderr, "config error: %s\n", st.error().message.c_str());
      return kExitConfig;
    }
    auto result = staleflow::run_scenario(config);
    if (!result.ok()) {
      std::fprintf(stderr, "run failed for %s=%s: %s\n", key.c_str(), values[i].c_str(),
                   result.error().message.c_str());
      return classify_exit(result.error().code);
    }
    const auto& m = result.value().metrics;
    if (i == 0) baseline = m.mean_step;
    std::printf("%-16s %-16s %12.4f %12.2f %9.2fx\n", values[i].c_str(), m.mode.c_str(),
                m.mean_step, m.steps_per_hour, baseline > 0.0 ? baseline / m.mean_step : 0.0);
    if (!out_dir.empty()) {
      std::string path = out_dir + "/metrics_" + key + "_" + values[i] + ".json";
      staleflow::write_file(path, staleflow::metrics_to_json(m).dump(2) + "\n");
    }
  }
  return kExitOk;
}

int cmd_serve_queue(std::uint16_t port) {
  auto queue = std::make_shared<staleflow::TransferQueue>();
  auto server = staleflow::QueueServer::start(queue, port);
  if (!server.ok()) {
    std::fprintf(stderr, "cannot start queue server: %s\n", server.error().message.c_str());
    return kExitRuntime;
  }
  std::fprintf(stderr, "queue listening on 127.0.0.1:%u (ctrl-c to stop)\n",
               unsigned(server.value()->port()));
  std::signal(SIGINT, on_signal);
  std::signal(SIGTERM, on_signal);
  while (!g_interrupted) {
    struct timespec ts {0, 100 * 1000 * 1000};
    nanosleep(&ts, nullptr);
  }
  server.value()->stop();
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"staleflow: staleness-gated async RL pipeline simulator and data bus"};
  app.require_subcommand(1);

  std::string config_path, out_path = "-", timeline_path, timeline_json_path, param, out_dir;
  std::int64_t seed_override = -1;
  std::uint16_t port = 7777;

  auto* run = app.add_subcommand("run", "execute one scenario");
  run->add_option("--config", config_path, "scenario config (JSON)")->required();
  run->add_option("--seed", seed_override, "override config seed");
  run->add_option("--out", out_path, "metrics JSON path ('-' for stdout)");
  run->add_option("--timeline", timeline_path, "timeline CSV path");
  run->add_option("--timeline-json", timeline_json_path, "timeline JSON path");

  auto* sweep = app.add_subcommand("sweep", "run a parameter cross-product");
  sweep->add_option("--config", config_path, "scenario config (JSON)")->required();
  sweep->add_option("--param", param, "KEY=V1,V2,... (e.g. max_staleness=0,1,2,4)")->required();
  sweep->add_option("--out-dir", out_dir, "directory for per-run metrics JSON");

  auto* serve = app.add_subcommand("serve-queue", "run the data bus standalone");
  serve->add_option("--port", port, "TCP port (0 picks one)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : kExitConfig;
  }

  if (run->parsed())
    return cmd_run(config_path, seed_override, out_path, timeline_path, timeline_json_path);
  if (sweep->parsed()) return cmd_sweep(config_path, param, out_dir);
  if (serve->parsed()) return cmd_serve_queue(port);
  return kExitConfig;
}
