#include <csignal>
#include <iostream>
#include <optional>

#include <CLI11.hpp>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "envforge/dataset/dataset.hpp"
#include "envforge/pipeline/pipeline.hpp"
#include "envforge/reward/harness.hpp"

namespace fs = std::filesystem;
using namespace envforge;
using namespace envforge::pipeline;

namespace {

std::atomic<bool> g_stop{false};

extern "C" void on_signal(int) { g_stop = true; }

struct CommonOptions {
  std::string config;
  std::string workspace;
};

PipelineConfig load_config(const CommonOptions& opts, fs::path& workspace) {
  auto config = PipelineConfig::load(opts.config);
  if (!opts.workspace.empty()) {
    workspace = fs::absolute(opts.workspace);
  } else if (config.workspace) {
    workspace = *config.workspace;
  } else {
    throw ConfigError("no workspace given (--workspace or the config's \"workspace\" key)");
  }
  return config;
}

int cmd_run(const CommonOptions& opts, const std::string& stage_name,
            std::optional<std::uint64_t> seed, const std::string& provider_kind, bool dry_run) {
  fs::path workspace;
  PipelineConfig config;
  Stage stage;
  synth::ProviderPtr provider;
  try {
    config = load_config(opts, workspace);
    stage = stage_from_string(stage_name);
    if (seed) config.override_seed(*seed);
    if (!provider_kind.empty()) config.provider.kind = provider_kind;
    if (!dry_run) provider = make_provider(config.provider);
  } catch (const ConfigError& e) {
    spdlog::error("invalid configuration: {}", e.what());
    return kExitConfigInvalid;
  }
  Pipeline pipeline(config, workspace, provider);
  if (dry_run) {
    std::cout << pipeline.plan(stage).dump(2) << '\n';
    return kExitOk;
  }
  const auto report = pipeline.run(stage);
  std::cout << report.to_document().dump(2) << '\n';
  return report.exit_code;
}

int cmd_serve(const CommonOptions& opts, std::string dataset_name, std::optional<int> port,
              bool use_stdio) {
  fs::path workspace;
  PipelineConfig config;
  try {
    config = load_config(opts, workspace);
  } catch (const ConfigError& e) {
    spdlog::error("invalid configuration: {}", e.what());
    return kExitConfigInvalid;
  }
  if (dataset_name.empty()) dataset_name = config.serve_dataset;
  const Workspace ws(workspace);
  const auto manifest_file = ws.dataset_manifest(dataset_name);
  if (!fs::exists(manifest_file)) {
    spdlog::error("no manifest for dataset {} at {}", dataset_name, manifest_file.string());
    return kExitFailure;
  }
  std::shared_ptr<dataset::Catalog> catalog;
  std::map<std::string, InstanceParams> records;
  try {
    const auto manifest = parse_document(read_file(manifest_file));
    catalog = catalog_from_manifest(manifest, ws.root(), config.sandbox);
    for (auto& r : dataset::load_records(ws.datasets_dir() / manifest.at("records_file").get<std::string>())) {
      records.emplace(r.record_id, std::move(r.instance));
    }
  } catch (const std::exception& e) {
    spdlog::error("cannot load dataset {}: {}", dataset_name, e.what());
    return kExitFailure;
  }
  const reward::RewardService service(
      std::move(records), [catalog](const std::string& id) { return catalog->resolve(id); });
  spdlog::info("serving {} records of {}", service.size(), dataset_name);

  std::signal(SIGINT, on_signal);
  std::signal(SIGTERM, on_signal);
  std::signal(SIGPIPE, SIG_IGN);
  if (use_stdio) {
    std::ios::sync_with_stdio(false);
    service.serve_stream(std::cin, std::cout, &g_stop);
    return kExitOk;
  }
  try {
    service.serve_tcp(port.value_or(config.serve_port), g_stop, [](int bound) {
      std::cout << "listening on 127.0.0.1:" << bound << std::endl;
    });
  } catch (const std::system_error& e) {
    spdlog::error("cannot serve: {}", e.what());
    return kExitPortUnavailable;
  }
  spdlog::info("reward service stopped");
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  spdlog::set_default_logger(spdlog::stderr_color_mt("envforge"));
  CLI::App app{"envforge: synthesize, judge, calibrate and serve verifiable reasoning environments"};
  app.require_subcommand(1);
  std::string log_level = "info";
  app.add_option("--log-level", log_level, "trace, debug, info, warn, error or off");

  CommonOptions opts;
  auto add_common = [&](CLI::App* cmd) {
    cmd->add_option("--config", opts.config, "pipeline config (JSON)")->required()->check(CLI::ExistingFile);
    cmd->add_option("--workspace", opts.workspace, "workspace directory");
  };

  auto* run = app.add_subcommand("run", "run one pipeline stage, or all of them");
  add_common(run);
  std::string stage = "all";
  std::optional<std::uint64_t> seed;
  std::string provider;
  bool dry_run = false;
  run->add_option("--stage", stage, "keywords, synth, judge, calibrate, gen, entropy or all")
      ->check(CLI::IsMember({"keywords", "synth", "judge", "calibrate", "gen", "entropy", "all"}));
  run->add_option("--seed", seed, "overrides the config seed");
  run->add_option("--provider", provider, "mock or live")->check(CLI::IsMember({"mock", "live"}));
  run->add_flag("--dry-run", dry_run, "print the pending work without running it");

  auto* serve = app.add_subcommand("serve", "serve rewards for a generated dataset");
  add_common(serve);
  std::string dataset_name;
  std::optional<int> port;
  bool use_stdio = false;
  serve->add_option("--dataset", dataset_name, "dataset name (defaults to serve.dataset)");
  serve->add_option("--port", port, "TCP port on 127.0.0.1; 0 picks a free one");
  serve->add_flag("--stdio", use_stdio, "serve frames on stdin/stdout instead of TCP");

  auto* hash = app.add_subcommand("hash", "print the workspace hash");
  std::string hash_dir;
  hash->add_option("--workspace", hash_dir, "workspace directory")->required()->check(CLI::ExistingDirectory);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitConfigInvalid;
  }
  spdlog::set_level(spdlog::level::from_str(log_level));

  try {
    if (run->parsed()) return cmd_run(opts, stage, seed, provider, dry_run);
    if (serve->parsed()) return cmd_serve(opts, dataset_name, port, use_stdio);
    std::cout << workspace_hash(hash_dir) << '\n';
    return kExitOk;
  } catch (const std::exception& e) {
    spdlog::error("{}", e.what());
    return kExitFailure;
  }
}
