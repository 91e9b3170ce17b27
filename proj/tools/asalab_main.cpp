// asalab command-line front end: gen-data, build-prompts, train, ablate,
// gradcheck, report. Exit codes: 0 ok, 2 invalid config, 3 data precondition,
// 4 missing artifact, 5 numeric failure.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iostream>
#include <optional>

#include "CLI11.hpp"
#include "asalab/commands.hpp"
#include "asalab/errors.hpp"

namespace {

namespace fs = std::filesystem;
using asalab::ExperimentConfig;

struct GlobalOptions {
  std::string config_path;
  std::string out_override;
  std::optional<std::uint64_t> seed_override;
  int jobs = 1;
  int verbose = 0;
};

ExperimentConfig resolve_config(const GlobalOptions& opts) {
  ExperimentConfig config =
      opts.config_path.empty() ? asalab::default_config() : asalab::load_config(opts.config_path);
  if (!opts.out_override.empty()) config.out_dir = opts.out_override;
  if (opts.verbose > 0) config.verbosity = opts.verbose;
  return config;
}

int dispatch(const std::function<void()>& body) {
  try {
    body();
    return 0;
  } catch (const asalab::ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const asalab::SpecError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const asalab::InsufficientExamplesError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  } catch (const asalab::DegenerateCorpusError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  } catch (const asalab::ParseError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  } catch (const asalab::ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  } catch (const asalab::StageError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  } catch (const asalab::EmptyInputError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  } catch (const asalab::MissingArtifactError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 4;
  } catch (const asalab::NumericError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 5;
  } catch (const asalab::OracleError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 5;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"asalab: training laboratory for mixed real/synthesized scoring data"};
  app.require_subcommand(1);
  app.fallthrough();

  GlobalOptions opts;
  app.add_option("--config", opts.config_path, "Experiment config file (JSON)");
  app.add_option("--out", opts.out_override, "Output directory (overrides the config)");
  std::uint64_t seed_value = 0;
  auto* seed_opt = app.add_option("--seed", seed_value, "Seed override (context dependent)");
  app.add_option("--jobs", opts.jobs, "Worker threads for ablate")->check(CLI::PositiveNumber);
  app.add_flag("-v,--verbose", opts.verbose, "Verbose output / extra diagnostics");

  auto* cmd_gen = app.add_subcommand("gen-data", "Generate the benchmark dataset files");

  auto* cmd_prompts =
      app.add_subcommand("build-prompts", "Emit an in-context prompt file + sidecar");
  int level = 3;
  int k = 0;
  cmd_prompts->add_option("--level", level, "Proficiency level (1..5)")->required();
  cmd_prompts->add_option("-k,--examples", k, "In-context example count (default from config)");

  auto* cmd_train = app.add_subcommand("train", "Run Stage 1 + Stage 2 for one variant");
  std::string variant;
  cmd_train->add_option("--variant", variant, "only_syn | mix_a1 | mix_a2 | real_only")
      ->required();

  auto* cmd_ablate = app.add_subcommand("ablate", "Run the full variant x seed grid");

  auto* cmd_gradcheck =
      app.add_subcommand("gradcheck", "Finite-difference verification of the gradients");
  int cases = 100;
  double tolerance = 1e-4;
  cmd_gradcheck->add_option("--cases", cases, "Number of seeded cases");
  cmd_gradcheck->add_option("--tolerance", tolerance, "Max relative error allowed");

  auto* cmd_report = app.add_subcommand("report", "Render tables from stored eval rows");
  std::string run_dir;
  cmd_report->add_option("--run", run_dir, "Run directory containing rows.jsonl")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }
  if (seed_opt->count() > 0) opts.seed_override = seed_value;

  if (cmd_gen->parsed()) {
    return dispatch([&] {
      ExperimentConfig config = resolve_config(opts);
      if (opts.seed_override) config.benchmark.seed = *opts.seed_override;
      config.validate();
      asalab::commands::gen_data(config, config.out_dir);
      std::cout << "dataset written to " << (fs::path(config.out_dir) / "data").string() << "\n";
    });
  }
  if (cmd_prompts->parsed()) {
    return dispatch([&] {
      ExperimentConfig config = resolve_config(opts);
      config.validate();
      const int examples = k > 0 ? k : config.prompt_examples;
      const std::uint64_t seed = opts.seed_override.value_or(config.benchmark.seed);
      const auto emission =
          asalab::commands::build_prompts(config, config.out_dir, level, examples, seed);
      std::cout << "wrote " << emission.text_path.string() << "\n";
    });
  }
  if (cmd_train->parsed()) {
    return dispatch([&] {
      ExperimentConfig config = resolve_config(opts);
      if (opts.seed_override) config.seeds = {*opts.seed_override};
      config.validate();
      asalab::commands::train(config, config.out_dir, variant);
      std::cout << "training cells written under " << config.out_dir << "\n";
    });
  }
  if (cmd_ablate->parsed()) {
    return dispatch([&] {
      ExperimentConfig config = resolve_config(opts);
      if (opts.seed_override) config.seeds = {*opts.seed_override};
      config.validate();
      asalab::commands::ablate(config, config.out_dir, opts.jobs);
      std::cout << "ablation artifacts written to "
                << (fs::path(config.out_dir) / asalab::commands::kAblationSubdir).string()
                << "\n";
    });
  }
  if (cmd_gradcheck->parsed()) {
    return dispatch([&] {
      const std::uint64_t seed = opts.seed_override.value_or(1);
      const auto summary = asalab::commands::gradcheck(seed, cases, tolerance, std::cout);
      if (!summary.pass) {
        throw asalab::NumericError("gradcheck: max relative error " +
                                   std::to_string(summary.max_rel_error) +
                                   " exceeds tolerance");
      }
    });
  }
  if (cmd_report->parsed()) {
    return dispatch([&] { asalab::commands::report(run_dir, std::cout); });
  }
  return 2;
}
