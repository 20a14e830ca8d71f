// Command-line front end: training runs, adaptive evaluation, analysis,
// and the verification suites, all driven by a single JSON config whose
// fields can be overridden with flags.

#include <iostream>

#include "CLI11.hpp"

#include "frost/experiment.hpp"

namespace {

struct CliOverrides {
  std::string config_path;
  std::uint64_t seed = 42;
  bool seed_set = false;
  std::string output_dir;
  int epochs = -1;
  std::string model_kind;
  double q = -1.0;
  int kll_k = -1;
  bool reset_sketch = false;
  bool ablation = false;
};

frost::RunConfig load_config(const CliOverrides& o) {
  frost::RunConfig cfg;
  if (!o.config_path.empty()) {
    cfg = frost::run_config_from_json(frost::read_json_file(o.config_path));
  }
  if (o.seed_set) cfg.seed = o.seed;
  if (!o.output_dir.empty()) cfg.output_dir = o.output_dir;
  if (o.epochs >= 0) cfg.training.epochs = o.epochs;
  if (!o.model_kind.empty()) cfg.model_kind = o.model_kind;
  if (o.q > 0.0) cfg.q = o.q;
  if (o.kll_k > 0) cfg.kll_k = o.kll_k;
  if (o.reset_sketch) cfg.reset_sketch_per_epoch = true;
  if (o.ablation) cfg.ablation = true;
  return cfg;
}

void add_common_flags(CLI::App* cmd, CliOverrides& o) {
  cmd->add_option("--config", o.config_path, "JSON config file");
  cmd->add_option("--seed", o.seed, "Master seed")->default_val(42)->capture_default_str();
  cmd->callback([cmd, &o] { o.seed_set = cmd->count("--seed") > 0; });
  cmd->add_option("--output-dir", o.output_dir, "Artifact directory");
  cmd->add_option("--epochs", o.epochs, "Training epochs override");
  cmd->add_option("--model", o.model_kind,
                  "Model kind: frost|vanilla|recurrent|basic_ssm");
  cmd->add_option("--q", o.q, "Halting quantile");
  cmd->add_option("--k", o.kll_k, "KLL sketch capacity parameter");
  cmd->add_flag("--reset-sketch-per-epoch", o.reset_sketch,
                "Clear the score sketch at each epoch boundary");
  cmd->add_flag("--ablation", o.ablation, "Also run rel-only/abs-only loss arms");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"FROST: scale-consistent state-space dynamics with ranking-based halting"};
  app.require_subcommand(1);

  CliOverrides o;
  std::string checkpoint_path = "out/checkpoint.json";

  CLI::App* cmd_train = app.add_subcommand(
      "train", "Run the full experiment: train, calibrate, evaluate, emit artifacts");
  add_common_flags(cmd_train, o);

  CLI::App* cmd_eval =
      app.add_subcommand("eval", "Adaptive q-grid evaluation of a checkpoint");
  add_common_flags(cmd_eval, o);
  cmd_eval->add_option("--checkpoint", checkpoint_path, "Checkpoint file")
      ->capture_default_str();

  CLI::App* cmd_analyze =
      app.add_subcommand("analyze", "Geometry checks and profiles for a checkpoint");
  add_common_flags(cmd_analyze, o);
  cmd_analyze->add_option("--checkpoint", checkpoint_path, "Checkpoint file")
      ->capture_default_str();

  CLI::App* cmd_verify =
      app.add_subcommand("verify", "Run the property suites; exit 0 iff all pass");
  add_common_flags(cmd_verify, o);

  CLI::App* cmd_bench =
      app.add_subcommand("sketch-bench", "Measure sketch rank error across k");
  add_common_flags(cmd_bench, o);

  app.add_subcommand("print-config", "Print the default config as JSON");

  CLI11_PARSE(app, argc, argv);

  try {
    if (app.got_subcommand("print-config")) {
      std::cout << frost::run_config_to_json(frost::RunConfig{}).dump(2) << "\n";
      return 0;
    }
    frost::RunConfig cfg = load_config(o);
    if (app.got_subcommand(cmd_train)) {
      nlohmann::json summary = frost::run_experiment(cfg);
      std::cout << "artifacts written to " << cfg.output_dir << "\n";
      return 0;
    }
    if (app.got_subcommand(cmd_eval)) {
      frost::Checkpoint ckpt = frost::load_checkpoint(checkpoint_path);
      auto rows = frost::evaluate_checkpoint(cfg, ckpt);
      for (const auto& r : rows) {
        std::cout << "q=" << r.q << " depth=" << r.mean_depth
                  << " accuracy=" << r.accuracy << "\n";
      }
      return 0;
    }
    if (app.got_subcommand(cmd_analyze)) {
      frost::Checkpoint ckpt = frost::load_checkpoint(checkpoint_path);
      frost::analyze_checkpoint(cfg, ckpt);
      std::cout << "analysis written to " << cfg.output_dir << "\n";
      return 0;
    }
    if (app.got_subcommand(cmd_verify)) {
      return frost::verify(cfg);
    }
    if (app.got_subcommand(cmd_bench)) {
      frost::sketch_bench(cfg, {8, 16, 32, 64, 128, 200, 400});
      std::cout << "bench written to " << cfg.output_dir << "\n";
      return 0;
    }
  } catch (const frost::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 1;
  } catch (const std::out_of_range& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 1;
  } catch (const frost::ShapeError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 1;
  } catch (const frost::NumericError& e) {
    std::cerr << "numeric error: " << e.what() << "\n";
    return 2;
  } catch (const nlohmann::json::exception& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
