#include "sfl/cli.hpp"

#include <iostream>

#include "CLI11.hpp"
#include "sfl/error.hpp"
#include "sfl/experiments.hpp"
#include "sfl/gradcheck.hpp"

namespace sfl {

namespace {

constexpr double kGradcheckTolerance = 1e-4;

void emit(const std::string& out_path, const std::string& text) {
  if (out_path.empty()) {
    std::cout << text;
  } else {
    write_text(out_path, text);
  }
}

}  // namespace

int cli_main(const std::vector<std::string>& args) {
  CLI::App app{"SplitFed / FL model-poisoning simulator"};
  app.require_subcommand(1);

  std::string config_path, out_path, in_path;
  std::vector<std::string> axis_specs;
  std::size_t jobs = 1;
  std::size_t instances = 20;
  std::uint64_t seed = 42;

  auto* train_cmd = app.add_subcommand("train", "Run one experiment and write its per-round history as CSV");
  train_cmd->add_option("--config", config_path, "key=value config file")->required();
  train_cmd->add_option("--out", out_path, "output CSV (default: stdout)");
  train_cmd->add_option("--jobs", jobs, "worker threads for client-side work")->check(CLI::PositiveNumber);

  auto* sweep_cmd = app.add_subcommand("sweep", "Run paired attacked/unattacked experiments over axes");
  sweep_cmd->add_option("--config", config_path, "base key=value config file")->required();
  sweep_cmd->add_option("--axis", axis_specs, "name=v1,v2,... (mode|cut|defense|attack|frac|seed)");
  sweep_cmd->add_option("--out", out_path, "results CSV (default: stdout)");
  sweep_cmd->add_option("--jobs", jobs, "concurrent runs")->check(CLI::PositiveNumber);

  auto* grad_cmd = app.add_subcommand("gradcheck", "Check backprop against central finite differences");
  grad_cmd->add_option("--instances", instances, "random instances per layer kind")->check(CLI::PositiveNumber);
  grad_cmd->add_option("--seed", seed, "seed for the random instances");

  auto* plot_cmd = app.add_subcommand("plot", "Render acc_drop from a results CSV as an SVG line chart");
  plot_cmd->add_option("--in", in_path, "results CSV")->required();
  plot_cmd->add_option("--out", out_path, "output SVG")->required();

  std::vector<const char*> argv{"sfl"};
  for (const auto& a : args) argv.push_back(a.c_str());
  try {
    app.parse(int(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 1;
  }

  try {
    if (*train_cmd) {
      const ExperimentConfig cfg = load_config(config_path);
      const TrainResult res = train(cfg, jobs);
      emit(out_path, format_history(res.records));
      if (!res.records.empty())
        std::cerr << "final accuracy " << final_accuracy(res.records) << "% over " << res.records.size()
                  << " rounds, attack dimension " << res.attack_dim << "\n";
    } else if (*sweep_cmd) {
      const ExperimentConfig base = load_config(config_path);
      SweepAxes axes;
      for (const auto& a : axis_specs) add_axis(axes, a);
      const SweepResult sr = run_sweep(base, axes, jobs);
      for (const auto& s : sr.skipped) std::cerr << "skipped cell [" << s.fingerprint << "]: " << s.reason << "\n";
      emit(out_path, format_results(sr));
    } else if (*grad_cmd) {
      bool ok = true;
      for (const auto& r : run_gradcheck(instances, seed)) {
        const bool pass = r.max_rel_error < kGradcheckTolerance;
        ok = ok && pass;
        std::cout << (pass ? "PASS " : "FAIL ") << r.name << " instances=" << r.instances
                  << " max_rel_error=" << r.max_rel_error << "\n";
      }
      return ok ? 0 : 2;
    } else if (*plot_cmd) {
      write_text(out_path, render_svg(parse_results(read_text(in_path))));
    }
  } catch (const ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}

}  // namespace sfl
