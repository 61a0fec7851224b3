#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "albench/albench.hpp"

namespace fs = std::filesystem;
using namespace albench;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitRuntime = 3;

void print_summary(const Summary& s, std::ostream& os) {
  os << "preset " << s.preset << ", metric " << to_string(s.metric) << "\n";
  os << std::left << std::setw(14) << "strategy" << std::right << std::setw(7) << "cycle" << std::setw(12) << "spent"
     << std::setw(10) << "labeled" << std::setw(10) << "mean" << std::setw(10) << "std" << std::setw(12)
     << "vs random" << "\n";
  os << std::fixed;
  for (const auto& st : s.strategies) {
    for (const auto& p : st.curve) {
      os << std::left << std::setw(14) << st.strategy << std::right << std::setw(7) << p.cycle << std::setw(12)
         << std::setprecision(1) << p.mean_spent << std::setw(10) << p.mean_labeled << std::setw(10)
         << std::setprecision(4) << p.mean_value << std::setw(10) << p.std_value << std::setw(12);
      if (p.delta_vs_random) {
        os << std::showpos << *p.delta_vs_random << std::noshowpos;
      } else {
        os << "n/a";
      }
      os << "\n";
    }
    for (const auto& f : st.failures) os << "  " << st.strategy << " failed " << f << "\n";
  }
  os.unsetf(std::ios::fixed);
}

int run(const std::string& config_path, std::optional<int> trials, std::optional<std::uint64_t> seed,
        const std::string& output) {
  auto cfg = load_experiment_config(config_path);
  if (trials) {
    require(*trials >= 1, ErrorCode::config, "--trials must be positive");
    cfg.trials = *trials;
  }
  if (seed) cfg.seed = *seed;
  if (!output.empty()) cfg.output = output;
  if (cfg.output.empty()) cfg.output = "albench-out";
  const auto split = load_split(cfg.dataset, fs::path(config_path).parent_path());
  const auto records = run_experiment(cfg, split, make_learner_factory(cfg));
  print_summary(summarize(records), std::cout);
  std::cout << "outputs in " << cfg.output.string() << "\n";
  const bool failed = std::any_of(records.begin(), records.end(), [](const auto& r) { return !r.ok(); });
  return failed ? kExitRuntime : kExitOk;
}

int sweep(const std::string& masks_dir, std::optional<int> void_id, std::vector<double> tolerances,
          const std::string& out) {
  std::sort(tolerances.begin(), tolerances.end());
  tolerances.erase(std::unique(tolerances.begin(), tolerances.end()), tolerances.end());
  std::optional<ClassId> v;
  if (void_id) v = *void_id;
  const auto masks = read_mask_dir(masks_dir, v);
  require(!masks.empty(), ErrorCode::config, "no masks found in " + masks_dir);
  const auto result = tolerance_sweep(masks, tolerances);
  if (out.empty()) {
    write_sweep_csv(result, std::cout);
  } else {
    std::ofstream f(out);
    require(f.good(), ErrorCode::io, "cannot write " + out);
    write_sweep_csv(result, f);
  }
  return kExitOk;
}

int summarize_dir(const std::string& dir) {
  const auto records = read_records(dir);
  const auto s = summarize(records);
  write_text(fs::path(dir) / "summary.json", summary_json(s).dump(2) + "\n");
  std::ostringstream csv;
  write_summary_csv(s, csv);
  write_text(fs::path(dir) / "summary.csv", csv.str());
  print_summary(s, std::cout);
  return kExitOk;
}

int plot_data(const std::string& dir, const std::string& out) {
  const auto records = read_records(dir);
  if (out.empty()) {
    write_plot_data(records, std::cout);
  } else {
    std::ofstream f(out);
    require(f.good(), ErrorCode::io, "cannot write " + out);
    write_plot_data(records, f);
  }
  return kExitOk;
}

int adapter_check(const std::string& command) {
  const auto report = adapter::run_compliance(command);
  for (const auto& line : report.lines) std::cout << line << "\n";
  std::cout << "adapter-check: " << (report.ok() ? "PASS" : "FAIL") << " (" << report.failures << " failed of "
            << report.lines.size() << " checks)\n";
  return report.ok() ? kExitOk : kExitRuntime;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Active-learning benchmark harness"};
  app.require_subcommand(1);

  std::string config, output;
  std::optional<int> trials;
  std::optional<std::uint64_t> seed;
  auto* run_cmd = app.add_subcommand("run", "Run an experiment from a JSON config");
  run_cmd->add_option("--config", config, "Experiment config")->required();
  run_cmd->add_option("--trials", trials, "Trials per strategy (overrides the preset)");
  run_cmd->add_option("--seed", seed, "Master seed");
  run_cmd->add_option("--output", output, "Output directory");

  std::string masks_dir, sweep_out;
  std::optional<int> void_id;
  std::vector<double> tolerances{0, 1, 2, 5, 10, 15, 20};
  auto* sweep_cmd = app.add_subcommand("sweep-tolerance", "Clicks and mIoU of polygon labels per tolerance");
  sweep_cmd->add_option("--masks", masks_dir, "Directory of label masks (PGM or PNG)")->required();
  sweep_cmd->add_option("--void", void_id, "Void label id, e.g. 255");
  sweep_cmd->add_option("--tolerances", tolerances, "Tolerances in pixels")->delimiter(',');
  sweep_cmd->add_option("--out", sweep_out, "CSV file (default stdout)");

  std::string dir, plot_out;
  auto* sum_cmd = app.add_subcommand("summarize", "Aggregate the records of a run directory");
  sum_cmd->add_option("dir", dir, "Run directory")->required();
  auto* plot_cmd = app.add_subcommand("plot-data", "Per-trial curve rows for plotting");
  plot_cmd->add_option("dir", dir, "Run directory")->required();
  plot_cmd->add_option("--out", plot_out, "CSV file (default stdout)");

  std::string command;
  auto* check_cmd = app.add_subcommand("adapter-check", "Replay the golden transcript against an adapter");
  check_cmd->add_option("command", command, "Adapter command line")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kExitOk : kExitConfig;
  }

  try {
    if (*run_cmd) return run(config, trials, seed, output);
    if (*sweep_cmd) return sweep(masks_dir, void_id, tolerances, sweep_out);
    if (*sum_cmd) return summarize_dir(dir);
    if (*plot_cmd) return plot_data(dir, plot_out);
    if (*check_cmd) return adapter_check(command);
  } catch (const Error& e) {
    std::cerr << "albench: " << to_string(e.code()) << ": " << e.what() << "\n";
    return e.code() == ErrorCode::config ? kExitConfig : kExitRuntime;
  } catch (const std::exception& e) {
    std::cerr << "albench: " << e.what() << "\n";
    return kExitRuntime;
  }
  return kExitOk;
}
