#include <CLI11.hpp>
#include <filesystem>
#include <functional>
#include <iostream>
#include <sstream>

#include "mqs/csv.hpp"
#include "mqs/runner.hpp"

namespace {

// Exit codes: 0 success, 2 config error, 3 solver failure, 4 I/O error.
int guarded(const std::function<void()>& fn) {
  try {
    fn();
    return 0;
  } catch (const mqs::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const mqs::GeometryError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const mqs::SolverError& e) {
    std::cerr << "solver failure: " << e.what() << "\n";
    return 3;
  } catch (const mqs::IoError& e) {
    std::cerr << "I/O error: " << e.what() << "\n";
    return 4;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Two-scale FE-HMM solver for 2D nonlinear magnetoquasistatics"};
  app.require_subcommand(1);

  std::string config_path;
  std::string mode = "multiscale";
  int threads = 0;

  auto* run = app.add_subcommand("run", "Run one solver and write CSV outputs");
  run->add_option("--config", config_path, "Run configuration file")->required();
  run->add_option("--mode", mode, "multiscale | reference | static")
      ->check(CLI::IsMember({"multiscale", "reference", "static"}));
  run->add_option("--threads", threads, "Worker threads for the cell batch");

  std::string freq_list;
  auto* sweep = app.add_subcommand("sweep", "Frequency sweep of the loss error");
  sweep->add_option("--config", config_path, "Run configuration file")->required();
  sweep->add_option("--freqs", freq_list, "Comma-separated frequencies in Hz")->required();
  sweep->add_option("--threads", threads, "Worker threads for the cell batch");

  std::string ref_dir, ms_dir, probes_path;
  auto* compare = app.add_subcommand("compare", "Loss/field errors between two run directories");
  compare->add_option("--ref", ref_dir, "Reference run directory")->required();
  compare->add_option("--ms", ms_dir, "Multiscale run directory")->required();
  compare->add_option("--probes", probes_path, "CSV of probe points (x_m, y_m)")->required();

  CLI11_PARSE(app, argc, argv);

  if (run->parsed()) {
    return guarded([&] {
      mqs::RunConfig cfg = mqs::parse_config(config_path);
      if (threads > 0) cfg.threads = threads;
      if (mode == "multiscale")
        mqs::run_multiscale_to_dir(cfg, cfg.output_dir);
      else if (mode == "reference")
        mqs::run_reference_to_dir(cfg, cfg.output_dir);
      else
        mqs::run_static_to_dir(cfg, cfg.output_dir);
      std::cout << "outputs written to " << cfg.output_dir << "\n";
    });
  }

  if (sweep->parsed()) {
    return guarded([&] {
      mqs::RunConfig cfg = mqs::parse_config(config_path);
      if (threads > 0) cfg.threads = threads;
      std::vector<double> freqs;
      std::istringstream is(freq_list);
      std::string tok;
      while (std::getline(is, tok, ','))
        freqs.push_back(mqs::parse_double(tok, "frequency"));
      if (freqs.empty()) throw mqs::ConfigError("sweep: no frequencies given");

      const auto rows = mqs::frequency_sweep(cfg, freqs);
      std::error_code ec;
      std::filesystem::create_directories(cfg.output_dir, ec);
      mqs::write_sweep_csv(rows, cfg.output_dir + "/sweep.csv");
      bool nondecreasing = true;
      double prev = -1.0;
      for (const auto& r : rows) {
        if (r.ok) {
          std::cout << r.frequency << " Hz: Err_P = " << r.err_p << "\n";
          if (prev >= 0.0 && r.err_p < prev) nondecreasing = false;
          prev = r.err_p;
        } else {
          std::cout << r.frequency << " Hz: failed (" << r.message << ")\n";
        }
      }
      std::cout << "error trend: " << (nondecreasing ? "nondecreasing" : "NOT monotone") << "\n";
    });
  }

  return guarded([&] {
    const auto probes = mqs::read_probe_list(probes_path);
    const mqs::ErrorReport report = mqs::compare_dirs(ref_dir, ms_dir, probes);
    std::cout << "Err_P = " << report.err_p << "\n";
    for (const auto& row : report.probes)
      std::cout << "probe (" << row.x << ", " << row.y << "): Err_m^b = " << row.err_meso
                << ", Err_M^b = " << row.err_macro << "\n";
  });
}
