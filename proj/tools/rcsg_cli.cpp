#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>

#include "rcsg/rcsg.hpp"

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitNoConvergence = 3;

int report(const rcsg::RunOutcome& r, const std::string& out) {
  std::cout << "status     " << rcsg::to_string(r.solve.status) << "\n"
            << "iterations " << r.solve.iterations << "\n"
            << "energy     " << rcsg::format_double(r.solve.energy) << "\n"
            << "lambda     " << rcsg::format_double(r.solve.lambda) << "\n";
  if (r.certificate) std::cout << "verdict    " << rcsg::to_string(r.certificate->verdict) << "\n";
  std::cout << "output     " << out << "\n";
  return r.solve.status == rcsg::SolveStatus::Converged ? 0 : kExitNoConvergence;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Ground states of rotating Bose-Einstein condensates by Riemannian conjugate Sobolev gradients"};
  app.require_subcommand(1);

  std::string config_path, out_dir, preset, methods, state_path;

  auto* run = app.add_subcommand("run", "Solve one configuration and certify the result");
  run->add_option("--config", config_path, "key=value configuration file")->required();
  run->add_option("--out", out_dir, "output directory (overrides output_dir)");

  auto* reference = app.add_subcommand("reference", "Compute a reference state for a preset");
  reference->add_option("--preset", preset, "exp1..exp4 or their -coarse variants")->required();
  reference->add_option("--out", out_dir, "output directory")->required();

  auto* compare = app.add_subcommand("compare", "Compare metric/momentum combinations against a reference");
  compare->add_option("--preset", preset, "preset name")->required();
  compare->add_option("--methods", methods, "comma list such as au:pr,au:hs,h10:pr")->required();
  compare->add_option("--out", out_dir, "output directory")->required();

  auto* certify = app.add_subcommand("certify", "Certify a stored state");
  certify->add_option("--state", state_path, "GPSTATE file")->required();
  certify->add_option("--config", config_path, "configuration the state belongs to")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitConfig;
  }

  try {
    if (*run) {
      rcsg::RunConfig cfg = rcsg::load_config(config_path);
      if (!out_dir.empty()) cfg.output_dir = out_dir;
      return report(rcsg::run_experiment(cfg), cfg.output_dir);
    }
    if (*reference) {
      rcsg::RunConfig cfg = rcsg::reference_config(rcsg::preset_config(preset));
      cfg.output_dir = out_dir;
      return report(rcsg::run_experiment(cfg), cfg.output_dir);
    }
    if (*compare) {
      const rcsg::RunConfig cfg = rcsg::preset_config(preset);
      const auto cmp = rcsg::compare_methods(cfg, rcsg::parse_methods(methods), out_dir);
      std::cout << "reference energy " << rcsg::format_double(cmp.reference_energy) << "\n";
      bool all = true;
      for (const auto& r : cmp.rows) {
        std::cout << rcsg::method_name(r.method) << " "
                  << (r.iterations >= 0 ? std::to_string(r.iterations) : std::string("DNF")) << "\n";
        all = all && r.iterations >= 0;
      }
      return all ? 0 : kExitNoConvergence;
    }
    if (*certify) {
      const rcsg::RunConfig cfg = rcsg::load_config(config_path);
      auto ctx = rcsg::make_context(cfg);
      const rcsg::StateFile s = rcsg::load_state(state_path);
      if (s.n != cfg.n || s.L != cfg.physics.L) throw rcsg::ConfigError("state file does not match the configured mesh");
      rcsg::CertifyOptions co;
      co.spectrum.k = cfg.certify_k;
      const rcsg::Certificate c = rcsg::certify(*ctx, rcsg::normalize(*ctx, s.u), co);
      rcsg::write_certificate(std::cout, c);
      return 0;
    }
  } catch (const rcsg::ConfigError& e) {
    std::cerr << "configuration error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
