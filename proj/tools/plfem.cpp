// Command-line front end: the L-shape convergence study, slope fits of data
// files and the seeded empirical constants.

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "plfem/experiment.hpp"

namespace {

struct RunFlags {
  std::optional<std::string> config, p, element, out;
  std::optional<double> theta;
  std::optional<std::size_t> max_ndof;
  std::optional<unsigned long> seed;
  std::optional<unsigned> jobs;
};

plfem::ExperimentSpec build_spec(const RunFlags& f) {
  plfem::ExperimentSpec spec;
  if (f.config) {
    std::ifstream is(*f.config);
    if (!is) throw std::runtime_error("cannot open config file " + *f.config);
    plfem::apply_config(is, spec);
  }
  if (f.p) spec.p_values = plfem::parse_p_list(*f.p);
  if (f.element) spec.elements = plfem::parse_element_list(*f.element);
  if (f.theta) spec.theta = *f.theta;
  if (f.max_ndof) spec.max_ndof = *f.max_ndof;
  if (f.out) spec.out_dir = *f.out;
  if (f.seed) spec.seed = *f.seed;
  if (f.jobs) spec.jobs = *f.jobs;
  spec.validate();
  return spec;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Adaptive Lagrange / Crouzeix-Raviart solver for the p-Laplacian"};
  app.require_subcommand(1);

  RunFlags flags;
  auto* run = app.add_subcommand("run", "L-shape study: data files, run logs, SVG plots and summary.txt");
  run->add_option("--config", flags.config, "key=value file; flags given on the command line take precedence");
  run->add_option("--p", flags.p, "comma-separated exponents (default 1.1,10)");
  run->add_option("--element", flags.element, "comma-separated list of lagrange, cr (default both)");
  run->add_option("--theta", flags.theta, "Doerfler bulk parameter (default 0.3)");
  run->add_option("--max-ndof", flags.max_ndof, "stop once the free dofs exceed this (default 50000)");
  run->add_option("--out", flags.out, "output directory (default results)");
  run->add_option("--seed", flags.seed, "seed of the property sweeps in summary.txt (default 1)");
  run->add_option("--jobs", flags.jobs, "runs executed concurrently (default 1)");

  std::string dat;
  auto* fit = app.add_subcommand("fit-slope", "log-log slope over the last half of a two-column data file");
  fit->add_option("file", dat, "ndof relat_error file")->required();

  std::string p_list = "1.1,1.5,2,3,10";
  unsigned long seed = 1;
  std::size_t samples = 100000;
  auto* constants = app.add_subcommand("constants", "empirical distance-equivalence and Poincare constants");
  constants->add_option("--p", p_list, "comma-separated exponents");
  constants->add_option("--seed", seed, "random seed");
  constants->add_option("--samples", samples, "random pairs per exponent");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*run) {
      const auto spec = build_spec(flags);
      const auto summaries = plfem::run_experiment(spec, &std::cerr);
      for (const auto& s : summaries)
        std::cout << plfem::run_tag(s.p, s.element) << " slope " << s.slope_squared << " final_ndof " << s.final_ndof
                  << '\n';
    } else if (*fit) {
      std::cout << plfem::fit_slope(std::filesystem::path(dat)) << '\n';
    } else if (*constants) {
      plfem::write_constants(std::cout, plfem::parse_p_list(p_list), seed, samples);
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return EXIT_FAILURE;
  }
  return EXIT_SUCCESS;
}
