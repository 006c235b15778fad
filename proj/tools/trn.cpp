// trn: quasistatic tetrahedral FEM solver with pluggable per-element
// Hessian projection strategies and a benchmark harness.

#include <CLI11.hpp>

#include "trn/cli.hpp"

int main(int argc, char** argv) {
  CLI::App app{"quasistatic tet FEM with per-element Hessian projection strategies"};
  app.require_subcommand(1);

  std::string run_config;
  CLI::App* run = app.add_subcommand("run", "minimize one scenario from a JSON config");
  run->add_option("--config", run_config, "JSON run config")->required();

  std::string bench_config;
  int jobs = 0;
  CLI::App* bench = app.add_subcommand("bench", "run a benchmark matrix from a JSON config");
  bench->add_option("--config", bench_config, "JSON bench config")->required();
  bench->add_option("--jobs", jobs, "concurrent cells (default: config value or 1)");

  std::string plot_out;
  std::vector<std::string> traces;
  CLI::App* plot = app.add_subcommand("plot", "render convergence curves from trace.csv files");
  plot->add_option("--out", plot_out, "output SVG path")->required();
  plot->add_option("traces", traces, "trace.csv files")->required();

  std::string gen_config;
  CLI::App* gen = app.add_subcommand("gen-mesh", "write a generated beam as a TetGen pair");
  gen->add_option("--config", gen_config, "JSON generator config")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;  // usage errors exit 2
  }

  try {
    if (run->parsed()) return trn::cmd_run(run_config);
    if (bench->parsed()) return trn::cmd_bench(bench_config, jobs);
    if (plot->parsed()) return trn::cmd_plot(traces, plot_out);
    if (gen->parsed()) return trn::cmd_gen_mesh(gen_config);
  } catch (const std::exception& err) {
    std::cerr << "error: " << err.what() << "\n";
    return 2;
  }
  return 2;
}
