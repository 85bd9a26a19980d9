// eqco: experiment runner for the margin-InfoNCE lab.
//
// Exit codes: 0 success, 2 configuration or usage error, 3 numeric failure.

#include <cstdint>
#include <exception>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "eqco/errors.hpp"
#include "eqco/experiments.hpp"
#include "eqco/svg.hpp"

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitNumeric = 3;

struct CommonFlags {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out_dir;
  std::optional<std::size_t> k;
  std::optional<double> alpha;
  std::optional<double> tau;
  std::optional<std::string> margin_mode;
  std::optional<double> margin;
  std::optional<std::string> neg_source;
  std::optional<std::size_t> epochs;
  std::optional<std::size_t> n_queries;
  std::optional<std::string> checkpoint;
};

void add_common_flags(CLI::App& cmd, CommonFlags& f) {
  cmd.add_option("--config", f.config, "JSON config file")->check(CLI::ExistingFile);
  cmd.add_option("--seed", f.seed, "base seed");
  cmd.add_option("--out-dir", f.out_dir, "output directory (default $EQCO_OUT_DIR or .)");
  cmd.add_option("--k", f.k, "negatives per query");
  cmd.add_option("--alpha", f.alpha, "EqCo virtual negative count");
  cmd.add_option("--tau", f.tau, "temperature");
  cmd.add_option("--margin-mode", f.margin_mode, "fixed or eqco")
      ->check(CLI::IsMember({"fixed", "eqco"}));
  cmd.add_option("--margin", f.margin, "fixed margin m");
  cmd.add_option("--neg-source", f.neg_source, "bank, batch or subsample")
      ->check(CLI::IsMember({"bank", "batch", "subsample"}));
  cmd.add_option("--epochs", f.epochs, "training epochs");
  cmd.add_option("--n-queries", f.n_queries, "queries per batch");
}

eqco::Overrides to_overrides(const CommonFlags& f) {
  eqco::Overrides o;
  o.seed = f.seed;
  o.out_dir = f.out_dir;
  o.k = f.k;
  o.alpha = f.alpha;
  o.tau = f.tau;
  if (f.margin_mode) o.margin_mode = eqco::margin_kind_from_string(*f.margin_mode);
  o.margin = f.margin;
  if (f.neg_source) o.neg_source = eqco::negative_source_from_string(*f.neg_source);
  o.epochs = f.epochs;
  o.n_queries = f.n_queries;
  o.checkpoint = f.checkpoint;
  return o;
}

int run_kind(eqco::ExperimentKind kind, const CommonFlags& flags) {
  eqco::ExperimentSpec spec =
      flags.config.empty() ? eqco::default_spec(kind) : eqco::load_spec(flags.config, kind);
  eqco::apply_overrides(spec, to_overrides(flags));
  const auto out = eqco::run_experiment(spec, std::cout);
  return out.exit_code;
}

struct RenderFlags {
  std::string csv;
  std::string out;
  std::string x;
  std::string y;
  std::string series;
  std::string title;
};

int run_render(const RenderFlags& f) {
  const auto csv = eqco::CsvLog::read(f.csv);
  eqco::ChartSpec chart{f.title, f.x, f.y, f.series, "", ""};
  const std::string svg = eqco::render_svg(csv, chart);
  if (f.out.empty()) {
    std::cout << svg;
  } else {
    std::ofstream file(f.out, std::ios::binary);
    if (!file) throw eqco::ConfigError("cannot write '" + f.out + "'");
    file << svg;
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"EqCo margin-InfoNCE lab: MI-bound, gradient and K/N sweeps on toy data"};
  app.require_subcommand(1);

  struct Entry {
    eqco::ExperimentKind kind;
    const char* help;
    CommonFlags flags;
    CLI::App* cmd = nullptr;
  };
  Entry entries[] = {
      {eqco::ExperimentKind::MiSweep, "loss and MI bound evolution on correlated Gaussians", {}},
      {eqco::ExperimentKind::GradStats, "gradient-norm statistics per epoch", {}},
      {eqco::ExperimentKind::KSweep, "probe accuracy across negative counts", {}},
      {eqco::ExperimentKind::NSweep, "batch-size sweep under the linear scaling rule", {}},
      {eqco::ExperimentKind::TrainOnce, "single training run with log and checkpoint", {}},
      {eqco::ExperimentKind::Probe, "linear probe of a saved encoder", {}},
  };
  for (auto& e : entries) {
    e.cmd = app.add_subcommand(eqco::to_string(e.kind), e.help);
    add_common_flags(*e.cmd, e.flags);
    if (e.kind == eqco::ExperimentKind::Probe) {
      e.cmd->add_option("--checkpoint", e.flags.checkpoint, "encoder checkpoint (JSON)");
    }
  }

  RenderFlags render;
  auto* render_cmd = app.add_subcommand("render", "render a CSV column pair as an SVG chart");
  render_cmd->add_option("--csv", render.csv, "input CSV")->required()->check(CLI::ExistingFile);
  render_cmd->add_option("--x", render.x, "x column")->required();
  render_cmd->add_option("--y", render.y, "y column")->required();
  render_cmd->add_option("--series", render.series, "column splitting rows into series");
  render_cmd->add_option("--title", render.title, "chart title");
  render_cmd->add_option("--out", render.out, "output SVG (default stdout)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitConfig;
  }

  try {
    if (render_cmd->parsed()) return run_render(render);
    for (auto& e : entries) {
      if (e.cmd->parsed()) return run_kind(e.kind, e.flags);
    }
    return kExitConfig;
  } catch (const eqco::NumericError& e) {
    std::cerr << "numeric failure: " << e.what() << "\n";
    return kExitNumeric;
  } catch (const eqco::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const eqco::UsageError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const eqco::DomainError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const eqco::PreconditionError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
