#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "eqco/critic.hpp"
#include "eqco/csv.hpp"
#include "eqco/data.hpp"
#include "eqco/trainer.hpp"

namespace eqco {

enum class ExperimentKind { MiSweep, GradStats, KSweep, NSweep, TrainOnce, Probe };

const char* to_string(ExperimentKind kind);
/// Throws ConfigError for an unknown name.
ExperimentKind experiment_kind_from_string(const std::string& name);

enum class MarginKind { Fixed, EqCo };

const char* to_string(MarginKind kind);
MarginKind margin_kind_from_string(const std::string& name);

/// One experiment: a grid over (tau, margin mode, alpha, K) or over N,
/// applied on top of a base training configuration.
///
/// Grid points are the product tau x mode x K, with EqCo points further
/// expanded over `alphas`. Fixed points use `margin`. Every grid point runs
/// with the same seed, so a point differs from another only through its
/// loss settings.
struct ExperimentSpec {
  ExperimentKind kind = ExperimentKind::TrainOnce;
  std::vector<std::size_t> ks;
  std::vector<double> alphas;
  std::vector<double> taus;
  std::vector<MarginKind> modes;
  double margin = 0.0;
  /// n_sweep grid over queries per batch.
  std::vector<std::size_t> ns;
  /// n_sweep: also run every N with the unscaled base learning rate.
  bool unscaled_control = true;

  TrainConfig base;
  CriticConfig critic;
  ToyDatasetConfig data;
  std::uint64_t seed = 0;
  /// Empty means EQCO_OUT_DIR, then the working directory.
  std::string out_dir;
  /// probe: checkpoint to evaluate.
  std::string checkpoint;
  double probe_train_frac = 0.8;
  /// mi_sweep: Monte-Carlo draws for the theoretical bound reference.
  std::size_t bound_samples = 100000;

  /// Throws ConfigError for an empty grid or invalid settings.
  void validate() const;
};

/// `configured` if non-empty, else $EQCO_OUT_DIR if set, else ".".
std::string resolve_out_dir(const std::string& configured);

/// Defaults used by each command when no config file is given.
ExperimentSpec default_spec(ExperimentKind kind);

/// Reads a JSON config. Missing keys keep the defaults of `kind` (or of the
/// file's "kind" entry); unknown keys are rejected with ConfigError.
ExperimentSpec load_spec(const std::string& path, std::optional<ExperimentKind> kind = {});
ExperimentSpec parse_spec(const std::string& json_text, std::optional<ExperimentKind> kind = {});

/// Command-line values that take precedence over the config file.
struct Overrides {
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out_dir;
  std::optional<std::size_t> k;
  std::optional<double> alpha;
  std::optional<double> tau;
  std::optional<MarginKind> margin_mode;
  std::optional<double> margin;
  std::optional<NegativeSource> neg_source;
  std::optional<std::size_t> epochs;
  std::optional<std::size_t> n_queries;
  std::optional<std::string> checkpoint;
};

void apply_overrides(ExperimentSpec& spec, const Overrides& overrides);

/// Outcome of a command. Tables are also written to spec.out_dir.
struct ExperimentOutput {
  /// 0 success, 3 when any grid point failed numerically.
  int exit_code = 0;
  CsvLog table;
  /// Extra tables keyed by file name (e.g. the unscaled n_sweep control).
  std::vector<std::pair<std::string, CsvLog>> extra_tables;
  std::vector<std::string> files;
};

/// Runs the experiment, writes CSV/SVG files and one summary line per grid
/// point to `log`.
ExperimentOutput run_experiment(const ExperimentSpec& spec, std::ostream& log);

ExperimentOutput cmd_mi_sweep(const ExperimentSpec& spec, std::ostream& log);
ExperimentOutput cmd_grad_stats(const ExperimentSpec& spec, std::ostream& log);
ExperimentOutput cmd_k_sweep(const ExperimentSpec& spec, std::ostream& log);
ExperimentOutput cmd_n_sweep(const ExperimentSpec& spec, std::ostream& log);
ExperimentOutput cmd_train_once(const ExperimentSpec& spec, std::ostream& log);
ExperimentOutput cmd_probe(const ExperimentSpec& spec, std::ostream& log);

inline const std::vector<std::string> kMiSweepHeader{
    "step", "epoch", "k", "alpha", "margin", "loss_nce", "f_hat_bound", "true_mi", "theoretical_bound"};
inline const std::vector<std::string> kGradStatsHeader{
    "epoch", "k", "mode", "grad_norm_mean", "grad_norm_var", "theorem2_bound"};
inline const std::vector<std::string> kKSweepHeader{
    "k", "mode", "alpha", "margin", "final_loss", "f_hat_bound", "probe_acc"};
inline const std::vector<std::string> kNSweepHeader{"n", "lr", "final_loss", "probe_acc"};
inline const std::vector<std::string> kTrainLogHeader{
    "step", "epoch", "skipped", "lr", "loss", "f_hat_bound", "grad_norm_mean", "grad_norm_var",
    "theorem2_bound"};
inline const std::vector<std::string> kProbeHeader{"checkpoint", "n_instances", "probe_acc"};

/// Cell written in place of metrics for a failed grid point.
inline constexpr const char* kFailedCell = "failed";

}  // namespace eqco
