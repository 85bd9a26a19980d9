#include "eqco/experiments.hpp"

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <ostream>
#include <sstream>

#include "eqco/errors.hpp"
#include "eqco/mi.hpp"
#include "eqco/probe.hpp"
#include "eqco/svg.hpp"
#include "json.hpp"

namespace eqco {

namespace {

using nlohmann::json;

// Stream ids for seeds derived from ExperimentSpec::seed.
constexpr std::uint64_t kDatasetStream = 100;
constexpr std::uint64_t kProbeStream = 101;
constexpr std::uint64_t kBoundStream = 102;

struct GridPoint {
  double tau = 0.2;
  MarginKind mode = MarginKind::Fixed;
  double alpha = 0.0;
  double margin = 0.0;
  std::size_t k = 1;

  LossConfig loss() const {
    LossConfig cfg;
    cfg.tau = tau;
    cfg.k = k;
    if (mode == MarginKind::EqCo) {
      cfg.margin = EqCoMargin{alpha};
    } else {
      cfg.margin = FixedMargin{margin};
    }
    return cfg;
  }
};

std::vector<GridPoint> expand_grid(const ExperimentSpec& spec) {
  std::vector<GridPoint> points;
  for (double tau : spec.taus) {
    for (MarginKind mode : spec.modes) {
      if (mode == MarginKind::EqCo) {
        for (double alpha : spec.alphas) {
          for (std::size_t k : spec.ks) points.push_back({tau, mode, alpha, 0.0, k});
        }
      } else {
        for (std::size_t k : spec.ks) points.push_back({tau, mode, 0.0, spec.margin, k});
      }
    }
  }
  return points;
}

bool finite_all(std::initializer_list<double> values) {
  for (double v : values) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

std::string join_path(const std::string& dir, const std::string& name) {
  return (std::filesystem::path(dir) / name).string();
}

void ensure_dir(const std::string& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw ConfigError("cannot create output directory '" + dir + "': " + ec.message());
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot write '" + path + "'");
  out << text;
  if (!out) throw ConfigError("write failed for '" + path + "'");
}

void emit_csv(ExperimentOutput& out, const ExperimentSpec& spec, const std::string& name,
              const CsvLog& csv) {
  const std::string path = join_path(resolve_out_dir(spec.out_dir), name);
  csv.write(path);
  out.files.push_back(path);
}

void emit_svg(ExperimentOutput& out, const ExperimentSpec& spec, const std::string& name,
              const CsvLog& csv, const ChartSpec& chart) {
  const std::string path = join_path(resolve_out_dir(spec.out_dir), name);
  write_text(path, render_svg(csv, chart));
  out.files.push_back(path);
}

std::string mode_label(const GridPoint& p) {
  if (p.mode == MarginKind::EqCo) return "eqco";
  return "fixed";
}

std::string series_label(const GridPoint& p) {
  std::string s = mode_label(p) + " K=" + format_count(p.k);
  if (p.mode == MarginKind::EqCo) s += " alpha=" + format_real(p.alpha);
  return s;
}

TrainConfig point_train_config(const ExperimentSpec& spec, const GridPoint& p) {
  TrainConfig cfg = spec.base;
  cfg.loss = p.loss();
  cfg.seed = spec.seed;
  return cfg;
}

double probe_accuracy(const MlpParams& encoder, const ToyInstanceDataset& dataset,
                      const ExperimentSpec& spec) {
  const auto embeddings = embed_dataset(encoder, dataset);
  const auto labels = dataset.labels();
  SeededRng rng(derive_seed(spec.seed, kProbeStream));
  return linear_probe(embeddings, labels, spec.probe_train_frac, rng);
}

ToyInstanceDataset make_dataset(const ExperimentSpec& spec) {
  return ToyInstanceDataset::make(spec.data, derive_seed(spec.seed, kDatasetStream));
}

// ---- JSON config -----------------------------------------------------------

void reject_unknown(const json& obj, std::initializer_list<const char*> allowed,
                    const std::string& where) {
  if (!obj.is_object()) throw ConfigError("'" + where + "' must be an object");
  for (const auto& item : obj.items()) {
    bool known = false;
    for (const char* name : allowed) known = known || item.key() == name;
    if (!known) throw ConfigError("unknown key '" + item.key() + "' in " + where);
  }
}

template <typename T>
void read_if(const json& obj, const char* key, T& target) {
  if (obj.contains(key)) target = obj.at(key).get<T>();
}

void read_count(const json& obj, const char* key, std::size_t& target) {
  if (!obj.contains(key)) return;
  const json& v = obj.at(key);
  if (!v.is_number_unsigned()) {
    throw ConfigError(std::string("'") + key + "' must be a non-negative integer");
  }
  target = v.get<std::size_t>();
}

void read_counts(const json& obj, const char* key, std::vector<std::size_t>& target) {
  if (!obj.contains(key)) return;
  const json& v = obj.at(key);
  if (!v.is_array()) throw ConfigError(std::string("'") + key + "' must be an array");
  target.clear();
  for (const auto& e : v) {
    if (!e.is_number_unsigned()) {
      throw ConfigError(std::string("'") + key + "' entries must be non-negative integers");
    }
    target.push_back(e.get<std::size_t>());
  }
}

void read_train(const json& t, TrainConfig& cfg) {
  reject_unknown(t,
                 {"n_queries", "k", "tau", "margin_mode", "margin", "alpha", "neg_source",
                  "base_lr", "n_ref", "scale_lr", "epochs", "warmup_frac", "sgd_momentum", "beta",
                  "hidden_dims", "embed_dim"},
                 "train");
  read_count(t, "n_queries", cfg.n_queries);
  read_count(t, "k", cfg.loss.k);
  read_if(t, "tau", cfg.loss.tau);
  if (t.contains("neg_source")) {
    cfg.neg_source = negative_source_from_string(t.at("neg_source").get<std::string>());
  }
  MarginKind mode = cfg.loss.is_eqco() ? MarginKind::EqCo : MarginKind::Fixed;
  if (t.contains("margin_mode")) mode = margin_kind_from_string(t.at("margin_mode").get<std::string>());
  double alpha = cfg.loss.is_eqco() ? std::get<EqCoMargin>(cfg.loss.margin).alpha : 256.0;
  double margin = cfg.loss.is_eqco() ? 0.0 : std::get<FixedMargin>(cfg.loss.margin).m;
  read_if(t, "alpha", alpha);
  read_if(t, "margin", margin);
  if (mode == MarginKind::EqCo) {
    cfg.loss.margin = EqCoMargin{alpha};
  } else {
    cfg.loss.margin = FixedMargin{margin};
  }
  read_if(t, "base_lr", cfg.base_lr);
  read_count(t, "n_ref", cfg.n_ref);
  read_if(t, "scale_lr", cfg.scale_lr);
  read_count(t, "epochs", cfg.epochs);
  read_if(t, "warmup_frac", cfg.warmup_frac);
  read_if(t, "sgd_momentum", cfg.sgd_momentum);
  read_if(t, "beta", cfg.beta);
  read_counts(t, "hidden_dims", cfg.hidden_dims);
  read_count(t, "embed_dim", cfg.embed_dim);
}

void read_critic(const json& c, CriticConfig& cfg) {
  reject_unknown(c,
                 {"rho", "dim", "n_queries", "steps_per_epoch", "epochs", "lr", "sgd_momentum",
                  "warmup_frac", "hidden_dims", "embed_dim", "eval_queries", "eval_chunk",
                  "eval_pool", "eval_every"},
                 "critic");
  read_if(c, "rho", cfg.dist.rho);
  read_count(c, "dim", cfg.dist.dim);
  read_count(c, "n_queries", cfg.n_queries);
  read_count(c, "steps_per_epoch", cfg.steps_per_epoch);
  read_count(c, "epochs", cfg.epochs);
  read_if(c, "lr", cfg.lr);
  read_if(c, "sgd_momentum", cfg.sgd_momentum);
  read_if(c, "warmup_frac", cfg.warmup_frac);
  read_counts(c, "hidden_dims", cfg.hidden_dims);
  read_count(c, "embed_dim", cfg.embed_dim);
  read_count(c, "eval_queries", cfg.eval_queries);
  read_count(c, "eval_chunk", cfg.eval_chunk);
  read_count(c, "eval_pool", cfg.eval_pool);
  read_count(c, "eval_every", cfg.eval_every);
}

void read_data(const json& d, ToyDatasetConfig& cfg) {
  reject_unknown(d,
                 {"n_classes", "n_instances", "latent_dim", "center_scale", "center_spread",
                  "aug_noise_std"},
                 "data");
  read_count(d, "n_classes", cfg.n_classes);
  read_count(d, "n_instances", cfg.n_instances);
  read_count(d, "latent_dim", cfg.latent_dim);
  read_if(d, "center_scale", cfg.center_scale);
  read_if(d, "center_spread", cfg.center_spread);
  read_if(d, "aug_noise_std", cfg.aug_noise_std);
}

void read_grid(const json& g, ExperimentSpec& spec) {
  reject_unknown(g, {"k", "alpha", "tau", "mode", "margin", "n", "unscaled_control"}, "grid");
  read_counts(g, "k", spec.ks);
  read_if(g, "alpha", spec.alphas);
  read_if(g, "tau", spec.taus);
  if (g.contains("mode")) {
    spec.modes.clear();
    for (const auto& m : g.at("mode")) spec.modes.push_back(margin_kind_from_string(m.get<std::string>()));
  }
  read_if(g, "margin", spec.margin);
  read_counts(g, "n", spec.ns);
  read_if(g, "unscaled_control", spec.unscaled_control);
}

}  // namespace

std::string resolve_out_dir(const std::string& configured) {
  if (!configured.empty()) return configured;
  if (const char* env = std::getenv("EQCO_OUT_DIR"); env != nullptr && *env != '\0') return env;
  return ".";
}

// ---- names -----------------------------------------------------------------

const char* to_string(ExperimentKind kind) {
  switch (kind) {
    case ExperimentKind::MiSweep: return "mi_sweep";
    case ExperimentKind::GradStats: return "grad_stats";
    case ExperimentKind::KSweep: return "k_sweep";
    case ExperimentKind::NSweep: return "n_sweep";
    case ExperimentKind::TrainOnce: return "train_once";
    case ExperimentKind::Probe: return "probe";
  }
  return "unknown";
}

ExperimentKind experiment_kind_from_string(const std::string& name) {
  for (auto kind : {ExperimentKind::MiSweep, ExperimentKind::GradStats, ExperimentKind::KSweep,
                    ExperimentKind::NSweep, ExperimentKind::TrainOnce, ExperimentKind::Probe}) {
    if (name == to_string(kind)) return kind;
  }
  throw ConfigError("unknown experiment kind '" + name + "'");
}

const char* to_string(MarginKind kind) { return kind == MarginKind::EqCo ? "eqco" : "fixed"; }

MarginKind margin_kind_from_string(const std::string& name) {
  if (name == "fixed") return MarginKind::Fixed;
  if (name == "eqco") return MarginKind::EqCo;
  throw ConfigError("unknown margin mode '" + name + "' (expected fixed or eqco)");
}

// ---- spec ------------------------------------------------------------------

void ExperimentSpec::validate() const {
  switch (kind) {
    case ExperimentKind::MiSweep:
    case ExperimentKind::GradStats:
    case ExperimentKind::KSweep:
      if (ks.empty() || taus.empty() || modes.empty()) {
        throw ConfigError(std::string(to_string(kind)) + ": grid needs k, tau and mode values");
      }
      for (MarginKind m : modes) {
        if (m == MarginKind::EqCo && alphas.empty()) {
          throw ConfigError(std::string(to_string(kind)) + ": eqco mode needs alpha values");
        }
      }
      break;
    case ExperimentKind::NSweep:
      if (ns.empty()) throw ConfigError("n_sweep: grid needs n values");
      break;
    case ExperimentKind::TrainOnce:
      break;
    case ExperimentKind::Probe:
      if (checkpoint.empty()) throw ConfigError("probe: a checkpoint path is required");
      break;
  }
  if (!(probe_train_frac > 0.0 && probe_train_frac < 1.0)) {
    throw ConfigError("probe train_frac must lie in (0, 1)");
  }
  if (data.n_classes < 2 || data.n_instances == 0 || data.latent_dim == 0) {
    throw ConfigError("data: need >= 2 classes, >= 1 instance and latent_dim >= 1");
  }
  try {
    if (kind == ExperimentKind::MiSweep) {
      if (bound_samples < 1000) throw ConfigError("bound_samples must be >= 1000");
      for (const auto& p : expand_grid(*this)) {
        CriticConfig c = critic;
        c.loss = p.loss();
        c.validate();
      }
    } else if (kind == ExperimentKind::GradStats || kind == ExperimentKind::KSweep) {
      for (const auto& p : expand_grid(*this)) point_train_config(*this, p).validate();
    } else if (kind == ExperimentKind::NSweep) {
      for (std::size_t n : ns) {
        TrainConfig c = base;
        c.n_queries = n;
        c.validate();
      }
    } else if (kind == ExperimentKind::TrainOnce) {
      base.validate();
    }
  } catch (const DomainError& e) {
    throw ConfigError(e.what());
  } catch (const PreconditionError& e) {
    throw ConfigError(e.what());
  }
}

ExperimentSpec default_spec(ExperimentKind kind) {
  ExperimentSpec spec;
  spec.kind = kind;
  spec.taus = {0.2};
  spec.modes = {MarginKind::Fixed, MarginKind::EqCo};
  switch (kind) {
    case ExperimentKind::MiSweep:
      // A large temperature keeps the K-negative estimate of the EqCo loss
      // close to its expectation, so small-K runs stay comparable.
      spec.ks = {8, 64, 512};
      spec.alphas = {512.0};
      spec.taus = {2.0};
      spec.critic.loss.tau = 2.0;
      break;
    case ExperimentKind::GradStats:
      spec.ks = {16, 256};
      spec.alphas = {256.0};
      spec.base.neg_source = NegativeSource::Bank;
      spec.base.epochs = 20;
      break;
    case ExperimentKind::KSweep:
      spec.ks = {4, 16, 64, 256};
      spec.alphas = {256.0};
      spec.base.neg_source = NegativeSource::Bank;
      break;
    case ExperimentKind::NSweep:
      // K fixed below the smallest N - 1 so every N sees the same loss.
      // beta 0.99: with 0.999 the key encoder's lag is set by the step count,
      // which differs fourfold across the grid.
      spec.ns = {64, 128, 256};
      spec.base.loss = LossConfig{0.2, FixedMargin{0.0}, 63};
      spec.base.neg_source = NegativeSource::InBatch;
      spec.base.beta = 0.99;
      break;
    case ExperimentKind::TrainOnce:
      spec.base.epochs = 20;
      break;
    case ExperimentKind::Probe:
      spec.checkpoint = "encoder.json";
      break;
  }
  return spec;
}

ExperimentSpec parse_spec(const std::string& json_text, std::optional<ExperimentKind> kind) {
  json doc;
  try {
    doc = json::parse(json_text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  try {
    reject_unknown(doc,
                   {"kind", "seed", "out_dir", "grid", "train", "critic", "data", "probe",
                    "bound_samples"},
                   "config");
    std::optional<ExperimentKind> file_kind;
    if (doc.contains("kind")) file_kind = experiment_kind_from_string(doc.at("kind").get<std::string>());
    if (kind && file_kind && *kind != *file_kind) {
      throw ConfigError(std::string("config is for '") + to_string(*file_kind) +
                        "' but command is '" + to_string(*kind) + "'");
    }
    const auto chosen = kind ? *kind : file_kind;
    if (!chosen) throw ConfigError("config has no 'kind' and no command was given");
    ExperimentSpec spec = default_spec(*chosen);
    if (doc.contains("seed")) {
      if (!doc.at("seed").is_number_unsigned()) throw ConfigError("'seed' must be a non-negative integer");
      spec.seed = doc.at("seed").get<std::uint64_t>();
    }
    read_if(doc, "out_dir", spec.out_dir);
    read_count(doc, "bound_samples", spec.bound_samples);
    if (doc.contains("grid")) read_grid(doc.at("grid"), spec);
    if (doc.contains("train")) read_train(doc.at("train"), spec.base);
    if (doc.contains("critic")) read_critic(doc.at("critic"), spec.critic);
    if (doc.contains("data")) read_data(doc.at("data"), spec.data);
    if (doc.contains("probe")) {
      const json& p = doc.at("probe");
      reject_unknown(p, {"checkpoint", "train_frac"}, "probe");
      read_if(p, "checkpoint", spec.checkpoint);
      read_if(p, "train_frac", spec.probe_train_frac);
    }
    return spec;
  } catch (const json::exception& e) {
    throw ConfigError(std::string("bad config value: ") + e.what());
  }
}

ExperimentSpec load_spec(const std::string& path, std::optional<ExperimentKind> kind) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open config '" + path + "'");
  std::ostringstream text;
  text << in.rdbuf();
  return parse_spec(text.str(), kind);
}

void apply_overrides(ExperimentSpec& spec, const Overrides& o) {
  if (o.seed) spec.seed = *o.seed;
  if (o.out_dir) spec.out_dir = *o.out_dir;
  if (o.checkpoint) spec.checkpoint = *o.checkpoint;
  if (o.k) {
    spec.ks = {*o.k};
    spec.base.loss.k = *o.k;
  }
  if (o.tau) {
    spec.taus = {*o.tau};
    spec.base.loss.tau = *o.tau;
    spec.critic.loss.tau = *o.tau;
  }
  if (o.alpha) spec.alphas = {*o.alpha};
  if (o.margin) spec.margin = *o.margin;
  if (o.margin_mode) spec.modes = {*o.margin_mode};
  if (o.margin_mode || o.alpha || o.margin) {
    const bool eqco = o.margin_mode ? *o.margin_mode == MarginKind::EqCo : spec.base.loss.is_eqco();
    if (eqco) {
      double alpha = spec.base.loss.is_eqco() ? std::get<EqCoMargin>(spec.base.loss.margin).alpha
                                              : static_cast<double>(spec.base.loss.k);
      if (o.alpha) alpha = *o.alpha;
      spec.base.loss.margin = EqCoMargin{alpha};
    } else {
      double m = spec.base.loss.is_eqco() ? 0.0 : std::get<FixedMargin>(spec.base.loss.margin).m;
      if (o.margin) m = *o.margin;
      spec.base.loss.margin = FixedMargin{m};
    }
  }
  if (o.neg_source) spec.base.neg_source = *o.neg_source;
  if (o.epochs) {
    spec.base.epochs = *o.epochs;
    spec.critic.epochs = *o.epochs;
  }
  if (o.n_queries) {
    spec.base.n_queries = *o.n_queries;
    spec.critic.n_queries = *o.n_queries;
    spec.ns = {*o.n_queries};
  }
}

// ---- commands --------------------------------------------------------------

ExperimentOutput cmd_mi_sweep(const ExperimentSpec& spec, std::ostream& log) {
  spec.validate();
  ensure_dir(resolve_out_dir(spec.out_dir));
  ExperimentOutput out;
  out.table = CsvLog(kMiSweepHeader);
  const double mi = true_mi(spec.critic.dist);

  CsvLog chart_fixed({"step", "value", "series"});
  CsvLog chart_eqco({"step", "value", "series"});

  for (const auto& p : expand_grid(spec)) {
    CriticConfig cfg = spec.critic;
    cfg.loss = p.loss();
    cfg.seed = spec.seed;
    const double margin = cfg.loss.effective_margin();
    const double alpha = cfg.loss.effective_alpha();
    SeededRng bound_rng(derive_seed(spec.seed, kBoundStream));
    const McEstimate bound = theoretical_bound_mc(cfg.dist, alpha, spec.bound_samples, bound_rng);

    const CriticResult result = train_critic(cfg);
    CsvLog& chart = p.mode == MarginKind::EqCo ? chart_eqco : chart_fixed;
    bool ok = result.ok;
    for (const auto& e : result.epochs) {
      if (!finite_all({e.loss_nce, e.f_hat_bound})) {
        ok = false;
        break;
      }
      out.table.add_row({format_count(e.step), format_count(e.epoch), format_count(p.k),
                         format_real(alpha), format_real(margin), format_real(e.loss_nce),
                         format_real(e.f_hat_bound), format_real(mi), format_real(bound.mean)});
      chart.add_row({format_count(e.step), format_real(e.f_hat_bound), series_label(p)});
    }
    if (!ok) {
      out.exit_code = 3;
      out.table.add_row({kFailedCell, kFailedCell, format_count(p.k), format_real(alpha),
                         format_real(margin), kFailedCell, kFailedCell, format_real(mi),
                         format_real(bound.mean)});
      log << "mi_sweep " << series_label(p) << " status=numeric_failure " << result.message << "\n";
      continue;
    }
    log << "mi_sweep " << series_label(p) << " tau=" << format_real(p.tau)
        << " margin=" << format_real(margin) << " final_loss=" << format_real(result.final_loss())
        << " f_hat_bound=" << format_real(result.final_f_hat())
        << " theoretical_bound=" << format_real(bound.mean) << " true_mi=" << format_real(mi)
        << "\n";
  }

  // Reference line at the true mutual information on both panels.
  for (CsvLog* chart : {&chart_fixed, &chart_eqco}) {
    chart->add_row({"0", format_real(mi), "true MI"});
    chart->add_row({format_count(spec.critic.epochs * spec.critic.steps_per_epoch - 1),
                    format_real(mi), "true MI"});
  }
  emit_csv(out, spec, "mi_sweep.csv", out.table);
  emit_svg(out, spec, "mi_sweep_fixed.svg", chart_fixed,
           {"Empirical bound, fixed margin", "step", "value", "series", "step",
            "f_hat_bound (nats)"});
  emit_svg(out, spec, "mi_sweep_eqco.svg", chart_eqco,
           {"Empirical bound, EqCo", "step", "value", "series", "step", "f_hat_bound (nats)"});
  return out;
}

ExperimentOutput cmd_grad_stats(const ExperimentSpec& spec, std::ostream& log) {
  spec.validate();
  ensure_dir(resolve_out_dir(spec.out_dir));
  const auto dataset = make_dataset(spec);
  ExperimentOutput out;
  out.table = CsvLog(kGradStatsHeader);
  CsvLog chart({"epoch", "value", "series"});

  for (const auto& p : expand_grid(spec)) {
    const TrainConfig cfg = point_train_config(spec, p);
    const TrainResult result = train(cfg, dataset);
    const auto epochs = summarize_epochs(result.log);
    bool ok = result.status == TrainStatus::Ok;
    for (const auto& e : epochs) {
      if (!finite_all({e.grad_norm_mean, e.grad_norm_var, e.theorem2_bound})) {
        ok = false;
        break;
      }
      out.table.add_row({format_count(e.epoch), format_count(p.k), mode_label(p),
                         format_real(e.grad_norm_mean), format_real(e.grad_norm_var),
                         format_real(e.theorem2_bound)});
      chart.add_row({format_count(e.epoch), format_real(e.grad_norm_mean), series_label(p)});
    }
    if (!ok) {
      out.exit_code = 3;
      out.table.add_row({kFailedCell, format_count(p.k), mode_label(p), kFailedCell, kFailedCell,
                         kFailedCell});
      log << "grad_stats " << series_label(p) << " status=numeric_failure " << result.message
          << "\n";
      continue;
    }
    const auto& last = epochs.back();
    log << "grad_stats " << series_label(p) << " tau=" << format_real(p.tau)
        << " final_grad_norm_mean=" << format_real(last.grad_norm_mean)
        << " final_grad_norm_var=" << format_real(last.grad_norm_var)
        << " theorem2_bound=" << format_real(last.theorem2_bound) << "\n";
  }
  emit_csv(out, spec, "grad_stats.csv", out.table);
  emit_svg(out, spec, "grad_stats.svg", chart,
           {"Gradient norm w.r.t. q", "epoch", "value", "series", "epoch", "mean ||dL/dq||"});
  return out;
}

ExperimentOutput cmd_k_sweep(const ExperimentSpec& spec, std::ostream& log) {
  spec.validate();
  ensure_dir(resolve_out_dir(spec.out_dir));
  const auto dataset = make_dataset(spec);
  ExperimentOutput out;
  out.table = CsvLog(kKSweepHeader);

  for (const auto& p : expand_grid(spec)) {
    const TrainConfig cfg = point_train_config(spec, p);
    const double alpha = cfg.loss.effective_alpha();
    const double margin = cfg.loss.effective_margin();
    const TrainResult result = train(cfg, dataset);
    const auto epochs = summarize_epochs(result.log);
    bool ok = result.status == TrainStatus::Ok && !epochs.empty();
    double acc = 0.0;
    if (ok) {
      ok = finite_all({epochs.back().loss, epochs.back().f_hat_bound});
      if (ok) acc = probe_accuracy(result.encoder, dataset, spec);
    }
    if (!ok) {
      out.exit_code = 3;
      out.table.add_row({format_count(p.k), mode_label(p), format_real(alpha), format_real(margin),
                         kFailedCell, kFailedCell, kFailedCell});
      log << "k_sweep " << series_label(p) << " status=numeric_failure " << result.message << "\n";
      continue;
    }
    out.table.add_row({format_count(p.k), mode_label(p), format_real(alpha), format_real(margin),
                       format_real(epochs.back().loss), format_real(epochs.back().f_hat_bound),
                       format_real(acc)});
    log << "k_sweep " << series_label(p) << " tau=" << format_real(p.tau)
        << " margin=" << format_real(margin) << " final_loss=" << format_real(epochs.back().loss)
        << " f_hat_bound=" << format_real(epochs.back().f_hat_bound)
        << " probe_acc=" << format_real(acc) << "\n";
  }
  emit_csv(out, spec, "k_sweep.csv", out.table);
  emit_svg(out, spec, "k_sweep.svg", out.table,
           {"Linear probe accuracy vs K", "k", "probe_acc", "mode", "K (negatives)",
            "probe accuracy"});
  return out;
}

ExperimentOutput cmd_n_sweep(const ExperimentSpec& spec, std::ostream& log) {
  spec.validate();
  ensure_dir(resolve_out_dir(spec.out_dir));
  const auto dataset = make_dataset(spec);
  ExperimentOutput out;
  out.table = CsvLog(kNSweepHeader);

  auto run_grid = [&](bool scaled, CsvLog& table) {
    for (std::size_t n : spec.ns) {
      TrainConfig cfg = spec.base;
      cfg.n_queries = n;
      cfg.scale_lr = scaled;
      cfg.seed = spec.seed;
      const TrainResult result = train(cfg, dataset);
      const auto epochs = summarize_epochs(result.log);
      bool ok = result.status == TrainStatus::Ok && !epochs.empty() &&
                finite_all({epochs.back().loss});
      const char* tag = scaled ? "scaled" : "unscaled";
      if (!ok) {
        out.exit_code = 3;
        table.add_row({format_count(n), format_real(cfg.peak_lr()), kFailedCell, kFailedCell});
        log << "n_sweep n=" << n << " lr_rule=" << tag << " status=numeric_failure "
            << result.message << "\n";
        continue;
      }
      const double acc = probe_accuracy(result.encoder, dataset, spec);
      table.add_row({format_count(n), format_real(cfg.peak_lr()), format_real(epochs.back().loss),
                     format_real(acc)});
      log << "n_sweep n=" << n << " lr_rule=" << tag << " lr=" << format_real(cfg.peak_lr())
          << " final_loss=" << format_real(epochs.back().loss) << " probe_acc=" << format_real(acc)
          << "\n";
    }
  };

  run_grid(true, out.table);
  emit_csv(out, spec, "n_sweep.csv", out.table);
  if (spec.unscaled_control) {
    CsvLog control(kNSweepHeader);
    run_grid(false, control);
    emit_csv(out, spec, "n_sweep_unscaled.csv", control);
    out.extra_tables.emplace_back("n_sweep_unscaled.csv", std::move(control));
  }
  return out;
}

ExperimentOutput cmd_train_once(const ExperimentSpec& spec, std::ostream& log) {
  spec.validate();
  ensure_dir(resolve_out_dir(spec.out_dir));
  const auto dataset = make_dataset(spec);
  TrainConfig cfg = spec.base;
  cfg.seed = spec.seed;
  const TrainResult result = train(cfg, dataset);

  ExperimentOutput out;
  out.table = CsvLog(kTrainLogHeader);
  for (const auto& r : result.log) {
    if (r.skipped) {
      out.table.add_row({format_count(r.step), format_count(r.epoch), "1", format_real(r.lr), "", "",
                         "", "", ""});
      continue;
    }
    if (!finite_all({r.loss, r.f_hat_bound, r.grad_norm_mean, r.grad_norm_var, r.theorem2_bound})) {
      break;
    }
    out.table.add_row({format_count(r.step), format_count(r.epoch), "0", format_real(r.lr),
                       format_real(r.loss), format_real(r.f_hat_bound),
                       format_real(r.grad_norm_mean), format_real(r.grad_norm_var),
                       format_real(r.theorem2_bound)});
  }
  if (result.status != TrainStatus::Ok) {
    out.exit_code = 3;
    out.table.add_row({format_count(result.last_good_step), kFailedCell, kFailedCell, kFailedCell,
                       kFailedCell, kFailedCell, kFailedCell, kFailedCell, kFailedCell});
    log << "train_once status=numeric_failure last_good_step=" << result.last_good_step << " "
        << result.message << "\n";
  }
  emit_csv(out, spec, "train_log.csv", out.table);
  emit_svg(out, spec, "train_log.svg", out.table,
           {"Training loss", "step", "loss", "", "step", "loss (nats)"});
  if (result.status == TrainStatus::Ok) {
    const std::string ckpt = join_path(resolve_out_dir(spec.out_dir), "encoder.json");
    save_checkpoint(result.encoder, ckpt);
    out.files.push_back(ckpt);
    const auto epochs = summarize_epochs(result.log);
    log << "train_once k=" << cfg.loss.k << " neg_source=" << to_string(cfg.neg_source)
        << " margin=" << format_real(cfg.loss.effective_margin())
        << " final_loss=" << format_real(epochs.empty() ? 0.0 : epochs.back().loss)
        << " checkpoint=" << ckpt << "\n";
  }
  return out;
}

ExperimentOutput cmd_probe(const ExperimentSpec& spec, std::ostream& log) {
  spec.validate();
  ensure_dir(resolve_out_dir(spec.out_dir));
  const MlpParams encoder = load_checkpoint(spec.checkpoint);
  if (encoder.input_dim() != spec.data.latent_dim) {
    throw ConfigError("checkpoint input dimension does not match data.latent_dim");
  }
  const auto dataset = make_dataset(spec);
  const double acc = probe_accuracy(encoder, dataset, spec);
  ExperimentOutput out;
  out.table = CsvLog(kProbeHeader);
  out.table.add_row({spec.checkpoint, format_count(dataset.instances.size()), format_real(acc)});
  emit_csv(out, spec, "probe.csv", out.table);
  log << "probe checkpoint=" << spec.checkpoint << " probe_acc=" << format_real(acc) << "\n";
  return out;
}

ExperimentOutput run_experiment(const ExperimentSpec& spec, std::ostream& log) {
  switch (spec.kind) {
    case ExperimentKind::MiSweep: return cmd_mi_sweep(spec, log);
    case ExperimentKind::GradStats: return cmd_grad_stats(spec, log);
    case ExperimentKind::KSweep: return cmd_k_sweep(spec, log);
    case ExperimentKind::NSweep: return cmd_n_sweep(spec, log);
    case ExperimentKind::TrainOnce: return cmd_train_once(spec, log);
    case ExperimentKind::Probe: return cmd_probe(spec, log);
  }
  throw ConfigError("unknown experiment kind");
}

}  // namespace eqco
