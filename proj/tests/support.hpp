#pragma once

// Independent reference implementations used as test oracles. They are
// deliberately naive (long double, direct sums) and share no code with the
// library's loss routines.

#include <cmath>
#include <cstddef>
#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include "eqco/infonce.hpp"
#include "eqco/math.hpp"

namespace eqco::testing {

inline RealVec random_unit(SeededRng& rng, std::size_t dim) {
  RealVec v(static_cast<Eigen::Index>(dim));
  for (auto& x : v) x = rng.normal();
  return v / v.norm();
}

inline QueryInstance random_instance(SeededRng& rng, std::size_t dim, std::size_t k) {
  QueryInstance inst;
  inst.q = random_unit(rng, dim);
  inst.k0 = random_unit(rng, dim);
  for (std::size_t i = 0; i < k; ++i) inst.negs.push_back(random_unit(rng, dim));
  return inst;
}

/// -ln( e^{(q.k0 - m)/tau} / (e^{(q.k0 - m)/tau} + w * sum e^{q.k_i/tau}) ), evaluated
/// directly in long double. Arguments need not be unit vectors.
inline double naive_loss(const RealVec& q, const RealVec& k0, const std::vector<RealVec>& negs,
                         double tau, double m, double w = 1.0) {
  long double pos = 0.0L;
  for (Eigen::Index i = 0; i < q.size(); ++i) pos += static_cast<long double>(q[i]) * k0[i];
  const long double pos_logit = (pos - m) / tau;
  long double denom = std::exp(pos_logit);
  for (const auto& n : negs) {
    long double s = 0.0L;
    for (Eigen::Index i = 0; i < q.size(); ++i) s += static_cast<long double>(q[i]) * n[i];
    denom += static_cast<long double>(w) * std::exp(s / tau);
  }
  return static_cast<double>(std::log(denom) - pos_logit);
}

inline double naive_loss(const QueryInstance& inst, const LossConfig& cfg) {
  if (cfg.is_eqco()) {
    const double alpha = std::get<EqCoMargin>(cfg.margin).alpha;
    return naive_loss(inst.q, inst.k0, inst.negs, cfg.tau, 0.0,
                      alpha / static_cast<double>(cfg.k));
  }
  return naive_loss(inst.q, inst.k0, inst.negs, cfg.tau, std::get<FixedMargin>(cfg.margin).m);
}

/// Central difference gradient of f at x with step h.
inline RealVec fd_gradient(const std::function<double(const RealVec&)>& f, const RealVec& x,
                           double h = 1e-6) {
  RealVec g(x.size());
  RealVec xp = x;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    const double orig = xp[i];
    xp[i] = orig + h;
    const double fp = f(xp);
    xp[i] = orig - h;
    const double fm = f(xp);
    xp[i] = orig;
    g[i] = (fp - fm) / (2.0 * h);
  }
  return g;
}

/// ||a - b|| / max(1, ||b||).
inline double rel_error(const RealVec& analytic, const RealVec& reference) {
  return (analytic - reference).norm() / std::max(1.0, reference.norm());
}

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

/// Fresh empty directory under the system temp dir.
inline std::string temp_dir(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / ("eqco_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir.string();
}

}  // namespace eqco::testing
