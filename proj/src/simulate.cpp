#include "dice/simulate.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <sstream>

#include "dice/errors.hpp"
#include "dice/parallel.hpp"
#include "dice/stats.hpp"

namespace dice {

using Eigen::MatrixXd;
using Eigen::VectorXd;

void SimConfig::validate() const {
  if (n < 10) throw ConfigError("simulation.n must be >= 10");
  if (feature_dim < 1) throw ConfigError("simulation.feature_dim must be >= 1");
  if (latent_dim < 1) throw ConfigError("simulation.latent_dim must be >= 1");
  if (tau_grid.empty()) throw ConfigError("simulation.tau_grid must be non-empty");
  if (reps_per_tau < 1) throw ConfigError("simulation.reps_per_tau must be >= 1");
  if (!(leakage_strength >= 0.0)) throw ConfigError("simulation.leakage_strength must be >= 0");
  if (!(snr > 0.0)) throw ConfigError("simulation.snr must be > 0");
  if (!(treated_frac_target > 0.0 && treated_frac_target < 1.0))
    throw ConfigError("simulation.treated_frac_target must lie in (0,1)");
  if (!(artifact_noise_std >= 0.0)) throw ConfigError("simulation.artifact_noise_std must be >= 0");
  if (leak_dim < 1 || leak_dim > latent_dim || leak_dim > feature_dim)
    throw ConfigError("simulation.leak_dim must lie in [1, min(latent_dim, feature_dim)]");
  if (!(leak_mix_norm >= 0.0)) throw ConfigError("simulation.leak_mix_norm must be >= 0");
  if (!(leak_mix_spread >= 0.0)) throw ConfigError("simulation.leak_mix_spread must be >= 0");
  if (!(base_noise_std >= 0.0)) throw ConfigError("simulation.base_noise_std must be >= 0");
}

nlohmann::json to_json(const SimConfig& c) {
  return {{"n", c.n},
          {"feature_dim", c.feature_dim},
          {"latent_dim", c.latent_dim},
          {"tau_grid", c.tau_grid},
          {"reps_per_tau", c.reps_per_tau},
          {"leakage_strength", c.leakage_strength},
          {"snr", c.snr},
          {"treated_frac_target", c.treated_frac_target},
          {"artifact_noise_std", c.artifact_noise_std},
          {"leak_dim", c.leak_dim},
          {"leak_mix_norm", c.leak_mix_norm},
          {"leak_mix_spread", c.leak_mix_spread},
          {"confounding_strength", c.confounding_strength},
          {"base_noise_std", c.base_noise_std},
          {"seed", c.seed}};
}

namespace {

template <class T>
T typed(const nlohmann::json& v, const std::string& path) {
  try {
    return v.get<T>();
  } catch (const nlohmann::json::exception&) {
    throw ConfigError(path + ": wrong type");
  }
}

double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

MatrixXd normal_matrix(SeededRng& rng, Eigen::Index r, Eigen::Index c) {
  MatrixXd m(r, c);
  for (Eigen::Index i = 0; i < r; ++i)
    for (Eigen::Index j = 0; j < c; ++j) m(i, j) = rng.normal();
  return m;
}

FeatureMatrix to_fm(const MatrixXd& m) {
  std::vector<double> v(m.size());
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index j = 0; j < m.cols(); ++j) v[i * m.cols() + j] = m(i, j);
  return FeatureMatrix::from_double(m.rows(), m.cols(), v);
}

// structural pieces shared by every replication of one config
struct Structure {
  MatrixXd Wf;    // k x d
  VectorXd wt;    // k
  MatrixXd U;     // d x leak_dim, orthonormal, inside the row space of Wf
  MatrixXd Bmix;  // k x leak_dim
};

Structure make_structure(const SimConfig& c) {
  SeededRng rng = SeededRng(c.seed).derive("structure");
  const auto k = static_cast<Eigen::Index>(c.latent_dim);
  const auto d = static_cast<Eigen::Index>(c.feature_dim);
  const auto q = static_cast<Eigen::Index>(c.leak_dim);
  Structure s;
  s.Wf = normal_matrix(rng, k, d) / std::sqrt(static_cast<double>(k));
  s.wt = normal_matrix(rng, k, 1).col(0);
  s.wt /= s.wt.norm();
  MatrixXd A = s.Wf.transpose() * normal_matrix(rng, k, q);
  Eigen::HouseholderQR<MatrixXd> qr(A);
  s.U = qr.householderQ() * MatrixXd::Identity(d, q);
  s.Bmix = c.leak_mix_spread * normal_matrix(rng, k, q);
  return s;
}

void standardize_col(VectorXd& v) {
  double m = v.mean();
  v.array() -= m;
  double sd = std::sqrt(v.squaredNorm() / static_cast<double>(v.size()));
  if (sd > 0) v /= sd;
}

}  // namespace

SimConfig sim_config_from_json(const nlohmann::json& j, const std::string& path) {
  if (!j.is_object()) throw ConfigError(path + ": expected object");
  SimConfig c;
  for (auto it = j.begin(); it != j.end(); ++it) {
    const std::string& k = it.key();
    const std::string p = path + "." + k;
    const auto& v = it.value();
    if (k == "n") c.n = typed<size_t>(v, p);
    else if (k == "feature_dim") c.feature_dim = typed<size_t>(v, p);
    else if (k == "latent_dim") c.latent_dim = typed<size_t>(v, p);
    else if (k == "tau_grid") c.tau_grid = typed<std::vector<double>>(v, p);
    else if (k == "reps_per_tau") c.reps_per_tau = typed<int>(v, p);
    else if (k == "leakage_strength") c.leakage_strength = typed<double>(v, p);
    else if (k == "snr") c.snr = typed<double>(v, p);
    else if (k == "treated_frac_target") c.treated_frac_target = typed<double>(v, p);
    else if (k == "artifact_noise_std") c.artifact_noise_std = typed<double>(v, p);
    else if (k == "leak_dim") c.leak_dim = typed<size_t>(v, p);
    else if (k == "leak_mix_norm") c.leak_mix_norm = typed<double>(v, p);
    else if (k == "leak_mix_spread") c.leak_mix_spread = typed<double>(v, p);
    else if (k == "confounding_strength") c.confounding_strength = typed<double>(v, p);
    else if (k == "base_noise_std") c.base_noise_std = typed<double>(v, p);
    else if (k == "seed") c.seed = typed<uint64_t>(v, p);
    else throw ConfigError(p + ": unknown field");
  }
  try {
    c.validate();
  } catch (const ConfigError& e) {
    throw ConfigError(path + ": " + e.what());
  }
  return c;
}

SimDataset generate(const SimConfig& c, double tau, uint64_t rep_seed) {
  c.validate();
  const Structure st = make_structure(c);
  SeededRng rng(rep_seed);
  const auto n = static_cast<Eigen::Index>(c.n);
  const auto d = static_cast<Eigen::Index>(c.feature_dim);
  const auto q = static_cast<Eigen::Index>(c.leak_dim);

  MatrixXd u = normal_matrix(rng, n, static_cast<Eigen::Index>(c.latent_dim));
  MatrixXd zb = (u * st.Wf).array().tanh().matrix() + c.base_noise_std * normal_matrix(rng, n, d);

  VectorXd idx = c.confounding_strength * (u * st.wt);
  double lo = -30.0, hi = 30.0;
  for (int it = 0; it < 50; ++it) {
    double mid = 0.5 * (lo + hi);
    double m = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) m += sigmoid(mid + idx(i));
    m /= static_cast<double>(n);
    if (m > c.treated_frac_target) hi = mid;
    else lo = mid;
  }
  const double c0 = 0.5 * (lo + hi);
  std::vector<double> p(n), t(n);
  double pm = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    p[i] = sigmoid(c0 + idx(i));
    pm += p[i];
  }
  pm /= static_cast<double>(n);
  if (std::fabs(pm - c.treated_frac_target) > 0.01)
    throw NumericalError("generate: intercept calibration failed after 50 bisection steps (mean p=" +
                         std::to_string(pm) + ")");
  for (Eigen::Index i = 0; i < n; ++i) t[i] = rng.bernoulli(p[i]) ? 1.0 : 0.0;

  // per-sample mixing weights within the leakage subspace
  MatrixXd wmix = (u * st.Bmix).rowwise() + VectorXd::Constant(q, 1.0 / std::sqrt(double(q))).transpose();
  wmix *= c.leak_mix_norm;
  MatrixXd leak = wmix * st.U.transpose();  // n x d
  MatrixXd art = c.artifact_noise_std > 0 ? (c.artifact_noise_std * normal_matrix(rng, n, d)).eval()
                                          : MatrixXd::Zero(n, d);
  MatrixXd zl = zb, zc = zb;
  for (Eigen::Index i = 0; i < n; ++i) {
    const double sgn = 2.0 * t[i] - 1.0;
    zl.row(i) += c.leakage_strength * sgn * leak.row(i);
    zc.row(i) -= c.leakage_strength * sgn * leak.row(i);
  }
  zc += art;

  // outcome surface drawn per replication
  MatrixXd R = normal_matrix(rng, d, 4);
  VectorXd coef = normal_matrix(rng, 8, 1).col(0);
  MatrixXd S = zb * R;
  for (int j = 0; j < 4; ++j) {
    VectorXd col = S.col(j);
    standardize_col(col);
    S.col(j) = col;
  }
  MatrixXd B(n, 8);
  for (Eigen::Index i = 0; i < n; ++i) {
    double s0 = S(i, 0), s1 = S(i, 1), s2 = S(i, 2), s3 = S(i, 3);
    B(i, 0) = std::tanh(s0);
    B(i, 1) = std::sin(s1);
    B(i, 2) = s2 * s2;
    B(i, 3) = std::max(s3, 0.0);
    B(i, 4) = s0 * s1;
    B(i, 5) = s1 * s2;
    B(i, 6) = s2 * s3;
    B(i, 7) = s3 * s0;
  }
  VectorXd g = B * coef;
  standardize_col(g);
  g *= c.snr;  // std(eps) = 1
  VectorXd eps = normal_matrix(rng, n, 1).col(0);
  VectorXd ge = g + eps;
  double gm = ge.mean();
  double sc = std::sqrt((ge.array() - gm).square().mean());
  g /= sc;
  eps /= sc;

  SimDataset out;
  out.tau_true = tau;
  out.t = t;
  out.propensity = p;
  out.y.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) out.y[i] = tau * t[i] + g(i) + eps(i);
  out.z_leaky = to_fm(zl);
  out.z_cf = to_fm(zc);
  out.z_base = to_fm(zb);
  out.u = to_fm(u);
  out.leak = to_fm(leak);
  return out;
}

std::string method_name(Method m) {
  switch (m) {
    case Method::naive_ols: return "naive_ols";
    case Method::dml_original: return "dml_original";
    case Method::dml_dice: return "dml_dice";
    case Method::dml_oracle: return "dml_oracle";
  }
  return "?";
}

Method method_from_name(const std::string& s) {
  if (s == "naive_ols" || s == "naive") return Method::naive_ols;
  if (s == "dml_original" || s == "original") return Method::dml_original;
  if (s == "dml_dice" || s == "dice") return Method::dml_dice;
  if (s == "dml_oracle" || s == "oracle") return Method::dml_oracle;
  throw ConfigError("unknown method '" + s + "'");
}

CellRecord estimate_cell(const SimDataset& data, Method m, const GridOptions& opt, uint64_t seed) {
  CellRecord r;
  r.tau = data.tau_true;
  r.method = method_name(m);
  SeededRng rng(seed);
  try {
    DmlEstimate e;
    switch (m) {
      case Method::naive_ols: e = naive_ols(data.t, data.y); break;
      case Method::dml_original:
        e = run_dml(data.z_leaky, data.t, data.y, opt.learner, opt.folds, rng.derive("dml").seed());
        break;
      case Method::dml_oracle:
        e = run_dml(data.z_base, data.t, data.y, opt.learner, opt.folds, rng.derive("dml").seed());
        break;
      case Method::dml_dice: {
        EncoderConfig ec = opt.encoder;
        ec.input_dim = data.z_leaky.cols();
        ec.seed = rng.derive("encoder").seed();
        PairedDataset pd{data.z_leaky, data.z_cf, data.t, data.y};
        TrainResult tr = train(ec, pd);
        FeatureMatrix zc = extract_clean(tr.state, data.z_leaky, data.z_cf, ec.alpha_proj);
        r.delta_norm = tr.log.rows.back().clean_delta_norm;
        e = run_dml(zc, data.t, data.y, opt.learner, opt.folds, rng.derive("dml").seed());
        break;
      }
    }
    r.tau_hat = e.tau_hat;
    r.se = e.se;
    r.bias = e.tau_hat - data.tau_true;
    r.y_r2 = e.y_r2;
    r.t_r2 = e.t_r2;
  } catch (const Error& ex) {
    r.ok = false;
    r.error = ex.what();
  }
  return r;
}

std::vector<MethodAggregate> aggregate(const std::vector<CellRecord>& records,
                                       const std::vector<Method>& methods) {
  std::vector<double> taus;
  for (const auto& r : records)
    if (std::find(taus.begin(), taus.end(), r.tau) == taus.end()) taus.push_back(r.tau);
  std::sort(taus.begin(), taus.end());
  std::vector<MethodAggregate> out;
  for (Method m : methods) {
    MethodAggregate a;
    a.method = method_name(m);
    a.tau = taus;
    for (double tv : taus) {
      std::vector<double> b;
      for (const auto& r : records) {
        if (r.method != a.method || r.tau != tv) continue;
        if (!r.ok) continue;
        b.push_back(r.bias);
      }
      double mb = 0.0, ms = 0.0, vr = 0.0;
      if (!b.empty()) {
        for (double x : b) {
          mb += x;
          ms += x * x;
        }
        mb /= static_cast<double>(b.size());
        ms /= static_cast<double>(b.size());
        for (double x : b) vr += (x - mb) * (x - mb);
        vr /= static_cast<double>(b.size());
      }
      a.mean_bias.push_back(b.empty() ? std::nan("") : mb);
      a.rmse.push_back(b.empty() ? std::nan("") : std::sqrt(ms));
      a.var.push_back(b.empty() ? std::nan("") : vr);
      a.count.push_back(static_cast<int>(b.size()));
    }
    for (const auto& r : records)
      if (r.method == a.method && !r.ok) ++a.failed;
    double sb = 0.0, sr = 0.0;
    int k = 0;
    for (size_t i = 0; i < taus.size(); ++i) {
      if (a.count[i] == 0) continue;
      sb += std::fabs(a.mean_bias[i]);
      sr += a.rmse[i];
      ++k;
    }
    a.avg_abs_bias = k ? sb / k : std::nan("");
    a.avg_rmse = k ? sr / k : std::nan("");
    out.push_back(std::move(a));
  }
  const MethodAggregate* base = nullptr;
  for (const auto& a : out)
    if (a.method == "dml_original") base = &a;
  for (auto& a : out)
    a.rmse_reduction_pct = base && base->avg_rmse > 0 ? 100.0 * (1.0 - a.avg_rmse / base->avg_rmse)
                                                      : std::nan("");
  return out;
}

SimulationReport run_grid(const SimConfig& config, const GridOptions& opt) {
  config.validate();
  SeededRng root(config.seed);
  struct Cell {
    size_t ti;
    int rep;
  };
  std::vector<Cell> cells;
  for (size_t ti = 0; ti < config.tau_grid.size(); ++ti)
    for (int r = 0; r < config.reps_per_tau; ++r) cells.push_back({ti, r});
  const size_t nm = opt.methods.size();
  std::vector<CellRecord> recs(cells.size() * nm);
  parallel_for(cells.size(), [&](size_t ci) {
    const Cell& c = cells[ci];
    SeededRng cr = root.derive("cell", c.ti * 1000003ull + static_cast<uint64_t>(c.rep));
    const double tau = config.tau_grid[c.ti];
    std::vector<CellRecord> local;
    try {
      SimDataset data = generate(config, tau, cr.derive("data").seed());
      for (size_t k = 0; k < nm; ++k)
        recs[ci * nm + k] = estimate_cell(data, opt.methods[k], opt, cr.derive("estimate", k).seed());
    } catch (const Error& ex) {
      for (size_t k = 0; k < nm; ++k) {
        CellRecord r;
        r.method = method_name(opt.methods[k]);
        r.ok = false;
        r.error = ex.what();
        recs[ci * nm + k] = r;
      }
    }
    for (size_t k = 0; k < nm; ++k) {
      recs[ci * nm + k].tau = tau;
      recs[ci * nm + k].rep = c.rep;
    }
  });
  SimulationReport rep;
  rep.records = std::move(recs);
  rep.aggregates = aggregate(rep.records, opt.methods);
  return rep;
}

const MethodAggregate* SimulationReport::find(const std::string& m) const {
  for (const auto& a : aggregates)
    if (a.method == m) return &a;
  return nullptr;
}

namespace {

std::string fmt(double v) {
  if (!std::isfinite(v)) return "nan";
  char b[40];
  std::snprintf(b, sizeof b, "%.10g", v);
  return b;
}

nlohmann::json jnum(double v) {
  if (std::isfinite(v)) return v;
  return nullptr;
}

std::string csv_escape(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string o = "\"";
  for (char c : s) {
    if (c == '"') o += "\"\"";
    else if (c == '\n') o += ' ';
    else o += c;
  }
  return o + "\"";
}

}  // namespace

std::string SimulationReport::to_csv() const {
  std::string s = "tau,rep,method,tau_hat,se,bias,y_r2,t_r2,delta_norm,status,error\n";
  for (const auto& r : records) {
    s += fmt(r.tau) + "," + std::to_string(r.rep) + "," + r.method + "," + fmt(r.tau_hat) + "," +
         fmt(r.se) + "," + fmt(r.bias) + "," + fmt(r.y_r2) + "," + fmt(r.t_r2) + "," +
         fmt(r.delta_norm) + "," + (r.ok ? "ok" : "failed") + "," + csv_escape(r.error) + "\n";
  }
  return s;
}

nlohmann::json SimulationReport::aggregate_json() const {
  nlohmann::json methods = nlohmann::json::object();
  for (const auto& a : aggregates) {
    nlohmann::json per = nlohmann::json::array();
    for (size_t i = 0; i < a.tau.size(); ++i)
      per.push_back({{"tau", a.tau[i]}, {"mean_bias", jnum(a.mean_bias[i])},
                     {"rmse", jnum(a.rmse[i])}, {"variance", jnum(a.var[i])}, {"count", a.count[i]}});
    methods[a.method] = {{"avg_abs_bias", jnum(a.avg_abs_bias)},
                         {"avg_rmse", jnum(a.avg_rmse)},
                         {"rmse_reduction_pct", jnum(a.rmse_reduction_pct)},
                         {"failed_cells", a.failed},
                         {"per_tau", per}};
  }
  return {{"methods", methods}, {"cells", records.size()}};
}

TstatSummary summarize_tstats(const std::string& method, const std::vector<CellRecord>& recs) {
  TstatSummary s;
  s.method = method;
  for (const auto& r : recs) {
    if (r.method != method) continue;
    if (!r.ok || !(r.se > 0.0) || !std::isfinite(r.tau_hat)) {
      ++s.invalid;
      continue;
    }
    s.tstats.push_back(r.bias / r.se);
  }
  if (s.tstats.size() >= 2) {
    s.std = sample_std(s.tstats);
    int in = 0;
    for (double z : s.tstats)
      if (std::fabs(z) <= 1.959963984540054) ++in;
    s.frac_within_196 = static_cast<double>(in) / static_cast<double>(s.tstats.size());
  } else {
    s.std = std::nan("");
    s.frac_within_196 = std::nan("");
  }
  return s;
}

TstatReport tstat_study(const SimConfig& config, int reps, const GridOptions& opt) {
  config.validate();
  if (reps < 100) throw ConfigError("tstats: reps must be >= 100");
  SeededRng root = SeededRng(config.seed).derive("tstat");
  const size_t nm = opt.methods.size();
  std::vector<CellRecord> recs(static_cast<size_t>(reps) * nm);
  parallel_for(static_cast<size_t>(reps), [&](size_t r) {
    SeededRng cr = root.derive("rep", r);
    try {
      SimDataset data = generate(config, 0.0, cr.derive("data").seed());
      for (size_t k = 0; k < nm; ++k)
        recs[r * nm + k] = estimate_cell(data, opt.methods[k], opt, cr.derive("estimate", k).seed());
    } catch (const Error& ex) {
      for (size_t k = 0; k < nm; ++k) {
        recs[r * nm + k].method = method_name(opt.methods[k]);
        recs[r * nm + k].ok = false;
        recs[r * nm + k].error = ex.what();
      }
    }
    for (size_t k = 0; k < nm; ++k) recs[r * nm + k].rep = static_cast<int>(r);
  });
  TstatReport rep;
  rep.records = std::move(recs);
  for (Method m : opt.methods) rep.summaries.push_back(summarize_tstats(method_name(m), rep.records));
  return rep;
}

const TstatSummary* TstatReport::find(const std::string& m) const {
  for (const auto& s : summaries)
    if (s.method == m) return &s;
  return nullptr;
}

std::string TstatReport::samples_csv() const {
  std::string s = "rep,method,tau_hat,se,tstat,status\n";
  for (const auto& r : records) {
    bool valid = r.ok && r.se > 0.0;
    s += std::to_string(r.rep) + "," + r.method + "," + fmt(r.tau_hat) + "," + fmt(r.se) + "," +
         (valid ? fmt(r.bias / r.se) : std::string("nan")) + "," + (valid ? "ok" : "invalid") + "\n";
  }
  return s;
}

nlohmann::json TstatReport::summary_json() const {
  nlohmann::json o = nlohmann::json::object();
  for (const auto& s : summaries)
    o[s.method] = {{"std", jnum(s.std)},
                   {"frac_within_1_96", jnum(s.frac_within_196)},
                   {"nominal", 0.95},
                   {"samples", s.tstats.size()},
                   {"invalid", s.invalid}};
  return {{"methods", o}};
}

std::vector<AblationRow> ablation(const SimConfig& config, const AblationOptions& opt) {
  config.validate();
  struct Variant {
    const char* name;
    bool adv, proj;
  };
  const Variant variants[] = {{"projection_only", false, true},
                              {"adversarial_only", true, false},
                              {"baseline", false, false},
                              {"full", true, true}};
  SeededRng root = SeededRng(config.seed).derive("ablation");
  std::vector<AblationRow> rows;
  std::vector<SimDataset> datasets;
  for (int r = 0; r < opt.reps; ++r)
    datasets.push_back(generate(config, opt.tau, root.derive("data", r).seed()));
  for (const auto& v : variants) {
    AblationRow row;
    row.configuration = v.name;
    double se2 = 0.0;
    for (int r = 0; r < opt.reps; ++r) {
      const SimDataset& data = datasets[r];
      SeededRng cr = root.derive("rep", r);
      EncoderConfig ec = opt.encoder;
      ec.input_dim = data.z_leaky.cols();
      ec.seed = cr.derive("encoder").seed();
      if (!v.adv) ec.loss_weights.adv = 0.0;
      if (!v.proj) ec.alpha_proj = 0.0;
      TrainResult tr = train(ec, PairedDataset{data.z_leaky, data.z_cf, data.t, data.y});
      FeatureMatrix zc = extract_clean(tr.state, data.z_leaky, data.z_cf, ec.alpha_proj);
      DeltaNorms dn = delta_norms(tr.state, data.z_leaky, data.z_cf, ec.alpha_proj);
      DmlEstimate e = run_dml(zc, data.t, data.y, opt.learner, opt.folds, cr.derive("dml").seed());
      double b = e.tau_hat - data.tau_true;
      se2 += b * b;
      row.y_r2 += e.y_r2;
      row.t_r2 += e.t_r2;
      row.mean_delta_norm += dn.clean;
      row.raw_delta_norm += dn.raw;
    }
    const double k = static_cast<double>(opt.reps);
    row.rmse = std::sqrt(se2 / k);
    row.y_r2 /= k;
    row.t_r2 /= k;
    row.mean_delta_norm /= k;
    row.raw_delta_norm /= k;
    row.reps = opt.reps;
    rows.push_back(row);
  }
  return rows;
}

std::string ablation_csv(const std::vector<AblationRow>& rows) {
  std::string s = "configuration,rmse,y_r2,t_r2,mean_delta_norm,raw_delta_norm,reps\n";
  for (const auto& r : rows)
    s += r.configuration + "," + fmt(r.rmse) + "," + fmt(r.y_r2) + "," + fmt(r.t_r2) + "," +
         fmt(r.mean_delta_norm) + "," + fmt(r.raw_delta_norm) + "," + std::to_string(r.reps) + "\n";
  return s;
}

nlohmann::json ablation_json(const std::vector<AblationRow>& rows) {
  nlohmann::json a = nlohmann::json::array();
  for (const auto& r : rows)
    a.push_back({{"configuration", r.configuration}, {"rmse", jnum(r.rmse)}, {"y_r2", jnum(r.y_r2)},
                 {"t_r2", jnum(r.t_r2)}, {"mean_delta_norm", jnum(r.mean_delta_norm)},
                 {"raw_delta_norm", jnum(r.raw_delta_norm)}, {"reps", r.reps}});
  return a;
}

}  // namespace dice
