#include <cmath>

#include "dice/dml.hpp"
#include "dice/errors.hpp"
#include "dice/simulate.hpp"
#include "dice/stats.hpp"
#include "doctest.h"

using namespace dice;

namespace {

SimConfig small_config() {
  SimConfig c;
  c.n = 600;
  c.feature_dim = 32;
  c.seed = 1;
  return c;
}

GridOptions fast_options() {
  GridOptions o;
  o.learner = learner_preset("rf");
  o.learner.trees = 10;
  o.encoder.hidden_dims = {32, 16};
  o.encoder.epochs = 3;
  o.encoder.lr = 1e-3;
  o.encoder.log_eval = false;
  return o;
}

double ridge_oof_r2(const FeatureMatrix& x, const std::vector<double>& t) {
  auto plan = make_folds(t.size(), t, 5, SeededRng(3));
  auto p = crossfit_predictions(x, t, t, learner_preset("ridge"), plan);
  return r2_score(t, p.y_hat);
}

}  // namespace

TEST_CASE("config json round trip and validation") {
  SimConfig c;
  auto j = to_json(c);
  CHECK(to_json(sim_config_from_json(j)) == j);
  j["reps_per_tau"] = 0;
  CHECK_THROWS_AS(sim_config_from_json(j), ConfigError);
  auto k = to_json(c);
  k["treated_frac_target"] = 1.5;
  CHECK_THROWS_AS(sim_config_from_json(k), ConfigError);
  auto u = to_json(c);
  u["extra"] = 1;
  try {
    sim_config_from_json(u, "$.simulation");
    FAIL("expected throw");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("$.simulation.extra") != std::string::npos);
  }
  CHECK(method_from_name("dice") == Method::dml_dice);
  CHECK_THROWS_AS(method_from_name("lasso"), ConfigError);
}

TEST_CASE("generate is bitwise reproducible") {
  auto c = small_config();
  auto a = generate(c, 0.1, 42), b = generate(c, 0.1, 42), d = generate(c, 0.1, 43);
  CHECK(a.z_leaky.data() == b.z_leaky.data());
  CHECK(a.z_cf.data() == b.z_cf.data());
  CHECK(a.y == b.y);
  CHECK(a.t == b.t);
  CHECK(a.y != d.y);
}

TEST_CASE("treated share at defaults") {
  SimConfig c;
  for (uint64_t s = 0; s < 3; ++s) {
    auto d = generate(c, 0.0, s);
    double m = mean(d.t);
    CHECK(m >= 0.17);
    CHECK(m <= 0.21);
    CHECK(d.z_leaky.rows() == 5000);
    CHECK(d.z_leaky.cols() == 256);
  }
}

TEST_CASE("paired difference is exactly the injected leakage") {
  auto c = small_config();
  c.artifact_noise_std = 0.0;
  auto d = generate(c, 0.0, 7);
  for (size_t i = 0; i < 10; ++i) {
    double diff = 0, leak = 0;
    for (size_t j = 0; j < c.feature_dim; ++j) {
      double e = double(d.z_leaky(i, j)) - double(d.z_cf(i, j));
      diff += e * e;
      leak += double(d.leak(i, j)) * double(d.leak(i, j));
    }
    CHECK(std::sqrt(diff) == doctest::Approx(2 * c.leakage_strength * std::sqrt(leak)).epsilon(1e-5));
  }
}

TEST_CASE("outcome is calibrated in effect-size units") {
  SimConfig c;
  c.feature_dim = 64;
  auto d = generate(c, 0.3, 11);
  std::vector<double> y0;
  for (size_t i = 0; i < d.y.size(); ++i)
    if (d.t[i] == 0) y0.push_back(d.y[i]);
  CHECK(std::fabs(sample_std(y0) - 1.0) <= 0.03);
}

TEST_CASE("leakage is detectable beyond confounding") {
  SimConfig c;
  auto d = generate(c, 0.0, 5);
  double leaky = ridge_oof_r2(d.z_leaky, d.t), base = ridge_oof_r2(d.z_base, d.t);
  CHECK(leaky >= 0.15);
  CHECK(base < leaky);
}

TEST_CASE("null unconfounded design: estimates cover zero") {
  auto c = small_config();
  c.n = 1000;
  c.leakage_strength = 0.0;
  c.confounding_strength = 0.0;
  auto o = fast_options();
  int covered = 0;
  for (uint64_t s = 0; s < 20; ++s) {
    auto d = generate(c, 0.0, 100 + s);
    auto r = estimate_cell(d, Method::naive_ols, o, s);
    covered += std::fabs(r.tau_hat) <= 2 * r.se;
  }
  CHECK(covered >= 18);
}

TEST_CASE("naive estimates are materially confounded") {
  SimConfig c;
  c.feature_dim = 32;
  c.confounding_strength = 4.0;
  auto o = fast_options();
  int biased = 0;
  for (uint64_t s = 0; s < 10; ++s) {
    auto d = generate(c, 0.3, 200 + s);
    auto r = estimate_cell(d, Method::naive_ols, o, s);
    biased += std::fabs(r.bias) > 2 * r.se;
  }
  // outcome surface is redrawn per replication, so some reps are weakly confounded
  CHECK(biased >= 6);
}

TEST_CASE("run_grid row counts, report identity, determinism") {
  auto c = small_config();
  c.tau_grid = {0.0};
  c.reps_per_tau = 1;
  auto o = fast_options();
  o.methods = {Method::naive_ols, Method::dml_original, Method::dml_dice};
  auto r = run_grid(c, o);
  CHECK(r.records.size() == 3);
  for (const auto& rec : r.records) CHECK(rec.ok);
  auto again = run_grid(c, o);
  CHECK(r.to_csv() == again.to_csv());
  auto j = r.aggregate_json();
  for (const auto& m : {"naive_ols", "dml_original", "dml_dice"}) {
    REQUIRE(j["methods"].contains(m));
    CHECK(j["methods"][m].contains("rmse_reduction_pct"));
  }
  c.tau_grid = {-0.1, 0.2};
  c.reps_per_tau = 2;
  o.methods = {Method::naive_ols, Method::dml_oracle};
  auto g = run_grid(c, o);
  CHECK(g.records.size() == 8);
  for (const auto& a : g.aggregates)
    for (size_t i = 0; i < a.tau.size(); ++i) {
      CHECK(a.count[i] == 2);
      CHECK(std::fabs(a.rmse[i] * a.rmse[i] - a.mean_bias[i] * a.mean_bias[i] - a.var[i]) <= 1e-10);
    }
}

TEST_CASE("property: aggregate identity on random records") {
  SeededRng r(9);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<CellRecord> recs;
    int reps = 1 + static_cast<int>(r.below(12));
    for (double tau : {-0.2, 0.0, 0.3})
      for (int k = 0; k < reps; ++k) {
        CellRecord a;
        a.tau = tau;
        a.rep = k;
        a.method = "dml_original";
        a.bias = r.normal() * 0.3 + 0.1;
        recs.push_back(a);
        a.method = "dml_dice";
        a.bias = r.normal() * 0.1;
        recs.push_back(a);
      }
    auto agg = aggregate(recs, {Method::dml_original, Method::dml_dice});
    for (const auto& a : agg)
      for (size_t i = 0; i < a.tau.size(); ++i)
        CHECK(std::fabs(a.rmse[i] * a.rmse[i] - a.mean_bias[i] * a.mean_bias[i] - a.var[i]) <= 1e-10);
    CHECK(agg[1].rmse_reduction_pct ==
          doctest::Approx(100.0 * (1.0 - agg[1].avg_rmse / agg[0].avg_rmse)));
  }
}

TEST_CASE("t-statistic summaries flag degenerate reps") {
  std::vector<CellRecord> recs;
  for (int i = 0; i < 10; ++i) {
    CellRecord a;
    a.method = "dml_dice";
    a.rep = i;
    a.bias = 0.1 * (i - 4.5);
    a.se = i == 3 ? 0.0 : 0.1;
    recs.push_back(a);
  }
  auto s = summarize_tstats("dml_dice", recs);
  CHECK(s.invalid == 1);
  CHECK(s.tstats.size() == 9);
  CHECK(s.std == doctest::Approx(sample_std(s.tstats)));
  CHECK_THROWS_AS(tstat_study(small_config(), 0, fast_options()), ConfigError);
}

TEST_CASE("encoder on leaky simulation: invariance without collapse") {
  SimConfig c;
  c.n = 1500;
  c.feature_dim = 64;
  auto d = generate(c, 0.0, 3);
  EncoderConfig ec;
  ec.hidden_dims = {128, 64};
  ec.epochs = 10;
  ec.lr = 1e-3;
  ec.seed = 2;
  PairedDataset pd{d.z_leaky, d.z_cf, d.t, d.y};
  auto tr = train(ec, pd);
  double before = tr.log.rows.front().mean_delta_norm, after = tr.log.rows.back().clean_delta_norm;
  CHECK(after <= 0.4 * before);
  auto dn = delta_norms(tr.state, d.z_leaky, d.z_cf, ec.alpha_proj);
  CHECK(dn.embed_std >= 0.5 * ec.gamma_var);
  auto zc = extract_clean(tr.state, d.z_leaky, d.z_cf, ec.alpha_proj);
  auto spec = learner_preset("rf");
  spec.trees = 20;
  auto e = run_dml(zc, d.t, d.y, spec, 5, 1);
  CHECK(e.y_r2 > 0.0);
  auto raw = run_dml(d.z_leaky, d.t, d.y, spec, 5, 1);
  CHECK(raw.t_r2 > e.t_r2);
}

TEST_CASE("ablation produces the four configurations") {
  auto c = small_config();
  AblationOptions o;
  o.encoder = fast_options().encoder;
  o.learner = fast_options().learner;
  o.reps = 1;
  auto rows = ablation(c, o);
  REQUIRE(rows.size() == 4);
  std::vector<std::string> names;
  for (const auto& r : rows) names.push_back(r.configuration);
  CHECK(names == std::vector<std::string>{"projection_only", "adversarial_only", "baseline", "full"});
  auto csv = ablation_csv(rows);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 5);
}
