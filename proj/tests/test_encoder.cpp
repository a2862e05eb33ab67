#include <cmath>
#include <filesystem>

#include "dice/encoder.hpp"
#include "dice/errors.hpp"
#include "dice/rng.hpp"
#include "doctest.h"

using namespace dice;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

EncoderConfig toy_config() {
  EncoderConfig c;
  c.input_dim = 8;
  c.hidden_dims = {6, 5};
  c.dropout_rate = 0.0;
  c.alpha_proj = 0.8;
  c.gamma_var = 2.0;
  c.margin_ctr = 3.0;
  c.seed = 3;
  return c;
}

PairedBatch toy_batch(uint64_t seed, int n = 4, int d = 8) {
  SeededRng r(seed);
  PairedBatch b;
  b.z_orig.resize(n, d);
  b.z_cf.resize(n, d);
  b.t.resize(n);
  b.y.resize(n);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < d; ++j) {
      b.z_orig(i, j) = r.normal();
      b.z_cf(i, j) = b.z_orig(i, j) + 0.5 * r.normal();
    }
    b.t(i) = i % 2;
    b.y(i) = r.normal();
  }
  return b;
}

void zero_linear(EncoderState& s, const LinearSlot& l) {
  s.theta.segment(l.w, l.in * l.out).setZero();
  s.theta.segment(l.b, l.out).setZero();
}

struct FdResult {
  int checked = 0, failed = 0;
  double worst = 0;
};

FdResult fd_check(EncoderState s, const PairedBatch& b, const LossWeights& w,
                  const std::vector<long>& coords) {
  VectorXd g;
  loss_and_grad(s, b, w, -1.0, SeededRng(5), &g);
  FdResult out;
  for (long k : coords) {
    const double h = 1e-5, o = s.theta(k);
    s.theta(k) = o + h;
    double lp = loss_and_grad(s, b, w, -1.0, SeededRng(5), nullptr).total;
    s.theta(k) = o - h;
    double lm = loss_and_grad(s, b, w, -1.0, SeededRng(5), nullptr).total;
    s.theta(k) = o;
    double fd = (lp - lm) / (2 * h);
    double rel = std::fabs(fd - g(k)) / std::max({std::fabs(fd), std::fabs(g(k)), 1e-5});
    out.worst = std::max(out.worst, rel);
    out.checked++;
    if (rel > 1e-3) MESSAGE("coord " << k << " fd " << fd << " analytic " << g(k));
    out.failed += rel > 1e-3;
  }
  return out;
}

PairedDataset small_dataset(uint64_t seed, size_t n = 64, size_t d = 8) {
  SeededRng r(seed);
  std::vector<double> a(n * d), c(n * d);
  PairedDataset p;
  for (size_t i = 0; i < n; ++i) {
    double t = r.bernoulli(0.4);
    for (size_t j = 0; j < d; ++j) {
      double base = r.normal();
      a[i * d + j] = base + (j == 0 ? (t ? 1 : -1) : 0);
      c[i * d + j] = base - (j == 0 ? (t ? 1 : -1) : 0);
    }
    p.t.push_back(t);
    p.y.push_back(a[i * d + 1] + r.normal());
  }
  p.z_orig = FeatureMatrix::from_double(n, d, a);
  p.z_cf = FeatureMatrix::from_double(n, d, c);
  return p;
}

}  // namespace

TEST_CASE("analytic gradients match central differences for every loss term") {
  const char* names[] = {"y", "adv", "cons", "var", "ctr", "all"};
  for (int term = 0; term < 6; ++term) {
    CAPTURE(std::string(names[term]));
    for (uint64_t seed : {1, 2, 3}) {
      auto c = toy_config();
      c.seed = seed;
      EncoderState s = EncoderState::init(c);
      LossWeights w{0, 0, 0, 0, 0};
      if (term == 0) w.y = 1;
      if (term == 1) w.adv = 1;
      if (term == 2) w.cons = 1;
      if (term == 3) w.var = 1;
      if (term == 4) w.ctr = 1;
      if (term == 5) w = LossWeights{};
      std::vector<long> coords;
      SeededRng pick(seed);
      for (long k = 0; k < s.theta.size(); ++k)
        if (seed == 1 || pick.uniform() < 0.02) coords.push_back(k);
      auto r = fd_check(s, toy_batch(10 + seed), w, coords);
      CHECK(r.failed == 0);
      CHECK(r.worst <= 1e-3);
    }
  }
}

TEST_CASE("gradients without batch norm and with alpha 1") {
  auto c = toy_config();
  c.batch_norm = false;
  c.alpha_proj = 1.0;
  EncoderState s = EncoderState::init(c);
  std::vector<long> all(s.theta.size());
  for (long k = 0; k < s.theta.size(); ++k) all[k] = k;
  auto r = fd_check(s, toy_batch(4), LossWeights{}, all);
  CHECK(r.failed == 0);
}

TEST_CASE("eval forward is deterministic; zero final layer gives zero embedding") {
  auto c = toy_config();
  EncoderState s = EncoderState::init(c);
  auto b = toy_batch(1, 6);
  auto a1 = forward_d(s, b.z_orig, Mode::eval), a2 = forward_d(s, b.z_orig, Mode::eval);
  CHECK((a1 - a2).norm() == 0.0);
  zero_linear(s, s.layout.enc.back());
  auto z = forward_d(s, b.z_orig, Mode::eval);
  CHECK(z.cwiseAbs().maxCoeff() == 0.0);
  SeededRng r(1);
  CHECK_THROWS_AS(forward_d(s, b.z_orig.topRows(1), Mode::train, &r), DegenerateInput);
  CHECK_THROWS_AS(forward_d(s, MatrixXd::Zero(3, 7), Mode::eval), DataError);
}

TEST_CASE("project_out cases") {
  VectorXd z(2), zc(2);
  z << 1, 1;
  zc << 0, 1;
  auto p = project_out(z, zc, 0.95, 0.0);
  CHECK(p.z_clean(0) == doctest::Approx(0.05).epsilon(1e-12));
  CHECK(p.z_clean(1) == doctest::Approx(1.0).epsilon(1e-12));
  auto id = project_out(z, zc, 0.0, 1e-8);
  CHECK(id.z_clean == z);
  CHECK(id.z_cf_clean == zc);
  z << 1, 0;
  zc << -1, 0;
  auto an = project_out(z, zc, 1.0, 0.0);
  CHECK(an.z_clean.norm() <= 1e-12);
  CHECK(an.z_cf_clean.norm() <= 1e-12);
  auto same = project_out(z, z, 0.95, 1e-8);
  CHECK(same.z_clean == z);
}

TEST_CASE("property: projection identity along the difference direction") {
  SeededRng r(77);
  for (int trial = 0; trial < 1000; ++trial) {
    int d = 2 + static_cast<int>(r.below(30));
    VectorXd z(d), zc(d);
    for (int j = 0; j < d; ++j) {
      z(j) = 3 * r.normal();
      zc(j) = 3 * r.normal();
    }
    if ((z - zc).norm() < 1.0) continue;
    double alpha = r.uniform(), eps = 1e-8;
    auto p = project_out(z, zc, alpha, eps);
    VectorXd delta = z - zc;
    double nd = delta.norm();
    VectorXd dh = delta / (nd + eps);
    double lhs = p.z_clean.dot(dh);
    double rhs = (1 - alpha * nd / (nd + eps)) * z.dot(dh);
    // unit-norm direction reading
    VectorXd u = delta / nd;
    double lhs_u = p.z_clean.dot(u), rhs_u = (1 - alpha * nd / (nd + eps)) * z.dot(u);
    CHECK(std::fabs(lhs - rhs) <= 1e-5);
    CHECK(std::fabs(lhs_u - rhs_u) <= 1e-5);
  }
}

TEST_CASE("variance loss hand cases") {
  MatrixXd a(4, 2);
  a << 5, 5, 5, 5, 5, 5, 5, 5;
  CHECK(variance_loss(a, 1.0) == doctest::Approx(1.0));
  MatrixXd b(2, 2);
  b << -0.5, -2, 0.5, 2;  // population stds 0.5 and 2
  CHECK(variance_loss(b, 1.0) == doctest::Approx(0.25));
  MatrixXd c(2, 2);
  c << -1, -3, 1, 3;
  CHECK(variance_loss(c, 1.0) == 0.0);
}

TEST_CASE("grl schedule and cosine learning rate") {
  EncoderConfig c;
  c.grl_max = 1.0;
  c.grl_warmup_epochs = 3;
  CHECK(grl_strength(c, 0.0) == 0.0);
  CHECK(grl_strength(c, 1.5) == doctest::Approx(0.5));
  CHECK(grl_strength(c, 3.0) == 1.0);
  CHECK(grl_strength(c, 7.0) == 1.0);
  c.lr = 1e-3;
  c.epochs = 10;
  CHECK(cosine_lr(c, 0) == doctest::Approx(1e-3));
  CHECK(cosine_lr(c, 5) == doctest::Approx(0.5 * (1e-3 + 1e-5)));
  CHECK(cosine_lr(c, 10) == doctest::Approx(1e-5));
}

TEST_CASE("derangement has no fixed points") {
  SeededRng r(3);
  for (size_t m = 2; m < 40; ++m) {
    auto p = derangement(m, r);
    std::vector<int> seen(m, 0);
    for (size_t i = 0; i < m; ++i) {
      CHECK(p[i] != i);
      seen[p[i]]++;
    }
    for (int s : seen) CHECK(s == 1);
  }
  CHECK_THROWS_AS(derangement(1, r), DegenerateInput);
}

TEST_CASE("adversarial loss at chance and with zero reversal") {
  auto c = toy_config();
  EncoderState s = EncoderState::init(c);
  zero_linear(s, s.layout.d3);
  zero_linear(s, s.layout.dlin);
  auto b = toy_batch(2);
  LossWeights w{0, 1, 0, 0, 0};
  auto l = loss_and_grad(s, b, w, 0.0, SeededRng(1), nullptr);
  CHECK(l.adv == doctest::Approx(2 * std::log(2.0)).epsilon(1e-12));
  s = EncoderState::init(c);
  VectorXd g;
  loss_and_grad(s, b, w, 0.0, SeededRng(1), &g);
  double outside = 0, inside = 0;
  for (long k = 0; k < g.size(); ++k) {
    bool disc = static_cast<size_t>(k) >= s.layout.disc_begin && static_cast<size_t>(k) < s.layout.disc_end;
    (disc ? inside : outside) += std::fabs(g(k));
  }
  CHECK(outside == 0.0);
  CHECK(inside > 0.0);
}

TEST_CASE("outcome and contrastive hand cases") {
  auto c = toy_config();
  c.margin_ctr = 0.5;
  EncoderState s = EncoderState::init(c);
  zero_linear(s, s.layout.h2);
  auto b = toy_batch(3);
  auto l = loss_and_grad(s, b, LossWeights{1, 0, 0, 0, 0}, 0.0, SeededRng(1), nullptr);
  CHECK(l.y == doctest::Approx(b.y.squaredNorm() / 4).epsilon(1e-12));

  // identical rows and identical arms: positive and negative distances are 0
  PairedBatch same = b;
  for (int i = 0; i < 4; ++i) same.z_orig.row(i) = b.z_orig.row(0);
  same.z_cf = same.z_orig;
  CHECK(loss_and_grad(s, same, LossWeights{0, 0, 0, 0, 1}, 0.0, SeededRng(1), nullptr).ctr ==
        doctest::Approx(0.5).epsilon(1e-9));
  // paired distance 0, margin 0: hinge inactive
  s.config.margin_ctr = 0.0;
  PairedBatch eq = b;
  eq.z_cf = eq.z_orig;
  CHECK(loss_and_grad(s, eq, LossWeights{0, 0, 0, 0, 1}, 0.0, SeededRng(1), nullptr).ctr == 0.0);
  CHECK(loss_and_grad(s, eq, LossWeights{0, 0, 1, 0, 0}, 0.0, SeededRng(1), nullptr).cons == 0.0);
}

TEST_CASE("property: swapping arms and flipping labels preserves symmetric terms") {
  for (uint64_t seed = 0; seed < 10; ++seed) {
    auto c = toy_config();
    c.seed = seed;
    EncoderState s = EncoderState::init(c);
    auto b = toy_batch(20 + seed, 6);
    PairedBatch sw = b;
    std::swap(sw.z_orig, sw.z_cf);
    sw.t = VectorXd::Ones(6) - b.t;
    auto a = loss_and_grad(s, b, LossWeights{}, 1.0, SeededRng(2), nullptr);
    auto z = loss_and_grad(s, sw, LossWeights{}, 1.0, SeededRng(2), nullptr);
    CHECK(std::fabs(a.cons - z.cons) < 1e-6);
    CHECK(std::fabs(a.var - z.var) < 1e-6);
    CHECK(std::fabs(a.y - z.y) < 1e-6);
    MatrixXd d1 = forward_d(s, b.z_orig, Mode::eval) - forward_d(s, b.z_cf, Mode::eval);
    MatrixXd d2 = forward_d(s, sw.z_orig, Mode::eval) - forward_d(s, sw.z_cf, Mode::eval);
    CHECK((d1 + d2).norm() < 1e-12);
  }
}

TEST_CASE("zero loss weights leave parameters unchanged") {
  auto data = small_dataset(1);
  EncoderConfig c;
  c.hidden_dims = {16, 8};
  c.epochs = 2;
  c.batch_size = 16;
  c.loss_weights = LossWeights{0, 0, 0, 0, 0};
  c.seed = 4;
  c.input_dim = 8;
  auto init = EncoderState::init(c);
  auto r = train(c, data);
  CHECK((r.state.theta - init.theta).norm() == 0.0);
}

TEST_CASE("training is deterministic and logs an untrained snapshot") {
  auto data = small_dataset(2);
  EncoderConfig c;
  c.hidden_dims = {16, 8};
  c.epochs = 3;
  c.batch_size = 16;
  c.lr = 1e-3;
  c.seed = 5;
  auto a = train(c, data), b = train(c, data);
  CHECK(a.log.to_csv() == b.log.to_csv());
  CHECK(a.state.theta == b.state.theta);
  CHECK(a.log.rows.size() == 4);
  CHECK(a.log.rows[0].epoch == 0);
  CHECK(a.log.metadata["contrastive_negative_gradient"] == "full");
  c.seed = 6;
  CHECK(train(c, data).state.theta != a.state.theta);
}

TEST_CASE("extract_clean limits") {
  auto data = small_dataset(3, 20);
  EncoderConfig c;
  c.input_dim = 8;
  c.hidden_dims = {16, 8};
  auto s = EncoderState::init(c);
  auto plain = forward(s, data.z_orig, Mode::eval);
  auto a0 = extract_clean(s, data.z_orig, data.z_cf, 0.0);
  CHECK(a0.data() == plain.data());
  auto same = extract_clean(s, data.z_orig, data.z_orig, 0.95);
  CHECK(same.data() == plain.data());
  CHECK_THROWS_AS(extract_clean(s, data.z_orig, data.z_cf.select_rows({0, 1}), 0.5), DataError);
}

TEST_CASE("encoder state and config round trip") {
  namespace fs = std::filesystem;
  auto data = small_dataset(4);
  EncoderConfig c;
  c.hidden_dims = {16, 8};
  c.epochs = 1;
  c.batch_size = 16;
  c.seed = 9;
  auto r = train(c, data);
  auto path = (fs::temp_directory_path() / "dice_enc_test.dcee").string();
  save_encoder(path, r.state);
  auto back = load_encoder(path);
  CHECK(back.theta == r.state.theta);
  CHECK(back.running == r.state.running);
  CHECK(back.y_mean == r.state.y_mean);
  CHECK(to_json(back.config) == to_json(r.state.config));
  fs::remove(path);

  auto j = to_json(c);
  CHECK(to_json(encoder_config_from_json(j)) == j);
  j["loss_weights"]["lambda_y"] = "ten";
  try {
    encoder_config_from_json(j, "$.encoder");
    FAIL("expected throw");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("$.encoder.loss_weights.lambda_y") != std::string::npos);
  }
  auto k = to_json(c);
  k["bogus"] = 1;
  CHECK_THROWS_AS(encoder_config_from_json(k), ConfigError);
  auto bad = to_json(c);
  bad["dropout_rate"] = 1.5;
  CHECK_THROWS_AS(encoder_config_from_json(bad), ConfigError);
}
