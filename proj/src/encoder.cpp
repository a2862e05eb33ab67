#include "dice/encoder.hpp"

#include <cmath>
#include <numbers>
#include <sstream>

#include "dice/errors.hpp"

namespace dice {

using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

constexpr double kBnEps = 1e-5;
constexpr double kBnMomentum = 0.9;
constexpr double kAdamB1 = 0.9, kAdamB2 = 0.999, kAdamEps = 1e-8;

using CMap = Eigen::Map<const MatrixXd>;
using CVec = Eigen::Map<const VectorXd>;
using Map = Eigen::Map<MatrixXd>;
using Vec = Eigen::Map<VectorXd>;

CMap weight(const VectorXd& th, const LinearSlot& l) { return CMap(th.data() + l.w, l.out, l.in); }
CVec bias(const VectorXd& th, const LinearSlot& l) { return CVec(th.data() + l.b, l.out); }

MatrixXd linear(const VectorXd& th, const LinearSlot& l, const MatrixXd& x) {
  MatrixXd a = x * weight(th, l).transpose();
  a.rowwise() += bias(th, l).transpose();
  return a;
}

// accumulates dW, db into g and returns dX
MatrixXd linear_back(const VectorXd& th, const LinearSlot& l, const MatrixXd& x,
                     const MatrixXd& da, VectorXd* g) {
  if (g) {
    Map(g->data() + l.w, l.out, l.in).noalias() += da.transpose() * x;
    Vec(g->data() + l.b, l.out) += da.colwise().sum().transpose();
  }
  return da * weight(th, l);
}

MatrixXd relu(const MatrixXd& a) { return a.cwiseMax(0.0); }

MatrixXd relu_mask(const MatrixXd& a) { return (a.array() > 0.0).cast<double>().matrix(); }

double softplus(double x) { return std::max(x, 0.0) + std::log1p(std::exp(-std::fabs(x))); }
double sigm(double x) { return 1.0 / (1.0 + std::exp(-x)); }

double bce_logits(const VectorXd& o, const VectorXd& lab) {
  double s = 0.0;
  for (Eigen::Index i = 0; i < o.size(); ++i) s += softplus(o(i)) - lab(i) * o(i);
  return s / static_cast<double>(o.size());
}

MatrixXd to_eigen(const FeatureMatrix& m, size_t r0, size_t r1) {
  MatrixXd out(r1 - r0, m.cols());
  for (size_t i = r0; i < r1; ++i)
    for (size_t j = 0; j < m.cols(); ++j) out(i - r0, j) = m(i, j);
  return out;
}

struct LayerCache {
  MatrixXd in, xhat, post, mask;
  VectorXd inv_std;
};

struct EncForward {
  std::vector<LayerCache> layers;
  MatrixXd out;
};

EncForward enc_forward(const EncoderState& s, const MatrixXd& x, Mode mode, SeededRng* rng,
                       bool dropout, BatchStats* st) {
  const auto& c = s.config;
  const auto& L = s.layout;
  const size_t nl = L.enc.size();
  if (mode == Mode::train && x.rows() < 2)
    throw DegenerateInput("forward: train-mode batch of 1 leaves batch-norm variance undefined");
  if (static_cast<size_t>(x.cols()) != c.input_dim)
    throw DataError("forward: expected " + std::to_string(c.input_dim) + " columns, got " +
                    std::to_string(x.cols()));
  EncForward f;
  f.layers.resize(nl);
  if (st) {
    st->mean.clear();
    st->var.clear();
    st->rows = static_cast<size_t>(x.rows());
  }
  MatrixXd h = x;
  for (size_t l = 0; l < nl; ++l) {
    LayerCache& lc = f.layers[l];
    lc.in = std::move(h);
    MatrixXd a = linear(s.theta, L.enc[l], lc.in);
    if (c.batch_norm) {
      const NormSlot& ns = L.norm[l];
      VectorXd mu, var;
      if (mode == Mode::train) {
        mu = a.colwise().mean().transpose();
        var = (a.rowwise() - mu.transpose()).array().square().colwise().mean().transpose();
        if (st) {
          st->mean.push_back(mu);
          st->var.push_back(var);
        }
      } else {
        mu = CVec(s.running.data() + ns.run_mean, ns.dim);
        var = CVec(s.running.data() + ns.run_var, ns.dim);
      }
      lc.inv_std = (var.array() + kBnEps).rsqrt().matrix();
      lc.xhat = (a.rowwise() - mu.transpose()) * lc.inv_std.asDiagonal();
      CVec gam(s.theta.data() + ns.gamma, ns.dim), bet(s.theta.data() + ns.beta, ns.dim);
      a = lc.xhat * gam.asDiagonal();
      a.rowwise() += bet.transpose();
    }
    lc.post = a;
    if (l + 1 < nl) {
      h = relu(a);
      if (mode == Mode::train && dropout && c.dropout_rate > 0.0) {
        if (!rng) throw ConfigError("forward: train mode with dropout needs an rng");
        const double keep = 1.0 - c.dropout_rate;
        lc.mask.resize(h.rows(), h.cols());
        for (Eigen::Index j = 0; j < h.cols(); ++j)
          for (Eigen::Index i = 0; i < h.rows(); ++i)
            lc.mask(i, j) = rng->uniform() < keep ? 1.0 / keep : 0.0;
        h = h.cwiseProduct(lc.mask);
      }
    } else {
      h = a;
    }
  }
  f.out = std::move(h);
  return f;
}

void enc_backward(const EncoderState& s, const EncForward& f, MatrixXd d, VectorXd* g) {
  const auto& c = s.config;
  const auto& L = s.layout;
  for (size_t l = L.enc.size(); l-- > 0;) {
    const LayerCache& lc = f.layers[l];
    if (l + 1 < L.enc.size()) {
      if (lc.mask.size()) d = d.cwiseProduct(lc.mask);
      d = d.cwiseProduct(relu_mask(lc.post));
    }
    if (c.batch_norm) {
      const NormSlot& ns = L.norm[l];
      CVec gam(s.theta.data() + ns.gamma, ns.dim);
      if (g) {
        Vec(g->data() + ns.gamma, ns.dim) += d.cwiseProduct(lc.xhat).colwise().sum().transpose();
        Vec(g->data() + ns.beta, ns.dim) += d.colwise().sum().transpose();
      }
      MatrixXd dx = d * gam.asDiagonal();
      const double n = static_cast<double>(d.rows());
      VectorXd s1 = dx.colwise().sum().transpose();
      VectorXd s2 = dx.cwiseProduct(lc.xhat).colwise().sum().transpose();
      MatrixXd t = n * dx;
      t.rowwise() -= s1.transpose();
      t -= lc.xhat * s2.asDiagonal();
      d = t * (lc.inv_std / n).asDiagonal();
    }
    d = linear_back(s.theta, L.enc[l], lc.in, d, g);
  }
}

void check_finite(double v, const char* term) {
  if (!std::isfinite(v)) throw NumericalError(std::string("non-finite loss term ") + term);
}

}  // namespace

void EncoderConfig::validate() const {
  if (input_dim < 1) throw ConfigError("encoder.input_dim must be >= 1");
  if (hidden_dims.empty()) throw ConfigError("encoder.hidden_dims must be non-empty");
  for (size_t h : hidden_dims)
    if (h < 1) throw ConfigError("encoder.hidden_dims entries must be >= 1");
  if (!(dropout_rate >= 0.0 && dropout_rate < 1.0))
    throw ConfigError("encoder.dropout_rate must lie in [0,1)");
  if (!(alpha_proj >= 0.0 && alpha_proj <= 1.0))
    throw ConfigError("encoder.alpha_proj must lie in [0,1]");
  if (!(epsilon_norm > 0.0)) throw ConfigError("encoder.epsilon_norm must be > 0");
  const auto& w = loss_weights;
  if (!(w.y >= 0 && w.adv >= 0 && w.cons >= 0 && w.var >= 0 && w.ctr >= 0))
    throw ConfigError("encoder.loss_weights must be nonnegative");
  if (!(gamma_var >= 0.0)) throw ConfigError("encoder.gamma_var must be >= 0");
  if (!(margin_ctr >= 0.0)) throw ConfigError("encoder.margin_ctr must be >= 0");
  if (epochs < 0) throw ConfigError("encoder.epochs must be >= 0");
  if (batch_size < 2) throw ConfigError("encoder.batch_size must be >= 2");
  if (!(lr > 0.0)) throw ConfigError("encoder.lr must be > 0");
  if (!(grl_max >= 0.0)) throw ConfigError("encoder.grl_max must be >= 0");
  if (!(grl_warmup_epochs >= 0.0)) throw ConfigError("encoder.grl_warmup_epochs must be >= 0");
  if (label_mode != "treatment" && label_mode != "constant")
    throw ConfigError("encoder.label_mode must be 'treatment' or 'constant'");
}

void PairedDataset::validate() const {
  if (z_orig.rows() != z_cf.rows() || z_orig.cols() != z_cf.cols())
    throw DataError("paired data: original and counterfactual shapes differ");
  if (t.size() != z_orig.rows() || y.size() != z_orig.rows())
    throw DataError("paired data: t/y length does not match feature rows");
  for (double v : t)
    if (v != 0.0 && v != 1.0) throw DataError("paired data: treatment must be 0/1");
}

Layout make_layout(const EncoderConfig& c) {
  Layout L;
  size_t off = 0, roff = 0;
  auto lin = [&](size_t in, size_t out) {
    LinearSlot s;
    s.in = in;
    s.out = out;
    s.w = off;
    off += in * out;
    s.b = off;
    off += out;
    return s;
  };
  size_t prev = c.input_dim;
  for (size_t h : c.hidden_dims) {
    L.enc.push_back(lin(prev, h));
    if (c.batch_norm) {
      NormSlot n;
      n.dim = h;
      n.gamma = off;
      off += h;
      n.beta = off;
      off += h;
      n.run_mean = roff;
      roff += h;
      n.run_var = roff;
      roff += h;
      L.norm.push_back(n);
    }
    prev = h;
  }
  const size_t e = prev;
  L.h1 = lin(e, e);
  L.h2 = lin(e, 1);
  L.disc_begin = off;
  L.d1 = lin(e, 256);
  L.d2 = lin(256, 128);
  L.d3 = lin(128, 1);
  L.dlin = lin(e, 1);
  L.disc_end = off;
  L.n_theta = off;
  L.n_running = roff;
  return L;
}

EncoderState EncoderState::init(const EncoderConfig& c) {
  c.validate();
  EncoderState s;
  s.config = c;
  s.layout = make_layout(c);
  s.theta = VectorXd::Zero(s.layout.n_theta);
  s.running = VectorXd::Zero(s.layout.n_running);
  SeededRng rng = SeededRng(c.seed).derive("init");
  auto fill = [&](const LinearSlot& l) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(l.in));
    for (size_t k = 0; k < l.in * l.out; ++k) s.theta(l.w + k) = rng.uniform(-bound, bound);
    for (size_t k = 0; k < l.out; ++k) s.theta(l.b + k) = rng.uniform(-bound, bound);
  };
  for (const auto& l : s.layout.enc) fill(l);
  for (const auto& n : s.layout.norm) {
    s.theta.segment(n.gamma, n.dim).setOnes();
    s.running.segment(n.run_var, n.dim).setOnes();
  }
  for (const LinearSlot* l : {&s.layout.h1, &s.layout.h2, &s.layout.d1, &s.layout.d2,
                              &s.layout.d3, &s.layout.dlin})
    fill(*l);
  s.adam_m = VectorXd::Zero(s.layout.n_theta);
  s.adam_v = VectorXd::Zero(s.layout.n_theta);
  return s;
}

MatrixXd forward_d(const EncoderState& s, const MatrixXd& x, Mode mode, SeededRng* rng) {
  return enc_forward(s, x, mode, rng, true, nullptr).out;
}

FeatureMatrix forward(const EncoderState& s, const FeatureMatrix& x, Mode mode, SeededRng* rng) {
  if (x.cols() != s.config.input_dim)
    throw DataError("forward: expected " + std::to_string(s.config.input_dim) +
                    " columns, got " + std::to_string(x.cols()));
  MatrixXd out = forward_d(s, to_eigen(x, 0, x.rows()), mode, rng);
  std::vector<double> v(out.size());
  for (Eigen::Index i = 0; i < out.rows(); ++i)
    for (Eigen::Index j = 0; j < out.cols(); ++j) v[i * out.cols() + j] = out(i, j);
  return FeatureMatrix::from_double(out.rows(), out.cols(), v);
}

Projected project_out(const VectorXd& z, const VectorXd& z_cf, double alpha, double eps) {
  if (z.size() != z_cf.size()) throw DataError("project_out: dimension mismatch");
  VectorXd d = z - z_cf;
  VectorXd dh = d / (d.norm() + eps);
  return {z - alpha * z.dot(dh) * dh, z_cf - alpha * z_cf.dot(dh) * dh};
}

double variance_loss(const MatrixXd& z, double gamma) {
  if (z.rows() < 2) throw DegenerateInput("variance_loss: need >= 2 rows");
  VectorXd mu = z.colwise().mean().transpose();
  VectorXd sd = (z.rowwise() - mu.transpose()).array().square().colwise().mean().sqrt().transpose();
  return (gamma - sd.array()).max(0.0).mean();
}

double grl_strength(const EncoderConfig& c, double fe) {
  if (c.grl_warmup_epochs <= 0.0) return c.grl_max;
  return c.grl_max * std::clamp(fe / c.grl_warmup_epochs, 0.0, 1.0);
}

double cosine_lr(const EncoderConfig& c, int epoch) {
  const double lo = c.lr / 100.0;
  if (c.epochs <= 0) return c.lr;
  double frac = static_cast<double>(epoch) / static_cast<double>(c.epochs);
  return lo + (c.lr - lo) * 0.5 * (1.0 + std::cos(std::numbers::pi * frac));
}

std::vector<size_t> derangement(size_t m, SeededRng& rng) {
  if (m < 2) throw DegenerateInput("derangement: need at least 2 items");
  std::vector<size_t> p(m);
  for (size_t i = 0; i < m; ++i) p[i] = i;
  for (size_t i = m - 1; i > 0; --i) {
    size_t j = static_cast<size_t>(rng.below(i));
    std::swap(p[i], p[j]);
  }
  return p;
}

LossTerms loss_and_grad(const EncoderState& s, const PairedBatch& b, const LossWeights& w,
                        double grl, SeededRng rng, VectorXd* grad, BatchStats* stats) {
  const auto& c = s.config;
  const auto& L = s.layout;
  const Eigen::Index B = b.z_orig.rows();
  if (B < 2) throw DegenerateInput("loss: batch needs >= 2 pairs");
  if (b.z_cf.rows() != B || b.t.size() != B || b.y.size() != B)
    throw DataError("loss: batch arrays misaligned");
  const double alpha = c.alpha_proj, eps = c.epsilon_norm;
  const double Bd = static_cast<double>(B);

  SeededRng drop_rng = rng.derive("dropout");
  SeededRng neg_rng = rng.derive("negatives");

  MatrixXd x2(2 * B, b.z_orig.cols());
  x2 << b.z_orig, b.z_cf;
  EncForward F = enc_forward(s, x2, Mode::train, &drop_rng, true, stats);
  const MatrixXd& S = F.out;
  const Eigen::Index d = S.cols();
  MatrixXd Z = S.topRows(B), Zp = S.bottomRows(B);
  MatrixXd Dl = Z - Zp;
  VectorXd nrm = Dl.rowwise().norm();
  MatrixXd dh = (nrm.array() + eps).inverse().matrix().asDiagonal() * Dl;
  VectorXd a = Z.cwiseProduct(dh).rowwise().sum();
  VectorXd ap = Zp.cwiseProduct(dh).rowwise().sum();
  MatrixXd Zc = Z - alpha * a.asDiagonal() * dh;
  MatrixXd Zpc = Zp - alpha * ap.asDiagonal() * dh;

  LossTerms lt;
  lt.mean_delta = nrm.mean();

  // adversaries on the raw difference
  VectorXd lab = c.label_mode == "constant" ? VectorXd::Ones(B) : b.t;
  MatrixXd H1p = linear(s.theta, L.d1, Dl);
  MatrixXd H1 = relu(H1p);
  MatrixXd H2p = linear(s.theta, L.d2, H1);
  MatrixXd H2 = relu(H2p);
  VectorXd o = linear(s.theta, L.d3, H2).col(0);
  VectorXd ol = linear(s.theta, L.dlin, Dl).col(0);
  lt.adv = bce_logits(o, lab) + bce_logits(ol, lab);

  MatrixXd P = Zc - Zpc;
  VectorXd pn = P.rowwise().norm();
  lt.cons = P.rowwise().squaredNorm().mean();
  lt.mean_clean_delta = pn.mean();

  VectorXd mu = S.colwise().mean().transpose();
  MatrixXd Sc = S.rowwise() - mu.transpose();
  VectorXd sd = Sc.array().square().colwise().mean().sqrt().transpose();
  lt.var = (c.gamma_var - sd.array()).max(0.0).mean();

  MatrixXd Zb = 0.5 * (Zc + Zpc);
  MatrixXd A1p = linear(s.theta, L.h1, Zb);
  MatrixXd A1 = relu(A1p);
  VectorXd pred = linear(s.theta, L.h2, A1).col(0);
  VectorXd r = pred - b.y;
  lt.y = r.squaredNorm() / Bd;

  std::vector<size_t> neg = derangement(static_cast<size_t>(B), neg_rng);
  VectorXd hinge(B);
  MatrixXd Q(B, d);
  VectorXd qn(B);
  for (Eigen::Index i = 0; i < B; ++i) {
    Q.row(i) = Zb.row(i) - Zb.row(static_cast<Eigen::Index>(neg[i]));
    qn(i) = Q.row(i).norm();
    hinge(i) = c.margin_ctr + pn(i) - qn(i);
  }
  lt.ctr = hinge.array().max(0.0).mean();

  check_finite(lt.adv, "adv");
  check_finite(lt.cons, "cons");
  check_finite(lt.var, "var");
  check_finite(lt.y, "y");
  check_finite(lt.ctr, "ctr");
  lt.total = w.adv * lt.adv + w.cons * lt.cons + w.var * lt.var + w.y * lt.y + w.ctr * lt.ctr;
  if (!grad) return lt;

  VectorXd& g = *grad;
  g.setZero(L.n_theta);

  // discriminators: plain gradient; encoder path reversed
  MatrixXd dDelta = MatrixXd::Zero(B, d);
  {
    MatrixXd dO(B, 1), dOl(B, 1);
    for (Eigen::Index i = 0; i < B; ++i) {
      dO(i, 0) = w.adv * (sigm(o(i)) - lab(i)) / Bd;
      dOl(i, 0) = w.adv * (sigm(ol(i)) - lab(i)) / Bd;
    }
    MatrixXd dH2 = linear_back(s.theta, L.d3, H2, dO, &g).cwiseProduct(relu_mask(H2p));
    MatrixXd dH1 = linear_back(s.theta, L.d2, H1, dH2, &g).cwiseProduct(relu_mask(H1p));
    MatrixXd dAdv = linear_back(s.theta, L.d1, Dl, dH1, &g);
    dAdv += linear_back(s.theta, L.dlin, Dl, dOl, &g);
    dDelta -= grl * dAdv;
  }

  MatrixXd dZc = MatrixXd::Zero(B, d), dZpc = MatrixXd::Zero(B, d), dZb = MatrixXd::Zero(B, d);
  dZc += (2.0 * w.cons / Bd) * P;
  dZpc -= (2.0 * w.cons / Bd) * P;

  {
    MatrixXd dPred = (2.0 * w.y / Bd) * r;
    MatrixXd dA1 = linear_back(s.theta, L.h2, A1, dPred, &g).cwiseProduct(relu_mask(A1p));
    dZb += linear_back(s.theta, L.h1, Zb, dA1, &g);
  }

  for (Eigen::Index i = 0; i < B; ++i) {
    if (!(hinge(i) > 0.0) || w.ctr == 0.0) continue;
    if (pn(i) > 0.0) {
      VectorXd u = P.row(i).transpose() / pn(i);
      dZc.row(i) += (w.ctr / Bd) * u.transpose();
      dZpc.row(i) -= (w.ctr / Bd) * u.transpose();
    }
    if (qn(i) > 0.0) {
      VectorXd v = Q.row(i).transpose() / qn(i);
      dZb.row(i) -= (w.ctr / Bd) * v.transpose();
      dZb.row(static_cast<Eigen::Index>(neg[i])) += (w.ctr / Bd) * v.transpose();
    }
  }
  dZc += 0.5 * dZb;
  dZpc += 0.5 * dZb;

  // projection backward
  VectorXd gc = dZc.cwiseProduct(dh).rowwise().sum();
  VectorXd gpc = dZpc.cwiseProduct(dh).rowwise().sum();
  MatrixXd dZ = dZc - alpha * gc.asDiagonal() * dh;
  MatrixXd dZp = dZpc - alpha * gpc.asDiagonal() * dh;
  if (alpha != 0.0) {
    MatrixXd gdh = -alpha * (gc.asDiagonal() * Z + a.asDiagonal() * dZc +
                             gpc.asDiagonal() * Zp + ap.asDiagonal() * dZpc);
    for (Eigen::Index i = 0; i < B; ++i) {
      const double n = nrm(i), ne = n + eps;
      dDelta.row(i) += gdh.row(i) / ne;
      if (n > 0.0) dDelta.row(i) -= Dl.row(i) * (Dl.row(i).dot(gdh.row(i)) / (n * ne * ne));
    }
  }
  dZ += dDelta;
  dZp -= dDelta;

  MatrixXd dS(2 * B, d);
  dS << dZ, dZp;
  if (w.var != 0.0) {
    const double N = static_cast<double>(2 * B);
    for (Eigen::Index j = 0; j < d; ++j) {
      if (!(sd(j) < c.gamma_var) || !(sd(j) > 0.0)) continue;
      dS.col(j) -= (w.var / static_cast<double>(d)) / (N * sd(j)) * Sc.col(j);
    }
  }
  enc_backward(s, F, std::move(dS), &g);
  return lt;
}

namespace {

PairedBatch make_batch(const PairedDataset& data, const std::vector<double>& ys,
                       const std::vector<size_t>& idx, size_t b0, size_t b1) {
  PairedBatch b;
  const size_t m = b1 - b0, dim = data.z_orig.cols();
  b.z_orig.resize(m, dim);
  b.z_cf.resize(m, dim);
  b.t.resize(m);
  b.y.resize(m);
  for (size_t k = 0; k < m; ++k) {
    size_t i = idx[b0 + k];
    auto ro = data.z_orig.row(i), rc = data.z_cf.row(i);
    for (size_t j = 0; j < dim; ++j) {
      b.z_orig(k, j) = ro[j];
      b.z_cf(k, j) = rc[j];
    }
    b.t(k) = data.t[i];
    b.y(k) = ys[i];
  }
  return b;
}

void update_running(EncoderState& s, const BatchStats& st) {
  const double n = static_cast<double>(st.rows);
  for (size_t l = 0; l < st.mean.size(); ++l) {
    const NormSlot& ns = s.layout.norm[l];
    auto rm = s.running.segment(ns.run_mean, ns.dim);
    auto rv = s.running.segment(ns.run_var, ns.dim);
    rm = kBnMomentum * rm + (1.0 - kBnMomentum) * st.mean[l];
    rv = kBnMomentum * rv + (1.0 - kBnMomentum) * st.var[l] * (n / (n - 1.0));
  }
}

void adam_step(EncoderState& s, const VectorXd& g, double lr) {
  s.adam_t += 1;
  s.adam_m = kAdamB1 * s.adam_m + (1.0 - kAdamB1) * g;
  s.adam_v = kAdamB2 * s.adam_v + (1.0 - kAdamB2) * g.cwiseProduct(g);
  const double c1 = 1.0 - std::pow(kAdamB1, static_cast<double>(s.adam_t));
  const double c2 = 1.0 - std::pow(kAdamB2, static_cast<double>(s.adam_t));
  s.theta.array() -= lr * (s.adam_m.array() / c1) / ((s.adam_v.array() / c2).sqrt() + kAdamEps);
  if (!s.theta.allFinite()) throw NumericalError("non-finite parameter after optimizer step");
}

}  // namespace

void calibrate_norm_stats(EncoderState& s, const FeatureMatrix& z_orig, const FeatureMatrix& z_cf) {
  if (!s.config.batch_norm) return;
  const size_t n = z_orig.rows();
  MatrixXd x2(2 * n, z_orig.cols());
  x2 << to_eigen(z_orig, 0, n), to_eigen(z_cf, 0, n);
  BatchStats st;
  enc_forward(s, x2, Mode::train, nullptr, false, &st);
  const double m = static_cast<double>(st.rows);
  for (size_t l = 0; l < st.mean.size(); ++l) {
    const NormSlot& ns = s.layout.norm[l];
    s.running.segment(ns.run_mean, ns.dim) = st.mean[l];
    s.running.segment(ns.run_var, ns.dim) = st.var[l] * (m / (m - 1.0));
  }
}

DeltaNorms delta_norms(const EncoderState& s, const FeatureMatrix& z_orig, const FeatureMatrix& z_cf,
                       double alpha) {
  const size_t n = z_orig.rows();
  const size_t chunk = 2048;
  double raw = 0.0, clean = 0.0;
  const size_t e = s.config.embed_dim();
  VectorXd sum = VectorXd::Zero(e), sq = VectorXd::Zero(e);
  for (size_t r0 = 0; r0 < n; r0 += chunk) {
    size_t r1 = std::min(n, r0 + chunk);
    MatrixXd Z = forward_d(s, to_eigen(z_orig, r0, r1), Mode::eval);
    MatrixXd Zp = forward_d(s, to_eigen(z_cf, r0, r1), Mode::eval);
    for (Eigen::Index i = 0; i < Z.rows(); ++i) {
      auto p = project_out(Z.row(i).transpose(), Zp.row(i).transpose(), alpha, s.config.epsilon_norm);
      raw += (Z.row(i) - Zp.row(i)).norm();
      clean += (p.z_clean - p.z_cf_clean).norm();
    }
    sum += Z.colwise().sum().transpose();
    sq += Z.array().square().colwise().sum().matrix().transpose();
  }
  const double nn = static_cast<double>(n);
  VectorXd var = (sq / nn - (sum / nn).cwiseProduct(sum / nn)).cwiseMax(0.0);
  return {raw / nn, clean / nn, var.cwiseSqrt().mean()};
}

FeatureMatrix extract_clean(const EncoderState& s, const FeatureMatrix& z_orig,
                            const FeatureMatrix& z_cf, double alpha) {
  if (z_orig.rows() != z_cf.rows() || z_orig.cols() != z_cf.cols())
    throw DataError("extract_clean: original and counterfactual shapes differ");
  if (z_orig.cols() != s.config.input_dim)
    throw DataError("extract_clean: expected " + std::to_string(s.config.input_dim) +
                    " columns, got " + std::to_string(z_orig.cols()));
  const size_t n = z_orig.rows(), e = s.config.embed_dim(), chunk = 2048;
  std::vector<double> out(n * e);
  for (size_t r0 = 0; r0 < n; r0 += chunk) {
    size_t r1 = std::min(n, r0 + chunk);
    MatrixXd Z = forward_d(s, to_eigen(z_orig, r0, r1), Mode::eval);
    MatrixXd Zp = forward_d(s, to_eigen(z_cf, r0, r1), Mode::eval);
    for (Eigen::Index i = 0; i < Z.rows(); ++i) {
      auto p = project_out(Z.row(i).transpose(), Zp.row(i).transpose(), alpha, s.config.epsilon_norm);
      for (size_t j = 0; j < e; ++j) out[(r0 + i) * e + j] = p.z_clean(j);
    }
  }
  return FeatureMatrix::from_double(n, e, out);
}

std::string TrainingLog::to_csv() const {
  std::ostringstream o;
  o.precision(9);
  o << "epoch,loss_total,loss_adv,loss_cons,loss_var,loss_y,loss_ctr,mean_delta_norm,"
       "clean_delta_norm,grl_strength,lr\n";
  for (const auto& r : rows)
    o << r.epoch << ',' << r.loss.total << ',' << r.loss.adv << ',' << r.loss.cons << ','
      << r.loss.var << ',' << r.loss.y << ',' << r.loss.ctr << ',' << r.mean_delta_norm << ','
      << r.clean_delta_norm << ',' << r.grl << ',' << r.lr << '\n';
  return o.str();
}

TrainResult train(const EncoderConfig& config, const PairedDataset& data) {
  data.validate();
  EncoderConfig cfg = config;
  if (cfg.input_dim == 0) cfg.input_dim = data.z_orig.cols();
  if (cfg.input_dim != data.z_orig.cols())
    throw DataError("train: config input_dim " + std::to_string(cfg.input_dim) +
                    " != feature columns " + std::to_string(data.z_orig.cols()));
  const size_t n = data.z_orig.rows();
  if (n < 2) throw DegenerateInput("train: need at least 2 pairs");

  TrainResult res;
  EncoderState& s = res.state;
  s = EncoderState::init(cfg);

  double ym = 0.0;
  for (double v : data.y) ym += v;
  ym /= static_cast<double>(n);
  double yv = 0.0;
  for (double v : data.y) yv += (v - ym) * (v - ym);
  double ysd = std::sqrt(yv / static_cast<double>(n));
  if (!(ysd > 0.0)) throw DegenerateInput("train: outcome has zero variance");
  std::vector<double> ys(n);
  for (size_t i = 0; i < n; ++i) ys[i] = (data.y[i] - ym) / ysd;
  s.y_mean = ym;
  s.y_std = ysd;
  res.log.y_mean = ym;
  res.log.y_std = ysd;
  res.log.metadata = {{"contrastive_negative_gradient", "full"},
                      {"variance_loss_on", "raw embeddings, both arms"},
                      {"label_mode", cfg.label_mode},
                      {"y_mean", ym},
                      {"y_std", ysd}};

  calibrate_norm_stats(s, data.z_orig, data.z_cf);

  SeededRng root = SeededRng(cfg.seed).derive("train");
  const size_t bs = std::min(cfg.batch_size, n);
  auto batches = [&](size_t) {
    std::vector<std::pair<size_t, size_t>> out;
    for (size_t b0 = 0; b0 < n; b0 += bs) {
      size_t b1 = std::min(n, b0 + bs);
      if (b1 - b0 >= 2) out.push_back({b0, b1});
    }
    return out;
  };
  const auto spans = batches(0);
  const double nb = static_cast<double>(spans.size());

  {
    // untrained snapshot
    TrainingRow r0;
    r0.epoch = 0;
    std::vector<size_t> idx(n);
    for (size_t i = 0; i < n; ++i) idx[i] = i;
    SeededRng prng = root.derive("snapshot");
    for (size_t k = 0; k < spans.size(); ++k) {
      PairedBatch b = make_batch(data, ys, idx, spans[k].first, spans[k].second);
      LossTerms lt = loss_and_grad(s, b, cfg.loss_weights, 0.0, prng.derive("batch", k), nullptr);
      r0.loss.adv += lt.adv / nb;
      r0.loss.cons += lt.cons / nb;
      r0.loss.var += lt.var / nb;
      r0.loss.y += lt.y / nb;
      r0.loss.ctr += lt.ctr / nb;
      r0.loss.total += lt.total / nb;
    }
    DeltaNorms dn = delta_norms(s, data.z_orig, data.z_cf, cfg.alpha_proj);
    r0.mean_delta_norm = dn.raw;
    r0.clean_delta_norm = dn.clean;
    r0.grl = grl_strength(cfg, 0.0);
    r0.lr = cosine_lr(cfg, 0);
    res.log.rows.push_back(r0);
  }

  VectorXd g(s.layout.n_theta);
  long step = 0;
  for (int ep = 0; ep < cfg.epochs; ++ep) {
    const double lr = cosine_lr(cfg, ep);
    std::vector<size_t> idx(n);
    for (size_t i = 0; i < n; ++i) idx[i] = i;
    SeededRng erng = root.derive("epoch", static_cast<uint64_t>(ep));
    erng.shuffle(idx);
    TrainingRow row;
    row.epoch = ep + 1;
    row.lr = lr;
    double raw_acc = 0.0, clean_acc = 0.0, grl_acc = 0.0;
    for (size_t k = 0; k < spans.size(); ++k) {
      const double grl = grl_strength(cfg, ep + static_cast<double>(k) / nb);
      PairedBatch b = make_batch(data, ys, idx, spans[k].first, spans[k].second);
      BatchStats st;
      LossTerms lt;
      try {
        lt = loss_and_grad(s, b, cfg.loss_weights, grl, root.derive("batch", step), &g, &st);
      } catch (const NumericalError& e) {
        throw NumericalError(std::string(e.what()) + " at epoch " + std::to_string(ep + 1) +
                             ", batch " + std::to_string(k));
      }
      adam_step(s, g, lr);
      if (cfg.batch_norm) update_running(s, st);
      ++step;
      row.loss.adv += lt.adv / nb;
      row.loss.cons += lt.cons / nb;
      row.loss.var += lt.var / nb;
      row.loss.y += lt.y / nb;
      row.loss.ctr += lt.ctr / nb;
      row.loss.total += lt.total / nb;
      raw_acc += lt.mean_delta / nb;
      clean_acc += lt.mean_clean_delta / nb;
      grl_acc += grl / nb;
    }
    s.epoch = ep + 1;
    row.grl = grl_acc;
    if (cfg.log_eval) {
      DeltaNorms dn = delta_norms(s, data.z_orig, data.z_cf, cfg.alpha_proj);
      row.mean_delta_norm = dn.raw;
      row.clean_delta_norm = dn.clean;
    } else {
      row.mean_delta_norm = raw_acc;
      row.clean_delta_norm = clean_acc;
    }
    res.log.rows.push_back(row);
  }
  return res;
}

}  // namespace dice
