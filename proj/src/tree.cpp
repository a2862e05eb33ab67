#include <algorithm>
#include <cmath>

#include "dice/errors.hpp"
#include "dice/nuisance.hpp"

namespace dice {

ColumnMajor::ColumnMajor(const FeatureMatrix& x) : n(x.rows()), d(x.cols()), v(x.rows() * x.cols()) {
  const float* src = x.data().data();
  for (size_t i = 0; i < n; ++i)
    for (size_t j = 0; j < d; ++j) v[j * n + i] = src[i * d + j];
}

double Tree::predict(std::span<const float> row) const {
  int k = 0;
  while (nodes[k].feature >= 0) {
    const TreeNode& nd = nodes[k];
    k = static_cast<double>(row[nd.feature]) <= nd.threshold ? nd.left : nd.right;
  }
  return nodes[k].value;
}

int Tree::depth() const {
  // nodes are stored in preorder; recompute via explicit stack
  if (nodes.empty()) return 0;
  int best = 0;
  std::vector<std::pair<int, int>> st{{0, 0}};
  while (!st.empty()) {
    auto [k, dep] = st.back();
    st.pop_back();
    best = std::max(best, dep);
    if (nodes[k].feature >= 0) {
      st.push_back({nodes[k].left, dep + 1});
      st.push_back({nodes[k].right, dep + 1});
    }
  }
  return best;
}

namespace {

struct Builder {
  const ColumnMajor& x;
  const std::vector<double>& y;
  const std::vector<double>& w;
  const std::vector<double>* h;
  TreeParams p;
  SeededRng& rng;
  Tree tree;
  std::vector<std::pair<float, uint32_t>> buf;
  std::vector<int> pool;
  std::vector<int> feats;

  Builder(const ColumnMajor& x_, const std::vector<double>& y_, const std::vector<double>& w_,
          const std::vector<double>* h_, const TreeParams& p_, SeededRng& r)
      : x(x_), y(y_), w(w_), h(h_), p(p_), rng(r) {
    pool.resize(x.d);
    for (size_t j = 0; j < x.d; ++j) pool[j] = static_cast<int>(j);
    buf.reserve(x.n);
  }

  void sample_features() {
    int m = std::min<int>(p.max_features, static_cast<int>(x.d));
    for (int k = 0; k < m; ++k) {
      size_t j = k + static_cast<size_t>(rng.below(x.d - k));
      std::swap(pool[k], pool[j]);
    }
    feats.assign(pool.begin(), pool.begin() + m);
    std::sort(feats.begin(), feats.end());
  }

  int grow(uint32_t* b, uint32_t* e, int depth) {
    double W = 0.0, S = 0.0, H = 0.0;
    double ymin = INFINITY, ymax = -INFINITY;
    for (uint32_t* it = b; it != e; ++it) {
      W += w[*it];
      S += w[*it] * y[*it];
      if (h) H += w[*it] * (*h)[*it];
      ymin = std::min(ymin, y[*it]);
      ymax = std::max(ymax, y[*it]);
    }
    int node = static_cast<int>(tree.nodes.size());
    tree.nodes.push_back({});
    if (h)
      tree.nodes[node].value = H > 1e-12 ? S / H : 0.0;
    else
      tree.nodes[node].value = W > 0 ? S / W : 0.0;

    const long cnt = e - b;
    if (depth >= p.max_depth || cnt < p.min_samples_split || ymax <= ymin) return node;

    sample_features();
    const double parent = S * S / W;
    double best = parent + 1e-12 * (1.0 + std::fabs(parent));
    int best_f = -1;
    double best_thr = 0.0;
    for (int f : feats) {
      buf.clear();
      const float* col = x.v.data() + static_cast<size_t>(f) * x.n;
      for (uint32_t* it = b; it != e; ++it) buf.emplace_back(col[*it], *it);
      std::sort(buf.begin(), buf.end(),
                [](const auto& a, const auto& c) { return a.first < c.first; });
      if (!(buf.front().first < buf.back().first)) continue;
      double WL = 0.0, SL = 0.0;
      for (long k = 0; k + 1 < cnt; ++k) {
        uint32_t i = buf[k].second;
        WL += w[i];
        SL += w[i] * y[i];
        if (!(buf[k].first < buf[k + 1].first)) continue;
        double WR = W - WL, SR = S - SL;
        if (WL <= 0.0 || WR <= 0.0) continue;
        double g = SL * SL / WL + SR * SR / WR;
        if (g > best) {
          best = g;
          best_f = f;
          best_thr = 0.5 * (static_cast<double>(buf[k].first) + static_cast<double>(buf[k + 1].first));
        }
      }
    }
    if (best_f < 0) return node;

    const float* col = x.v.data() + static_cast<size_t>(best_f) * x.n;
    uint32_t* mid = std::partition(
        b, e, [&](uint32_t i) { return static_cast<double>(col[i]) <= best_thr; });
    int l = grow(b, mid, depth + 1);
    int r = grow(mid, e, depth + 1);
    TreeNode& nd = tree.nodes[node];
    nd.feature = best_f;
    nd.threshold = best_thr;
    nd.left = l;
    nd.right = r;
    return node;
  }
};

}  // namespace

Tree build_tree(const ColumnMajor& x, const std::vector<double>& y, const std::vector<double>& w,
                std::vector<uint32_t> idx, const TreeParams& p, SeededRng& rng,
                const std::vector<double>* hess) {
  if (idx.empty()) throw DataError("build_tree: empty sample");
  Builder bld(x, y, w, hess, p, rng);
  bld.grow(idx.data(), idx.data() + idx.size(), 0);
  return std::move(bld.tree);
}

}  // namespace dice
