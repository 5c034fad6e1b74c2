#include "armflow/tensor.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <unordered_set>

namespace armflow::nn {

namespace {

thread_local int g_no_grad_depth = 0;
std::atomic<bool> g_finite_checks{true};

int rows_for(const Shape& s) {
  if (s.empty()) return 1;
  int64_t r = 1;
  for (size_t i = 0; i + 1 < s.size(); ++i) r *= s[i];
  return int(r);
}

int cols_for(const Shape& s) { return s.empty() ? 1 : s.back(); }

void check_finite(const Mat& m, const char* op) {
  if (finite_checks_enabled() && !m.allFinite())
    throw NonFinite(std::string("non-finite values produced by op '") + op + "'");
}

std::shared_ptr<Node> make_node(Mat val, Shape shape, const char* op,
                                std::vector<std::shared_ptr<Node>> parents,
                                std::function<void(Node&)> backward_fn) {
  auto n = std::make_shared<Node>();
  n->val = std::move(val);
  n->shape = std::move(shape);
  n->op = op;
  check_finite(n->val, op);
  bool needs = false;
  if (!NoGradGuard::active()) {
    for (const auto& p : parents)
      if (p && p->requires_grad) needs = true;
  }
  if (needs) {
    n->requires_grad = true;
    n->parents = std::move(parents);
    n->backward_fn = std::move(backward_fn);
  }
  return n;
}

void require_same_dims(const Tensor& a, const Tensor& b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols())
    throw ShapeMismatch(std::string(op) + ": operand dims differ");
}

}  // namespace

int64_t shape_numel(const Shape& s) {
  int64_t n = 1;
  for (int e : s) n *= e;
  return n;
}

NoGradGuard::NoGradGuard() { ++g_no_grad_depth; }
NoGradGuard::~NoGradGuard() { --g_no_grad_depth; }
bool NoGradGuard::active() { return g_no_grad_depth > 0; }

void set_finite_checks(bool on) { g_finite_checks.store(on); }
bool finite_checks_enabled() { return g_finite_checks.load(); }

Tensor Tensor::zeros(const Shape& s, bool requires_grad) {
  return full(s, 0.0, requires_grad);
}

Tensor Tensor::full(const Shape& s, Scalar v, bool requires_grad) {
  auto n = std::make_shared<Node>();
  n->val = Mat::Constant(rows_for(s), cols_for(s), v);
  n->shape = s;
  n->requires_grad = requires_grad && !NoGradGuard::active();
  return Tensor(n);
}

Tensor Tensor::scalar(Scalar v) { return full({1}, v, false); }

Tensor Tensor::from_mat(Mat m, Shape s, bool requires_grad) {
  if (shape_numel(s) != m.size()) throw ShapeMismatch("from_mat: shape does not match data");
  if (m.cols() != cols_for(s) || m.rows() != rows_for(s)) {
    Mat r(rows_for(s), cols_for(s));
    std::copy(m.data(), m.data() + m.size(), r.data());
    m = std::move(r);
  }
  auto n = std::make_shared<Node>();
  n->val = std::move(m);
  n->shape = std::move(s);
  n->requires_grad = requires_grad && !NoGradGuard::active();
  check_finite(n->val, "from_mat");
  return Tensor(n);
}

Tensor Tensor::from_mat(Mat m, bool requires_grad) {
  Shape s{int(m.rows()), int(m.cols())};
  return from_mat(std::move(m), std::move(s), requires_grad);
}

Tensor Tensor::randn(const Shape& s, const Rng& rng, bool requires_grad) {
  Mat m(rows_for(s), cols_for(s));
  for (int64_t i = 0; i < m.size(); ++i) m.data()[i] = rng.normal(uint64_t(i));
  return from_mat(std::move(m), s, requires_grad);
}

Mat& Tensor::leaf_value() {
  if (!node_->parents.empty()) throw Error("leaf_value: not a leaf tensor");
  return node_->val;
}

const Mat& Tensor::grad() const {
  node_->ensure_grad();
  return node_->grad;
}

void Tensor::set_requires_grad(bool on) {
  if (on && !node_->parents.empty()) throw Error("set_requires_grad: not a leaf");
  node_->requires_grad = on;
}

Tensor Tensor::detach() const {
  auto n = std::make_shared<Node>();
  n->val = node_->val;
  n->shape = node_->shape;
  n->requires_grad = false;
  return Tensor(n);
}

Tensor Tensor::reshape(const Shape& s) const {
  if (shape_numel(s) != size()) throw ShapeMismatch("reshape: element count mismatch");
  Mat flat(rows_for(s), cols_for(s));
  std::copy(node_->val.data(), node_->val.data() + node_->val.size(), flat.data());
  auto self = node_;
  return Tensor(make_node(std::move(flat), s, "reshape", {self}, [self](Node& n) {
    self->ensure_grad();
    std::transform(n.grad.data(), n.grad.data() + n.grad.size(), self->grad.data(),
                   self->grad.data(), std::plus<Scalar>());
  }));
}

void Tensor::backward() const {
  if (size() != 1) throw ShapeMismatch("backward: tensor is not scalar");
  if (!node_->requires_grad) return;

  // reverse topological order via iterative post-order DFS
  std::vector<Node*> order;
  std::unordered_set<Node*> visited;
  std::vector<std::pair<Node*, size_t>> stack{{node_.get(), 0}};
  visited.insert(node_.get());
  while (!stack.empty()) {
    auto& [n, idx] = stack.back();
    if (idx < n->parents.size()) {
      Node* p = n->parents[idx++].get();
      if (p && p->requires_grad && !visited.count(p)) {
        visited.insert(p);
        stack.emplace_back(p, 0);
      }
    } else {
      order.push_back(n);
      stack.pop_back();
    }
  }

  node_->ensure_grad();
  node_->grad(0, 0) = 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    if (n->backward_fn && n->grad.size() != 0) n->backward_fn(*n);
  }
}

// ---------------------------------------------------------------------------

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_dims(a, b, "add");
  auto pa = a.node(), pb = b.node();
  return Tensor(make_node(pa->val + pb->val, pa->shape, "add", {pa, pb}, [pa, pb](Node& n) {
    if (pa->requires_grad) { pa->ensure_grad(); pa->grad += n.grad; }
    if (pb->requires_grad) { pb->ensure_grad(); pb->grad += n.grad; }
  }));
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same_dims(a, b, "sub");
  auto pa = a.node(), pb = b.node();
  return Tensor(make_node(pa->val - pb->val, pa->shape, "sub", {pa, pb}, [pa, pb](Node& n) {
    if (pa->requires_grad) { pa->ensure_grad(); pa->grad += n.grad; }
    if (pb->requires_grad) { pb->ensure_grad(); pb->grad -= n.grad; }
  }));
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_dims(a, b, "mul");
  auto pa = a.node(), pb = b.node();
  return Tensor(make_node(pa->val.cwiseProduct(pb->val), pa->shape, "mul", {pa, pb},
                          [pa, pb](Node& n) {
    if (pa->requires_grad) { pa->ensure_grad(); pa->grad += n.grad.cwiseProduct(pb->val); }
    if (pb->requires_grad) { pb->ensure_grad(); pb->grad += n.grad.cwiseProduct(pa->val); }
  }));
}

Tensor scale(const Tensor& a, Scalar s) {
  auto pa = a.node();
  return Tensor(make_node(pa->val * s, pa->shape, "scale", {pa}, [pa, s](Node& n) {
    pa->ensure_grad();
    pa->grad += n.grad * s;
  }));
}

Tensor add_scalar(const Tensor& a, Scalar s) {
  auto pa = a.node();
  return Tensor(make_node(pa->val.array() + s, pa->shape, "add_scalar", {pa}, [pa](Node& n) {
    pa->ensure_grad();
    pa->grad += n.grad;
  }));
}

Tensor mul_const(const Tensor& a, const Mat& m) {
  if (a.rows() != m.rows() || a.cols() != m.cols())
    throw ShapeMismatch("mul_const: dims differ");
  auto pa = a.node();
  return Tensor(make_node(pa->val.cwiseProduct(m), pa->shape, "mul_const", {pa}, [pa, m](Node& n) {
    pa->ensure_grad();
    pa->grad += n.grad.cwiseProduct(m);
  }));
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.cols() != b.rows()) throw ShapeMismatch("matmul: inner dims differ");
  auto pa = a.node(), pb = b.node();
  Shape s{a.rows(), b.cols()};
  return Tensor(make_node(pa->val * pb->val, s, "matmul", {pa, pb}, [pa, pb](Node& n) {
    if (pa->requires_grad) { pa->ensure_grad(); pa->grad.noalias() += n.grad * pb->val.transpose(); }
    if (pb->requires_grad) { pb->ensure_grad(); pb->grad.noalias() += pa->val.transpose() * n.grad; }
  }));
}

Tensor transpose(const Tensor& a) {
  auto pa = a.node();
  Shape s{a.cols(), a.rows()};
  return Tensor(make_node(pa->val.transpose(), s, "transpose", {pa}, [pa](Node& n) {
    pa->ensure_grad();
    pa->grad += n.grad.transpose();
  }));
}

Tensor concat_rows(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw ShapeMismatch("concat_rows: empty");
  const int c = parts[0].cols();
  int r = 0;
  for (const auto& p : parts) {
    if (p.cols() != c) throw ShapeMismatch("concat_rows: col mismatch");
    r += p.rows();
  }
  Mat out(r, c);
  std::vector<std::shared_ptr<Node>> ps;
  int at = 0;
  for (const auto& p : parts) {
    out.middleRows(at, p.rows()) = p.value();
    at += p.rows();
    ps.push_back(p.node());
  }
  auto ps_copy = ps;
  return Tensor(make_node(std::move(out), Shape{r, c}, "concat_rows", std::move(ps),
                          [ps_copy](Node& n) {
    int at = 0;
    for (const auto& p : ps_copy) {
      if (p->requires_grad) {
        p->ensure_grad();
        p->grad += n.grad.middleRows(at, p->val.rows());
      }
      at += int(p->val.rows());
    }
  }));
}

Tensor slice_rows(const Tensor& a, int start, int count) {
  if (start < 0 || count < 0 || start + count > a.rows())
    throw ShapeMismatch("slice_rows: out of range");
  auto pa = a.node();
  return Tensor(make_node(pa->val.middleRows(start, count), Shape{count, a.cols()}, "slice_rows",
                          {pa}, [pa, start, count](Node& n) {
    pa->ensure_grad();
    pa->grad.middleRows(start, count) += n.grad;
  }));
}

Tensor gelu(const Tensor& a) {
  static constexpr Scalar kC = 0.7978845608028654;  // sqrt(2/pi)
  static constexpr Scalar kA = 0.044715;
  auto pa = a.node();
  const Mat& x = pa->val;
  Mat u = (kC * (x.array() + kA * x.array().cube())).matrix();
  Mat t = u.array().tanh().matrix();
  Mat y = (0.5 * x.array() * (1.0 + t.array())).matrix();
  return Tensor(make_node(std::move(y), pa->shape, "gelu", {pa}, [pa, t = std::move(t)](Node& n) {
    pa->ensure_grad();
    const auto& x = pa->val.array();
    auto sech2 = 1.0 - t.array().square();
    auto dgdx = 0.5 * (1.0 + t.array()) + 0.5 * x * sech2 * kC * (1.0 + 3.0 * kA * x.square());
    pa->grad.array() += n.grad.array() * dgdx;
  }));
}

Tensor softmax_rows(const Tensor& a) {
  auto pa = a.node();
  Mat y = pa->val;
  for (int i = 0; i < y.rows(); ++i) {
    auto row = y.row(i).array();
    row -= row.maxCoeff();
    row = row.exp();
    row /= row.sum();
  }
  Mat y_copy = y;
  return Tensor(make_node(std::move(y), pa->shape, "softmax", {pa},
                          [pa, y = std::move(y_copy)](Node& n) {
    pa->ensure_grad();
    for (int i = 0; i < y.rows(); ++i) {
      const Scalar dot = n.grad.row(i).dot(y.row(i));
      pa->grad.row(i).array() += y.row(i).array() * (n.grad.row(i).array() - dot);
    }
  }));
}

Tensor sum(const Tensor& a) {
  auto pa = a.node();
  Mat out(1, 1);
  out(0, 0) = pa->val.sum();
  return Tensor(make_node(std::move(out), Shape{1}, "sum", {pa}, [pa](Node& n) {
    pa->ensure_grad();
    pa->grad.array() += n.grad(0, 0);
  }));
}

Tensor mean(const Tensor& a) {
  auto pa = a.node();
  const Scalar inv = 1.0 / Scalar(pa->val.size());
  Mat out(1, 1);
  out(0, 0) = pa->val.sum() * inv;
  return Tensor(make_node(std::move(out), Shape{1}, "mean", {pa}, [pa, inv](Node& n) {
    pa->ensure_grad();
    pa->grad.array() += n.grad(0, 0) * inv;
  }));
}

Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b) {
  if (x.cols() != w.rows()) throw ShapeMismatch("linear: in dim mismatch");
  auto px = x.node(), pw = w.node();
  Mat y = px->val * pw->val;
  std::shared_ptr<Node> pb;
  if (b.defined()) {
    if (b.cols() != w.cols()) throw ShapeMismatch("linear: bias dim mismatch");
    pb = b.node();
    y.rowwise() += pb->val.row(0);
  }
  Shape s{x.rows(), w.cols()};
  return Tensor(make_node(std::move(y), s, "linear", {px, pw, pb}, [px, pw, pb](Node& n) {
    if (px->requires_grad) { px->ensure_grad(); px->grad.noalias() += n.grad * pw->val.transpose(); }
    if (pw->requires_grad) { pw->ensure_grad(); pw->grad.noalias() += px->val.transpose() * n.grad; }
    if (pb && pb->requires_grad) {
      pb->ensure_grad();
      pb->grad.row(0) += n.grad.colwise().sum();
    }
  }));
}

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, Scalar eps) {
  if (gain.cols() != x.cols() || bias.cols() != x.cols())
    throw ShapeMismatch("layer_norm: gain/bias dims");
  auto px = x.node(), pg = gain.node(), pb = bias.node();
  const int r = x.rows(), c = x.cols();
  Mat xhat(r, c);
  Vec rstd(r);
  for (int i = 0; i < r; ++i) {
    const Scalar mu = px->val.row(i).mean();
    const Scalar var = (px->val.row(i).array() - mu).square().mean();
    rstd(i) = 1.0 / std::sqrt(var + eps);
    xhat.row(i) = (px->val.row(i).array() - mu) * rstd(i);
  }
  Mat y = (xhat.array().rowwise() * pg->val.row(0).array()).rowwise() + pb->val.row(0).array();
  Mat xhat_copy = xhat;
  return Tensor(make_node(std::move(y), px->shape, "layer_norm", {px, pg, pb},
                          [px, pg, pb, xhat = std::move(xhat_copy), rstd](Node& n) {
    if (pg->requires_grad) {
      pg->ensure_grad();
      pg->grad.row(0) += (n.grad.array() * xhat.array()).colwise().sum().matrix();
    }
    if (pb->requires_grad) {
      pb->ensure_grad();
      pb->grad.row(0) += n.grad.colwise().sum();
    }
    if (px->requires_grad) {
      px->ensure_grad();
      const int c = int(xhat.cols());
      for (int i = 0; i < xhat.rows(); ++i) {
        Eigen::Array<Scalar, 1, Eigen::Dynamic> dxhat =
            n.grad.row(i).array() * pg->val.row(0).array();
        const Scalar m1 = dxhat.mean();
        const Scalar m2 = (dxhat * xhat.row(i).array()).mean();
        px->grad.row(i).array() +=
            rstd(i) * (dxhat - m1 - xhat.row(i).array() * m2);
        (void)c;
      }
    }
  }));
}

Tensor sdpa(const Tensor& q, const Tensor& k, const Tensor& v, int batch, int heads,
            Scalar dropout_p, bool train, Rng rng) {
  const int d = q.cols();
  if (d != k.cols() || d != v.cols()) throw ShapeMismatch("sdpa: dim mismatch");
  if (d % heads != 0) throw HeadDivisibility("sdpa: dim not divisible by heads");
  if (q.rows() % batch != 0 || k.rows() % batch != 0 || k.rows() != v.rows())
    throw ShapeMismatch("sdpa: rows not divisible by batch");
  const int a_len = q.rows() / batch;
  const int l_len = k.rows() / batch;
  const int dh = d / heads;
  const Scalar inv_sqrt = 1.0 / std::sqrt(Scalar(dh));
  const bool use_drop = train && dropout_p > 0.0;

  auto pq = q.node(), pk = k.node(), pv = v.node();
  Mat out = Mat::Zero(q.rows(), d);
  // probs (post-softmax) and scaled dropout mask, stacked per (b, h)
  auto probs = std::make_shared<Mat>(batch * heads * a_len, l_len);
  std::shared_ptr<Mat> dmask;
  if (use_drop) dmask = std::make_shared<Mat>(batch * heads * a_len, l_len);

  for (int b = 0; b < batch; ++b) {
    for (int h = 0; h < heads; ++h) {
      auto qb = pq->val.block(b * a_len, h * dh, a_len, dh);
      auto kb = pk->val.block(b * l_len, h * dh, l_len, dh);
      auto vb = pv->val.block(b * l_len, h * dh, l_len, dh);
      Mat s = qb * kb.transpose() * inv_sqrt;
      for (int i = 0; i < a_len; ++i) {
        auto row = s.row(i).array();
        row -= row.maxCoeff();
        row = row.exp();
        row /= row.sum();
      }
      const int base = (b * heads + h) * a_len;
      probs->middleRows(base, a_len) = s;
      if (use_drop) {
        const Scalar keep = 1.0 - dropout_p;
        Rng local = rng.derive(uint64_t(b) * heads + h);
        for (int i = 0; i < a_len; ++i)
          for (int j = 0; j < l_len; ++j) {
            const bool kept = local.uniform(uint64_t(i) * l_len + j) >= dropout_p;
            (*dmask)(base + i, j) = kept ? 1.0 / keep : 0.0;
          }
        s = s.cwiseProduct(dmask->middleRows(base, a_len));
      }
      out.block(b * a_len, h * dh, a_len, dh).noalias() = s * vb;
    }
  }

  return Tensor(make_node(std::move(out), Shape{q.rows(), d}, "sdpa", {pq, pk, pv},
                          [pq, pk, pv, probs, dmask, batch, heads, a_len, l_len, dh,
                           inv_sqrt](Node& n) {
    if (pq->requires_grad) pq->ensure_grad();
    if (pk->requires_grad) pk->ensure_grad();
    if (pv->requires_grad) pv->ensure_grad();
    for (int b = 0; b < batch; ++b) {
      for (int h = 0; h < heads; ++h) {
        const int base = (b * heads + h) * a_len;
        auto p = probs->middleRows(base, a_len);
        auto go = n.grad.block(b * a_len, h * dh, a_len, dh);
        auto qb = pq->val.block(b * a_len, h * dh, a_len, dh);
        auto kb = pk->val.block(b * l_len, h * dh, l_len, dh);
        auto vb = pv->val.block(b * l_len, h * dh, l_len, dh);
        Mat p_used = dmask ? Mat(p.cwiseProduct(dmask->middleRows(base, a_len))) : Mat(p);
        if (pv->requires_grad)
          pv->grad.block(b * l_len, h * dh, l_len, dh).noalias() += p_used.transpose() * go;
        Mat dp = go * vb.transpose();
        if (dmask) dp = dp.cwiseProduct(dmask->middleRows(base, a_len));
        Mat ds(a_len, l_len);
        for (int i = 0; i < a_len; ++i) {
          const Scalar dot = dp.row(i).dot(p.row(i));
          ds.row(i) = p.row(i).array() * (dp.row(i).array() - dot);
        }
        if (pq->requires_grad)
          pq->grad.block(b * a_len, h * dh, a_len, dh).noalias() += ds * kb * inv_sqrt;
        if (pk->requires_grad)
          pk->grad.block(b * l_len, h * dh, l_len, dh).noalias() += ds.transpose() * qb * inv_sqrt;
      }
    }
  }));
}

Tensor add_tiled(const Tensor& x, const Tensor& e) {
  if (x.cols() != e.cols() || x.rows() % e.rows() != 0)
    throw ShapeMismatch("add_tiled: dims");
  const int tile = e.rows();
  const int reps = x.rows() / tile;
  auto px = x.node(), pe = e.node();
  Mat y = px->val;
  for (int r = 0; r < reps; ++r) y.middleRows(r * tile, tile) += pe->val;
  return Tensor(make_node(std::move(y), px->shape, "add_tiled", {px, pe},
                          [px, pe, tile, reps](Node& n) {
    if (px->requires_grad) { px->ensure_grad(); px->grad += n.grad; }
    if (pe->requires_grad) {
      pe->ensure_grad();
      for (int r = 0; r < reps; ++r) pe->grad += n.grad.middleRows(r * tile, tile);
    }
  }));
}

Tensor add_per_sample(const Tensor& x, const Tensor& e, int group_len) {
  if (x.cols() != e.cols() || x.rows() != e.rows() * group_len)
    throw ShapeMismatch("add_per_sample: dims");
  auto px = x.node(), pe = e.node();
  const int b_count = e.rows();
  Mat y = px->val;
  for (int b = 0; b < b_count; ++b)
    y.middleRows(b * group_len, group_len).rowwise() += pe->val.row(b);
  return Tensor(make_node(std::move(y), px->shape, "add_per_sample", {px, pe},
                          [px, pe, group_len, b_count](Node& n) {
    if (px->requires_grad) { px->ensure_grad(); px->grad += n.grad; }
    if (pe->requires_grad) {
      pe->ensure_grad();
      for (int b = 0; b < b_count; ++b)
        pe->grad.row(b) += n.grad.middleRows(b * group_len, group_len).colwise().sum();
    }
  }));
}

Tensor gather_rows(const Tensor& table, const std::vector<int>& idx) {
  auto pt = table.node();
  Mat y(int(idx.size()), table.cols());
  for (size_t i = 0; i < idx.size(); ++i) {
    if (idx[i] < 0 || idx[i] >= table.rows()) throw ShapeMismatch("gather_rows: index range");
    y.row(int(i)) = pt->val.row(idx[i]);
  }
  return Tensor(make_node(std::move(y), Shape{int(idx.size()), table.cols()}, "gather_rows", {pt},
                          [pt, idx](Node& n) {
    pt->ensure_grad();
    for (size_t i = 0; i < idx.size(); ++i) pt->grad.row(idx[i]) += n.grad.row(int(i));
  }));
}

Tensor pack_sequence(const Tensor& state, const Tensor& act, const Tensor& fut, int batch) {
  const int d = state.cols();
  if (act.cols() != d || fut.cols() != d) throw ShapeMismatch("pack_sequence: dims");
  if (state.rows() != batch || act.rows() % batch != 0)
    throw ShapeMismatch("pack_sequence: batch");
  const int act_len = act.rows() / batch;
  const int fut_len = fut.rows();
  const int seq = 1 + act_len + fut_len;
  auto ps = state.node(), pa = act.node(), pf = fut.node();
  Mat y(batch * seq, d);
  for (int b = 0; b < batch; ++b) {
    y.row(b * seq) = ps->val.row(b);
    y.middleRows(b * seq + 1, act_len) = pa->val.middleRows(b * act_len, act_len);
    y.middleRows(b * seq + 1 + act_len, fut_len) = pf->val;
  }
  return Tensor(make_node(std::move(y), Shape{batch * seq, d}, "pack_sequence", {ps, pa, pf},
                          [ps, pa, pf, batch, act_len, fut_len, seq](Node& n) {
    if (ps->requires_grad) ps->ensure_grad();
    if (pa->requires_grad) pa->ensure_grad();
    if (pf->requires_grad) pf->ensure_grad();
    for (int b = 0; b < batch; ++b) {
      if (ps->requires_grad) ps->grad.row(b) += n.grad.row(b * seq);
      if (pa->requires_grad)
        pa->grad.middleRows(b * act_len, act_len) += n.grad.middleRows(b * seq + 1, act_len);
      if (pf->requires_grad) pf->grad += n.grad.middleRows(b * seq + 1 + act_len, fut_len);
    }
  }));
}

Tensor gather_per_sample(const Tensor& x, int batch, int seq_len, int start, int count) {
  if (x.rows() != batch * seq_len || start < 0 || start + count > seq_len)
    throw ShapeMismatch("gather_per_sample: range");
  auto px = x.node();
  Mat y(batch * count, x.cols());
  for (int b = 0; b < batch; ++b)
    y.middleRows(b * count, count) = px->val.middleRows(b * seq_len + start, count);
  return Tensor(make_node(std::move(y), Shape{batch * count, x.cols()}, "gather_per_sample", {px},
                          [px, batch, seq_len, start, count](Node& n) {
    px->ensure_grad();
    for (int b = 0; b < batch; ++b)
      px->grad.middleRows(b * seq_len + start, count) += n.grad.middleRows(b * count, count);
  }));
}

Tensor pool_pairs(const Tensor& x) {
  if (x.cols() % 2 != 0) throw ShapeMismatch("pool_pairs: odd cols");
  const int c = x.cols() / 2;
  auto px = x.node();
  Mat y(x.rows(), c);
  for (int j = 0; j < c; ++j)
    y.col(j) = 0.5 * (px->val.col(2 * j) + px->val.col(2 * j + 1));
  return Tensor(make_node(std::move(y), Shape{x.rows(), c}, "pool_pairs", {px},
                          [px, c](Node& n) {
    px->ensure_grad();
    for (int j = 0; j < c; ++j) {
      px->grad.col(2 * j) += 0.5 * n.grad.col(j);
      px->grad.col(2 * j + 1) += 0.5 * n.grad.col(j);
    }
  }));
}

// ---------------------------------------------------------------------------

Tensor masked_cross_entropy(const Tensor& logits, const std::vector<int>& targets,
                            const std::vector<double>& mask) {
  const int t_count = logits.rows();
  const int vocab = logits.cols();
  if (int(targets.size()) != t_count || int(mask.size()) != t_count)
    throw ShapeMismatch("masked_cross_entropy: lengths differ");
  for (int t : targets)
    if (t < 0 || t >= vocab) throw ShapeMismatch("masked_cross_entropy: target out of range");
  double mask_sum = 0.0;
  for (double m : mask) mask_sum += m;
  if (mask_sum <= 0.0) throw AllMasked("masked_cross_entropy: mask sums to zero");

  auto pl = logits.node();
  auto sm = std::make_shared<Mat>(pl->val);
  double loss = 0.0;
  for (int i = 0; i < t_count; ++i) {
    auto row = sm->row(i).array();
    const Scalar mx = row.maxCoeff();
    row -= mx;
    const Scalar lse = std::log(row.exp().sum());
    loss -= mask[i] * (row(targets[i]) - lse);
    row = (row - lse).exp();  // softmax, kept for backward
  }
  loss /= mask_sum;
  Mat out(1, 1);
  out(0, 0) = loss;
  return Tensor(make_node(std::move(out), Shape{1}, "masked_ce", {pl},
                          [pl, sm, targets, mask, mask_sum](Node& n) {
    pl->ensure_grad();
    const Scalar g = n.grad(0, 0) / mask_sum;
    for (int i = 0; i < int(targets.size()); ++i) {
      if (mask[i] == 0.0) continue;
      pl->grad.row(i) += g * mask[i] * sm->row(i);
      pl->grad(i, targets[i]) -= g * mask[i];
    }
  }));
}

Tensor cosine_similarity(const Tensor& u, const Tensor& v) {
  if (u.size() != v.size()) throw ShapeMismatch("cosine_similarity: sizes differ");
  auto pu = u.node(), pv = v.node();
  Eigen::Map<const Vec> uf(pu->val.data(), pu->val.size());
  Eigen::Map<const Vec> vf(pv->val.data(), pv->val.size());
  const Scalar nu = uf.norm(), nv = vf.norm();
  if (nu < 1e-12 || nv < 1e-12) throw ZeroNorm("cosine_similarity: zero-norm input");
  const Scalar dot = uf.dot(vf);
  const Scalar c = dot / (nu * nv);
  Mat out(1, 1);
  out(0, 0) = c;
  return Tensor(make_node(std::move(out), Shape{1}, "cosine", {pu, pv},
                          [pu, pv, nu, nv, c](Node& n) {
    const Scalar g = n.grad(0, 0);
    Eigen::Map<const Vec> uf(pu->val.data(), pu->val.size());
    Eigen::Map<const Vec> vf(pv->val.data(), pv->val.size());
    if (pu->requires_grad) {
      pu->ensure_grad();
      Eigen::Map<Vec> gu(pu->grad.data(), pu->grad.size());
      gu += g * (vf / (nu * nv) - c * uf / (nu * nu));
    }
    if (pv->requires_grad) {
      pv->ensure_grad();
      Eigen::Map<Vec> gv(pv->grad.data(), pv->grad.size());
      gv += g * (uf / (nu * nv) - c * vf / (nv * nv));
    }
  }));
}

Tensor mse_masked_mean(const Tensor& pred, const Mat& target, const Mat& mask) {
  if (pred.rows() != target.rows() || pred.cols() != target.cols() ||
      pred.rows() != mask.rows() || pred.cols() != mask.cols())
    throw ShapeMismatch("mse_masked_mean: dims");
  const double n_valid = mask.sum();
  if (n_valid <= 0.0) throw AllMasked("mse_masked_mean: empty mask");
  auto pp = pred.node();
  Mat diff = (pp->val - target).cwiseProduct(mask);
  Mat out(1, 1);
  out(0, 0) = diff.squaredNorm() / n_valid;
  return Tensor(make_node(std::move(out), Shape{1}, "mse", {pp},
                          [pp, diff = std::move(diff), n_valid](Node& n) {
    pp->ensure_grad();
    pp->grad += (2.0 * n.grad(0, 0) / n_valid) * diff;
  }));
}

Tensor neg_cosine_mean(const Tensor& f, const Mat& g) {
  if (f.rows() != g.rows() || f.cols() != g.cols()) throw ShapeMismatch("neg_cosine_mean: dims");
  auto pf = f.node();
  const int b_count = f.rows();
  Vec nf(b_count), ng(b_count), cs(b_count);
  for (int b = 0; b < b_count; ++b) {
    nf(b) = pf->val.row(b).norm();
    ng(b) = g.row(b).norm();
    if (nf(b) < 1e-12 || ng(b) < 1e-12) throw ZeroNorm("neg_cosine_mean: zero-norm row");
    cs(b) = pf->val.row(b).dot(g.row(b)) / (nf(b) * ng(b));
  }
  Mat out(1, 1);
  out(0, 0) = -cs.mean();
  return Tensor(make_node(std::move(out), Shape{1}, "neg_cos", {pf},
                          [pf, g, nf, ng, cs, b_count](Node& n) {
    pf->ensure_grad();
    const Scalar gs = -n.grad(0, 0) / Scalar(b_count);
    for (int b = 0; b < b_count; ++b) {
      pf->grad.row(b) +=
          gs * (g.row(b) / (nf(b) * ng(b)) - cs(b) * pf->val.row(b) / (nf(b) * nf(b)));
    }
  }));
}

}  // namespace armflow::nn
