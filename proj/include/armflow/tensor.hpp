#pragma once

#include <Eigen/Core>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "armflow/errors.hpp"
#include "armflow/rng.hpp"

namespace armflow::nn {

using Scalar = double;
using Mat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vec = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

// Logical shape; storage is always row-major with cols = shape.back().
using Shape = std::vector<int>;

int64_t shape_numel(const Shape& s);

struct Node {
  Mat val;
  Shape shape;
  Mat grad;  // lazily allocated
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward_fn;
  const char* op = "leaf";

  void ensure_grad() {
    if (grad.size() == 0) grad = Mat::Zero(val.rows(), val.cols());
  }
};

// Thread-local guard: while active, new nodes never require gradients.
struct NoGradGuard {
  NoGradGuard();
  ~NoGradGuard();
  static bool active();
};

// Toggles the per-op finite check (on by default).
void set_finite_checks(bool on);
bool finite_checks_enabled();

// Value-semantic handle to an immutable graph node.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(const Shape& s, bool requires_grad = false);
  static Tensor full(const Shape& s, Scalar v, bool requires_grad = false);
  static Tensor scalar(Scalar v);
  static Tensor from_mat(Mat m, Shape s, bool requires_grad = false);
  static Tensor from_mat(Mat m, bool requires_grad = false);  // shape = (rows, cols)
  static Tensor randn(const Shape& s, const Rng& rng, bool requires_grad = false);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  int64_t size() const { return shape_numel(node_->shape); }
  int rows() const { return int(node_->val.rows()); }
  int cols() const { return int(node_->val.cols()); }
  bool requires_grad() const { return node_->requires_grad; }

  const Mat& value() const { return node_->val; }
  // For leaves only (optimizer updates, finite-difference probes).
  Mat& leaf_value();
  const Mat& grad() const;
  bool has_grad() const { return node_ && node_->grad.size() != 0; }
  void zero_grad() { if (node_ && node_->grad.size()) node_->grad.setZero(); }
  void set_requires_grad(bool on);

  Tensor detach() const;
  Tensor reshape(const Shape& s) const;  // materializes; use on small tensors

  // Runs reverse-mode accumulation from this scalar.
  void backward() const;

  std::shared_ptr<Node> node() const { return node_; }
  explicit Tensor(std::shared_ptr<Node> n) : node_(std::move(n)) {}

 private:
  std::shared_ptr<Node> node_;
};

// ---- elementwise / structural ops ----
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, Scalar s);
Tensor add_scalar(const Tensor& a, Scalar s);
Tensor mul_const(const Tensor& a, const Mat& m);  // constant elementwise factor
Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);
Tensor concat_rows(const std::vector<Tensor>& parts);
Tensor slice_rows(const Tensor& a, int start, int count);
Tensor gelu(const Tensor& a);
Tensor softmax_rows(const Tensor& a);
Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);

// y = x W + 1 b^T  (W: [in, out], b: [1, out] or empty)
Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b);

// Per-row layer norm with learned gain/bias (both [1, d]).
Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, Scalar eps = 1e-5);

// Fused scaled-dot-product attention over `batch` independent sequences.
// q: [batch*q_len, d], k/v: [batch*kv_len, d]; d divisible by heads.
// Dropout (if p > 0 and train) is applied to the attention probabilities.
Tensor sdpa(const Tensor& q, const Tensor& k, const Tensor& v, int batch, int heads,
            Scalar dropout_p = 0.0, bool train = false, Rng rng = Rng(0));

// Adds e ([tile_len, d]) to every consecutive [tile_len, d] block of x.
Tensor add_tiled(const Tensor& x, const Tensor& e);
// Adds e ([batch, d]) row b to every row of x's b-th [group_len, d] block.
Tensor add_per_sample(const Tensor& x, const Tensor& e, int group_len);
// Embedding lookup: rows of table at idx.
Tensor gather_rows(const Tensor& table, const std::vector<int>& idx);
// Packs per-sample sequences [state_b; act_b(act_len rows); fut(fut rows, shared)].
Tensor pack_sequence(const Tensor& state, const Tensor& act, const Tensor& fut, int batch);
// Extracts rows [start, start+count) of every sample's seq_len block.
Tensor gather_per_sample(const Tensor& x, int batch, int seq_len, int start, int count);
// Mean over adjacent column pairs: [r, 2d] -> [r, d].
Tensor pool_pairs(const Tensor& x);

// ---- losses ----
// -(sum_i m_i log softmax(logits_i)[target_i]) / sum_i m_i
Tensor masked_cross_entropy(const Tensor& logits, const std::vector<int>& targets,
                            const std::vector<double>& mask);
// <u,v> / (|u||v|), grads into both; ZeroNorm below 1e-12.
Tensor cosine_similarity(const Tensor& u, const Tensor& v);
// mean over mask>0 elements of (pred - target)^2; target/mask constant.
Tensor mse_masked_mean(const Tensor& pred, const Mat& target, const Mat& mask);
// mean over rows of -cos(f_row, g_row); g constant.
Tensor neg_cosine_mean(const Tensor& f, const Mat& g);

}  // namespace armflow::nn
