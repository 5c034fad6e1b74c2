#include "armflow/nn.hpp"

#include <cmath>

namespace armflow::nn {

LinearParams linear_declare(ParamStore& ps, const std::string& prefix, int in, int out,
                            const Rng& rng, bool bias) {
  return LinearParams{ps.weight(prefix + "/w", in, out, rng),
                      bias ? ps.zeros(prefix + "/b", Shape{1, out}) : Tensor()};
}

LinearParams linear_ref(ParamStore& ps, const std::string& prefix) {
  return LinearParams{ps.at(prefix + "/w"),
                      ps.contains(prefix + "/b") ? ps.at(prefix + "/b") : Tensor()};
}

LayerNormParams layer_norm_declare(ParamStore& ps, const std::string& prefix, int dim) {
  return LayerNormParams{ps.ones(prefix + "/g", Shape{1, dim}),
                         ps.zeros(prefix + "/b", Shape{1, dim})};
}

LayerNormParams layer_norm_ref(ParamStore& ps, const std::string& prefix) {
  return LayerNormParams{ps.at(prefix + "/g"), ps.at(prefix + "/b")};
}

AttnParams attn_declare(ParamStore& ps, const std::string& prefix, int q_dim, int kv_dim, int dim,
                        const Rng& rng) {
  // q/k/v projections carry no bias: a key bias is invisible to the row-wise
  // softmax, which would leave an exactly-degenerate parameter direction.
  return AttnParams{linear_declare(ps, prefix + "/q", q_dim, dim, rng, false),
                    linear_declare(ps, prefix + "/k", kv_dim, dim, rng, false),
                    linear_declare(ps, prefix + "/v", kv_dim, dim, rng, false),
                    linear_declare(ps, prefix + "/o", dim, dim, rng, true)};
}

AttnParams attn_ref(ParamStore& ps, const std::string& prefix) {
  return AttnParams{linear_ref(ps, prefix + "/q"), linear_ref(ps, prefix + "/k"),
                    linear_ref(ps, prefix + "/v"), linear_ref(ps, prefix + "/o")};
}

MlpParams mlp_declare(ParamStore& ps, const std::string& prefix, int dim, int hidden,
                      const Rng& rng) {
  return MlpParams{linear_declare(ps, prefix + "/fc1", dim, hidden, rng),
                   linear_declare(ps, prefix + "/fc2", hidden, dim, rng)};
}

MlpParams mlp_ref(ParamStore& ps, const std::string& prefix) {
  return MlpParams{linear_ref(ps, prefix + "/fc1"), linear_ref(ps, prefix + "/fc2")};
}

Tensor mlp_apply(const MlpParams& p, const Tensor& x) {
  return linear_apply(p.fc2, gelu(linear_apply(p.fc1, x)));
}

Tensor multi_head_attention(const AttnParams& p, const Tensor& q, const Tensor& kv, int batch,
                            int heads, Scalar dropout_p, bool train, Rng rng) {
  Tensor qp = linear_apply(p.q, q);
  Tensor kp = linear_apply(p.k, kv);
  Tensor vp = linear_apply(p.v, kv);
  Tensor attn = sdpa(qp, kp, vp, batch, heads, dropout_p, train, rng);
  return linear_apply(p.o, attn);
}

AttentionBlockParams attention_block_declare(ParamStore& ps, const std::string& prefix, int dim,
                                             int mlp_hidden, const Rng& rng) {
  return AttentionBlockParams{
      layer_norm_declare(ps, prefix + "/ln1", dim), layer_norm_declare(ps, prefix + "/ln2", dim),
      attn_declare(ps, prefix + "/attn", dim, dim, dim, rng),
      mlp_declare(ps, prefix + "/mlp", dim, mlp_hidden, rng)};
}

AttentionBlockParams attention_block_ref(ParamStore& ps, const std::string& prefix) {
  return AttentionBlockParams{layer_norm_ref(ps, prefix + "/ln1"),
                              layer_norm_ref(ps, prefix + "/ln2"),
                              attn_ref(ps, prefix + "/attn"), mlp_ref(ps, prefix + "/mlp")};
}

Tensor attention_block(const AttentionBlockParams& p, const Tensor& queries,
                       const Tensor& keys_values, int batch, int heads, Scalar dropout_p,
                       bool train, Rng rng) {
  Tensor qn = layer_norm_apply(p.ln1, queries);
  Tensor kvn = (keys_values.node() == queries.node())
                   ? qn
                   : layer_norm_apply(p.ln1, keys_values);
  Tensor x = add(queries, multi_head_attention(p.attn, qn, kvn, batch, heads, dropout_p, train,
                                               rng));
  return add(x, mlp_apply(p.mlp, layer_norm_apply(p.ln2, x)));
}

Mat sinusoidal_features(double t, int n_feats) {
  Mat out(1, n_feats);
  const int half = n_feats / 2;
  for (int i = 0; i < half; ++i) {
    const double freq = std::pow(100.0, double(i) / double(std::max(1, half - 1)));
    out(0, i) = std::sin(t * freq);
    out(0, half + i) = std::cos(t * freq);
  }
  return out;
}

}  // namespace armflow::nn
