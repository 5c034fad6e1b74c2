#pragma once

#include "armflow/params.hpp"
#include "armflow/tensor.hpp"

namespace armflow::nn {

// Parameter bundles for the transformer building blocks. Declaration puts
// tensors in the store under <prefix>/...; apply functions are pure graph
// builders over the current values.

struct LinearParams {
  Tensor w, b;
};
LinearParams linear_declare(ParamStore& ps, const std::string& prefix, int in, int out,
                            const Rng& rng, bool bias = true);
LinearParams linear_ref(ParamStore& ps, const std::string& prefix);
inline Tensor linear_apply(const LinearParams& p, const Tensor& x) { return linear(x, p.w, p.b); }

struct LayerNormParams {
  Tensor gain, bias;
};
LayerNormParams layer_norm_declare(ParamStore& ps, const std::string& prefix, int dim);
LayerNormParams layer_norm_ref(ParamStore& ps, const std::string& prefix);
inline Tensor layer_norm_apply(const LayerNormParams& p, const Tensor& x) {
  return layer_norm(x, p.gain, p.bias);
}

struct AttnParams {
  LinearParams q, k, v, o;
};
AttnParams attn_declare(ParamStore& ps, const std::string& prefix, int q_dim, int kv_dim, int dim,
                        const Rng& rng);
AttnParams attn_ref(ParamStore& ps, const std::string& prefix);

struct MlpParams {
  LinearParams fc1, fc2;
};
MlpParams mlp_declare(ParamStore& ps, const std::string& prefix, int dim, int hidden,
                      const Rng& rng);
MlpParams mlp_ref(ParamStore& ps, const std::string& prefix);
Tensor mlp_apply(const MlpParams& p, const Tensor& x);

// Projections + fused attention, no residual. q: [batch*A, dq], kv: [batch*L, dkv].
Tensor multi_head_attention(const AttnParams& p, const Tensor& q, const Tensor& kv, int batch,
                            int heads, Scalar dropout_p = 0.0, bool train = false,
                            Rng rng = Rng(0));

// Pre-LN residual block: x + MHA(LN(q), LN(kv)), then + MLP(LN(.)).
// Output shape equals the query shape for any kv length.
struct AttentionBlockParams {
  LayerNormParams ln1, ln2;
  AttnParams attn;
  MlpParams mlp;
};
AttentionBlockParams attention_block_declare(ParamStore& ps, const std::string& prefix, int dim,
                                             int mlp_hidden, const Rng& rng);
AttentionBlockParams attention_block_ref(ParamStore& ps, const std::string& prefix);
Tensor attention_block(const AttentionBlockParams& p, const Tensor& queries,
                       const Tensor& keys_values, int batch, int heads, Scalar dropout_p = 0.0,
                       bool train = false, Rng rng = Rng(0));

// Sinusoidal features of a scalar in [0, 1]: [sin/cos(t * freq_i)], n_feats even.
Mat sinusoidal_features(double t, int n_feats);

}  // namespace armflow::nn
