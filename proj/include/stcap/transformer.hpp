#pragma once

#include <vector>

#include <Eigen/Dense>

#include "stcap/errors.hpp"
#include "stcap/rng.hpp"

namespace stcap {

struct TransformerConfig {
    int layers = 1;
    int heads = 1;
    int d = 8;
    int d_ffn = 16;
    double dropout = 0.0;

    void validate() const {
        if (layers < 0 || heads < 1 || d < 1 || d_ffn < 1) {
            throw DimensionMismatch("transformer config: sizes must be positive");
        }
        if (d % heads != 0) {
            throw DimensionMismatch("transformer config: d must be divisible by heads");
        }
        if (dropout < 0.0 || dropout >= 1.0) {
            throw DimensionMismatch("transformer config: dropout must be in [0,1)");
        }
    }
};

// allowed(q,k): object/special-token rows see the whole object+token block and
// no decoder positions; decoder row t additionally sees decoder rows <= t.
struct AttentionMask {
    int m = 0, n = 0, t = 0;
    Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic> allowed;
    int size() const { return m + n + t; }
};

AttentionMask build_attention_mask(int m, int n, int t);

struct TransformerLayerParams {
    Eigen::VectorXd ln1_g, ln1_b, ln2_g, ln2_b;        // d
    Eigen::MatrixXd wq, wk, wv, wo;                    // d x d (input-major)
    Eigen::VectorXd bq, bk, bv, bo;                    // d
    Eigen::MatrixXd wff1;                              // d x d_ffn
    Eigen::VectorXd bff1;                              // d_ffn
    Eigen::MatrixXd wff2;                              // d_ffn x d
    Eigen::VectorXd bff2;                              // d
};

struct TransformerParams {
    std::vector<TransformerLayerParams> layers;
};

struct RowLayerNormCache {
    Eigen::VectorXd rstd;   // per row
    Eigen::MatrixXd xhat;   // P x d
};

struct TransformerLayerCache {
    Eigen::MatrixXd x_in;                 // P x d
    RowLayerNormCache ln1;
    Eigen::MatrixXd q, k, v;              // P x d
    std::vector<Eigen::MatrixXd> att;     // per head, P x P softmax weights
    Eigen::MatrixXd att_out;              // P x d, pre-Wo
    Eigen::MatrixXd attn_drop_mask;       // empty when dropout off
    Eigen::MatrixXd x_mid;                // P x d, after attention residual
    RowLayerNormCache ln2;
    Eigen::MatrixXd ff_pre;               // P x d_ffn
    Eigen::MatrixXd ff_act;               // P x d_ffn
    Eigen::MatrixXd ff_drop_mask;         // empty when dropout off
};

struct TransformerCache {
    std::vector<TransformerLayerCache> layers;
};

// Pre-norm residual stack applied jointly to the concatenated sequence under
// the mask. An empty stack (layers == 0) is the identity. `dropout_rng`
// enables inverted dropout when cfg.dropout > 0 (training only).
Eigen::MatrixXd transformer_forward(const Eigen::MatrixXd& x, const AttentionMask& mask,
                                    const TransformerConfig& cfg, const TransformerParams& params,
                                    TransformerCache* cache = nullptr, Rng* dropout_rng = nullptr);

// Returns dL/dx and accumulates parameter gradients into `grads`.
Eigen::MatrixXd transformer_backward(const Eigen::MatrixXd& dz, const AttentionMask& mask,
                                     const TransformerConfig& cfg, const TransformerParams& params,
                                     const TransformerCache& cache, TransformerParams& grads);

struct TransformerOutput {
    Eigen::MatrixXd z_obj, z_st, z_dec;
};

// Spec-level convenience: concatenates the three modalities, builds the mask
// and partitions the result back.
TransformerOutput forward(const Eigen::MatrixXd& obj_embeds, const Eigen::MatrixXd& st_embeds,
                          const Eigen::MatrixXd& dec_embeds, const TransformerConfig& cfg,
                          const TransformerParams& params);

}  // namespace stcap
