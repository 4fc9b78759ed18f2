#pragma once

#include <array>
#include <vector>

#include <Eigen/Dense>

#include "stcap/errors.hpp"
#include "stcap/tokens.hpp"

namespace stcap {

inline constexpr double kLayerNormEps = 1e-5;

// All learned embedding parameters. Projection matrices are stored
// input-major (in x out), so a projection reads W.transpose() * x.
struct EmbeddingWeights {
    // special-token branches
    Eigen::MatrixXd w1;       // (d_fr + d_ft + 604) x d
    Eigen::MatrixXd w2;       // 4 x d
    Eigen::MatrixXd w3;       // S x d
    Eigen::VectorXd ln_feat_g, ln_feat_b;
    Eigen::VectorXd ln_box_g, ln_box_b;
    Eigen::VectorXd ln_src_g, ln_src_b;
    // object branches (separate layer-norm parameters)
    Eigen::MatrixXd w_obj;    // d_fr x d
    Eigen::MatrixXd w_objb;   // 4 x d
    Eigen::VectorXd ln_obj_g, ln_obj_b;
    Eigen::VectorXd ln_objbox_g, ln_objbox_b;
    // decoder-input tables
    Eigen::MatrixXd vocab_table;  // K x d
    Eigen::MatrixXd step_table;   // T_max x d

    int d() const { return static_cast<int>(w1.cols()); }
    int n_sources() const { return static_cast<int>(w3.rows()); }
    int d_fr() const { return static_cast<int>(w_obj.rows()); }
};

// Cached statistics for one layer-norm application.
struct LayerNormCache {
    double rstd = 0.0;
    Eigen::VectorXd xhat;
};

// LN(x) = g .* (x - mean) / sqrt(var + eps) + b, population variance.
Eigen::VectorXd layer_norm(const Eigen::VectorXd& x, const Eigen::VectorXd& g,
                           const Eigen::VectorXd& b, LayerNormCache* cache = nullptr);

// Accumulates into dx / dg / db (dx is overwritten, dg and db accumulated).
void layer_norm_backward(const Eigen::VectorXd& dy, const Eigen::VectorXd& g,
                         const LayerNormCache& cache, Eigen::VectorXd& dx,
                         Eigen::VectorXd& dg, Eigen::VectorXd& db);

// Concatenated [visual; word-vector; PHOC] feature for one token.
Eigen::VectorXd token_feature_vector(const SpecialToken& token, const VectorProvider& provider);

struct TokenEmbedCache {
    LayerNormCache ln_feat, ln_box, ln_src;
};

// x_spec = LN(W1 [x_fr; x_ft; x_p]) + LN(W2 x_b) + LN(W3 x_s).
// `features` is the concatenated token feature, `bbox` the 4 box coordinates.
Eigen::VectorXd embed_special_token_features(const Eigen::VectorXd& features,
                                             const std::array<double, 4>& bbox, int source,
                                             const EmbeddingWeights& w,
                                             TokenEmbedCache* cache = nullptr);

// Accumulates parameter gradients for one token embedding into `grads`.
void embed_special_token_backward(const Eigen::VectorXd& dy, const Eigen::VectorXd& features,
                                  const std::array<double, 4>& bbox, int source,
                                  const EmbeddingWeights& w, const TokenEmbedCache& cache,
                                  EmbeddingWeights& grads);

// Convenience wrapper that derives the features itself.
Eigen::VectorXd embed_special_token(const SpecialToken& token, const EmbeddingWeights& w,
                                    const VectorProvider& provider);

struct ObjectEmbedCache {
    LayerNormCache ln_feat, ln_box;
};

// x_obj = LN(W_obj feat) + LN(W_objb bbox).
Eigen::VectorXd embed_object(const ObjectRegion& region, const EmbeddingWeights& w,
                             ObjectEmbedCache* cache = nullptr);

void embed_object_backward(const Eigen::VectorXd& dy, const ObjectRegion& region,
                           const EmbeddingWeights& w, const ObjectEmbedCache& cache,
                           EmbeddingWeights& grads);

// Decoder-input embedding for the previous step's choice plus the step
// embedding. Step 0 always feeds <begin>.
Eigen::VectorXd embed_prev_word(const WordChoice& choice, int step,
                                const std::vector<SpecialToken>& sample_tokens,
                                const EmbeddingWeights& w, const VectorProvider& provider);

}  // namespace stcap
