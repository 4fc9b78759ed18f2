#include "stcap/embedding.hpp"

namespace stcap {

Eigen::VectorXd layer_norm(const Eigen::VectorXd& x, const Eigen::VectorXd& g,
                           const Eigen::VectorXd& b, LayerNormCache* cache) {
    const auto n = x.size();
    if (g.size() != n || b.size() != n) {
        throw DimensionMismatch("layer_norm: parameter size does not match input");
    }
    const double mean = x.mean();
    const double var = (x.array() - mean).square().mean();
    const double rstd = 1.0 / std::sqrt(var + kLayerNormEps);
    Eigen::VectorXd xhat = (x.array() - mean).matrix() * rstd;
    if (cache) {
        cache->rstd = rstd;
        cache->xhat = xhat;
    }
    return (g.array() * xhat.array() + b.array()).matrix();
}

void layer_norm_backward(const Eigen::VectorXd& dy, const Eigen::VectorXd& g,
                         const LayerNormCache& cache, Eigen::VectorXd& dx,
                         Eigen::VectorXd& dg, Eigen::VectorXd& db) {
    dg += (dy.array() * cache.xhat.array()).matrix();
    db += dy;
    const Eigen::ArrayXd dxhat = dy.array() * g.array();
    const double mean_dxhat = dxhat.mean();
    const double mean_dxhat_xhat = (dxhat * cache.xhat.array()).mean();
    dx = (cache.rstd * (dxhat - mean_dxhat - cache.xhat.array() * mean_dxhat_xhat)).matrix();
}

Eigen::VectorXd token_feature_vector(const SpecialToken& token, const VectorProvider& provider) {
    const std::string norm = normalize_token_text(token.text);
    const Eigen::VectorXd wv = word_vector(norm, provider);
    const Eigen::VectorXd ph = phoc_encode(norm);
    Eigen::VectorXd out(token.visual_feature.size() + wv.size() + ph.size());
    out << token.visual_feature, wv, ph;
    return out;
}

namespace {

Eigen::Map<const Eigen::Vector4d> box_vec(const std::array<double, 4>& bbox) {
    return Eigen::Map<const Eigen::Vector4d>(bbox.data());
}

}  // namespace

Eigen::VectorXd embed_special_token_features(const Eigen::VectorXd& features,
                                             const std::array<double, 4>& bbox, int source,
                                             const EmbeddingWeights& w, TokenEmbedCache* cache) {
    if (features.size() != w.w1.rows()) {
        throw DimensionMismatch("embed_special_token: feature size " +
                                std::to_string(features.size()) + " does not match W1 rows " +
                                std::to_string(w.w1.rows()));
    }
    if (source < 0 || source >= w.n_sources()) {
        throw DimensionMismatch("embed_special_token: source " + std::to_string(source) +
                                " out of range for " + std::to_string(w.n_sources()) + " sources");
    }
    const Eigen::VectorXd pre_feat = w.w1.transpose() * features;
    const Eigen::VectorXd pre_box = w.w2.transpose() * box_vec(bbox);
    const Eigen::VectorXd pre_src = w.w3.row(source).transpose();  // W3 * one-hot
    TokenEmbedCache local;
    TokenEmbedCache& c = cache ? *cache : local;
    return layer_norm(pre_feat, w.ln_feat_g, w.ln_feat_b, &c.ln_feat) +
           layer_norm(pre_box, w.ln_box_g, w.ln_box_b, &c.ln_box) +
           layer_norm(pre_src, w.ln_src_g, w.ln_src_b, &c.ln_src);
}

void embed_special_token_backward(const Eigen::VectorXd& dy, const Eigen::VectorXd& features,
                                  const std::array<double, 4>& bbox, int source,
                                  const EmbeddingWeights& w, const TokenEmbedCache& cache,
                                  EmbeddingWeights& grads) {
    Eigen::VectorXd dpre(dy.size());
    layer_norm_backward(dy, w.ln_feat_g, cache.ln_feat, dpre, grads.ln_feat_g, grads.ln_feat_b);
    grads.w1 += features * dpre.transpose();
    layer_norm_backward(dy, w.ln_box_g, cache.ln_box, dpre, grads.ln_box_g, grads.ln_box_b);
    grads.w2 += box_vec(bbox) * dpre.transpose();
    layer_norm_backward(dy, w.ln_src_g, cache.ln_src, dpre, grads.ln_src_g, grads.ln_src_b);
    grads.w3.row(source) += dpre.transpose();
}

Eigen::VectorXd embed_special_token(const SpecialToken& token, const EmbeddingWeights& w,
                                    const VectorProvider& provider) {
    return embed_special_token_features(token_feature_vector(token, provider), token.bbox,
                                        token.source, w);
}

Eigen::VectorXd embed_object(const ObjectRegion& region, const EmbeddingWeights& w,
                             ObjectEmbedCache* cache) {
    if (region.visual_feature.size() != w.w_obj.rows()) {
        throw DimensionMismatch("embed_object: feature size does not match W_obj");
    }
    const Eigen::VectorXd pre_feat = w.w_obj.transpose() * region.visual_feature;
    const Eigen::VectorXd pre_box = w.w_objb.transpose() * box_vec(region.bbox);
    ObjectEmbedCache local;
    ObjectEmbedCache& c = cache ? *cache : local;
    return layer_norm(pre_feat, w.ln_obj_g, w.ln_obj_b, &c.ln_feat) +
           layer_norm(pre_box, w.ln_objbox_g, w.ln_objbox_b, &c.ln_box);
}

void embed_object_backward(const Eigen::VectorXd& dy, const ObjectRegion& region,
                           const EmbeddingWeights& w, const ObjectEmbedCache& cache,
                           EmbeddingWeights& grads) {
    Eigen::VectorXd dpre(dy.size());
    layer_norm_backward(dy, w.ln_obj_g, cache.ln_feat, dpre, grads.ln_obj_g, grads.ln_obj_b);
    grads.w_obj += region.visual_feature * dpre.transpose();
    layer_norm_backward(dy, w.ln_objbox_g, cache.ln_box, dpre, grads.ln_objbox_g,
                        grads.ln_objbox_b);
    grads.w_objb += box_vec(region.bbox) * dpre.transpose();
}

Eigen::VectorXd embed_prev_word(const WordChoice& choice, int step,
                                const std::vector<SpecialToken>& sample_tokens,
                                const EmbeddingWeights& w, const VectorProvider& provider) {
    if (step < 0 || step >= w.step_table.rows()) {
        throw IndexOutOfRange("embed_prev_word: step " + std::to_string(step) +
                              " outside step table of size " + std::to_string(w.step_table.rows()));
    }
    const Eigen::VectorXd step_emb = w.step_table.row(step).transpose();
    if (choice.kind == WordChoice::Kind::Vocab) {
        if (choice.index < 0 || choice.index >= w.vocab_table.rows()) {
            throw IndexOutOfRange("embed_prev_word: vocab index out of range");
        }
        return w.vocab_table.row(choice.index).transpose() + step_emb;
    }
    if (choice.index < 0 || choice.index >= static_cast<int>(sample_tokens.size())) {
        throw IndexOutOfRange("embed_prev_word: pointer index out of range");
    }
    return embed_special_token(sample_tokens[static_cast<size_t>(choice.index)], w, provider) +
           step_emb;
}

}  // namespace stcap
