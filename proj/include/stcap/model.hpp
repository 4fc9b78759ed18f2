#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "stcap/decoder.hpp"
#include "stcap/embedding.hpp"
#include "stcap/tokens.hpp"
#include "stcap/transformer.hpp"

namespace stcap {

struct ModelConfig {
    int d = 32;        // shared embedding width
    int d_fr = 16;     // visual feature dim
    int d_ft = 16;     // word-vector dim
    int d_p = -1;      // pointer projection dim; -1 means d
    int layers = 1;
    int heads = 4;
    int d_ffn = 64;
    int t_max = 30;
    int n_sources = 2;
    double dropout = 0.0;
    std::string wordvec_file;  // empty -> hash fallback provider

    int pointer_dim() const { return d_p > 0 ? d_p : d; }
    int feature_dim() const { return d_fr + d_ft + kPhocDim; }
};

// Everything learned plus the pieces needed to run it: vocabulary and the
// word-vector provider travel with the parameters.
struct Model {
    ModelConfig cfg;
    Vocabulary vocab;
    VectorProvider provider = VectorProvider::hash_fallback(0);
    EmbeddingWeights emb;
    TransformerParams tf;
    PointerHeads heads;

    static Model init(const ModelConfig& cfg, const Vocabulary& vocab, uint64_t seed);

    TransformerConfig tf_config() const {
        return TransformerConfig{cfg.layers, cfg.heads, cfg.d, cfg.d_ffn, cfg.dropout};
    }

    int vocab_size() const { return vocab.size(); }
};

// Flat view over one named parameter tensor.
struct TensorRef {
    std::string name;
    double* data;
    Eigen::Index size;
};

struct ConstTensorRef {
    std::string name;
    const double* data;
    Eigen::Index size;
};

// Deterministic enumeration of all parameter tensors (same order for any
// model with the same configuration).
std::vector<TensorRef> param_refs(Model& m);
std::vector<ConstTensorRef> param_refs(const Model& m);

// Same-shaped model with every parameter set to zero (used for gradients).
Model zeros_like(const Model& m);
void zero_params(Model& m);

}  // namespace stcap
