#pragma once

#include <string>
#include <vector>

#include <Eigen/Dense>

#include "stcap/errors.hpp"
#include "stcap/tokens.hpp"

namespace stcap {

struct Model;          // model.hpp
struct CaptionSample;  // data.hpp

// Scoring heads: a linear vocabulary head plus the bilinear pointer score
// y_st[n] = (W_st z_st[n] + b_st) . (W_dec z_dec + b_dec).
// Matrices are stored input-major (d x out).
struct PointerHeads {
    Eigen::MatrixXd w_st;   // d x d_p
    Eigen::VectorXd b_st;   // d_p
    Eigen::MatrixXd w_dec;  // d x d_p
    Eigen::VectorXd b_dec;  // d_p
    Eigen::MatrixXd w_voc;  // d x K
    Eigen::VectorXd b_voc;  // K
};

// One decoding step's score vector: K fixed-vocabulary scores followed by
// one pointer score per special token in the sample.
struct StepScores {
    Eigen::VectorXd values;
    int vocab_size = 0;

    int n_pointers() const { return static_cast<int>(values.size()) - vocab_size; }
};

struct ScoreStepCache {
    Eigen::MatrixXd proj_st;   // N x d_p
    Eigen::VectorXd proj_dec;  // d_p
};

StepScores score_step(const Eigen::VectorXd& z_dec_t, const Eigen::MatrixXd& z_st,
                      const PointerHeads& heads, ScoreStepCache* cache = nullptr);

// Accumulates head gradients and the gradients w.r.t. z_dec_t / z_st rows.
void score_step_backward(const Eigen::VectorXd& dscores, const Eigen::VectorXd& z_dec_t,
                         const Eigen::MatrixXd& z_st, const PointerHeads& heads,
                         const ScoreStepCache& cache, PointerHeads& grads,
                         Eigen::VectorXd& dz_dec_t, Eigen::MatrixXd& dz_st);

// Global argmax over vocab and pointer scores; ties break toward the lowest
// index, so vocabulary wins over pointers. `n_valid_pointers` masks padded
// pointer slots (scores beyond it are treated as -inf); pass a negative
// value to consider every entry.
WordChoice select_word(const StepScores& scores, int n_valid_pointers = -1);

struct GenerationResult {
    std::vector<WordChoice> choices;  // includes the final <end> when emitted
    std::vector<StepScores> scores;   // raw (unmasked) scores per step
    int t_end = 0;
    std::string text;                 // rendered caption, <end> excluded
};

// Greedy auto-regressive decoding; stops at <end> or t_max steps. Pointer
// choices render as the token's original (un-normalized) text.
GenerationResult generate_caption(const CaptionSample& sample, const Model& model, int t_max);

}  // namespace stcap
