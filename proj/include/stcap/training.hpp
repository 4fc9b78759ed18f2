#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "stcap/data.hpp"
#include "stcap/decoder.hpp"
#include "stcap/model.hpp"

namespace stcap {

// A reference span matched against the sample's special tokens. `pos` and
// `len` are in normalized caption words; `token_indices` lists every token
// whose normalized text equals the span (lowest index first).
struct MatchedSpan {
    int pos = 0;
    int len = 0;
    std::vector<int> token_indices;
};

// Greedy left-to-right longest-match of token texts inside the word
// sequence. Used for target construction and for copy diagnostics.
std::vector<MatchedSpan> match_token_spans(const std::vector<std::string>& words,
                                           const std::vector<SpecialToken>& tokens);

// Teacher-forcing data for one (sample, reference) pair. `targets` is the
// T_end x (K+N) multi-hot matrix; row t marks every acceptable choice for
// step t and the final row marks exactly <end>. `inputs` is the decoder
// input sequence: <begin> followed by the per-step choices shifted right,
// where a matched span feeds the lowest-index matching pointer.
struct TargetData {
    std::vector<WordChoice> inputs;  // length T_end
    Eigen::MatrixXd targets;         // T_end x (K+N)
    int t_end = 0;
};

// Builds the target matrix for one reference. Sequences longer than
// t_max - 1 content steps are truncated so the <end> row always fits.
TargetData build_targets(const std::string& reference, const Vocabulary& vocab,
                         const std::vector<SpecialToken>& tokens, int t_max);

// Numerically stable mean binary cross-entropy over the K+N entries of one
// step (negated log-likelihood form).
double bce_step(const StepScores& scores, const Eigen::VectorXd& target_row);

// Mean of bce_step over the T_end rows.
double dbce_loss(const std::vector<StepScores>& step_scores, const Eigen::MatrixXd& targets);

// A sample with features precomputed and targets attached, ready for the
// teacher-forced loss.
struct PreparedSample {
    Eigen::MatrixXd st_features;                 // N x (d_fr + d_ft + 604)
    std::vector<std::array<double, 4>> st_bbox;  // N
    std::vector<int> st_source;                  // N
    std::vector<ObjectRegion> objects;           // M
    std::vector<WordChoice> inputs;              // T_end (empty when prepared without a reference)
    Eigen::MatrixXd targets;                     // T_end x (K+N)
    int t_end = 0;
};

// `reference` may be null to prepare features only (generation path).
PreparedSample prepare_sample(const CaptionSample& sample, const Model& model,
                              const std::string* reference);

// Teacher-forced loss; accumulates parameter gradients into `grads` when
// non-null and reports per-step scores through `scores_out` when non-null.
double forward_loss(const Model& model, const PreparedSample& prep, Model* grads,
                    std::vector<StepScores>* scores_out = nullptr, Rng* dropout_rng = nullptr);

struct TrainConfig {
    int batch = 128;
    double lr = 1e-4;
    double decay = 0.1;
    std::vector<double> milestones = {0.7, 0.9};  // fractions of total planned steps
    int epochs = 1;
    uint64_t seed = 1;
    int64_t stop_step = -1;  // optional early stop (used by resume tests)
};

struct AdamState {
    std::vector<Eigen::ArrayXd> m, v;  // aligned with param_refs order
    int64_t step = 0;                  // completed optimizer steps

    static AdamState init_for(const Model& model);
};

struct TrainResult {
    std::vector<double> loss_history;  // one entry per executed optimizer step
    int64_t start_step = 0;
    int64_t end_step = 0;
};

// Deterministic teacher-forced mini-batch Adam. Training items are all
// (sample, reference) pairs; each epoch is a seeded shuffle. Resuming from a
// saved AdamState continues the same schedule bit-identically.
TrainResult train(const std::vector<CaptionSample>& data, Model& model, const TrainConfig& cfg,
                  AdamState& state);

// Max relative error between analytic gradients of the teacher-forced loss
// and central finite differences, per parameter group and overall.
double grad_check(const Model& model, const CaptionSample& sample, double epsilon,
                  std::map<std::string, double>* per_group = nullptr);

}  // namespace stcap
