#pragma once

#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "stcap/tokens.hpp"

namespace stcap {

// Sentence BLEU-4: uniform 1/4 weights on clipped 1..4-gram precisions with
// brevity penalty; zero counts are smoothed with epsilon 1e-9.
double bleu4(const std::string& candidate, const std::vector<std::string>& references);

// ROUGE-L F-measure (beta^2 = 1.2), maximum over references.
double rouge_l(const std::string& candidate, const std::vector<std::string>& references);

// CIDEr-D over an aligned corpus: tf-idf weighted n-gram (n=1..4) similarity
// with ref-clipped counts, Gaussian length penalty (sigma=6) and *10 scaling;
// idf comes from the evaluation corpus's reference sets. Returns the mean of
// the per-image scores.
double cider(const std::vector<std::string>& candidates,
             const std::vector<std::vector<std::string>>& references);

// One emitted caption word with its provenance.
struct EmittedWord {
    bool is_pointer = false;
    int source = -1;       // classifier id when is_pointer
    std::string text;      // normalized text
};

// A copyable slot in the reference: `position` in normalized caption words.
struct GoldSlot {
    int position = 0;
    int source = 0;
    std::string text;      // normalized span text
};

struct CopyDiagnostics {
    double face_copy_rate = 1.0;
    double ocr_copy_rate = 1.0;
    double wrong_source_rate = 0.0;
    int face_slots = 0;
    int ocr_slots = 0;
};

// Positional comparison of generated captions against gold slots: a slot is
// copied when the generated word at the slot position is a pointer with the
// same source and text; a pointer with a different source there counts as a
// wrong-source event. Rates with no slots of a kind default to 1 (copy) and
// 0 (wrong source).
CopyDiagnostics copy_diagnostics(const std::vector<std::vector<EmittedWord>>& captions,
                                 const std::vector<std::vector<GoldSlot>>& slots);

// Mean silhouette coefficient over Euclidean distance with the source labels
// as clusters. Requires >= 2 labels with >= 2 points each and non-degenerate
// distances.
double source_separation(const std::vector<std::pair<Eigen::VectorXd, int>>& labeled_embeddings);

}  // namespace stcap
