#pragma once

#include <array>
#include <filesystem>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <Eigen/Dense>

#include "stcap/errors.hpp"

namespace stcap {

// Upstream classifier ids. The scheme is open-ended; anything >= 2 is a
// user-registered classifier.
inline constexpr int kSourceFace = 0;
inline constexpr int kSourceOcr = 1;

// PHOC layout: 36 unigrams (a-z, 0-9) at pyramid levels 2,3,4,5 plus the 50
// most common English bigrams at level 2.
inline constexpr int kPhocUnigramLevels[] = {2, 3, 4, 5};
inline constexpr int kPhocDim = 36 * (2 + 3 + 4 + 5) + 50 * 2;  // 604

// One detection emitted by an upstream classifier, available for verbatim
// copy into a caption.
struct SpecialToken {
    std::string text;                  // original surface form, may contain spaces
    int source = kSourceOcr;           // classifier id
    std::array<double, 4> bbox{};      // x1,y1,x2,y2 normalized to [0,1]
    Eigen::VectorXd visual_feature;    // appearance feature, dim d_fr
};

// One generic detected region (the visual-context modality).
struct ObjectRegion {
    Eigen::VectorXd visual_feature;    // dim d_fr
    std::array<double, 4> bbox{};
};

// Fixed word list with reserved markers pinned to indices 0-3.
class Vocabulary {
  public:
    static constexpr int kBegin = 0;
    static constexpr int kEnd = 1;
    static constexpr int kPad = 2;
    static constexpr int kUnk = 3;
    static constexpr int kReservedCount = 4;

    Vocabulary();
    // Content words are appended after the four reserved markers.
    explicit Vocabulary(const std::vector<std::string>& content_words);

    int size() const { return static_cast<int>(words_.size()); }
    // -1 when absent.
    int index(const std::string& word) const;
    const std::string& word(int idx) const;
    const std::vector<std::string>& words() const { return words_; }

  private:
    std::vector<std::string> words_;
    std::unordered_map<std::string, int> index_;
};

// A decoding-step outcome: either a fixed-vocabulary word or a pointer to
// one of the sample's special tokens.
struct WordChoice {
    enum class Kind { Vocab, Pointer };
    Kind kind = Kind::Vocab;
    int index = 0;

    static WordChoice vocab(int i) { return {Kind::Vocab, i}; }
    static WordChoice pointer(int i) { return {Kind::Pointer, i}; }
    bool is_pointer() const { return kind == Kind::Pointer; }
    bool operator==(const WordChoice&) const = default;
};

// Lowercases, drops everything outside [a-z0-9 ], collapses whitespace runs
// and trims. May return an empty string; callers treat empty as unmatched.
std::string normalize_token_text(std::string_view text);

// Normalized word sequence of a caption (normalize_token_text, then split on
// spaces). The shared tokenization for target matching and all metrics.
std::vector<std::string> caption_words(std::string_view text);

// The 50-entry bigram table used by the level-2 bigram slice. Mirrored in
// data/phoc_bigrams.txt; a unit test keeps the two in sync.
const std::array<std::string_view, 50>& phoc_bigrams();

// Pyramidal histogram of characters. The word is normalized to [a-z0-9]
// (spaces dropped, so multi-word names are encoded as one string); throws
// EmptyWord when nothing survives. A bit is set iff some occurrence of the
// symbol has its character interval overlapping the region by at least half
// the interval's own width.
Eigen::VectorXd phoc_encode(std::string_view word);

// Word-vector source. A missing table entry falls back to a deterministic
// unit vector seeded by a stable hash of the word, so lookups never fail.
class VectorProvider {
  public:
    static VectorProvider hash_fallback(int dim);
    // Text file, one entry per line: word followed by dim decimal reals.
    static VectorProvider file_table(const std::filesystem::path& path, int dim);

    int dim() const { return dim_; }
    size_t table_size() const { return table_.size(); }
    Eigen::VectorXd lookup_single(const std::string& word) const;

  private:
    int dim_ = 0;
    std::unordered_map<std::string, Eigen::VectorXd> table_;
};

// Vector for a (possibly multi-word) token text: the arithmetic mean of the
// per-word vectors. Empty input yields the zero vector.
Eigen::VectorXd word_vector(const std::string& text, const VectorProvider& provider);

}  // namespace stcap
