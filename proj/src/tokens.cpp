#include "stcap/tokens.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include "stcap/rng.hpp"

namespace stcap {

namespace {

bool is_space_char(char c) {
    return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v';
}

char lower_ascii(char c) {
    return (c >= 'A' && c <= 'Z') ? static_cast<char>(c + ('a' - 'A')) : c;
}

bool is_kept(char c) {
    return (c >= 'a' && c <= 'z') || (c >= '0' && c <= '9');
}

// a-z -> 0..25, 0-9 -> 26..35, everything else -1.
int symbol_index(char c) {
    if (c >= 'a' && c <= 'z') return c - 'a';
    if (c >= '0' && c <= '9') return 26 + (c - '0');
    return -1;
}

const std::array<std::string_view, 50> kBigrams = {
    "th", "he", "in", "er", "an", "re", "on", "at", "en", "nd",
    "ti", "es", "or", "te", "of", "ed", "is", "it", "al", "ar",
    "st", "to", "nt", "ng", "se", "ha", "as", "ou", "io", "le",
    "ve", "co", "me", "de", "hi", "ri", "ro", "ic", "ne", "ea",
    "ra", "ce", "li", "ch", "ll", "be", "ma", "si", "om", "ur",
};

int bigram_index(char a, char b) {
    for (size_t i = 0; i < kBigrams.size(); ++i) {
        if (kBigrams[i][0] == a && kBigrams[i][1] == b) return static_cast<int>(i);
    }
    return -1;
}

// Exact occupancy test in integer arithmetic so boundary cases do not depend
// on floating-point rounding. The k-th of L units (an n-gram spans `span`
// character slots) occupies [k/L, (k+span)/L]; region r of level `level` is
// [r/level, (r+1)/level]. Working in units of 1/(L*level), the condition
// "overlap >= half the occupancy width" becomes 2*overlap >= span*level.
bool occupies(int k, int span, int len, int region, int level) {
    const long lo = std::max<long>(static_cast<long>(k) * level, static_cast<long>(region) * len);
    const long hi = std::min<long>(static_cast<long>(k + span) * level,
                                   static_cast<long>(region + 1) * len);
    const long overlap = hi - lo;
    return 2 * overlap >= static_cast<long>(span) * level;
}

}  // namespace

std::string normalize_token_text(std::string_view text) {
    std::string out;
    out.reserve(text.size());
    bool pending_space = false;
    for (char raw : text) {
        const char c = lower_ascii(raw);
        if (is_kept(c)) {
            if (pending_space && !out.empty()) out.push_back(' ');
            pending_space = false;
            out.push_back(c);
        } else if (is_space_char(c)) {
            pending_space = true;
        }
        // anything else is dropped entirely
    }
    return out;
}

std::vector<std::string> caption_words(std::string_view text) {
    const std::string norm = normalize_token_text(text);
    std::vector<std::string> words;
    size_t pos = 0;
    while (pos < norm.size()) {
        size_t space = norm.find(' ', pos);
        if (space == std::string::npos) space = norm.size();
        words.push_back(norm.substr(pos, space - pos));
        pos = space + 1;
    }
    return words;
}

const std::array<std::string_view, 50>& phoc_bigrams() { return kBigrams; }

Eigen::VectorXd phoc_encode(std::string_view word) {
    std::string w;
    w.reserve(word.size());
    for (char raw : word) {
        const char c = lower_ascii(raw);
        if (is_kept(c)) w.push_back(c);
    }
    if (w.empty()) throw EmptyWord("phoc_encode: word is empty after normalization");

    Eigen::VectorXd out = Eigen::VectorXd::Zero(kPhocDim);
    const int len = static_cast<int>(w.size());

    // Unigram slices, levels 2..5. Within a level: region-major, then the 36
    // symbols in order.
    int offset = 0;
    for (int level : kPhocUnigramLevels) {
        for (int k = 0; k < len; ++k) {
            const int sym = symbol_index(w[static_cast<size_t>(k)]);
            for (int r = 0; r < level; ++r) {
                if (occupies(k, 1, len, r, level)) {
                    out[offset + r * 36 + sym] = 1.0;
                }
            }
        }
        offset += level * 36;
    }

    // Bigram slice, level 2 only.
    const int bigram_level = 2;
    for (int k = 0; k + 1 < len; ++k) {
        const int bi = bigram_index(w[static_cast<size_t>(k)], w[static_cast<size_t>(k) + 1]);
        if (bi < 0) continue;
        for (int r = 0; r < bigram_level; ++r) {
            if (occupies(k, 2, len, r, bigram_level)) {
                out[offset + r * 50 + bi] = 1.0;
            }
        }
    }
    return out;
}

Vocabulary::Vocabulary() : Vocabulary(std::vector<std::string>{}) {}

Vocabulary::Vocabulary(const std::vector<std::string>& content_words) {
    words_ = {"<begin>", "<end>", "<pad>", "<unk>"};
    words_.insert(words_.end(), content_words.begin(), content_words.end());
    for (size_t i = 0; i < words_.size(); ++i) {
        auto [it, inserted] = index_.emplace(words_[i], static_cast<int>(i));
        if (!inserted) throw Error("vocabulary: duplicate word '" + words_[i] + "'");
    }
}

int Vocabulary::index(const std::string& word) const {
    auto it = index_.find(word);
    return it == index_.end() ? -1 : it->second;
}

const std::string& Vocabulary::word(int idx) const {
    if (idx < 0 || idx >= size()) {
        throw IndexOutOfRange("vocabulary: index " + std::to_string(idx) + " out of range");
    }
    return words_[static_cast<size_t>(idx)];
}

VectorProvider VectorProvider::hash_fallback(int dim) {
    VectorProvider p;
    p.dim_ = dim;
    return p;
}

VectorProvider VectorProvider::file_table(const std::filesystem::path& path, int dim) {
    VectorProvider p;
    p.dim_ = dim;
    std::ifstream in(path);
    if (!in) throw Error("word-vector file not found: " + path.string());
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        std::istringstream ss(line);
        std::string w;
        if (!(ss >> w)) continue;  // blank line
        Eigen::VectorXd v(dim);
        for (int i = 0; i < dim; ++i) {
            if (!(ss >> v[i])) {
                throw ParseError("word-vector file line " + std::to_string(lineno) +
                                     ": expected " + std::to_string(dim) + " values for '" + w + "'",
                                 lineno);
            }
        }
        double extra;
        if (ss >> extra) {
            throw ParseError("word-vector file line " + std::to_string(lineno) +
                                 ": more than " + std::to_string(dim) + " values for '" + w + "'",
                             lineno);
        }
        p.table_[w] = std::move(v);  // later lines override earlier ones
    }
    return p;
}

Eigen::VectorXd VectorProvider::lookup_single(const std::string& word) const {
    auto it = table_.find(word);
    if (it != table_.end()) return it->second;
    return hash_unit_vector(word, dim_);
}

Eigen::VectorXd word_vector(const std::string& text, const VectorProvider& provider) {
    Eigen::VectorXd sum = Eigen::VectorXd::Zero(provider.dim());
    int count = 0;
    size_t pos = 0;
    while (pos < text.size()) {
        size_t space = text.find(' ', pos);
        if (space == std::string::npos) space = text.size();
        if (space > pos) {
            sum += provider.lookup_single(text.substr(pos, space - pos));
            ++count;
        }
        pos = space + 1;
    }
    if (count == 0) return sum;
    return sum / static_cast<double>(count);
}

}  // namespace stcap
