#include "stcap/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <set>

#include "stcap/errors.hpp"

namespace stcap {

namespace {

using Words = std::vector<std::string>;
using NgramCounts = std::map<std::vector<std::string>, int>;

NgramCounts count_ngrams(const Words& words, int n) {
    NgramCounts counts;
    if (static_cast<int>(words.size()) < n) return counts;
    for (size_t i = 0; i + static_cast<size_t>(n) <= words.size(); ++i) {
        std::vector<std::string> gram(words.begin() + static_cast<long>(i),
                                      words.begin() + static_cast<long>(i) + n);
        ++counts[std::move(gram)];
    }
    return counts;
}

constexpr double kBleuEps = 1e-9;

}  // namespace

double bleu4(const std::string& candidate, const std::vector<std::string>& references) {
    if (references.empty()) throw EmptyReferenceSet("bleu4: no references");
    const Words cand = caption_words(candidate);
    std::vector<Words> refs;
    refs.reserve(references.size());
    for (const auto& r : references) refs.push_back(caption_words(r));
    if (cand.empty()) return 0.0;

    double log_sum = 0.0;
    for (int n = 1; n <= 4; ++n) {
        const NgramCounts cand_counts = count_ngrams(cand, n);
        NgramCounts max_ref_counts;
        for (const auto& ref : refs) {
            for (const auto& [gram, c] : count_ngrams(ref, n)) {
                auto& slot = max_ref_counts[gram];
                slot = std::max(slot, c);
            }
        }
        long clipped = 0;
        long total = 0;
        for (const auto& [gram, c] : cand_counts) {
            total += c;
            auto it = max_ref_counts.find(gram);
            if (it != max_ref_counts.end()) clipped += std::min(c, it->second);
        }
        const double denom = static_cast<double>(std::max<long>(total, 1));
        const double p = clipped > 0 ? static_cast<double>(clipped) / denom : kBleuEps / denom;
        log_sum += 0.25 * std::log(p);
    }

    // Brevity penalty against the closest reference length (ties -> shorter).
    const long c_len = static_cast<long>(cand.size());
    long r_len = static_cast<long>(refs.front().size());
    for (const auto& ref : refs) {
        const long rl = static_cast<long>(ref.size());
        const long best = std::labs(r_len - c_len);
        const long cur = std::labs(rl - c_len);
        if (cur < best || (cur == best && rl < r_len)) r_len = rl;
    }
    const double bp = c_len >= r_len
                          ? 1.0
                          : std::exp(1.0 - static_cast<double>(r_len) / static_cast<double>(c_len));
    return bp * std::exp(log_sum);
}

namespace {

int lcs_length(const Words& a, const Words& b) {
    const size_t na = a.size(), nb = b.size();
    std::vector<int> prev(nb + 1, 0), cur(nb + 1, 0);
    for (size_t i = 1; i <= na; ++i) {
        for (size_t j = 1; j <= nb; ++j) {
            cur[j] = a[i - 1] == b[j - 1] ? prev[j - 1] + 1 : std::max(prev[j], cur[j - 1]);
        }
        std::swap(prev, cur);
    }
    return prev[nb];
}

}  // namespace

double rouge_l(const std::string& candidate, const std::vector<std::string>& references) {
    if (references.empty()) throw EmptyReferenceSet("rouge_l: no references");
    const Words cand = caption_words(candidate);
    if (cand.empty()) return 0.0;
    constexpr double kBetaSq = 1.2;
    double best = 0.0;
    for (const auto& r : references) {
        const Words ref = caption_words(r);
        if (ref.empty()) continue;
        const int lcs = lcs_length(cand, ref);
        if (lcs == 0) continue;
        const double p = static_cast<double>(lcs) / static_cast<double>(cand.size());
        const double rec = static_cast<double>(lcs) / static_cast<double>(ref.size());
        const double f = (1.0 + kBetaSq) * p * rec / (rec + kBetaSq * p);
        best = std::max(best, f);
    }
    return best;
}

double cider(const std::vector<std::string>& candidates,
             const std::vector<std::vector<std::string>>& references) {
    const size_t n_images = candidates.size();
    if (references.size() != n_images) {
        throw DimensionMismatch("cider: candidate/reference image counts differ");
    }
    if (n_images < 2) throw CorpusTooSmall("cider: idf needs at least 2 images");
    for (const auto& refs : references) {
        if (refs.empty()) throw EmptyReferenceSet("cider: an image has no references");
    }
    constexpr int kMaxN = 4;
    constexpr double kSigma = 6.0;

    // Document frequency per n-gram: the number of images whose reference
    // set contains the n-gram at least once.
    std::vector<NgramCounts> df(kMaxN);
    std::vector<std::vector<std::vector<NgramCounts>>> ref_counts(n_images);  // [img][ref][n]
    std::vector<std::vector<long>> ref_lens(n_images);
    for (size_t img = 0; img < n_images; ++img) {
        std::vector<std::set<std::vector<std::string>>> seen(kMaxN);
        ref_counts[img].resize(references[img].size());
        for (size_t r = 0; r < references[img].size(); ++r) {
            const Words words = caption_words(references[img][r]);
            ref_lens[img].push_back(static_cast<long>(words.size()));
            ref_counts[img][r].resize(kMaxN);
            for (int n = 1; n <= kMaxN; ++n) {
                ref_counts[img][r][static_cast<size_t>(n - 1)] = count_ngrams(words, n);
                for (const auto& [gram, c] : ref_counts[img][r][static_cast<size_t>(n - 1)]) {
                    seen[static_cast<size_t>(n - 1)].insert(gram);
                }
            }
        }
        for (int n = 0; n < kMaxN; ++n) {
            for (const auto& gram : seen[static_cast<size_t>(n)]) ++df[static_cast<size_t>(n)][gram];
        }
    }
    auto idf = [&](int n, const std::vector<std::string>& gram) {
        const auto& m = df[static_cast<size_t>(n - 1)];
        auto it = m.find(gram);
        const double d = it == m.end() ? 1.0 : static_cast<double>(std::max(it->second, 1));
        return std::log(static_cast<double>(n_images) / d);
    };

    double corpus = 0.0;
    for (size_t img = 0; img < n_images; ++img) {
        const Words cand = caption_words(candidates[img]);
        const long c_len = static_cast<long>(cand.size());
        double image_score = 0.0;
        for (int n = 1; n <= kMaxN; ++n) {
            const NgramCounts cand_counts = count_ngrams(cand, n);
            // Candidate tf-idf vector and norm.
            std::map<std::vector<std::string>, double> cand_vec;
            double cand_norm_sq = 0.0;
            for (const auto& [gram, c] : cand_counts) {
                const double wgt = c * idf(n, gram);
                cand_vec[gram] = wgt;
                cand_norm_sq += wgt * wgt;
            }
            const double cand_norm = std::sqrt(cand_norm_sq);
            double acc = 0.0;
            for (size_t r = 0; r < references[img].size(); ++r) {
                const NgramCounts& rc = ref_counts[img][r][static_cast<size_t>(n - 1)];
                std::map<std::vector<std::string>, double> ref_vec;
                double ref_norm_sq = 0.0;
                for (const auto& [gram, c] : rc) {
                    const double wgt = c * idf(n, gram);
                    ref_vec[gram] = wgt;
                    ref_norm_sq += wgt * wgt;
                }
                const double ref_norm = std::sqrt(ref_norm_sq);
                double dot = 0.0;
                for (const auto& [gram, wc] : cand_vec) {
                    auto it = ref_vec.find(gram);
                    if (it != ref_vec.end()) dot += std::min(wc, it->second) * it->second;
                }
                double sim = 0.0;
                if (cand_norm > 0.0 && ref_norm > 0.0) sim = dot / (cand_norm * ref_norm);
                const double delta = static_cast<double>(c_len - ref_lens[img][r]);
                sim *= std::exp(-delta * delta / (2.0 * kSigma * kSigma));
                acc += sim;
            }
            image_score += acc / static_cast<double>(references[img].size());
        }
        corpus += 10.0 * image_score / kMaxN;
    }
    return corpus / static_cast<double>(n_images);
}

CopyDiagnostics copy_diagnostics(const std::vector<std::vector<EmittedWord>>& captions,
                                 const std::vector<std::vector<GoldSlot>>& slots) {
    if (captions.size() != slots.size()) {
        throw DimensionMismatch("copy_diagnostics: caption/slot image counts differ");
    }
    int face_total = 0, face_ok = 0, ocr_total = 0, ocr_ok = 0, wrong = 0, total = 0;
    for (size_t img = 0; img < captions.size(); ++img) {
        const auto& emitted = captions[img];
        for (const GoldSlot& slot : slots[img]) {
            ++total;
            if (slot.source == kSourceFace) {
                ++face_total;
            } else {
                ++ocr_total;
            }
            if (slot.position >= static_cast<int>(emitted.size())) continue;
            const EmittedWord& w = emitted[static_cast<size_t>(slot.position)];
            if (!w.is_pointer) continue;
            if (w.source != slot.source) {
                ++wrong;
                continue;
            }
            if (w.text != slot.text) continue;
            if (slot.source == kSourceFace) {
                ++face_ok;
            } else {
                ++ocr_ok;
            }
        }
    }
    CopyDiagnostics d;
    d.face_slots = face_total;
    d.ocr_slots = ocr_total;
    d.face_copy_rate = face_total > 0 ? static_cast<double>(face_ok) / face_total : 1.0;
    d.ocr_copy_rate = ocr_total > 0 ? static_cast<double>(ocr_ok) / ocr_total : 1.0;
    d.wrong_source_rate = total > 0 ? static_cast<double>(wrong) / total : 0.0;
    return d;
}

double source_separation(const std::vector<std::pair<Eigen::VectorXd, int>>& labeled_embeddings) {
    const size_t n = labeled_embeddings.size();
    std::map<int, std::vector<size_t>> clusters;
    for (size_t i = 0; i < n; ++i) clusters[labeled_embeddings[i].second].push_back(i);
    if (clusters.size() < 2) {
        throw DegenerateClusters("source_separation: need at least 2 labels");
    }
    for (const auto& [label, members] : clusters) {
        if (members.size() < 2) {
            throw DegenerateClusters("source_separation: label " + std::to_string(label) +
                                     " has fewer than 2 points");
        }
    }
    Eigen::MatrixXd dist(n, n);
    for (size_t i = 0; i < n; ++i) {
        dist(static_cast<long>(i), static_cast<long>(i)) = 0.0;
        for (size_t j = i + 1; j < n; ++j) {
            const double d = (labeled_embeddings[i].first - labeled_embeddings[j].first).norm();
            dist(static_cast<long>(i), static_cast<long>(j)) = d;
            dist(static_cast<long>(j), static_cast<long>(i)) = d;
        }
    }
    double acc = 0.0;
    for (size_t i = 0; i < n; ++i) {
        const int own = labeled_embeddings[i].second;
        double a = 0.0;
        double b = std::numeric_limits<double>::infinity();
        for (const auto& [label, members] : clusters) {
            double sum = 0.0;
            for (size_t j : members) sum += dist(static_cast<long>(i), static_cast<long>(j));
            if (label == own) {
                a = sum / static_cast<double>(members.size() - 1);
            } else {
                b = std::min(b, sum / static_cast<double>(members.size()));
            }
        }
        const double denom = std::max(a, b);
        if (denom == 0.0) {
            throw DegenerateClusters("source_separation: zero distances make the score undefined");
        }
        acc += (b - a) / denom;
    }
    return acc / static_cast<double>(n);
}

}  // namespace stcap
