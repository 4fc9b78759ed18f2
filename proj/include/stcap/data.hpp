#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "stcap/tokens.hpp"

namespace stcap {

inline constexpr int kMaxObjects = 100;        // M cap
inline constexpr int kMaxSpecialTokens = 50;   // N cap

// One image's feature bundle plus its reference captions.
struct CaptionSample {
    std::string image_id;
    std::vector<ObjectRegion> objects;
    std::vector<SpecialToken> special_tokens;
    std::vector<std::string> references;
};

// Keeps every face token first (file order), then the remaining tokens in
// file order, truncated at `limit`. When faces alone exceed the limit the
// first `limit` faces are kept.
std::vector<SpecialToken> cap_special_tokens(std::vector<SpecialToken> tokens,
                                             int limit = kMaxSpecialTokens);

std::vector<ObjectRegion> cap_objects(std::vector<ObjectRegion> regions, int limit = kMaxObjects);

struct LoadOptions {
    bool strict = true;      // reject unknown fields
    int n_sources = 2;       // valid classifier ids are [0, n_sources)
    int expect_d_fr = -1;    // -1: infer from the first feature and enforce consistency
    int max_objects = kMaxObjects;
    int max_tokens = kMaxSpecialTokens;
};

// JSONL, one sample per line:
//   {"image_id": str,
//    "objects": [{"bbox": [4 floats], "feat": [d_fr floats]}, ...],
//    "special_tokens": [{"text": str, "source": int, "bbox": [...], "feat": [...]}, ...],
//    "references": [str, ...]}            (1 to 3 entries)
// objects/special_tokens may be omitted (empty). Caps are applied on load.
std::vector<CaptionSample> load_dataset(const std::filesystem::path& path,
                                        const LoadOptions& opts = {});

// Canonical serialization; load followed by save is a fixed point.
void save_dataset(const std::vector<CaptionSample>& samples, const std::filesystem::path& path);

// Synthetic benchmark configuration. Scene-text and name lexicons are drawn
// from built-in word lists that are disjoint from each other and from the
// caption templates.
struct SynthConfig {
    uint64_t seed = 1;
    int train_samples = 64;
    int test_samples = 16;
    int zeroshot_samples = 16;
    int name_lexicon = 24;        // total names; the holdout fraction is reserved
    int text_lexicon = 12;
    double holdout_fraction = 0.25;
    int d_fr = 16;
    double noise_sigma = 0.05;
    int distractor_faces = 1;
    int distractor_ocr = 2;
    int objects_per_sample = 3;
};

struct SynthOutput {
    std::vector<CaptionSample> train, test, zeroshot;
};

// Deterministic generator: each sample fills a caption template with a name
// (FACE token) and usually a scene text (OCR token); distractor tokens and
// generic object regions are added. Zero-shot samples use held-out names
// that occur nowhere in the train split.
SynthOutput generate_synthetic(const SynthConfig& cfg);

// The lexicons behind the generator, exposed for tests.
std::vector<std::string> synth_names(int count);
std::vector<std::string> synth_texts(int count);
const std::vector<std::string>& synth_templates();

}  // namespace stcap
