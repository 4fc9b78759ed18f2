#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <fstream>
#include <string>
#include <vector>

#include "stcap/rng.hpp"
#include "stcap/tokens.hpp"

using namespace stcap;

namespace {

// Independent straight-loop PHOC oracle in floating point. Recomputes every
// bit from the occupancy definition; a small epsilon keeps exact-boundary
// overlaps stable under rounding.
Eigen::VectorXd phoc_oracle(const std::string& raw) {
    std::string w;
    for (char c : raw) {
        const char lc = (c >= 'A' && c <= 'Z') ? static_cast<char>(c + 32) : c;
        if ((lc >= 'a' && lc <= 'z') || (lc >= '0' && lc <= '9')) w.push_back(lc);
    }
    REQUIRE(!w.empty());
    const double len = static_cast<double>(w.size());
    auto symbol = [](char c) { return c <= '9' ? 26 + (c - '0') : c - 'a'; };
    auto overlap = [](double a1, double a2, double b1, double b2) {
        return std::max(0.0, std::min(a2, b2) - std::max(a1, b1));
    };
    Eigen::VectorXd bits = Eigen::VectorXd::Zero(kPhocDim);
    int offset = 0;
    for (int level : {2, 3, 4, 5}) {
        for (size_t k = 0; k < w.size(); ++k) {
            const double lo = static_cast<double>(k) / len;
            const double hi = static_cast<double>(k + 1) / len;
            for (int r = 0; r < level; ++r) {
                const double rlo = static_cast<double>(r) / level;
                const double rhi = static_cast<double>(r + 1) / level;
                if (overlap(lo, hi, rlo, rhi) + 1e-12 >= 0.5 * (hi - lo)) {
                    bits[offset + r * 36 + symbol(w[k])] = 1.0;
                }
            }
        }
        offset += level * 36;
    }
    const auto& bigrams = phoc_bigrams();
    for (size_t k = 0; k + 1 < w.size(); ++k) {
        int bi = -1;
        for (size_t i = 0; i < bigrams.size(); ++i) {
            if (bigrams[i][0] == w[k] && bigrams[i][1] == w[k + 1]) bi = static_cast<int>(i);
        }
        if (bi < 0) continue;
        const double lo = static_cast<double>(k) / len;
        const double hi = static_cast<double>(k + 2) / len;
        for (int r = 0; r < 2; ++r) {
            const double rlo = r / 2.0;
            const double rhi = (r + 1) / 2.0;
            if (overlap(lo, hi, rlo, rhi) + 1e-12 >= 0.5 * (hi - lo)) {
                bits[offset + r * 50 + bi] = 1.0;
            }
        }
    }
    return bits;
}

std::string random_word(Rng& rng, int min_len, int max_len) {
    static const std::string alphabet = "abcdefghijklmnopqrstuvwxyz0123456789";
    const int len = min_len + rng.uniform_int(max_len - min_len + 1);
    std::string w;
    for (int i = 0; i < len; ++i) w.push_back(alphabet[static_cast<size_t>(rng.uniform_int(36))]);
    return w;
}

}  // namespace

TEST_CASE("normalize_token_text examples") {
    CHECK(normalize_token_text("Bernie  Sanders!") == "bernie sanders");
    CHECK(normalize_token_text("THIS WEEK") == "this week");
    CHECK(normalize_token_text("---") == "");
    CHECK(normalize_token_text("  a\tb\nc  ") == "a b c");
    CHECK(normalize_token_text("Platform 9") == "platform 9");
}

TEST_CASE("normalize_token_text is idempotent") {
    Rng rng(7);
    for (int trial = 0; trial < 200; ++trial) {
        std::string s;
        const int len = rng.uniform_int(24);
        for (int i = 0; i < len; ++i) {
            s.push_back(static_cast<char>(32 + rng.uniform_int(95)));
        }
        const std::string once = normalize_token_text(s);
        CHECK(normalize_token_text(once) == once);
    }
}

TEST_CASE("caption_words splits normalized text") {
    const auto words = caption_words("Bernie Sanders, holding a sign!");
    REQUIRE(words.size() == 5);
    CHECK(words[0] == "bernie");
    CHECK(words[4] == "sign");
    CHECK(caption_words("??").empty());
}

TEST_CASE("phoc output is 604 binary values") {
    for (const char* w : {"a", "ab", "bernie", "platform9", "zzz"}) {
        const Eigen::VectorXd v = phoc_encode(w);
        CHECK(v.size() == kPhocDim);
        for (Eigen::Index i = 0; i < v.size(); ++i) {
            CHECK((v[i] == 0.0 || v[i] == 1.0));
        }
    }
}

TEST_CASE("phoc 'ab' level-2 slice puts each char in its own region") {
    const Eigen::VectorXd v = phoc_encode("ab");
    const int a = 0, b = 1;
    // level 2 occupies indices [0, 72): region-major, 36 symbols per region
    CHECK(v[0 * 36 + a] == 1.0);
    CHECK(v[1 * 36 + a] == 0.0);
    CHECK(v[0 * 36 + b] == 0.0);
    CHECK(v[1 * 36 + b] == 1.0);
}

TEST_CASE("phoc golden bits for 'a' follow the occupancy rule") {
    // Single-char word: the full-word interval overlaps each level-2 region
    // by exactly half the interval width (boundary case, set); at levels
    // 3..5 the overlap is below half, so those slices stay empty. Frozen
    // from the oracle.
    const Eigen::VectorXd v = phoc_encode("a");
    CHECK(v == phoc_oracle("a"));
    CHECK(v[0 * 36 + 0] == 1.0);                 // level 2, region 0
    CHECK(v[1 * 36 + 0] == 1.0);                 // level 2, region 1
    CHECK(v.segment(72, 504 - 72).sum() == 0.0); // levels 3..5 empty
    CHECK(v.tail(100).sum() == 0.0);             // no bigrams
}

TEST_CASE("phoc matches the straight-loop oracle on random words") {
    Rng rng(13);
    for (int trial = 0; trial < 300; ++trial) {
        const std::string w = random_word(rng, 1, 14);
        CHECK(phoc_encode(w) == phoc_oracle(w));
    }
    CHECK(phoc_encode("this week") == phoc_oracle("thisweek"));
}

TEST_CASE("phoc is idempotent w.r.t. normalization") {
    for (const char* w : {"Bernie Sanders", "THIS WEEK", "a-b-c", "Gate 12"}) {
        CHECK(phoc_encode(w) == phoc_encode(normalize_token_text(w)));
    }
}

TEST_CASE("phoc sets at least one region bit per character per level for words of length >= 3") {
    Rng rng(29);
    for (int trial = 0; trial < 200; ++trial) {
        const std::string w = random_word(rng, 3, 12);
        const Eigen::VectorXd v = phoc_encode(w);
        int offset = 0;
        for (int level : {2, 3, 4, 5}) {
            for (char c : w) {
                const int sym = (c <= '9' && c >= '0') ? 26 + (c - '0') : c - 'a';
                double any = 0.0;
                for (int r = 0; r < level; ++r) any += v[offset + r * 36 + sym];
                CHECK(any > 0.0);
            }
            offset += level * 36;
        }
    }
}

TEST_CASE("phoc rejects words that normalize to nothing") {
    CHECK_THROWS_AS(phoc_encode("!!!"), EmptyWord);
    CHECK_THROWS_AS(phoc_encode(""), EmptyWord);
}

TEST_CASE("bigram table file matches the built-in list") {
    std::ifstream in(std::string(STCAP_SOURCE_DIR) + "/data/phoc_bigrams.txt");
    REQUIRE(in.good());
    std::vector<std::string> lines;
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty()) lines.push_back(line);
    }
    const auto& table = phoc_bigrams();
    REQUIRE(lines.size() == table.size());
    for (size_t i = 0; i < table.size(); ++i) CHECK(lines[i] == table[i]);
}

TEST_CASE("hash fallback word vectors are deterministic unit vectors") {
    const auto provider = VectorProvider::hash_fallback(24);
    const Eigen::VectorXd a = word_vector("bernie", provider);
    const Eigen::VectorXd b = word_vector("bernie", provider);
    CHECK(a == b);
    CHECK(std::abs(a.norm() - 1.0) < 1e-9);
    CHECK(word_vector("sanders", provider) != a);
}

TEST_CASE("file table lookup and fallback") {
    const auto dir = std::filesystem::temp_directory_path() / "stcap_wv_test";
    std::filesystem::create_directories(dir);
    const auto path = dir / "vecs.txt";
    {
        std::ofstream out(path);
        out << "cat 1 0 0\n";
        out << "dog 0 2 0\n";
    }
    const auto provider = VectorProvider::file_table(path, 3);
    CHECK(word_vector("cat", provider) == Eigen::Vector3d(1, 0, 0));
    // misses fall back to the hash vector
    const auto fallback = VectorProvider::hash_fallback(3);
    CHECK(word_vector("bird", provider) == word_vector("bird", fallback));
}

TEST_CASE("file table rejects malformed lines with the line number") {
    const auto dir = std::filesystem::temp_directory_path() / "stcap_wv_test";
    std::filesystem::create_directories(dir);
    const auto path = dir / "bad.txt";
    {
        std::ofstream out(path);
        out << "cat 1 0 0\n";
        out << "dog 0 2\n";
    }
    try {
        VectorProvider::file_table(path, 3);
        FAIL("expected ParseError");
    } catch (const ParseError& e) {
        CHECK(e.line == 2);
    }
}

TEST_CASE("multi-word strings average their word vectors") {
    const auto provider = VectorProvider::hash_fallback(16);
    const Eigen::VectorXd joint = word_vector("bernie sanders", provider);
    const Eigen::VectorXd mean =
        0.5 * (word_vector("bernie", provider) + word_vector("sanders", provider));
    CHECK((joint - mean).norm() < 1e-15);
}

TEST_CASE("vocabulary reserves markers at fixed indices") {
    const Vocabulary v({"holds", "a", "sign"});
    CHECK(v.size() == 7);
    CHECK(v.word(Vocabulary::kBegin) == "<begin>");
    CHECK(v.word(Vocabulary::kEnd) == "<end>");
    CHECK(v.word(Vocabulary::kPad) == "<pad>");
    CHECK(v.word(Vocabulary::kUnk) == "<unk>");
    CHECK(v.index("sign") == 6);
    for (int i = 0; i < v.size(); ++i) CHECK(v.index(v.word(i)) == i);
    CHECK(v.index("absent") == -1);
    CHECK_THROWS_AS(v.word(7), IndexOutOfRange);
}

TEST_CASE("vocabulary rejects duplicates") {
    CHECK_THROWS_AS(Vocabulary({"a", "a"}), Error);
    CHECK_THROWS_AS(Vocabulary({"<end>"}), Error);
}
