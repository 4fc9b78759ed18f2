#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "stcap/data.hpp"
#include "stcap/decoder.hpp"
#include "stcap/model.hpp"
#include "stcap/rng.hpp"

using namespace stcap;

namespace {

ModelConfig tiny_config() {
    ModelConfig cfg;
    cfg.d = 8;
    cfg.d_fr = 4;
    cfg.d_ft = 4;
    cfg.d_p = 8;
    cfg.layers = 1;
    cfg.heads = 2;
    cfg.d_ffn = 12;
    cfg.t_max = 30;
    return cfg;
}

CaptionSample tiny_sample(int n_tokens, int n_objects, uint64_t seed, int d_fr) {
    CaptionSample s;
    s.image_id = "img-" + std::to_string(seed);
    Rng rng(seed);
    for (int i = 0; i < n_objects; ++i) {
        ObjectRegion r;
        r.visual_feature.resize(d_fr);
        for (int k = 0; k < d_fr; ++k) r.visual_feature[k] = rng.gaussian();
        r.bbox = {0.1, 0.1, 0.8, 0.9};
        s.objects.push_back(std::move(r));
    }
    for (int i = 0; i < n_tokens; ++i) {
        SpecialToken t;
        t.text = "token" + std::to_string(i);
        t.source = i % 2;
        t.bbox = {0.2, 0.2, 0.7, 0.7};
        t.visual_feature.resize(d_fr);
        for (int k = 0; k < d_fr; ++k) t.visual_feature[k] = rng.gaussian();
        s.special_tokens.push_back(std::move(t));
    }
    s.references.push_back("a placeholder caption");
    return s;
}

PointerHeads random_heads(int d, int dp, int k, uint64_t seed) {
    Rng rng(seed);
    PointerHeads h;
    auto fill = [&rng](Eigen::MatrixXd& m, int r, int c) {
        m.resize(r, c);
        for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = rng.gaussian();
    };
    fill(h.w_st, d, dp);
    fill(h.w_dec, d, dp);
    fill(h.w_voc, d, k);
    h.b_st.resize(dp);
    h.b_dec.resize(dp);
    h.b_voc.resize(k);
    for (int i = 0; i < dp; ++i) h.b_st[i] = rng.gaussian();
    for (int i = 0; i < dp; ++i) h.b_dec[i] = rng.gaussian();
    for (int i = 0; i < k; ++i) h.b_voc[i] = rng.gaussian();
    return h;
}

}  // namespace

TEST_CASE("score_step identity case") {
    PointerHeads h;
    h.w_st = Eigen::MatrixXd::Identity(2, 2);
    h.w_dec = Eigen::MatrixXd::Identity(2, 2);
    h.b_st = Eigen::VectorXd::Zero(2);
    h.b_dec = Eigen::VectorXd::Zero(2);
    h.w_voc = Eigen::MatrixXd::Zero(2, 3);
    h.b_voc = Eigen::VectorXd::Zero(3);
    Eigen::MatrixXd z_st(1, 2);
    z_st << 1, 0;
    const StepScores s = score_step(Eigen::Vector2d(0.5, 2.0), z_st, h);
    CHECK(s.vocab_size == 3);
    CHECK(s.n_pointers() == 1);
    CHECK(s.values[3] == doctest::Approx(0.5));
}

TEST_CASE("zero decoded output with zero biases gives zero pointer scores") {
    PointerHeads h = random_heads(4, 4, 3, 5);
    h.b_dec.setZero();
    Eigen::MatrixXd z_st(2, 4);
    z_st.setRandom();
    const StepScores s = score_step(Eigen::VectorXd::Zero(4), z_st, h);
    CHECK(s.values.tail(2).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("score_step matches a straight-loop evaluation") {
    Rng rng(7);
    for (int trial = 0; trial < 100; ++trial) {
        const int d = 2 + rng.uniform_int(5);
        const int dp = 2 + rng.uniform_int(5);
        const int k = 1 + rng.uniform_int(5);
        const int n = rng.uniform_int(5);
        const PointerHeads h = random_heads(d, dp, k, 100 + static_cast<uint64_t>(trial));
        Eigen::VectorXd z_dec(d);
        for (int i = 0; i < d; ++i) z_dec[i] = rng.gaussian();
        Eigen::MatrixXd z_st(n, d);
        for (Eigen::Index i = 0; i < z_st.size(); ++i) z_st.data()[i] = rng.gaussian();
        const StepScores s = score_step(z_dec, z_st, h);
        REQUIRE(s.values.size() == k + n);
        for (int o = 0; o < k; ++o) {
            double v = h.b_voc[o];
            for (int i = 0; i < d; ++i) v += h.w_voc(i, o) * z_dec[i];
            CHECK(s.values[o] == doctest::Approx(v).epsilon(1e-12));
        }
        for (int t = 0; t < n; ++t) {
            double dot = 0.0;
            for (int a = 0; a < dp; ++a) {
                double ps = h.b_st[a];
                double pd = h.b_dec[a];
                for (int i = 0; i < d; ++i) {
                    ps += h.w_st(i, a) * z_st(t, i);
                    pd += h.w_dec(i, a) * z_dec[i];
                }
                dot += ps * pd;
            }
            CHECK(s.values[k + t] == doctest::Approx(dot).epsilon(1e-10));
        }
    }
}

TEST_CASE("select_word picks the global argmax with pointers mapped past K") {
    StepScores s;
    s.vocab_size = 2;
    s.values.resize(3);
    s.values << 0.1, 0.2, 0.9;
    CHECK(select_word(s) == WordChoice::pointer(0));
}

TEST_CASE("select_word breaks ties toward the vocabulary") {
    StepScores s;
    s.vocab_size = 2;
    s.values.resize(3);
    s.values << 0.1, 0.7, 0.7;
    CHECK(select_word(s) == WordChoice::vocab(1));
}

TEST_CASE("select_word is invariant to shifting and positive scaling") {
    Rng rng(17);
    for (int trial = 0; trial < 1000; ++trial) {
        const int k = 1 + rng.uniform_int(6);
        const int n = rng.uniform_int(6);
        StepScores s;
        s.vocab_size = k;
        s.values.resize(k + n);
        for (Eigen::Index i = 0; i < s.values.size(); ++i) s.values[i] = rng.gaussian();
        const WordChoice base = select_word(s);
        StepScores shifted = s;
        shifted.values.array() += rng.uniform(-10.0, 10.0);
        CHECK(select_word(shifted) == base);
        StepScores scaled = s;
        scaled.values *= rng.uniform(0.1, 9.0);
        CHECK(select_word(scaled) == base);
    }
}

TEST_CASE("select_word masks pointer slots beyond n_valid") {
    Rng rng(19);
    for (int trial = 0; trial < 1000; ++trial) {
        const int k = 1 + rng.uniform_int(4);
        const int n = 1 + rng.uniform_int(6);
        StepScores s;
        s.vocab_size = k;
        s.values.resize(k + n);
        for (Eigen::Index i = 0; i < s.values.size(); ++i) s.values[i] = rng.gaussian();
        const int n_valid = rng.uniform_int(n + 1);
        const WordChoice c = select_word(s, n_valid);
        if (c.is_pointer()) CHECK(c.index < n_valid);
    }
}

TEST_CASE("a rigged always-end model emits an empty caption with T_end = 1") {
    const ModelConfig cfg = tiny_config();
    const Vocabulary vocab({"hello", "world"});
    Model m = Model::init(cfg, vocab, 3);
    zero_params(m);
    m.heads.b_voc[Vocabulary::kEnd] = 100.0;
    const CaptionSample sample = tiny_sample(2, 1, 4, cfg.d_fr);
    const GenerationResult r = generate_caption(sample, m, cfg.t_max);
    CHECK(r.t_end == 1);
    CHECK(r.text.empty());
    CHECK(r.choices.size() == 1);
    CHECK(r.choices[0] == WordChoice::vocab(Vocabulary::kEnd));
}

TEST_CASE("generation caps at T_max and stays deterministic") {
    const ModelConfig cfg = tiny_config();
    const Vocabulary vocab({"alpha", "beta", "gamma"});
    Rng rng(23);
    for (int trial = 0; trial < 25; ++trial) {
        const Model m = Model::init(cfg, vocab, 500 + static_cast<uint64_t>(trial));
        const CaptionSample sample =
            tiny_sample(1 + rng.uniform_int(3), rng.uniform_int(3), 900 + static_cast<uint64_t>(trial),
                        cfg.d_fr);
        const GenerationResult a = generate_caption(sample, m, 30);
        CHECK(a.t_end <= 30);
        CHECK(static_cast<int>(a.choices.size()) == a.t_end);
        const GenerationResult b = generate_caption(sample, m, 30);
        CHECK(a.choices == b.choices);
        CHECK(a.text == b.text);
        for (size_t t = 0; t < a.scores.size(); ++t) {
            CHECK(a.scores[t].values == b.scores[t].values);
        }
        for (const WordChoice& c : a.choices) {
            if (c.is_pointer()) CHECK(c.index < static_cast<int>(sample.special_tokens.size()));
        }
    }
}

TEST_CASE("pointer choices render the token's original text") {
    const ModelConfig cfg = tiny_config();
    const Vocabulary vocab({"says"});
    Model m = Model::init(cfg, vocab, 29);
    zero_params(m);
    CaptionSample sample = tiny_sample(1, 0, 31, cfg.d_fr);
    sample.special_tokens[0].text = "Bernie Sanders";
    // rig: step scores constant; make pointer 0 win at step 0 via b_dec/b_st
    // trick is awkward with zero weights, so use vocab head to end at step 2
    // and force the pointer through w_st/w_dec identity on a nonzero z.
    // Simpler: random model, then force the first choice by a huge pointer
    // bias through b_st/b_dec alignment.
    m = Model::init(cfg, vocab, 29);
    m.heads.b_voc.array() -= 1000.0;  // vocabulary can never win step 0
    const GenerationResult r = generate_caption(sample, m, 3);
    REQUIRE(!r.choices.empty());
    CHECK(r.choices[0].is_pointer());
    CHECK(r.text.rfind("Bernie Sanders", 0) == 0);
}

TEST_CASE("prefix scores are reproduced when re-running generation") {
    const ModelConfig cfg = tiny_config();
    const Vocabulary vocab({"one", "two", "three"});
    const Model m = Model::init(cfg, vocab, 37);
    const CaptionSample sample = tiny_sample(2, 2, 41, cfg.d_fr);
    const GenerationResult full = generate_caption(sample, m, 8);
    const GenerationResult shorter = generate_caption(sample, m, 3);
    for (size_t t = 0; t < shorter.scores.size(); ++t) {
        CHECK(shorter.scores[t].values == full.scores[t].values);
    }
}
