#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "stcap/embedding.hpp"
#include "stcap/model.hpp"
#include "stcap/rng.hpp"

using namespace stcap;

namespace {

// Straight-loop layer-norm oracle.
Eigen::VectorXd ln_oracle(const Eigen::VectorXd& x, const Eigen::VectorXd& g,
                          const Eigen::VectorXd& b) {
    const int n = static_cast<int>(x.size());
    double mean = 0.0;
    for (int i = 0; i < n; ++i) mean += x[i];
    mean /= n;
    double var = 0.0;
    for (int i = 0; i < n; ++i) var += (x[i] - mean) * (x[i] - mean);
    var /= n;
    Eigen::VectorXd out(n);
    for (int i = 0; i < n; ++i) {
        out[i] = g[i] * (x[i] - mean) / std::sqrt(var + 1e-5) + b[i];
    }
    return out;
}

ModelConfig tiny_config() {
    ModelConfig cfg;
    cfg.d = 4;
    cfg.d_fr = 3;
    cfg.d_ft = 5;
    cfg.d_p = 4;
    cfg.layers = 1;
    cfg.heads = 2;
    cfg.d_ffn = 8;
    cfg.t_max = 6;
    return cfg;
}

SpecialToken make_token(const std::string& text, int source, uint64_t seed, int d_fr) {
    SpecialToken t;
    t.text = text;
    t.source = source;
    t.bbox = {0.1, 0.2, 0.6, 0.8};
    t.visual_feature = hash_unit_vector("tok:" + std::to_string(seed), d_fr);
    return t;
}

}  // namespace

TEST_CASE("layer_norm matches the oracle") {
    Rng rng(3);
    for (int trial = 0; trial < 50; ++trial) {
        const int n = 2 + rng.uniform_int(14);
        Eigen::VectorXd x(n), g(n), b(n);
        for (int i = 0; i < n; ++i) {
            x[i] = rng.gaussian();
            g[i] = 1.0 + 0.3 * rng.gaussian();
            b[i] = 0.2 * rng.gaussian();
        }
        CHECK((layer_norm(x, g, b) - ln_oracle(x, g, b)).cwiseAbs().maxCoeff() < 1e-12);
    }
}

TEST_CASE("zero weights embed any token to the zero vector") {
    const ModelConfig cfg = tiny_config();
    Model m = Model::init(cfg, Vocabulary(), 1);
    zero_params(m);
    // LN(0_d) = 0 with zero gain/bias; all three branches vanish.
    const SpecialToken tok = make_token("abc", kSourceFace, 1, cfg.d_fr);
    CHECK(embed_special_token(tok, m.emb, m.provider).isZero(0.0));
    ObjectRegion r;
    r.visual_feature = Eigen::VectorXd::Ones(cfg.d_fr);
    r.bbox = {0.1, 0.1, 0.5, 0.5};
    CHECK(embed_object(r, m.emb).isZero(0.0));
}

TEST_CASE("embedding output has length d") {
    const ModelConfig cfg = tiny_config();
    const Model m = Model::init(cfg, Vocabulary(), 2);
    const SpecialToken tok = make_token("bernie sanders", kSourceOcr, 2, cfg.d_fr);
    CHECK(embed_special_token(tok, m.emb, m.provider).size() == cfg.d);
    ObjectRegion r;
    r.visual_feature = hash_unit_vector("obj", cfg.d_fr);
    r.bbox = {0.0, 0.0, 1.0, 1.0};
    CHECK(embed_object(r, m.emb).size() == cfg.d);
}

TEST_CASE("bbox branch alone: LN of (0.2,0.4) is (-1,+1) up to epsilon") {
    ModelConfig cfg = tiny_config();
    cfg.d = 2;
    cfg.heads = 1;
    cfg.d_p = 2;
    Model m = Model::init(cfg, Vocabulary(), 3);
    zero_params(m);
    // W2 rows ((1,0,0,0),(0,1,0,0)) in math orientation: output j = bbox[j].
    m.emb.w2(0, 0) = 1.0;
    m.emb.w2(1, 1) = 1.0;
    m.emb.ln_box_g.setOnes();
    SpecialToken tok = make_token("x", kSourceFace, 3, cfg.d_fr);
    tok.bbox = {0.2, 0.4, 0.9, 0.9};
    const Eigen::VectorXd e = embed_special_token(tok, m.emb, m.provider);
    const Eigen::Vector2d expected = ln_oracle(Eigen::Vector2d(0.2, 0.4),
                                               Eigen::Vector2d::Ones(), Eigen::Vector2d::Zero());
    CHECK((e - expected).cwiseAbs().maxCoeff() < 1e-12);
    CHECK(e[0] == doctest::Approx(-1.0).epsilon(1e-3));
    CHECK(e[1] == doctest::Approx(1.0).epsilon(1e-3));
}

TEST_CASE("changing only the source flips only the source branch") {
    const ModelConfig cfg = tiny_config();
    const Model m = Model::init(cfg, Vocabulary(), 4);
    SpecialToken a = make_token("vote", kSourceFace, 4, cfg.d_fr);
    SpecialToken b = a;
    b.source = kSourceOcr;
    const Eigen::VectorXd diff =
        embed_special_token(a, m.emb, m.provider) - embed_special_token(b, m.emb, m.provider);
    const Eigen::VectorXd branch_a =
        layer_norm(m.emb.w3.row(kSourceFace).transpose(), m.emb.ln_src_g, m.emb.ln_src_b);
    const Eigen::VectorXd branch_b =
        layer_norm(m.emb.w3.row(kSourceOcr).transpose(), m.emb.ln_src_g, m.emb.ln_src_b);
    CHECK((diff - (branch_a - branch_b)).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("object pre-norm branch is linear in the visual feature") {
    const ModelConfig cfg = tiny_config();
    const Model m = Model::init(cfg, Vocabulary(), 5);
    ObjectRegion r;
    r.visual_feature = hash_unit_vector("lin", cfg.d_fr);
    r.bbox = {0.2, 0.2, 0.8, 0.8};
    const Eigen::VectorXd once = m.emb.w_obj.transpose() * r.visual_feature;
    const Eigen::VectorXd twice = m.emb.w_obj.transpose() * (2.0 * r.visual_feature);
    CHECK((twice - 2.0 * once).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("embeddings stay finite for finite inputs") {
    const ModelConfig cfg = tiny_config();
    const Model m = Model::init(cfg, Vocabulary(), 6);
    Rng rng(99);
    for (int trial = 0; trial < 50; ++trial) {
        SpecialToken t = make_token("word" + std::to_string(trial), trial % 2, 100 + trial, cfg.d_fr);
        t.visual_feature *= 1000.0 * rng.uniform();
        CHECK(embed_special_token(t, m.emb, m.provider).allFinite());
    }
}

TEST_CASE("embed_prev_word follows the table rules") {
    const ModelConfig cfg = tiny_config();
    const Vocabulary vocab({"hello"});
    const Model m = Model::init(cfg, vocab, 7);
    const std::vector<SpecialToken> toks = {make_token("abc", kSourceFace, 7, cfg.d_fr)};

    const Eigen::VectorXd step0 =
        embed_prev_word(WordChoice::vocab(Vocabulary::kBegin), 0, toks, m.emb, m.provider);
    CHECK((step0 - (m.emb.vocab_table.row(Vocabulary::kBegin).transpose() +
                    m.emb.step_table.row(0).transpose()))
              .isZero(0.0));

    const Eigen::VectorXd p3 = embed_prev_word(WordChoice::pointer(0), 3, toks, m.emb, m.provider);
    CHECK((p3 - (embed_special_token(toks[0], m.emb, m.provider) +
                 m.emb.step_table.row(3).transpose()))
              .isZero(0.0));

    Model zstep = m;
    zstep.emb.step_table.setZero();
    const Eigen::VectorXd no_step =
        embed_prev_word(WordChoice::pointer(0), 2, toks, zstep.emb, zstep.provider);
    CHECK((no_step - embed_special_token(toks[0], zstep.emb, zstep.provider)).isZero(0.0));

    CHECK_THROWS_AS(embed_prev_word(WordChoice::pointer(5), 0, toks, m.emb, m.provider),
                    IndexOutOfRange);
    CHECK_THROWS_AS(embed_prev_word(WordChoice::vocab(0), cfg.t_max, toks, m.emb, m.provider),
                    IndexOutOfRange);
}

TEST_CASE("embedding gradients match central finite differences") {
    const ModelConfig cfg = tiny_config();
    Model m = Model::init(cfg, Vocabulary(), 8);
    const SpecialToken tok = make_token("bernie sanders", kSourceFace, 8, cfg.d_fr);
    const Eigen::VectorXd features = token_feature_vector(tok, m.provider);
    const Eigen::VectorXd r = hash_unit_vector("probe", cfg.d);  // random linear functional

    auto objective = [&](const Model& model) {
        return r.dot(embed_special_token_features(features, tok.bbox, tok.source, model.emb));
    };

    Model grads = zeros_like(m);
    TokenEmbedCache cache;
    embed_special_token_features(features, tok.bbox, tok.source, m.emb, &cache);
    embed_special_token_backward(r, features, tok.bbox, tok.source, m.emb, cache, grads.emb);

    auto m_refs = param_refs(m);
    auto g_refs = param_refs(grads);
    const double eps = 1e-6;
    double max_rel = 0.0;
    for (size_t p = 0; p < m_refs.size(); ++p) {
        if (m_refs[p].name.rfind("emb.w1", 0) != 0 && m_refs[p].name.rfind("emb.w2", 0) != 0 &&
            m_refs[p].name.rfind("emb.w3", 0) != 0 && m_refs[p].name.rfind("emb.ln_feat", 0) != 0 &&
            m_refs[p].name.rfind("emb.ln_box", 0) != 0 && m_refs[p].name.rfind("emb.ln_src", 0) != 0) {
            continue;
        }
        for (Eigen::Index i = 0; i < m_refs[p].size; ++i) {
            double& theta = m_refs[p].data[i];
            const double saved = theta;
            theta = saved + eps;
            const double f1 = objective(m);
            theta = saved - eps;
            const double f2 = objective(m);
            theta = saved;
            const double numeric = (f1 - f2) / (2 * eps);
            const double analytic = g_refs[p].data[i];
            max_rel = std::max(max_rel, std::abs(analytic - numeric) /
                                            std::max({std::abs(analytic), std::abs(numeric), 1e-8}));
        }
    }
    CHECK(max_rel < 1e-4);
}
