#include "stcap/model.hpp"

#include "stcap/rng.hpp"

namespace stcap {

namespace {

void fill_gaussian(Eigen::MatrixXd& m, Rng& rng, double scale) {
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = scale * rng.gaussian();
}

void fill_gaussian(Eigen::VectorXd& v, Rng& rng, double scale) {
    for (Eigen::Index i = 0; i < v.size(); ++i) v[i] = scale * rng.gaussian();
}

constexpr double kInitScale = 0.02;

}  // namespace

Model Model::init(const ModelConfig& cfg, const Vocabulary& vocab, uint64_t seed) {
    Model m;
    m.cfg = cfg;
    m.vocab = vocab;
    m.provider = cfg.wordvec_file.empty()
                     ? VectorProvider::hash_fallback(cfg.d_ft)
                     : VectorProvider::file_table(cfg.wordvec_file, cfg.d_ft);
    m.tf_config().validate();

    Rng rng(derive_seed(seed, "model-init", 0));
    const int d = cfg.d;
    const int k = vocab.size();

    auto& e = m.emb;
    e.w1.resize(cfg.feature_dim(), d);
    fill_gaussian(e.w1, rng, kInitScale);
    e.w2.resize(4, d);
    fill_gaussian(e.w2, rng, kInitScale);
    e.w3.resize(cfg.n_sources, d);
    fill_gaussian(e.w3, rng, kInitScale);
    e.ln_feat_g = Eigen::VectorXd::Ones(d);
    e.ln_feat_b = Eigen::VectorXd::Zero(d);
    e.ln_box_g = Eigen::VectorXd::Ones(d);
    e.ln_box_b = Eigen::VectorXd::Zero(d);
    e.ln_src_g = Eigen::VectorXd::Ones(d);
    e.ln_src_b = Eigen::VectorXd::Zero(d);
    e.w_obj.resize(cfg.d_fr, d);
    fill_gaussian(e.w_obj, rng, kInitScale);
    e.w_objb.resize(4, d);
    fill_gaussian(e.w_objb, rng, kInitScale);
    e.ln_obj_g = Eigen::VectorXd::Ones(d);
    e.ln_obj_b = Eigen::VectorXd::Zero(d);
    e.ln_objbox_g = Eigen::VectorXd::Ones(d);
    e.ln_objbox_b = Eigen::VectorXd::Zero(d);
    e.vocab_table.resize(k, d);
    fill_gaussian(e.vocab_table, rng, kInitScale);
    e.step_table.resize(cfg.t_max, d);
    fill_gaussian(e.step_table, rng, kInitScale);

    m.tf.layers.resize(static_cast<size_t>(cfg.layers));
    for (auto& lp : m.tf.layers) {
        lp.ln1_g = Eigen::VectorXd::Ones(d);
        lp.ln1_b = Eigen::VectorXd::Zero(d);
        lp.ln2_g = Eigen::VectorXd::Ones(d);
        lp.ln2_b = Eigen::VectorXd::Zero(d);
        lp.wq.resize(d, d);
        fill_gaussian(lp.wq, rng, kInitScale);
        lp.wk.resize(d, d);
        fill_gaussian(lp.wk, rng, kInitScale);
        lp.wv.resize(d, d);
        fill_gaussian(lp.wv, rng, kInitScale);
        lp.wo.resize(d, d);
        fill_gaussian(lp.wo, rng, kInitScale);
        lp.bq = Eigen::VectorXd::Zero(d);
        lp.bk = Eigen::VectorXd::Zero(d);
        lp.bv = Eigen::VectorXd::Zero(d);
        lp.bo = Eigen::VectorXd::Zero(d);
        lp.wff1.resize(d, cfg.d_ffn);
        fill_gaussian(lp.wff1, rng, kInitScale);
        lp.bff1 = Eigen::VectorXd::Zero(cfg.d_ffn);
        lp.wff2.resize(cfg.d_ffn, d);
        fill_gaussian(lp.wff2, rng, kInitScale);
        lp.bff2 = Eigen::VectorXd::Zero(d);
    }

    const int dp = cfg.pointer_dim();
    m.heads.w_st.resize(d, dp);
    fill_gaussian(m.heads.w_st, rng, kInitScale);
    m.heads.b_st = Eigen::VectorXd::Zero(dp);
    m.heads.w_dec.resize(d, dp);
    fill_gaussian(m.heads.w_dec, rng, kInitScale);
    m.heads.b_dec = Eigen::VectorXd::Zero(dp);
    m.heads.w_voc.resize(d, k);
    fill_gaussian(m.heads.w_voc, rng, kInitScale);
    m.heads.b_voc = Eigen::VectorXd::Zero(k);
    return m;
}

namespace {

template <class ModelT, class RefT>
std::vector<RefT> collect_refs(ModelT& m) {
    std::vector<RefT> refs;
    auto add_m = [&refs](const std::string& name, auto& mat) {
        refs.push_back(RefT{name, mat.data(), mat.size()});
    };
    add_m("emb.w1", m.emb.w1);
    add_m("emb.w2", m.emb.w2);
    add_m("emb.w3", m.emb.w3);
    add_m("emb.ln_feat_g", m.emb.ln_feat_g);
    add_m("emb.ln_feat_b", m.emb.ln_feat_b);
    add_m("emb.ln_box_g", m.emb.ln_box_g);
    add_m("emb.ln_box_b", m.emb.ln_box_b);
    add_m("emb.ln_src_g", m.emb.ln_src_g);
    add_m("emb.ln_src_b", m.emb.ln_src_b);
    add_m("emb.w_obj", m.emb.w_obj);
    add_m("emb.w_objb", m.emb.w_objb);
    add_m("emb.ln_obj_g", m.emb.ln_obj_g);
    add_m("emb.ln_obj_b", m.emb.ln_obj_b);
    add_m("emb.ln_objbox_g", m.emb.ln_objbox_g);
    add_m("emb.ln_objbox_b", m.emb.ln_objbox_b);
    add_m("emb.vocab_table", m.emb.vocab_table);
    add_m("emb.step_table", m.emb.step_table);
    for (size_t l = 0; l < m.tf.layers.size(); ++l) {
        auto& lp = m.tf.layers[l];
        const std::string p = "tf.layer" + std::to_string(l) + ".";
        add_m(p + "ln1_g", lp.ln1_g);
        add_m(p + "ln1_b", lp.ln1_b);
        add_m(p + "wq", lp.wq);
        add_m(p + "bq", lp.bq);
        add_m(p + "wk", lp.wk);
        add_m(p + "bk", lp.bk);
        add_m(p + "wv", lp.wv);
        add_m(p + "bv", lp.bv);
        add_m(p + "wo", lp.wo);
        add_m(p + "bo", lp.bo);
        add_m(p + "ln2_g", lp.ln2_g);
        add_m(p + "ln2_b", lp.ln2_b);
        add_m(p + "wff1", lp.wff1);
        add_m(p + "bff1", lp.bff1);
        add_m(p + "wff2", lp.wff2);
        add_m(p + "bff2", lp.bff2);
    }
    add_m("heads.w_st", m.heads.w_st);
    add_m("heads.b_st", m.heads.b_st);
    add_m("heads.w_dec", m.heads.w_dec);
    add_m("heads.b_dec", m.heads.b_dec);
    add_m("heads.w_voc", m.heads.w_voc);
    add_m("heads.b_voc", m.heads.b_voc);
    return refs;
}

}  // namespace

std::vector<TensorRef> param_refs(Model& m) {
    return collect_refs<Model, TensorRef>(m);
}

std::vector<ConstTensorRef> param_refs(const Model& m) {
    return collect_refs<const Model, ConstTensorRef>(m);
}

Model zeros_like(const Model& m) {
    Model z = m;
    zero_params(z);
    return z;
}

void zero_params(Model& m) {
    for (auto& ref : param_refs(m)) std::fill(ref.data, ref.data + ref.size, 0.0);
}

}  // namespace stcap
