#include "stcap/decoder.hpp"

#include "stcap/data.hpp"
#include "stcap/model.hpp"
#include "stcap/training.hpp"

namespace stcap {

StepScores score_step(const Eigen::VectorXd& z_dec_t, const Eigen::MatrixXd& z_st,
                      const PointerHeads& heads, ScoreStepCache* cache) {
    const auto d = heads.w_voc.rows();
    if (z_dec_t.size() != d || (z_st.rows() > 0 && z_st.cols() != d)) {
        throw DimensionMismatch("score_step: representation width does not match heads");
    }
    StepScores out;
    out.vocab_size = static_cast<int>(heads.w_voc.cols());
    const int n = static_cast<int>(z_st.rows());
    out.values.resize(out.vocab_size + n);
    out.values.head(out.vocab_size) = heads.w_voc.transpose() * z_dec_t + heads.b_voc;
    const Eigen::VectorXd proj_dec = heads.w_dec.transpose() * z_dec_t + heads.b_dec;
    Eigen::MatrixXd proj_st;
    if (n > 0) {
        proj_st = (z_st * heads.w_st).rowwise() + heads.b_st.transpose();  // N x d_p
        out.values.tail(n) = proj_st * proj_dec;
    }
    if (cache) {
        cache->proj_st = std::move(proj_st);
        cache->proj_dec = proj_dec;
    }
    return out;
}

void score_step_backward(const Eigen::VectorXd& dscores, const Eigen::VectorXd& z_dec_t,
                         const Eigen::MatrixXd& z_st, const PointerHeads& heads,
                         const ScoreStepCache& cache, PointerHeads& grads,
                         Eigen::VectorXd& dz_dec_t, Eigen::MatrixXd& dz_st) {
    const int k = static_cast<int>(heads.w_voc.cols());
    const int n = static_cast<int>(z_st.rows());
    const auto dvoc = dscores.head(k);
    grads.w_voc += z_dec_t * dvoc.transpose();
    grads.b_voc += dvoc;
    dz_dec_t += heads.w_voc * dvoc;
    if (n == 0) return;

    const auto dptr = dscores.tail(n);
    // y_n = proj_st[n] . proj_dec
    const Eigen::MatrixXd dproj_st = dptr * cache.proj_dec.transpose();       // N x d_p
    const Eigen::VectorXd dproj_dec = cache.proj_st.transpose() * dptr;       // d_p
    grads.w_st += z_st.transpose() * dproj_st;
    grads.b_st += dproj_st.colwise().sum().transpose();
    dz_st += dproj_st * heads.w_st.transpose();
    grads.w_dec += z_dec_t * dproj_dec.transpose();
    grads.b_dec += dproj_dec;
    dz_dec_t += heads.w_dec * dproj_dec;
}

WordChoice select_word(const StepScores& scores, int n_valid_pointers) {
    const int k = scores.vocab_size;
    const int total = static_cast<int>(scores.values.size());
    const int valid_ptr = n_valid_pointers < 0 ? total - k : std::min(n_valid_pointers, total - k);
    int best = 0;
    double best_score = scores.values[0];
    for (int i = 1; i < k + valid_ptr; ++i) {
        if (scores.values[i] > best_score) {
            best_score = scores.values[i];
            best = i;
        }
    }
    return best < k ? WordChoice::vocab(best) : WordChoice::pointer(best - k);
}

GenerationResult generate_caption(const CaptionSample& sample, const Model& model, int t_max) {
    const PreparedSample prep = prepare_sample(sample, model, nullptr);
    const int n = static_cast<int>(prep.st_features.rows());
    const int m = static_cast<int>(prep.objects.size());
    const int d = model.cfg.d;
    const TransformerConfig tcfg = model.tf_config();
    if (t_max > model.cfg.t_max) {
        throw DimensionMismatch("generate_caption: t_max exceeds the model's step table");
    }

    // Context embeddings are fixed across steps.
    Eigen::MatrixXd ctx(m + n, d);
    for (int i = 0; i < m; ++i) {
        ctx.row(i) = embed_object(prep.objects[static_cast<size_t>(i)], model.emb).transpose();
    }
    for (int i = 0; i < n; ++i) {
        ctx.row(m + i) =
            embed_special_token_features(prep.st_features.row(i).transpose(),
                                         prep.st_bbox[static_cast<size_t>(i)],
                                         prep.st_source[static_cast<size_t>(i)], model.emb)
                .transpose();
    }

    GenerationResult result;
    std::vector<WordChoice> inputs;  // decoder inputs so far; inputs[0] = <begin>
    inputs.push_back(WordChoice::vocab(Vocabulary::kBegin));
    for (int t = 0; t < t_max; ++t) {
        const int cur = static_cast<int>(inputs.size());
        Eigen::MatrixXd x(m + n + cur, d);
        x.topRows(m + n) = ctx;
        for (int s = 0; s < cur; ++s) {
            const WordChoice& choice = inputs[static_cast<size_t>(s)];
            Eigen::VectorXd row;
            if (choice.kind == WordChoice::Kind::Vocab) {
                row = model.emb.vocab_table.row(choice.index).transpose();
            } else {
                row = ctx.row(m + choice.index).transpose();
            }
            x.row(m + n + s) = (row + model.emb.step_table.row(s).transpose()).transpose();
        }
        const AttentionMask mask = build_attention_mask(m, n, cur);
        const Eigen::MatrixXd z = transformer_forward(x, mask, tcfg, model.tf);
        StepScores scores =
            score_step(z.row(m + n + cur - 1).transpose(), z.middleRows(m, n), model.heads);
        const WordChoice choice = select_word(scores, n);
        result.scores.push_back(std::move(scores));
        result.choices.push_back(choice);
        if (choice == WordChoice::vocab(Vocabulary::kEnd)) break;
        inputs.push_back(choice);
    }
    result.t_end = static_cast<int>(result.choices.size());

    std::string text;
    for (const WordChoice& choice : result.choices) {
        if (choice == WordChoice::vocab(Vocabulary::kEnd)) break;
        const std::string& piece = choice.kind == WordChoice::Kind::Vocab
                                       ? model.vocab.word(choice.index)
                                       : sample.special_tokens[static_cast<size_t>(choice.index)].text;
        if (!text.empty()) text.push_back(' ');
        text += piece;
    }
    result.text = std::move(text);
    return result;
}

}  // namespace stcap
