#include "stcap/training.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

namespace stcap {

namespace {

double softplus(double x) {
    return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x)));
}

double sigmoid(double x) {
    if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

}  // namespace

std::vector<MatchedSpan> match_token_spans(const std::vector<std::string>& words,
                                           const std::vector<SpecialToken>& tokens) {
    std::vector<std::vector<std::string>> token_words(tokens.size());
    for (size_t i = 0; i < tokens.size(); ++i) {
        token_words[i] = caption_words(tokens[i].text);
    }
    std::vector<MatchedSpan> spans;
    size_t pos = 0;
    while (pos < words.size()) {
        size_t best_len = 0;
        for (const auto& tw : token_words) {
            if (tw.empty() || tw.size() <= best_len || pos + tw.size() > words.size()) continue;
            if (std::equal(tw.begin(), tw.end(), words.begin() + static_cast<long>(pos))) {
                best_len = tw.size();
            }
        }
        if (best_len == 0) {
            ++pos;
            continue;
        }
        MatchedSpan span;
        span.pos = static_cast<int>(pos);
        span.len = static_cast<int>(best_len);
        for (size_t i = 0; i < tokens.size(); ++i) {
            if (token_words[i].size() == best_len &&
                std::equal(token_words[i].begin(), token_words[i].end(),
                           words.begin() + static_cast<long>(pos))) {
                span.token_indices.push_back(static_cast<int>(i));
            }
        }
        spans.push_back(std::move(span));
        pos += best_len;
    }
    return spans;
}

TargetData build_targets(const std::string& reference, const Vocabulary& vocab,
                         const std::vector<SpecialToken>& tokens, int t_max) {
    if (reference.empty()) throw EmptyReference("build_targets: reference is empty");
    const std::vector<std::string> words = caption_words(reference);
    if (words.empty()) {
        throw EmptyReference("build_targets: reference is empty after normalization");
    }
    if (t_max < 1) throw DimensionMismatch("build_targets: t_max must be >= 1");

    const int k = vocab.size();
    const int n = static_cast<int>(tokens.size());
    const std::vector<MatchedSpan> spans = match_token_spans(words, tokens);

    // Per-step choice sets, walking the words once.
    struct Step {
        std::vector<int> vocab_bits;
        std::vector<int> pointer_bits;
        WordChoice input;  // the teacher-forcing choice for this step
    };
    std::vector<Step> steps;
    size_t span_i = 0;
    size_t pos = 0;
    while (pos < words.size()) {
        Step st;
        if (span_i < spans.size() && spans[span_i].pos == static_cast<int>(pos)) {
            const MatchedSpan& span = spans[span_i];
            st.pointer_bits = span.token_indices;
            if (span.len == 1) {
                const int vi = vocab.index(words[pos]);
                if (vi >= 0) st.vocab_bits.push_back(vi);
            }
            st.input = WordChoice::pointer(span.token_indices.front());
            pos += static_cast<size_t>(span.len);
            ++span_i;
        } else {
            const int vi = vocab.index(words[pos]);
            st.vocab_bits.push_back(vi >= 0 ? vi : Vocabulary::kUnk);
            st.input = WordChoice::vocab(vi >= 0 ? vi : Vocabulary::kUnk);
            ++pos;
        }
        steps.push_back(std::move(st));
    }
    if (static_cast<int>(steps.size()) > t_max - 1) {
        steps.resize(static_cast<size_t>(t_max - 1));
    }

    TargetData out;
    out.t_end = static_cast<int>(steps.size()) + 1;
    out.targets = Eigen::MatrixXd::Zero(out.t_end, k + n);
    out.inputs.reserve(static_cast<size_t>(out.t_end));
    out.inputs.push_back(WordChoice::vocab(Vocabulary::kBegin));
    for (size_t t = 0; t < steps.size(); ++t) {
        for (int vi : steps[t].vocab_bits) out.targets(static_cast<long>(t), vi) = 1.0;
        for (int pi : steps[t].pointer_bits) out.targets(static_cast<long>(t), k + pi) = 1.0;
        if (t + 1 < static_cast<size_t>(out.t_end)) out.inputs.push_back(steps[t].input);
    }
    out.targets(out.t_end - 1, Vocabulary::kEnd) = 1.0;
    return out;
}

double bce_step(const StepScores& scores, const Eigen::VectorXd& target_row) {
    if (scores.values.size() != target_row.size()) {
        throw DimensionMismatch("bce_step: score/target length mismatch");
    }
    const auto n = scores.values.size();
    double acc = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
        const double y = scores.values[i];
        const double g = target_row[i];
        acc += g * softplus(-y) + (1.0 - g) * softplus(y);
    }
    return acc / static_cast<double>(n);
}

double dbce_loss(const std::vector<StepScores>& step_scores, const Eigen::MatrixXd& targets) {
    if (static_cast<Eigen::Index>(step_scores.size()) != targets.rows()) {
        throw DimensionMismatch("dbce_loss: step count mismatch");
    }
    if (step_scores.empty()) throw DimensionMismatch("dbce_loss: no steps");
    double acc = 0.0;
    for (size_t t = 0; t < step_scores.size(); ++t) {
        acc += bce_step(step_scores[t], targets.row(static_cast<long>(t)).transpose());
    }
    return acc / static_cast<double>(step_scores.size());
}

PreparedSample prepare_sample(const CaptionSample& sample, const Model& model,
                              const std::string* reference) {
    PreparedSample prep;
    const int n = static_cast<int>(sample.special_tokens.size());
    prep.st_features.resize(n, model.cfg.feature_dim());
    prep.st_bbox.resize(static_cast<size_t>(n));
    prep.st_source.resize(static_cast<size_t>(n));
    for (int i = 0; i < n; ++i) {
        const SpecialToken& tok = sample.special_tokens[static_cast<size_t>(i)];
        if (tok.visual_feature.size() != model.cfg.d_fr) {
            throw DimensionMismatch("prepare_sample: token visual feature dim " +
                                    std::to_string(tok.visual_feature.size()) + " != configured " +
                                    std::to_string(model.cfg.d_fr));
        }
        prep.st_features.row(i) = token_feature_vector(tok, model.provider).transpose();
        prep.st_bbox[static_cast<size_t>(i)] = tok.bbox;
        prep.st_source[static_cast<size_t>(i)] = tok.source;
    }
    prep.objects = sample.objects;
    for (const auto& o : prep.objects) {
        if (o.visual_feature.size() != model.cfg.d_fr) {
            throw DimensionMismatch("prepare_sample: object feature dim mismatch");
        }
    }
    if (reference) {
        TargetData td = build_targets(*reference, model.vocab, sample.special_tokens,
                                      model.cfg.t_max);
        prep.inputs = std::move(td.inputs);
        prep.targets = std::move(td.targets);
        prep.t_end = td.t_end;
    }
    return prep;
}

double forward_loss(const Model& model, const PreparedSample& prep, Model* grads,
                    std::vector<StepScores>* scores_out, Rng* dropout_rng) {
    const int n = static_cast<int>(prep.st_features.rows());
    const int m = static_cast<int>(prep.objects.size());
    const int t = prep.t_end;
    if (t < 1) throw DimensionMismatch("forward_loss: prepared sample has no target steps");
    const int d = model.cfg.d;
    const int k = model.vocab.size();

    // Embed every modality.
    std::vector<TokenEmbedCache> st_caches(static_cast<size_t>(n));
    std::vector<ObjectEmbedCache> obj_caches(static_cast<size_t>(m));
    Eigen::MatrixXd x(m + n + t, d);
    for (int i = 0; i < m; ++i) {
        x.row(i) = embed_object(prep.objects[static_cast<size_t>(i)], model.emb,
                                &obj_caches[static_cast<size_t>(i)])
                       .transpose();
    }
    for (int i = 0; i < n; ++i) {
        x.row(m + i) = embed_special_token_features(prep.st_features.row(i).transpose(),
                                                    prep.st_bbox[static_cast<size_t>(i)],
                                                    prep.st_source[static_cast<size_t>(i)],
                                                    model.emb, &st_caches[static_cast<size_t>(i)])
                           .transpose();
    }
    for (int step = 0; step < t; ++step) {
        const WordChoice& choice = prep.inputs[static_cast<size_t>(step)];
        Eigen::VectorXd row;
        if (choice.kind == WordChoice::Kind::Vocab) {
            row = model.emb.vocab_table.row(choice.index).transpose();
        } else {
            row = x.row(m + choice.index).transpose();
        }
        x.row(m + n + step) = (row + model.emb.step_table.row(step).transpose()).transpose();
    }

    const AttentionMask mask = build_attention_mask(m, n, t);
    TransformerCache tcache;
    const TransformerConfig tcfg = model.tf_config();
    const Eigen::MatrixXd z =
        transformer_forward(x, mask, tcfg, model.tf, grads ? &tcache : nullptr, dropout_rng);
    const Eigen::MatrixXd z_st = z.middleRows(m, n);

    std::vector<StepScores> scores(static_cast<size_t>(t));
    std::vector<ScoreStepCache> score_caches(static_cast<size_t>(t));
    double loss = 0.0;
    for (int step = 0; step < t; ++step) {
        scores[static_cast<size_t>(step)] =
            score_step(z.row(m + n + step).transpose(), z_st, model.heads,
                       grads ? &score_caches[static_cast<size_t>(step)] : nullptr);
        loss += bce_step(scores[static_cast<size_t>(step)], prep.targets.row(step).transpose());
    }
    loss /= static_cast<double>(t);
    if (scores_out) *scores_out = scores;
    if (!grads) return loss;

    // Backward.
    Eigen::MatrixXd dz = Eigen::MatrixXd::Zero(m + n + t, d);
    Eigen::MatrixXd dz_st = Eigen::MatrixXd::Zero(n, d);
    for (int step = 0; step < t; ++step) {
        const StepScores& sc = scores[static_cast<size_t>(step)];
        Eigen::VectorXd dscores(sc.values.size());
        const double scale = 1.0 / (static_cast<double>(sc.values.size()) * static_cast<double>(t));
        for (Eigen::Index i = 0; i < sc.values.size(); ++i) {
            dscores[i] = (sigmoid(sc.values[i]) - prep.targets(step, i)) * scale;
        }
        Eigen::VectorXd dz_dec = Eigen::VectorXd::Zero(d);
        score_step_backward(dscores, z.row(m + n + step).transpose(), z_st, model.heads,
                            score_caches[static_cast<size_t>(step)], grads->heads, dz_dec, dz_st);
        dz.row(m + n + step) = dz_dec.transpose();
    }
    dz.middleRows(m, n) = dz_st;

    TransformerParams& tf_grads = grads->tf;
    Eigen::MatrixXd dx = transformer_backward(dz, mask, tcfg, model.tf, tcache, tf_grads);

    // Decoder-input rows first: pointer rows feed back into token embeddings.
    for (int step = 0; step < t; ++step) {
        const WordChoice& choice = prep.inputs[static_cast<size_t>(step)];
        const Eigen::VectorXd ddec = dx.row(m + n + step).transpose();
        grads->emb.step_table.row(step) += ddec.transpose();
        if (choice.kind == WordChoice::Kind::Vocab) {
            grads->emb.vocab_table.row(choice.index) += ddec.transpose();
        } else {
            const int j = choice.index;
            embed_special_token_backward(ddec, prep.st_features.row(j).transpose(),
                                         prep.st_bbox[static_cast<size_t>(j)],
                                         prep.st_source[static_cast<size_t>(j)], model.emb,
                                         st_caches[static_cast<size_t>(j)], grads->emb);
        }
    }
    for (int i = 0; i < n; ++i) {
        embed_special_token_backward(dx.row(m + i).transpose(), prep.st_features.row(i).transpose(),
                                     prep.st_bbox[static_cast<size_t>(i)],
                                     prep.st_source[static_cast<size_t>(i)], model.emb,
                                     st_caches[static_cast<size_t>(i)], grads->emb);
    }
    for (int i = 0; i < m; ++i) {
        embed_object_backward(dx.row(i).transpose(), prep.objects[static_cast<size_t>(i)],
                              model.emb, obj_caches[static_cast<size_t>(i)], grads->emb);
    }
    return loss;
}

AdamState AdamState::init_for(const Model& model) {
    AdamState s;
    for (const auto& ref : param_refs(model)) {
        s.m.push_back(Eigen::ArrayXd::Zero(ref.size));
        s.v.push_back(Eigen::ArrayXd::Zero(ref.size));
    }
    return s;
}

TrainResult train(const std::vector<CaptionSample>& data, Model& model, const TrainConfig& cfg,
                  AdamState& state) {
    if (data.empty()) throw Error("train: dataset is empty");
    if (cfg.batch < 1) throw ConfigError("train: batch must be positive", "batch");
    if (cfg.epochs < 1) throw ConfigError("train: epochs must be positive", "epochs");
    if (cfg.decay <= 0.0 || cfg.decay > 1.0) throw ConfigError("train: decay must be in (0,1]", "decay");

    // Training items are (sample, reference) pairs, prepared once.
    std::vector<PreparedSample> items;
    for (const auto& s : data) {
        for (const auto& ref : s.references) {
            items.push_back(prepare_sample(s, model, &ref));
        }
    }
    const int64_t n_items = static_cast<int64_t>(items.size());
    const int64_t steps_per_epoch = (n_items + cfg.batch - 1) / cfg.batch;
    const int64_t total_steps = steps_per_epoch * cfg.epochs;
    std::vector<int64_t> milestone_steps;
    for (double f : cfg.milestones) {
        milestone_steps.push_back(static_cast<int64_t>(std::floor(f * static_cast<double>(total_steps))));
    }
    std::sort(milestone_steps.begin(), milestone_steps.end());

    Model grads = zeros_like(model);
    auto model_refs = param_refs(model);
    auto grad_refs = param_refs(grads);

    TrainResult result;
    result.start_step = state.step;
    const int64_t stop = cfg.stop_step >= 0 ? std::min(cfg.stop_step, total_steps) : total_steps;

    std::vector<int64_t> order;
    int64_t order_epoch = -1;
    for (int64_t step = state.step; step < stop; ++step) {
        const int64_t epoch = step / steps_per_epoch;
        if (epoch != order_epoch) {
            order.resize(static_cast<size_t>(n_items));
            std::iota(order.begin(), order.end(), 0);
            Rng rng(derive_seed(cfg.seed, "epoch", static_cast<uint64_t>(epoch)));
            rng.shuffle(order);
            order_epoch = epoch;
        }
        const int64_t begin = (step % steps_per_epoch) * cfg.batch;
        const int64_t end = std::min(begin + cfg.batch, n_items);
        const int64_t batch_n = end - begin;

        zero_params(grads);
        double loss_sum = 0.0;
        for (int64_t bi = begin; bi < end; ++bi) {
            const PreparedSample& item = items[static_cast<size_t>(order[static_cast<size_t>(bi)])];
            Rng drop_rng(derive_seed(cfg.seed, "dropout",
                                     static_cast<uint64_t>(step) * 1000003ull +
                                         static_cast<uint64_t>(bi - begin)));
            loss_sum += forward_loss(model, item, &grads, nullptr,
                                     model.cfg.dropout > 0.0 ? &drop_rng : nullptr);
        }
        const double batch_loss = loss_sum / static_cast<double>(batch_n);
        if (!std::isfinite(batch_loss)) {
            std::ostringstream msg;
            msg << "train: non-finite loss " << batch_loss << " at step " << step << " (epoch "
                << epoch << ", batch of " << batch_n << ")";
            throw NonFiniteLoss(msg.str());
        }

        int decays = 0;
        for (int64_t ms : milestone_steps) {
            if (step >= ms) ++decays;
        }
        const double lr_t = cfg.lr * std::pow(cfg.decay, decays);
        const double grad_scale = 1.0 / static_cast<double>(batch_n);
        const int64_t adam_t = state.step + 1;
        const double bc1 = 1.0 - std::pow(0.9, static_cast<double>(adam_t));
        const double bc2 = 1.0 - std::pow(0.999, static_cast<double>(adam_t));
        for (size_t p = 0; p < model_refs.size(); ++p) {
            Eigen::Map<Eigen::ArrayXd> theta(model_refs[p].data, model_refs[p].size);
            Eigen::Map<const Eigen::ArrayXd> g_raw(grad_refs[p].data, grad_refs[p].size);
            const Eigen::ArrayXd g = g_raw * grad_scale;
            state.m[p] = 0.9 * state.m[p] + 0.1 * g;
            state.v[p] = 0.999 * state.v[p] + 0.001 * g.square();
            theta -= lr_t * (state.m[p] / bc1) / ((state.v[p] / bc2).sqrt() + 1e-8);
        }
        state.step = adam_t;
        result.loss_history.push_back(batch_loss);
    }
    result.end_step = state.step;
    return result;
}

double grad_check(const Model& model, const CaptionSample& sample, double epsilon,
                  std::map<std::string, double>* per_group) {
    if (sample.references.empty()) throw EmptyReference("grad_check: sample has no references");
    Model work = model;  // perturbed in place
    const PreparedSample prep = prepare_sample(sample, work, &sample.references.front());

    Model analytic = zeros_like(work);
    forward_loss(work, prep, &analytic);

    auto work_refs = param_refs(work);
    auto grad_refs = param_refs(analytic);
    double overall = 0.0;
    for (size_t p = 0; p < work_refs.size(); ++p) {
        double group_max = 0.0;
        for (Eigen::Index i = 0; i < work_refs[p].size; ++i) {
            double& theta = work_refs[p].data[i];
            const double saved = theta;
            theta = saved + epsilon;
            const double f_plus = forward_loss(work, prep, nullptr);
            theta = saved - epsilon;
            const double f_minus = forward_loss(work, prep, nullptr);
            theta = saved;
            const double numeric = (f_plus - f_minus) / (2.0 * epsilon);
            const double a = grad_refs[p].data[i];
            const double rel = std::abs(a - numeric) /
                               std::max({std::abs(a), std::abs(numeric), 1e-8});
            group_max = std::max(group_max, rel);
        }
        if (per_group) (*per_group)[work_refs[p].name] = group_max;
        overall = std::max(overall, group_max);
    }
    return overall;
}

}  // namespace stcap
