#include "stcap/transformer.hpp"

#include <cmath>
#include <limits>

namespace stcap {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();
const double kGeluC = std::sqrt(2.0 / M_PI);

double gelu(double x) {
    const double u = kGeluC * (x + 0.044715 * x * x * x);
    return 0.5 * x * (1.0 + std::tanh(u));
}

double gelu_grad(double x) {
    const double u = kGeluC * (x + 0.044715 * x * x * x);
    const double t = std::tanh(u);
    const double du = kGeluC * (1.0 + 3.0 * 0.044715 * x * x);
    return 0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * du;
}

// Row-wise layer norm over a P x d matrix.
Eigen::MatrixXd ln_rows(const Eigen::MatrixXd& x, const Eigen::VectorXd& g,
                        const Eigen::VectorXd& b, RowLayerNormCache& cache) {
    const auto p = x.rows();
    const auto d = x.cols();
    cache.rstd.resize(p);
    cache.xhat.resize(p, d);
    Eigen::MatrixXd out(p, d);
    for (Eigen::Index r = 0; r < p; ++r) {
        const double mean = x.row(r).mean();
        const double var = (x.row(r).array() - mean).square().mean();
        const double rstd = 1.0 / std::sqrt(var + 1e-5);
        cache.rstd[r] = rstd;
        cache.xhat.row(r) = (x.row(r).array() - mean) * rstd;
        out.row(r) = cache.xhat.row(r).array() * g.transpose().array() + b.transpose().array();
    }
    return out;
}

Eigen::MatrixXd ln_rows_backward(const Eigen::MatrixXd& dy, const Eigen::VectorXd& g,
                                 const RowLayerNormCache& cache, Eigen::VectorXd& dg,
                                 Eigen::VectorXd& db) {
    const auto p = dy.rows();
    const auto d = dy.cols();
    Eigen::MatrixXd dx(p, d);
    for (Eigen::Index r = 0; r < p; ++r) {
        dg += (dy.row(r).array() * cache.xhat.row(r).array()).matrix().transpose();
        db += dy.row(r).transpose();
        const Eigen::ArrayXd dxhat = dy.row(r).transpose().array() * g.array();
        const double mean_dxhat = dxhat.mean();
        const double mean_dxhat_xhat =
            (dxhat * cache.xhat.row(r).transpose().array()).mean();
        dx.row(r) = (cache.rstd[r] *
                     (dxhat - mean_dxhat - cache.xhat.row(r).transpose().array() * mean_dxhat_xhat))
                        .matrix()
                        .transpose();
    }
    return dx;
}

// Inverted dropout; mask entries are 0 or 1/(1-p).
Eigen::MatrixXd dropout_mask(Eigen::Index rows, Eigen::Index cols, double p, Rng& rng) {
    Eigen::MatrixXd mask(rows, cols);
    const double keep_scale = 1.0 / (1.0 - p);
    for (Eigen::Index r = 0; r < rows; ++r) {
        for (Eigen::Index c = 0; c < cols; ++c) {
            mask(r, c) = rng.uniform() < p ? 0.0 : keep_scale;
        }
    }
    return mask;
}

}  // namespace

AttentionMask build_attention_mask(int m, int n, int t) {
    if (m < 0 || n < 0 || t < 0) throw DimensionMismatch("build_attention_mask: negative count");
    AttentionMask mask;
    mask.m = m;
    mask.n = n;
    mask.t = t;
    const int p = m + n + t;
    mask.allowed.setConstant(p, p, false);
    const int ctx = m + n;
    for (int q = 0; q < ctx; ++q) {
        for (int k = 0; k < ctx; ++k) mask.allowed(q, k) = true;
    }
    for (int step = 0; step < t; ++step) {
        const int q = ctx + step;
        for (int k = 0; k < ctx + step + 1; ++k) mask.allowed(q, k) = true;
    }
    return mask;
}

Eigen::MatrixXd transformer_forward(const Eigen::MatrixXd& x, const AttentionMask& mask,
                                    const TransformerConfig& cfg, const TransformerParams& params,
                                    TransformerCache* cache, Rng* dropout_rng) {
    cfg.validate();
    const auto p = x.rows();
    const int d = cfg.d;
    if (x.cols() != d) throw DimensionMismatch("transformer_forward: input width != d");
    if (mask.allowed.rows() != p || mask.allowed.cols() != p) {
        throw DimensionMismatch("transformer_forward: mask size does not match sequence");
    }
    if (static_cast<int>(params.layers.size()) != cfg.layers) {
        throw DimensionMismatch("transformer_forward: parameter stack size != cfg.layers");
    }
    const int dh = d / cfg.heads;
    const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
    const bool use_dropout = cfg.dropout > 0.0 && dropout_rng != nullptr;

    if (cache) cache->layers.resize(params.layers.size());
    Eigen::MatrixXd h = x;
    for (size_t l = 0; l < params.layers.size(); ++l) {
        const TransformerLayerParams& lp = params.layers[l];
        TransformerLayerCache local;
        TransformerLayerCache& lc = cache ? cache->layers[l] : local;
        lc.x_in = h;

        const Eigen::MatrixXd xn1 = ln_rows(h, lp.ln1_g, lp.ln1_b, lc.ln1);
        lc.q = (xn1 * lp.wq).rowwise() + lp.bq.transpose();
        lc.k = (xn1 * lp.wk).rowwise() + lp.bk.transpose();
        lc.v = (xn1 * lp.wv).rowwise() + lp.bv.transpose();

        lc.att.assign(static_cast<size_t>(cfg.heads), Eigen::MatrixXd());
        lc.att_out.resize(p, d);
        for (int head = 0; head < cfg.heads; ++head) {
            const auto qh = lc.q.middleCols(head * dh, dh);
            const auto kh = lc.k.middleCols(head * dh, dh);
            const auto vh = lc.v.middleCols(head * dh, dh);
            Eigen::MatrixXd scores = scale * (qh * kh.transpose());
            for (Eigen::Index qi = 0; qi < p; ++qi) {
                for (Eigen::Index ki = 0; ki < p; ++ki) {
                    if (!mask.allowed(qi, ki)) scores(qi, ki) = kNegInf;
                }
            }
            Eigen::MatrixXd& att = lc.att[static_cast<size_t>(head)];
            att.resize(p, p);
            for (Eigen::Index qi = 0; qi < p; ++qi) {
                const double row_max = scores.row(qi).maxCoeff();
                Eigen::ArrayXd e = (scores.row(qi).transpose().array() - row_max).exp();
                att.row(qi) = (e / e.sum()).transpose();
            }
            lc.att_out.middleCols(head * dh, dh) = att * vh;
        }

        Eigen::MatrixXd proj = (lc.att_out * lp.wo).rowwise() + lp.bo.transpose();
        if (use_dropout) {
            lc.attn_drop_mask = dropout_mask(p, d, cfg.dropout, *dropout_rng);
            proj.array() *= lc.attn_drop_mask.array();
        }
        lc.x_mid = lc.x_in + proj;

        const Eigen::MatrixXd xn2 = ln_rows(lc.x_mid, lp.ln2_g, lp.ln2_b, lc.ln2);
        lc.ff_pre = (xn2 * lp.wff1).rowwise() + lp.bff1.transpose();
        lc.ff_act = lc.ff_pre.unaryExpr([](double v) { return gelu(v); });
        Eigen::MatrixXd ff_out = (lc.ff_act * lp.wff2).rowwise() + lp.bff2.transpose();
        if (use_dropout) {
            lc.ff_drop_mask = dropout_mask(p, d, cfg.dropout, *dropout_rng);
            ff_out.array() *= lc.ff_drop_mask.array();
        }
        h = lc.x_mid + ff_out;
    }
    return h;
}

Eigen::MatrixXd transformer_backward(const Eigen::MatrixXd& dz, const AttentionMask& mask,
                                     const TransformerConfig& cfg, const TransformerParams& params,
                                     const TransformerCache& cache, TransformerParams& grads) {
    const auto p = dz.rows();
    const int d = cfg.d;
    const int dh = d / cfg.heads;
    const double scale = 1.0 / std::sqrt(static_cast<double>(dh));

    Eigen::MatrixXd dh_acc = dz;
    for (size_t li = params.layers.size(); li-- > 0;) {
        const TransformerLayerParams& lp = params.layers[li];
        const TransformerLayerCache& lc = cache.layers[li];
        TransformerLayerParams& lg = grads.layers[li];

        // h = x_mid + drop(ff_out)
        Eigen::MatrixXd dff_out = dh_acc;
        if (lc.ff_drop_mask.size() > 0) dff_out.array() *= lc.ff_drop_mask.array();
        Eigen::MatrixXd dff_act = dff_out * lp.wff2.transpose();
        lg.wff2 += lc.ff_act.transpose() * dff_out;
        lg.bff2 += dff_out.colwise().sum().transpose();
        Eigen::MatrixXd dff_pre =
            dff_act.array() * lc.ff_pre.unaryExpr([](double v) { return gelu_grad(v); }).array();
        Eigen::MatrixXd dxn2 = dff_pre * lp.wff1.transpose();
        {
            const Eigen::MatrixXd xn2 =
                (lc.ln2.xhat.array().rowwise() * lp.ln2_g.transpose().array()).rowwise() +
                lp.ln2_b.transpose().array();
            lg.wff1 += xn2.transpose() * dff_pre;
        }
        lg.bff1 += dff_pre.colwise().sum().transpose();
        Eigen::MatrixXd dx_mid = dh_acc + ln_rows_backward(dxn2, lp.ln2_g, lc.ln2, lg.ln2_g, lg.ln2_b);

        // x_mid = x_in + drop(att_out * wo + bo)
        Eigen::MatrixXd dproj = dx_mid;
        if (lc.attn_drop_mask.size() > 0) dproj.array() *= lc.attn_drop_mask.array();
        Eigen::MatrixXd datt_out = dproj * lp.wo.transpose();
        lg.wo += lc.att_out.transpose() * dproj;
        lg.bo += dproj.colwise().sum().transpose();

        Eigen::MatrixXd dq = Eigen::MatrixXd::Zero(p, d);
        Eigen::MatrixXd dk = Eigen::MatrixXd::Zero(p, d);
        Eigen::MatrixXd dv = Eigen::MatrixXd::Zero(p, d);
        for (int head = 0; head < cfg.heads; ++head) {
            const auto qh = lc.q.middleCols(head * dh, dh);
            const auto kh = lc.k.middleCols(head * dh, dh);
            const auto vh = lc.v.middleCols(head * dh, dh);
            const Eigen::MatrixXd& att = lc.att[static_cast<size_t>(head)];
            const auto doh = datt_out.middleCols(head * dh, dh);
            const Eigen::MatrixXd datt = doh * vh.transpose();
            dv.middleCols(head * dh, dh) = att.transpose() * doh;
            // softmax backward, row-wise
            Eigen::MatrixXd dscores(p, p);
            for (Eigen::Index r = 0; r < p; ++r) {
                const double dot = (datt.row(r).array() * att.row(r).array()).sum();
                dscores.row(r) = att.row(r).array() * (datt.row(r).array() - dot);
            }
            dq.middleCols(head * dh, dh) = scale * (dscores * kh);
            dk.middleCols(head * dh, dh) = scale * (dscores.transpose() * qh);
        }

        const Eigen::MatrixXd xn1 =
            (lc.ln1.xhat.array().rowwise() * lp.ln1_g.transpose().array()).rowwise() +
            lp.ln1_b.transpose().array();
        lg.wq += xn1.transpose() * dq;
        lg.bq += dq.colwise().sum().transpose();
        lg.wk += xn1.transpose() * dk;
        lg.bk += dk.colwise().sum().transpose();
        lg.wv += xn1.transpose() * dv;
        lg.bv += dv.colwise().sum().transpose();
        Eigen::MatrixXd dxn1 = dq * lp.wq.transpose() + dk * lp.wk.transpose() + dv * lp.wv.transpose();
        dh_acc = dx_mid + ln_rows_backward(dxn1, lp.ln1_g, lc.ln1, lg.ln1_g, lg.ln1_b);
    }
    (void)mask;
    return dh_acc;
}

TransformerOutput forward(const Eigen::MatrixXd& obj_embeds, const Eigen::MatrixXd& st_embeds,
                          const Eigen::MatrixXd& dec_embeds, const TransformerConfig& cfg,
                          const TransformerParams& params) {
    const int m = static_cast<int>(obj_embeds.rows());
    const int n = static_cast<int>(st_embeds.rows());
    const int t = static_cast<int>(dec_embeds.rows());
    Eigen::MatrixXd x(m + n + t, cfg.d);
    if ((m > 0 && obj_embeds.cols() != cfg.d) || (n > 0 && st_embeds.cols() != cfg.d) ||
        (t > 0 && dec_embeds.cols() != cfg.d)) {
        throw DimensionMismatch("forward: modality width != d");
    }
    x.topRows(m) = obj_embeds;
    x.middleRows(m, n) = st_embeds;
    x.bottomRows(t) = dec_embeds;
    const AttentionMask mask = build_attention_mask(m, n, t);
    const Eigen::MatrixXd z = transformer_forward(x, mask, cfg, params);
    TransformerOutput out;
    out.z_obj = z.topRows(m);
    out.z_st = z.middleRows(m, n);
    out.z_dec = z.bottomRows(t);
    return out;
}

}  // namespace stcap
