#include "tcnn/model.hpp"

#include <cmath>
#include <random>

#include "tcnn/ops.hpp"

namespace tcnn {

namespace {

constexpr double kNormFloor = 1e-12;

double col_cosine(const Mat& a, std::size_t ca, const Mat& b, std::size_t cb) {
    double dot = 0.0, na = 0.0, nb = 0.0;
    for (std::size_t i = 0; i < a.rows; ++i) {
        const double x = a(i, ca);
        const double y = b(i, cb);
        dot += x * y;
        na += x * x;
        nb += y * y;
    }
    na = std::sqrt(na);
    nb = std::sqrt(nb);
    if (na < kNormFloor || nb < kNormFloor) return 0.0;
    return dot / (na * nb);
}

void col_cosine_backward(const Mat& a, std::size_t ca, const Mat& b, std::size_t cb,
                         double upstream, Mat& da, Mat& db) {
    if (upstream == 0.0) return;
    double dot = 0.0, na2 = 0.0, nb2 = 0.0;
    for (std::size_t i = 0; i < a.rows; ++i) {
        const double x = a(i, ca);
        const double y = b(i, cb);
        dot += x * y;
        na2 += x * x;
        nb2 += y * y;
    }
    const double na = std::sqrt(na2);
    const double nb = std::sqrt(nb2);
    if (na < kNormFloor || nb < kNormFloor) return;
    const double inv = 1.0 / (na * nb);
    const double c = dot * inv;
    for (std::size_t i = 0; i < a.rows; ++i) {
        da(i, ca) += upstream * (b(i, cb) * inv - c * a(i, ca) / na2);
        db(i, cb) += upstream * (a(i, ca) * inv - c * b(i, cb) / nb2);
    }
}

Mat vstack(const std::vector<const Mat*>& maps) {
    std::size_t rows = 0;
    for (const Mat* m : maps) rows += m->rows;
    Mat out(rows, maps[0]->cols);
    std::size_t off = 0;
    for (const Mat* m : maps) {
        for (std::size_t i = 0; i < m->rows; ++i)
            for (std::size_t j = 0; j < m->cols; ++j) out(off + i, j) = (*m)(i, j);
        off += m->rows;
    }
    return out;
}

// Slice rows [off, off+rows) out of a stacked gradient and add to dst.
void add_slice(const Mat& stacked, std::size_t off, Mat& dst) {
    for (std::size_t i = 0; i < dst.rows; ++i)
        for (std::size_t j = 0; j < dst.cols; ++j) dst(i, j) += stacked(off + i, j);
}

std::vector<double> row_sums(const Mat& m) {
    std::vector<double> out(m.rows, 0.0);
    for (std::size_t i = 0; i < m.rows; ++i)
        for (std::size_t j = 0; j < m.cols; ++j) out[i] += m(i, j);
    return out;
}

std::vector<double> col_sums(const Mat& m) {
    std::vector<double> out(m.cols, 0.0);
    for (std::size_t i = 0; i < m.rows; ++i)
        for (std::size_t j = 0; j < m.cols; ++j) out[j] += m(i, j);
    return out;
}

double glorot_bound(std::size_t fan_in, std::size_t fan_out) {
    return std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
}

void fill_uniform(Mat& m, double bound, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> dist(-bound, bound);
    for (double& x : m.v) x = dist(rng);
}

}  // namespace

Variant variant_from_string(const std::string& s) {
    if (s == "tcnn") return Variant::Tcnn;
    if (s == "atcnn1") return Variant::Atcnn1;
    if (s == "atcnn2") return Variant::Atcnn2;
    throw ArgError("unknown variant: " + s);
}

std::string to_string(Variant v) {
    switch (v) {
        case Variant::Tcnn: return "tcnn";
        case Variant::Atcnn1: return "atcnn1";
        default: return "atcnn2";
    }
}

void ModelConfig::validate() const {
    if (w < 1 || s < w) throw ArgError("ModelConfig: need s >= w >= 1");
    if (blocks < 1 || d < 1 || l < 1) throw ArgError("ModelConfig: need L >= 1, d >= 1, l >= 1");
}

std::size_t ModelConfig::channels() const {
    switch (variant) {
        case Variant::Tcnn: return 1;
        case Variant::Atcnn1: return 2;
        default: return 3;
    }
}

ModelParams ModelParams::init(const ModelConfig& cfg, std::size_t vocab_size) {
    cfg.validate();
    std::mt19937_64 rng(cfg.seed);
    ModelParams p;
    p.embeddings = EmbeddingTable::random_init(cfg.l, vocab_size, rng());
    const std::size_t c = cfg.channels();
    for (std::size_t b = 0; b < cfg.blocks; ++b) {
        const std::size_t d_in = cfg.block_input_dim(b);
        BlockParams bp;
        bp.filter = Mat(cfg.d, c * d_in * cfg.w);
        fill_uniform(bp.filter, glorot_bound(c * d_in * cfg.w, cfg.d), rng);
        bp.bias = Mat(1, cfg.d);
        if (cfg.variant != Variant::Tcnn) {
            const double bound = glorot_bound(cfg.s, d_in);
            bp.w_qt0 = Mat(d_in, cfg.s);
            fill_uniform(bp.w_qt0, bound, rng);
            bp.w_qt1 = Mat(d_in, cfg.s);
            fill_uniform(bp.w_qt1, bound, rng);
            if (cfg.use_answer) {
                bp.w_qa0 = Mat(d_in, cfg.s);
                fill_uniform(bp.w_qa0, bound, rng);
                bp.w_qa1 = Mat(d_in, cfg.s);
                fill_uniform(bp.w_qa1, bound, rng);
            }
        }
        p.blocks.push_back(std::move(bp));
    }
    // zero output layer: an untrained model scores 0.5 everywhere
    p.out_weights = Mat(1, cfg.feature_count());
    p.out_bias = Mat(1, 1);
    return p;
}

ModelParams ModelParams::zeros_like(const ModelParams& shape) {
    ModelParams p;
    p.embeddings.table = Mat(shape.embeddings.table.rows, shape.embeddings.table.cols);
    for (const auto& bp : shape.blocks) {
        BlockParams z;
        z.filter = Mat(bp.filter.rows, bp.filter.cols);
        z.bias = Mat(bp.bias.rows, bp.bias.cols);
        if (bp.w_qt0.size() > 0) z.w_qt0 = Mat(bp.w_qt0.rows, bp.w_qt0.cols);
        if (bp.w_qt1.size() > 0) z.w_qt1 = Mat(bp.w_qt1.rows, bp.w_qt1.cols);
        if (bp.w_qa0.size() > 0) z.w_qa0 = Mat(bp.w_qa0.rows, bp.w_qa0.cols);
        if (bp.w_qa1.size() > 0) z.w_qa1 = Mat(bp.w_qa1.rows, bp.w_qa1.cols);
        p.blocks.push_back(std::move(z));
    }
    p.out_weights = Mat(shape.out_weights.rows, shape.out_weights.cols);
    p.out_bias = Mat(shape.out_bias.rows, shape.out_bias.cols);
    return p;
}

Mat attention_matrix(const Mat& first, const Mat& second) {
    if (first.rows != second.rows || first.cols != second.cols) {
        throw ShapeError("attention_matrix: " + first.shape_str() + " vs " + second.shape_str());
    }
    Mat out(first.cols, second.cols);
    for (std::size_t i = 0; i < first.cols; ++i)
        for (std::size_t j = 0; j < second.cols; ++j) out(i, j) = col_cosine(first, i, second, j);
    return out;
}

void attention_matrix_backward(const Mat& first, const Mat& second, const Mat& d_out,
                               Mat& d_first, Mat& d_second) {
    if (d_out.rows != first.cols || d_out.cols != second.cols) {
        throw ShapeError("attention_matrix_backward: upstream shape mismatch");
    }
    for (std::size_t i = 0; i < first.cols; ++i)
        for (std::size_t j = 0; j < second.cols; ++j)
            col_cosine_backward(first, i, second, j, d_out(i, j), d_first, d_second);
}

std::tuple<Mat, Mat, Mat> atcnn1_attention_maps(const Mat& a_qt, const Mat& a_qa,
                                                const Mat& w_qt0, const Mat& w_qt1,
                                                const Mat& w_qa0, const Mat& w_qa1) {
    Mat f_t = matmul(w_qt0, transpose(a_qt));
    Mat f_q = (matmul(w_qt1, a_qt) + matmul(w_qa0, transpose(a_qa))) * 0.5;
    Mat f_a = matmul(w_qa1, a_qa);
    return {std::move(f_t), std::move(f_q), std::move(f_a)};
}

std::tuple<Mat, Mat> atcnn2_attention_maps(const Mat& a_qt, const Mat& a_qa,
                                           const Mat& w_qt1, const Mat& w_qa0) {
    return {matmul(w_qt1, a_qt), matmul(w_qa0, transpose(a_qa))};
}

std::tuple<std::vector<double>, std::vector<double>, std::vector<double>>
pooling_weights(const Mat& a_qt, const Mat& a_qa) {
    if (a_qt.rows != a_qt.cols || !a_qt.same_shape(a_qa)) {
        throw ShapeError("pooling_weights: " + a_qt.shape_str() + " vs " + a_qa.shape_str());
    }
    auto wt_t = row_sums(a_qt);
    auto wt_a = col_sums(a_qa);
    auto qt_cols = col_sums(a_qt);
    auto qa_rows = row_sums(a_qa);
    std::vector<double> wt_q(a_qt.rows);
    for (std::size_t i = 0; i < wt_q.size(); ++i) wt_q[i] = 0.5 * (qt_cols[i] + qa_rows[i]);
    return {std::move(wt_t), std::move(wt_q), std::move(wt_a)};
}

BlockTape block_forward(const Mat& r_q, const Mat& r_t, const Mat& r_a,
                        const BlockParams& params, const ModelConfig& cfg) {
    BlockTape tape;
    tape.in_q = r_q;
    tape.in_t = r_t;
    if (cfg.use_answer) tape.in_a = r_a;
    const std::size_t d_in = r_q.rows;
    const std::size_t c = cfg.channels();
    const std::size_t w = cfg.w;

    if (cfg.variant == Variant::Tcnn) {
        tape.stack_q = r_q;
        tape.stack_t = r_t;
        if (cfg.use_answer) tape.stack_a = r_a;
    } else {
        tape.a_qt = attention_matrix(r_t, r_q);
        if (cfg.use_answer) tape.a_qa = attention_matrix(r_q, r_a);
        if (cfg.variant == Variant::Atcnn1) {
            if (cfg.use_answer) {
                std::tie(tape.f_t, tape.f_q, tape.f_a) = atcnn1_attention_maps(
                    tape.a_qt, tape.a_qa, params.w_qt0, params.w_qt1, params.w_qa0, params.w_qa1);
            } else {
                tape.f_t = matmul(params.w_qt0, transpose(tape.a_qt));
                tape.f_q = matmul(params.w_qt1, tape.a_qt);
            }
            tape.stack_q = vstack({&r_q, &tape.f_q});
            tape.stack_t = vstack({&r_t, &tape.f_t});
            if (cfg.use_answer) tape.stack_a = vstack({&r_a, &tape.f_a});
        } else {  // Atcnn2
            const Mat zero(d_in, r_q.cols);
            tape.f_t = matmul(params.w_qt0, transpose(tape.a_qt));
            tape.f_q = matmul(params.w_qt1, tape.a_qt);  // F_QT
            if (cfg.use_answer) {
                tape.f_qa2 = matmul(params.w_qa0, transpose(tape.a_qa));  // F_QA
                tape.f_a = matmul(params.w_qa1, tape.a_qa);
                tape.stack_q = vstack({&r_q, &tape.f_q, &tape.f_qa2});
                tape.stack_a = vstack({&r_a, &tape.f_a, &zero});
            } else {
                tape.stack_q = vstack({&r_q, &tape.f_q, &zero});
            }
            tape.stack_t = vstack({&r_t, &tape.f_t, &zero});
        }
    }

    tape.conv_q = wide_conv_forward(tape.stack_q, params.filter, params.bias.v, w, c, d_in);
    tape.conv_t = wide_conv_forward(tape.stack_t, params.filter, params.bias.v, w, c, d_in);
    if (cfg.use_answer) tape.conv_a = wide_conv_forward(tape.stack_a, params.filter, params.bias.v, w, c, d_in);

    if (cfg.variant == Variant::Tcnn) {
        tape.pool_q = avg_pool_window(tape.conv_q, w);
        tape.pool_t = avg_pool_window(tape.conv_t, w);
        if (cfg.use_answer) tape.pool_a = avg_pool_window(tape.conv_a, w);
    } else {
        tape.a_qt2 = attention_matrix(tape.conv_t, tape.conv_q);
        if (cfg.use_answer) {
            tape.a_qa2 = attention_matrix(tape.conv_q, tape.conv_a);
            std::tie(tape.wt_t, tape.wt_q, tape.wt_a) = pooling_weights(tape.a_qt2, tape.a_qa2);
        } else {
            tape.wt_t = row_sums(tape.a_qt2);
            tape.wt_q = col_sums(tape.a_qt2);
        }
        tape.pool_q = weighted_pool_window(tape.conv_q, tape.wt_q, w);
        tape.pool_t = weighted_pool_window(tape.conv_t, tape.wt_t, w);
        if (cfg.use_answer) tape.pool_a = weighted_pool_window(tape.conv_a, tape.wt_a, w);
    }

    tape.v_q = avg_pool_all(tape.conv_q);
    tape.v_t = avg_pool_all(tape.conv_t);
    if (cfg.use_answer) tape.v_a = avg_pool_all(tape.conv_a);
    return tape;
}

BlockGrads block_backward(const BlockTape& tape, const BlockParams& params, const ModelConfig& cfg,
                          const Mat& d_pool_q, const Mat& d_pool_t, const Mat& d_pool_a,
                          const std::vector<double>& d_v_q, const std::vector<double>& d_v_t,
                          const std::vector<double>& d_v_a, BlockParams& grads) {
    const std::size_t d_in = tape.in_q.rows;
    const std::size_t c = cfg.channels();
    const std::size_t w = cfg.w;
    const bool ans = cfg.use_answer;

    Mat d_conv_q(tape.conv_q.rows, tape.conv_q.cols);
    Mat d_conv_t(tape.conv_t.rows, tape.conv_t.cols);
    Mat d_conv_a = ans ? Mat(tape.conv_a.rows, tape.conv_a.cols) : Mat();

    avg_pool_all_backward(d_v_q, d_conv_q);
    avg_pool_all_backward(d_v_t, d_conv_t);
    if (ans) avg_pool_all_backward(d_v_a, d_conv_a);

    if (cfg.variant == Variant::Tcnn) {
        avg_pool_window_backward(w, d_pool_q, d_conv_q);
        avg_pool_window_backward(w, d_pool_t, d_conv_t);
        if (ans) avg_pool_window_backward(w, d_pool_a, d_conv_a);
    } else {
        std::vector<double> d_wt_q(tape.wt_q.size(), 0.0);
        std::vector<double> d_wt_t(tape.wt_t.size(), 0.0);
        std::vector<double> d_wt_a(ans ? tape.wt_a.size() : 0, 0.0);
        weighted_pool_window_backward(tape.conv_q, tape.wt_q, w, d_pool_q, d_conv_q, d_wt_q);
        weighted_pool_window_backward(tape.conv_t, tape.wt_t, w, d_pool_t, d_conv_t, d_wt_t);
        if (ans) weighted_pool_window_backward(tape.conv_a, tape.wt_a, w, d_pool_a, d_conv_a, d_wt_a);

        // pooling weights: wt_t = row sums A_qt', wt_a = col sums A_qa',
        // wt_q = (col sums A_qt' + row sums A_qa') / 2 (two-tower: plain col sums)
        const std::size_t n = tape.a_qt2.rows;
        Mat d_a_qt2(n, n);
        Mat d_a_qa2 = ans ? Mat(n, n) : Mat();
        const double q_share = ans ? 0.5 : 1.0;
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t j = 0; j < n; ++j) {
                d_a_qt2(i, j) = d_wt_t[i] + q_share * d_wt_q[j];
                if (ans) d_a_qa2(i, j) = d_wt_a[j] + 0.5 * d_wt_q[i];
            }
        }
        attention_matrix_backward(tape.conv_t, tape.conv_q, d_a_qt2, d_conv_t, d_conv_q);
        if (ans) attention_matrix_backward(tape.conv_q, tape.conv_a, d_a_qa2, d_conv_q, d_conv_a);
    }

    Mat d_stack_q(tape.stack_q.rows, tape.stack_q.cols);
    Mat d_stack_t(tape.stack_t.rows, tape.stack_t.cols);
    Mat d_stack_a = ans ? Mat(tape.stack_a.rows, tape.stack_a.cols) : Mat();
    wide_conv_backward(tape.stack_q, params.filter, w, c, d_in, tape.conv_q, d_conv_q,
                       d_stack_q, grads.filter, grads.bias.v);
    wide_conv_backward(tape.stack_t, params.filter, w, c, d_in, tape.conv_t, d_conv_t,
                       d_stack_t, grads.filter, grads.bias.v);
    if (ans) {
        wide_conv_backward(tape.stack_a, params.filter, w, c, d_in, tape.conv_a, d_conv_a,
                           d_stack_a, grads.filter, grads.bias.v);
    }

    BlockGrads out;
    out.d_in_q = Mat(d_in, tape.in_q.cols);
    out.d_in_t = Mat(d_in, tape.in_t.cols);
    if (ans) out.d_in_a = Mat(d_in, tape.in_a.cols);
    add_slice(d_stack_q, 0, out.d_in_q);
    add_slice(d_stack_t, 0, out.d_in_t);
    if (ans) add_slice(d_stack_a, 0, out.d_in_a);

    if (cfg.variant == Variant::Tcnn) return out;

    // attention channel gradients out of the stacks (zero channels discarded)
    Mat d_f_q(d_in, tape.in_q.cols);
    Mat d_f_t(d_in, tape.in_t.cols);
    add_slice(d_stack_q, d_in, d_f_q);
    add_slice(d_stack_t, d_in, d_f_t);
    Mat d_f_a, d_f_qa2;
    if (ans) {
        d_f_a = Mat(d_in, tape.in_a.cols);
        add_slice(d_stack_a, d_in, d_f_a);
    }
    if (cfg.variant == Variant::Atcnn2 && ans) {
        d_f_qa2 = Mat(d_in, tape.in_q.cols);
        add_slice(d_stack_q, 2 * d_in, d_f_qa2);
    }

    const std::size_t s = tape.in_q.cols;
    Mat d_a_qt(s, s);
    Mat d_a_qa = ans ? Mat(s, s) : Mat();

    // F_T = W_qt0 * A_qt^T for both attention variants
    grads.w_qt0 += matmul(d_f_t, tape.a_qt);
    d_a_qt += matmul(transpose(d_f_t), params.w_qt0);

    if (cfg.variant == Variant::Atcnn1) {
        if (ans) {
            // F_Q = (W_qt1*A_qt + W_qa0*A_qa^T) / 2
            grads.w_qt1 += matmul(d_f_q, transpose(tape.a_qt)) * 0.5;
            d_a_qt += matmul(transpose(params.w_qt1), d_f_q) * 0.5;
            grads.w_qa0 += matmul(d_f_q, tape.a_qa) * 0.5;
            d_a_qa += matmul(transpose(d_f_q), params.w_qa0) * 0.5;
            // F_A = W_qa1 * A_qa
            grads.w_qa1 += matmul(d_f_a, transpose(tape.a_qa));
            d_a_qa += matmul(transpose(params.w_qa1), d_f_a);
        } else {
            grads.w_qt1 += matmul(d_f_q, transpose(tape.a_qt));
            d_a_qt += matmul(transpose(params.w_qt1), d_f_q);
        }
    } else {  // Atcnn2
        // F_QT = W_qt1 * A_qt
        grads.w_qt1 += matmul(d_f_q, transpose(tape.a_qt));
        d_a_qt += matmul(transpose(params.w_qt1), d_f_q);
        if (ans) {
            // F_QA = W_qa0 * A_qa^T
            grads.w_qa0 += matmul(d_f_qa2, tape.a_qa);
            d_a_qa += matmul(transpose(d_f_qa2), params.w_qa0);
            // F_A = W_qa1 * A_qa
            grads.w_qa1 += matmul(d_f_a, transpose(tape.a_qa));
            d_a_qa += matmul(transpose(params.w_qa1), d_f_a);
        }
    }

    attention_matrix_backward(tape.in_t, tape.in_q, d_a_qt, out.d_in_t, out.d_in_q);
    if (ans) attention_matrix_backward(tape.in_q, tape.in_a, d_a_qa, out.d_in_q, out.d_in_a);
    return out;
}

ScoreTape score_forward(const std::vector<std::uint32_t>& q_ids, const std::vector<std::uint32_t>& t_ids,
                        const std::vector<std::uint32_t>& a_ids, const ModelParams& params,
                        const ModelConfig& cfg) {
    cfg.validate();
    if (q_ids.size() != cfg.s || t_ids.size() != cfg.s || (cfg.use_answer && a_ids.size() != cfg.s)) {
        throw ShapeError("score: id sequences must have length " + std::to_string(cfg.s));
    }
    ScoreTape tape;
    tape.emb_q = params.embeddings.embed(q_ids);
    tape.emb_t = params.embeddings.embed(t_ids);
    if (cfg.use_answer) tape.emb_a = params.embeddings.embed(a_ids);

    tape.v_q.push_back(avg_pool_all(tape.emb_q));
    tape.v_t.push_back(avg_pool_all(tape.emb_t));
    if (cfg.use_answer) tape.v_a.push_back(avg_pool_all(tape.emb_a));

    const Mat* r_q = &tape.emb_q;
    const Mat* r_t = &tape.emb_t;
    const Mat* r_a = cfg.use_answer ? &tape.emb_a : nullptr;
    for (std::size_t b = 0; b < cfg.blocks; ++b) {
        tape.block_tapes.push_back(
            block_forward(*r_q, *r_t, cfg.use_answer ? *r_a : Mat(), params.blocks[b], cfg));
        const BlockTape& bt = tape.block_tapes.back();
        tape.v_q.push_back(bt.v_q);
        tape.v_t.push_back(bt.v_t);
        if (cfg.use_answer) tape.v_a.push_back(bt.v_a);
        r_q = &bt.pool_q;
        r_t = &bt.pool_t;
        if (cfg.use_answer) r_a = &bt.pool_a;
    }

    for (std::size_t lvl = 0; lvl <= cfg.blocks; ++lvl) {
        tape.features.push_back(cosine(tape.v_q[lvl], tape.v_t[lvl]));
        if (cfg.use_answer) tape.features.push_back(cosine(tape.v_q[lvl], tape.v_a[lvl]));
    }
    if (params.out_weights.cols != tape.features.size()) {
        throw ShapeError("score: output layer expects " + std::to_string(params.out_weights.cols) +
                         " features, got " + std::to_string(tape.features.size()));
    }
    double z = params.out_bias(0, 0);
    for (std::size_t i = 0; i < tape.features.size(); ++i) z += params.out_weights(0, i) * tape.features[i];
    tape.logit = z;
    tape.prob = 1.0 / (1.0 + std::exp(-z));
    if (!std::isfinite(tape.prob)) throw NumericError("score: non-finite probability");
    return tape;
}

double score(const std::vector<std::uint32_t>& q_ids, const std::vector<std::uint32_t>& t_ids,
             const std::vector<std::uint32_t>& a_ids, const ModelParams& params,
             const ModelConfig& cfg) {
    return score_forward(q_ids, t_ids, a_ids, params, cfg).prob;
}

void score_backward(const ScoreTape& tape, const std::vector<std::uint32_t>& q_ids,
                    const std::vector<std::uint32_t>& t_ids, const std::vector<std::uint32_t>& a_ids,
                    const ModelParams& params, const ModelConfig& cfg, double d_logit,
                    ModelParams& grads) {
    const bool ans = cfg.use_answer;
    const std::size_t levels = cfg.blocks + 1;

    grads.out_bias(0, 0) += d_logit;
    std::vector<double> d_features(tape.features.size());
    for (std::size_t i = 0; i < tape.features.size(); ++i) {
        grads.out_weights(0, i) += d_logit * tape.features[i];
        d_features[i] = d_logit * params.out_weights(0, i);
    }

    // route feature gradients into the per-level sentence vectors
    std::vector<std::vector<double>> d_v_q(levels), d_v_t(levels), d_v_a(levels);
    std::size_t fi = 0;
    for (std::size_t lvl = 0; lvl < levels; ++lvl) {
        d_v_q[lvl].assign(tape.v_q[lvl].size(), 0.0);
        d_v_t[lvl].assign(tape.v_t[lvl].size(), 0.0);
        if (ans) d_v_a[lvl].assign(tape.v_a[lvl].size(), 0.0);
        cosine_backward(tape.v_q[lvl], tape.v_t[lvl], d_features[fi++], d_v_q[lvl], d_v_t[lvl]);
        if (ans) cosine_backward(tape.v_q[lvl], tape.v_a[lvl], d_features[fi++], d_v_q[lvl], d_v_a[lvl]);
    }

    // walk blocks top-down; the last block's pooled maps feed nothing
    const std::size_t s = cfg.s;
    Mat d_pool_q(cfg.d, s), d_pool_t(cfg.d, s);
    Mat d_pool_a = ans ? Mat(cfg.d, s) : Mat();
    for (std::size_t b = cfg.blocks; b-- > 0;) {
        BlockGrads bg = block_backward(tape.block_tapes[b], params.blocks[b], cfg,
                                       d_pool_q, d_pool_t, d_pool_a,
                                       d_v_q[b + 1], d_v_t[b + 1], ans ? d_v_a[b + 1] : std::vector<double>{},
                                       grads.blocks[b]);
        d_pool_q = std::move(bg.d_in_q);
        d_pool_t = std::move(bg.d_in_t);
        if (ans) d_pool_a = std::move(bg.d_in_a);
    }

    // level 0: embedding maps receive block-1 input gradients + their all-ap share
    avg_pool_all_backward(d_v_q[0], d_pool_q);
    avg_pool_all_backward(d_v_t[0], d_pool_t);
    if (ans) avg_pool_all_backward(d_v_a[0], d_pool_a);
    embed_backward(q_ids, d_pool_q, grads.embeddings.table);
    embed_backward(t_ids, d_pool_t, grads.embeddings.table);
    if (ans) embed_backward(a_ids, d_pool_a, grads.embeddings.table);
}

GradResult gradients(const std::vector<Example>& batch, const ModelParams& params,
                     const ModelConfig& cfg, double lambda, double pos_weight) {
    if (batch.empty()) throw ArgError("gradients: empty batch");
    GradResult result;
    result.grads = ModelParams::zeros_like(params);
    const double inv_n = 1.0 / static_cast<double>(batch.size());
    for (const Example& ex : batch) {
        if (ex.label != 0 && ex.label != 1) throw ArgError("gradients: label must be 0 or 1");
        ScoreTape tape = score_forward(ex.q_ids, ex.t_ids, ex.a_ids, params, cfg);
        const double p = tape.prob;
        const double y = static_cast<double>(ex.label);
        result.loss += -inv_n * (pos_weight * y * std::log(p) + (1.0 - y) * std::log(1.0 - p));
        const double d_logit = inv_n * (pos_weight * y * (p - 1.0) + (1.0 - y) * p);
        score_backward(tape, ex.q_ids, ex.t_ids, ex.a_ids, params, cfg, d_logit, result.grads);
    }
    if (lambda != 0.0) {
        // L2 over every parameter; the PAD embedding column stays untouched
        ModelParams& g = result.grads;
        double penalty = 0.0;
        std::vector<Mat*> gts;
        g.for_each_tensor([&](const std::string&, Mat& t) { gts.push_back(&t); });
        std::size_t idx = 0;
        params.for_each_tensor([&](const std::string& name, const Mat& t) {
            Mat& gt = *gts[idx++];
            for (std::size_t i = 0; i < t.rows; ++i) {
                for (std::size_t j = 0; j < t.cols; ++j) {
                    if (name == "embedding" && j == kPadId) continue;
                    penalty += t(i, j) * t(i, j);
                    gt(i, j) += 2.0 * lambda * t(i, j);
                }
            }
        });
        result.loss += lambda * penalty;
    }
    if (!std::isfinite(result.loss)) throw NumericError("gradients: non-finite loss");
    return result;
}

double batch_loss(const std::vector<Example>& batch, const ModelParams& params,
                  const ModelConfig& cfg, double lambda, double pos_weight) {
    if (batch.empty()) throw ArgError("batch_loss: empty batch");
    double loss = 0.0;
    const double inv_n = 1.0 / static_cast<double>(batch.size());
    for (const Example& ex : batch) {
        const double p = score(ex.q_ids, ex.t_ids, ex.a_ids, params, cfg);
        const double y = static_cast<double>(ex.label);
        loss += -inv_n * (pos_weight * y * std::log(p) + (1.0 - y) * std::log(1.0 - p));
    }
    if (lambda != 0.0) {
        double penalty = 0.0;
        params.for_each_tensor([&](const std::string& name, const Mat& t) {
            for (std::size_t i = 0; i < t.rows; ++i) {
                for (std::size_t j = 0; j < t.cols; ++j) {
                    if (name == "embedding" && j == kPadId) continue;
                    penalty += t(i, j) * t(i, j);
                }
            }
        });
        loss += lambda * penalty;
    }
    if (!std::isfinite(loss)) throw NumericError("batch_loss: non-finite loss");
    return loss;
}

}  // namespace tcnn
