#pragma once

#include <cstdint>
#include <string>
#include <tuple>
#include <vector>

#include "tcnn/mat.hpp"
#include "tcnn/text.hpp"

namespace tcnn {

enum class Variant { Tcnn, Atcnn1, Atcnn2 };

Variant variant_from_string(const std::string& s);
std::string to_string(Variant v);

struct ModelConfig {
    Variant variant = Variant::Tcnn;
    std::size_t s = 40;   // sequence length
    std::size_t l = 50;   // embedding dimension
    std::size_t w = 3;    // convolution window
    std::size_t d = 50;   // filters per block
    std::size_t blocks = 2;
    bool use_answer = true;  // false: two-tower degenerate mode over (Q,T)
    std::uint64_t seed = 1;

    void validate() const;
    std::size_t channels() const;  // conv input channels of the variant
    std::size_t block_input_dim(std::size_t b) const { return b == 0 ? l : d; }
    std::size_t feature_count() const { return (use_answer ? 2 : 1) * (blocks + 1); }
};

/// One convolution & pooling block. The filter is the single shared object
/// all three towers convolve with; the four attention weight matrices are
/// separate trainable parameters. Matrices a variant does not use stay empty.
struct BlockParams {
    Mat filter;  // d x (channels*d_in*w)
    Mat bias;    // 1 x d
    Mat w_qt0, w_qt1, w_qa0, w_qa1;  // d_in x s
};

struct ModelParams {
    EmbeddingTable embeddings;
    std::vector<BlockParams> blocks;
    Mat out_weights;  // 1 x feature_count
    Mat out_bias;     // 1 x 1

    static ModelParams init(const ModelConfig& cfg, std::size_t vocab_size);
    static ModelParams zeros_like(const ModelParams& shape);

    /// Visit every (non-empty) parameter tensor in a fixed order.
    template <typename Fn>
    void for_each_tensor(Fn&& fn) {
        fn(std::string("embedding"), embeddings.table);
        for (std::size_t b = 0; b < blocks.size(); ++b) {
            const std::string p = "block" + std::to_string(b) + ".";
            fn(p + "filter", blocks[b].filter);
            fn(p + "bias", blocks[b].bias);
            if (blocks[b].w_qt0.size() > 0) fn(p + "w_qt0", blocks[b].w_qt0);
            if (blocks[b].w_qt1.size() > 0) fn(p + "w_qt1", blocks[b].w_qt1);
            if (blocks[b].w_qa0.size() > 0) fn(p + "w_qa0", blocks[b].w_qa0);
            if (blocks[b].w_qa1.size() > 0) fn(p + "w_qa1", blocks[b].w_qa1);
        }
        fn(std::string("output.weights"), out_weights);
        fn(std::string("output.bias"), out_bias);
    }

    template <typename Fn>
    void for_each_tensor(Fn&& fn) const {
        const_cast<ModelParams*>(this)->for_each_tensor(
            [&](const std::string& name, Mat& t) { fn(name, static_cast<const Mat&>(t)); });
    }
};

/// Pairwise column-cosine matrix: out[i,j] = cos(first[:,i], second[:,j]).
/// A_qt = attention_matrix(R_t, R_q) (rows index T positions, columns Q);
/// A_qa = attention_matrix(R_q, R_a) (rows index Q, columns A).
Mat attention_matrix(const Mat& first, const Mat& second);
void attention_matrix_backward(const Mat& first, const Mat& second, const Mat& d_out,
                               Mat& d_first, Mat& d_second);

/// F_T = W_qt0*A_qt^T, F_Q = (W_qt1*A_qt + W_qa0*A_qa^T)/2, F_A = W_qa1*A_qa.
std::tuple<Mat, Mat, Mat> atcnn1_attention_maps(const Mat& a_qt, const Mat& a_qa,
                                                const Mat& w_qt0, const Mat& w_qt1,
                                                const Mat& w_qa0, const Mat& w_qa1);

/// F_QT = W_qt1*A_qt, F_QA = W_qa0*A_qa^T.
std::tuple<Mat, Mat> atcnn2_attention_maps(const Mat& a_qt, const Mat& a_qa,
                                           const Mat& w_qt1, const Mat& w_qa0);

/// Per-position attention mass on the convolution-output attention matrices:
/// weights_T = row sums of A_qt', weights_A = column sums of A_qa',
/// weights_Q = (column sums of A_qt' + row sums of A_qa') / 2.
std::tuple<std::vector<double>, std::vector<double>, std::vector<double>>
pooling_weights(const Mat& a_qt, const Mat& a_qa);

/// Everything one block computes, kept for the backward pass. In two-tower
/// mode the answer-side members stay empty.
struct BlockTape {
    Mat in_q, in_t, in_a;
    Mat a_qt, a_qa;            // attention on block inputs
    Mat f_q, f_t, f_a;         // attention channel per tower (atcnn1/2)
    Mat f_qa2;                 // third Q channel of atcnn2 (F_QA)
    Mat stack_q, stack_t, stack_a;
    Mat conv_q, conv_t, conv_a;
    Mat a_qt2, a_qa2;          // attention on conv outputs
    std::vector<double> wt_q, wt_t, wt_a;
    Mat pool_q, pool_t, pool_a;             // d x s
    std::vector<double> v_q, v_t, v_a;      // all-ap sentence vectors
};

BlockTape block_forward(const Mat& r_q, const Mat& r_t, const Mat& r_a,
                        const BlockParams& params, const ModelConfig& cfg);

struct BlockGrads {
    Mat d_in_q, d_in_t, d_in_a;
};

/// Backward through one block. d_pool_*/d_v_* are the upstream gradients of
/// the block outputs; parameter gradients accumulate into `grads`.
BlockGrads block_backward(const BlockTape& tape, const BlockParams& params, const ModelConfig& cfg,
                          const Mat& d_pool_q, const Mat& d_pool_t, const Mat& d_pool_a,
                          const std::vector<double>& d_v_q, const std::vector<double>& d_v_t,
                          const std::vector<double>& d_v_a, BlockParams& grads);

struct ScoreTape {
    Mat emb_q, emb_t, emb_a;
    std::vector<std::vector<double>> v_q, v_t, v_a;  // per level 0..L
    std::vector<BlockTape> block_tapes;
    std::vector<double> features;
    double logit = 0.0;
    double prob = 0.5;
};

ScoreTape score_forward(const std::vector<std::uint32_t>& q_ids, const std::vector<std::uint32_t>& t_ids,
                        const std::vector<std::uint32_t>& a_ids, const ModelParams& params,
                        const ModelConfig& cfg);

/// Matching probability in (0,1) for one (query, title, answer) triple.
double score(const std::vector<std::uint32_t>& q_ids, const std::vector<std::uint32_t>& t_ids,
             const std::vector<std::uint32_t>& a_ids, const ModelParams& params,
             const ModelConfig& cfg);

/// Backward from d(loss)/d(logit) through the whole graph, accumulating
/// parameter gradients (PAD embedding column excluded).
void score_backward(const ScoreTape& tape, const std::vector<std::uint32_t>& q_ids,
                    const std::vector<std::uint32_t>& t_ids, const std::vector<std::uint32_t>& a_ids,
                    const ModelParams& params, const ModelConfig& cfg, double d_logit,
                    ModelParams& grads);

struct Example {
    std::vector<std::uint32_t> q_ids, t_ids, a_ids;
    int label = 0;  // {0,1}
};

struct GradResult {
    ModelParams grads;
    double loss = 0.0;  // mean BCE + L2 penalty
};

/// Mean weighted binary cross-entropy over the batch plus lambda*||params||^2
/// (PAD column excluded), with exact gradients for every parameter.
GradResult gradients(const std::vector<Example>& batch, const ModelParams& params,
                     const ModelConfig& cfg, double lambda, double pos_weight);

/// Forward-only value of the same objective.
double batch_loss(const std::vector<Example>& batch, const ModelParams& params,
                  const ModelConfig& cfg, double lambda, double pos_weight);

}  // namespace tcnn
