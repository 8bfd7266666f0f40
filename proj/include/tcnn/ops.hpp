#pragma once

#include <vector>

#include "tcnn/mat.hpp"

namespace tcnn {

/// Wide ("full") convolution over a vertically stacked multi-channel map.
///
/// input:  (channels*d_in) x s, channel ch occupying rows [ch*d_in, (ch+1)*d_in).
/// filter: d_out x (channels*d_in*w); filter column t*(channels*d_in)+r reads
///         stacked row r of padded column j+t.
/// The input is zero-padded with w-1 columns on each side, so the output has
/// s+w-1 columns: out[:,j] = tanh(filter * window_j + bias).
Mat wide_conv_forward(const Mat& input, const Mat& filter, const std::vector<double>& bias,
                      std::size_t w, std::size_t channels, std::size_t d_in);

/// Backward of wide_conv_forward. `output` must be the forward result (tanh
/// values are reused for the activation derivative). Accumulates into
/// d_input/d_filter/d_bias, which must be pre-sized.
void wide_conv_backward(const Mat& input, const Mat& filter, std::size_t w,
                        std::size_t channels, std::size_t d_in,
                        const Mat& output, const Mat& d_output,
                        Mat& d_input, Mat& d_filter, std::vector<double>& d_bias);

/// w-ap: column-wise average over w consecutive columns. d x n -> d x (n-w+1).
Mat avg_pool_window(const Mat& m, std::size_t w);
void avg_pool_window_backward(std::size_t w, const Mat& d_output, Mat& d_input);

/// Attention pooling: out[:,j] = sum_{k=j..j+w-1} weights[k] * m[:,k].
/// Unnormalized weighted sum; weights length must equal m.cols.
Mat weighted_pool_window(const Mat& m, const std::vector<double>& weights, std::size_t w);
void weighted_pool_window_backward(const Mat& m, const std::vector<double>& weights, std::size_t w,
                                   const Mat& d_output, Mat& d_input, std::vector<double>& d_weights);

/// all-ap: row means, the sentence vector of a feature map.
std::vector<double> avg_pool_all(const Mat& m);
void avg_pool_all_backward(const std::vector<double>& d_output, Mat& d_input);

}  // namespace tcnn
