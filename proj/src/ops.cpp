#include "tcnn/ops.hpp"

#include <cmath>
#include <string>

namespace tcnn {

namespace {

void check_conv_shapes(const Mat& input, const Mat& filter, std::size_t bias_len,
                       std::size_t w, std::size_t channels, std::size_t d_in) {
    if (w < 1) throw ShapeError("wide_conv: window width must be >= 1");
    if (channels < 1 || d_in < 1) throw ShapeError("wide_conv: channels and d_in must be >= 1");
    if (input.rows != channels * d_in) {
        throw ShapeError("wide_conv: input " + input.shape_str() + " is not a stack of " +
                         std::to_string(channels) + " maps of height " + std::to_string(d_in));
    }
    if (filter.cols != channels * d_in * w) {
        throw ShapeError("wide_conv: filter " + filter.shape_str() + " does not match stack height " +
                         std::to_string(channels * d_in) + " and window " + std::to_string(w));
    }
    if (bias_len != filter.rows) {
        throw ShapeError("wide_conv: bias length " + std::to_string(bias_len) + " vs " +
                         std::to_string(filter.rows) + " filters");
    }
}

}  // namespace

Mat wide_conv_forward(const Mat& input, const Mat& filter, const std::vector<double>& bias,
                      std::size_t w, std::size_t channels, std::size_t d_in) {
    check_conv_shapes(input, filter, bias.size(), w, channels, d_in);
    const std::size_t h = input.rows;      // stacked height
    const std::size_t s = input.cols;
    const std::size_t n = s + w - 1;       // wide output width
    const std::size_t pad = w - 1;
    Mat out(filter.rows, n);
    for (std::size_t j = 0; j < n; ++j) {
        for (std::size_t f = 0; f < filter.rows; ++f) {
            double acc = bias[f];
            for (std::size_t t = 0; t < w; ++t) {
                // padded column j+t maps to input column j+t-pad
                if (j + t < pad || j + t >= pad + s) continue;
                const std::size_t col = j + t - pad;
                const std::size_t base = t * h;
                for (std::size_t r = 0; r < h; ++r) {
                    acc += filter(f, base + r) * input(r, col);
                }
            }
            out(f, j) = std::tanh(acc);
        }
    }
    return out;
}

void wide_conv_backward(const Mat& input, const Mat& filter, std::size_t w,
                        std::size_t channels, std::size_t d_in,
                        const Mat& output, const Mat& d_output,
                        Mat& d_input, Mat& d_filter, std::vector<double>& d_bias) {
    check_conv_shapes(input, filter, d_bias.size(), w, channels, d_in);
    if (!output.same_shape(d_output) || !d_input.same_shape(input) || !d_filter.same_shape(filter)) {
        throw ShapeError("wide_conv_backward: gradient shape mismatch");
    }
    const std::size_t h = input.rows;
    const std::size_t s = input.cols;
    const std::size_t n = s + w - 1;
    const std::size_t pad = w - 1;
    for (std::size_t j = 0; j < n; ++j) {
        for (std::size_t f = 0; f < filter.rows; ++f) {
            const double y = output(f, j);
            const double dpre = d_output(f, j) * (1.0 - y * y);  // tanh'
            if (dpre == 0.0) continue;
            d_bias[f] += dpre;
            for (std::size_t t = 0; t < w; ++t) {
                if (j + t < pad || j + t >= pad + s) continue;
                const std::size_t col = j + t - pad;
                const std::size_t base = t * h;
                for (std::size_t r = 0; r < h; ++r) {
                    d_filter(f, base + r) += dpre * input(r, col);
                    d_input(r, col) += dpre * filter(f, base + r);
                }
            }
        }
    }
}

Mat avg_pool_window(const Mat& m, std::size_t w) {
    if (w < 1 || w > m.cols) {
        throw ShapeError("avg_pool_window: window " + std::to_string(w) + " on " + m.shape_str());
    }
    const std::size_t out_cols = m.cols - w + 1;
    Mat out(m.rows, out_cols);
    for (std::size_t i = 0; i < m.rows; ++i) {
        for (std::size_t j = 0; j < out_cols; ++j) {
            double acc = 0.0;
            for (std::size_t k = j; k < j + w; ++k) acc += m(i, k);
            out(i, j) = acc / static_cast<double>(w);
        }
    }
    return out;
}

void avg_pool_window_backward(std::size_t w, const Mat& d_output, Mat& d_input) {
    if (d_input.cols != d_output.cols + w - 1 || d_input.rows != d_output.rows) {
        throw ShapeError("avg_pool_window_backward: shape mismatch");
    }
    const double inv = 1.0 / static_cast<double>(w);
    for (std::size_t i = 0; i < d_output.rows; ++i) {
        for (std::size_t j = 0; j < d_output.cols; ++j) {
            const double g = d_output(i, j) * inv;
            for (std::size_t k = j; k < j + w; ++k) d_input(i, k) += g;
        }
    }
}

Mat weighted_pool_window(const Mat& m, const std::vector<double>& weights, std::size_t w) {
    if (weights.size() != m.cols) {
        throw ShapeError("weighted_pool_window: " + std::to_string(weights.size()) + " weights on " +
                         m.shape_str());
    }
    if (w < 1 || w > m.cols) {
        throw ShapeError("weighted_pool_window: window " + std::to_string(w) + " on " + m.shape_str());
    }
    const std::size_t out_cols = m.cols - w + 1;
    Mat out(m.rows, out_cols);
    for (std::size_t i = 0; i < m.rows; ++i) {
        for (std::size_t j = 0; j < out_cols; ++j) {
            double acc = 0.0;
            for (std::size_t k = j; k < j + w; ++k) acc += weights[k] * m(i, k);
            out(i, j) = acc;
        }
    }
    return out;
}

void weighted_pool_window_backward(const Mat& m, const std::vector<double>& weights, std::size_t w,
                                   const Mat& d_output, Mat& d_input, std::vector<double>& d_weights) {
    if (d_input.cols != d_output.cols + w - 1 || d_input.rows != d_output.rows ||
        !d_input.same_shape(m) || d_weights.size() != weights.size()) {
        throw ShapeError("weighted_pool_window_backward: shape mismatch");
    }
    for (std::size_t i = 0; i < d_output.rows; ++i) {
        for (std::size_t j = 0; j < d_output.cols; ++j) {
            const double g = d_output(i, j);
            if (g == 0.0) continue;
            for (std::size_t k = j; k < j + w; ++k) {
                d_input(i, k) += g * weights[k];
                d_weights[k] += g * m(i, k);
            }
        }
    }
}

std::vector<double> avg_pool_all(const Mat& m) {
    if (m.cols == 0 || m.rows == 0) throw ShapeError("avg_pool_all: empty matrix");
    std::vector<double> out(m.rows, 0.0);
    for (std::size_t i = 0; i < m.rows; ++i) {
        double acc = 0.0;
        for (std::size_t j = 0; j < m.cols; ++j) acc += m(i, j);
        out[i] = acc / static_cast<double>(m.cols);
    }
    return out;
}

void avg_pool_all_backward(const std::vector<double>& d_output, Mat& d_input) {
    if (d_output.size() != d_input.rows) throw ShapeError("avg_pool_all_backward: shape mismatch");
    const double inv = 1.0 / static_cast<double>(d_input.cols);
    for (std::size_t i = 0; i < d_input.rows; ++i) {
        const double g = d_output[i] * inv;
        for (std::size_t j = 0; j < d_input.cols; ++j) d_input(i, j) += g;
    }
}

}  // namespace tcnn
