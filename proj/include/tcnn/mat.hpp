#pragma once

#include <cstddef>
#include <functional>
#include <string>
#include <vector>

#include "tcnn/errors.hpp"

namespace tcnn {

/// Dense row-major matrix of doubles. The only tensor type in the engine:
/// feature maps, attention matrices, weights and gradients are all Mat.
struct Mat {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> v;

    Mat() = default;
    Mat(std::size_t r, std::size_t c, double fill = 0.0) : rows(r), cols(c), v(r * c, fill) {}
    Mat(std::size_t r, std::size_t c, std::vector<double> values);

    double& operator()(std::size_t i, std::size_t j) { return v[i * cols + j]; }
    double operator()(std::size_t i, std::size_t j) const { return v[i * cols + j]; }

    std::size_t size() const { return v.size(); }
    bool same_shape(const Mat& o) const { return rows == o.rows && cols == o.cols; }
    std::string shape_str() const;

    bool all_finite() const;
};

bool operator==(const Mat& a, const Mat& b);

Mat matmul(const Mat& a, const Mat& b);
Mat transpose(const Mat& m);

Mat operator+(const Mat& a, const Mat& b);
Mat operator-(const Mat& a, const Mat& b);
Mat operator*(const Mat& a, double s);
Mat& operator+=(Mat& a, const Mat& b);

/// cos(u, v); either vector with norm below 1e-12 yields 0 (zero-vector rule).
double cosine(const std::vector<double>& u, const std::vector<double>& v);

/// Backward of the cosine above. Accumulates d(cos)/du and d(cos)/dv scaled
/// by upstream into du/dv. Zero-norm inputs get zero gradient.
void cosine_backward(const std::vector<double>& u, const std::vector<double>& v,
                     double upstream, std::vector<double>& du, std::vector<double>& dv);

double max_abs(const Mat& m);

/// Central-difference gradient of a scalar function, the oracle every
/// analytic backward pass is checked against.
Mat finite_diff_gradient(const std::function<double(const Mat&)>& f, Mat x, double eps);

}  // namespace tcnn
