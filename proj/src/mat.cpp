#include "tcnn/mat.hpp"

#include <cmath>

namespace tcnn {

Mat::Mat(std::size_t r, std::size_t c, std::vector<double> values) : rows(r), cols(c), v(std::move(values)) {
    if (v.size() != rows * cols) {
        throw ShapeError("Mat: " + std::to_string(v.size()) + " values for shape " + shape_str());
    }
}

std::string Mat::shape_str() const {
    return std::to_string(rows) + "x" + std::to_string(cols);
}

bool Mat::all_finite() const {
    for (double x : v) {
        if (!std::isfinite(x)) return false;
    }
    return true;
}

bool operator==(const Mat& a, const Mat& b) {
    return a.rows == b.rows && a.cols == b.cols && a.v == b.v;
}

Mat matmul(const Mat& a, const Mat& b) {
    if (a.cols != b.rows) {
        throw ShapeError("matmul: " + a.shape_str() + " * " + b.shape_str());
    }
    Mat out(a.rows, b.cols);
    for (std::size_t i = 0; i < a.rows; ++i) {
        for (std::size_t k = 0; k < a.cols; ++k) {
            const double aik = a(i, k);
            if (aik == 0.0) continue;
            for (std::size_t j = 0; j < b.cols; ++j) {
                out(i, j) += aik * b(k, j);
            }
        }
    }
    return out;
}

Mat transpose(const Mat& m) {
    Mat out(m.cols, m.rows);
    for (std::size_t i = 0; i < m.rows; ++i)
        for (std::size_t j = 0; j < m.cols; ++j) out(j, i) = m(i, j);
    return out;
}

Mat operator+(const Mat& a, const Mat& b) {
    if (!a.same_shape(b)) throw ShapeError("add: " + a.shape_str() + " vs " + b.shape_str());
    Mat out = a;
    for (std::size_t i = 0; i < out.v.size(); ++i) out.v[i] += b.v[i];
    return out;
}

Mat operator-(const Mat& a, const Mat& b) {
    if (!a.same_shape(b)) throw ShapeError("sub: " + a.shape_str() + " vs " + b.shape_str());
    Mat out = a;
    for (std::size_t i = 0; i < out.v.size(); ++i) out.v[i] -= b.v[i];
    return out;
}

Mat operator*(const Mat& a, double s) {
    Mat out = a;
    for (double& x : out.v) x *= s;
    return out;
}

Mat& operator+=(Mat& a, const Mat& b) {
    if (!a.same_shape(b)) throw ShapeError("add: " + a.shape_str() + " vs " + b.shape_str());
    for (std::size_t i = 0; i < a.v.size(); ++i) a.v[i] += b.v[i];
    return a;
}

namespace {
constexpr double kNormFloor = 1e-12;
}

double cosine(const std::vector<double>& u, const std::vector<double>& v) {
    if (u.size() != v.size()) {
        throw ShapeError("cosine: length " + std::to_string(u.size()) + " vs " + std::to_string(v.size()));
    }
    double dot = 0.0, nu = 0.0, nv = 0.0;
    for (std::size_t i = 0; i < u.size(); ++i) {
        dot += u[i] * v[i];
        nu += u[i] * u[i];
        nv += v[i] * v[i];
    }
    nu = std::sqrt(nu);
    nv = std::sqrt(nv);
    if (nu < kNormFloor || nv < kNormFloor) return 0.0;
    return dot / (nu * nv);
}

void cosine_backward(const std::vector<double>& u, const std::vector<double>& v,
                     double upstream, std::vector<double>& du, std::vector<double>& dv) {
    if (u.size() != v.size() || du.size() != u.size() || dv.size() != u.size()) {
        throw ShapeError("cosine_backward: length mismatch");
    }
    double dot = 0.0, nu2 = 0.0, nv2 = 0.0;
    for (std::size_t i = 0; i < u.size(); ++i) {
        dot += u[i] * v[i];
        nu2 += u[i] * u[i];
        nv2 += v[i] * v[i];
    }
    const double nu = std::sqrt(nu2);
    const double nv = std::sqrt(nv2);
    if (nu < kNormFloor || nv < kNormFloor) return;  // cosine defined as 0 with zero gradient
    const double inv = 1.0 / (nu * nv);
    const double c = dot * inv;
    for (std::size_t i = 0; i < u.size(); ++i) {
        du[i] += upstream * (v[i] * inv - c * u[i] / nu2);
        dv[i] += upstream * (u[i] * inv - c * v[i] / nv2);
    }
}

double max_abs(const Mat& m) {
    double mx = 0.0;
    for (double x : m.v) mx = std::max(mx, std::fabs(x));
    return mx;
}

Mat finite_diff_gradient(const std::function<double(const Mat&)>& f, Mat x, double eps) {
    if (!(eps > 0.0)) throw ArgError("finite_diff_gradient: eps must be positive");
    Mat grad(x.rows, x.cols);
    for (std::size_t i = 0; i < x.v.size(); ++i) {
        const double orig = x.v[i];
        x.v[i] = orig + eps;
        const double fp = f(x);
        x.v[i] = orig - eps;
        const double fm = f(x);
        x.v[i] = orig;
        if (!std::isfinite(fp) || !std::isfinite(fm)) {
            throw NumericError("finite_diff_gradient: non-finite function value");
        }
        grad.v[i] = (fp - fm) / (2.0 * eps);
    }
    return grad;
}

}  // namespace tcnn
