#pragma once

// Elementwise and row-wise kernels shared by the forward and backward passes.

#include <cmath>
#include <limits>
#include <numbers>
#include <vector>

#include "dombert/linalg.hpp"
#include "dombert/model.hpp"

namespace dombert::nn {

template <typename T>
constexpr T kLayerNormEps = T(1e-5);

template <typename T>
T gelu(T x) {
    return T(0.5) * x * (T(1) + std::erf(x / std::numbers::sqrt2_v<T>));
}

template <typename T>
T gelu_grad(T x) {
    const T cdf = T(0.5) * (T(1) + std::erf(x / std::numbers::sqrt2_v<T>));
    const T pdf = std::exp(T(-0.5) * x * x) / std::sqrt(T(2) * std::numbers::pi_v<T>);
    return cdf + x * pdf;
}

template <typename T>
Mat<T> gelu(const Mat<T>& x) {
    return x.unaryExpr([](T v) { return gelu(v); });
}

template <typename T>
Mat<T> gelu_backward(const Mat<T>& dy, const Mat<T>& pre) {
    return dy.cwiseProduct(pre.unaryExpr([](T v) { return gelu_grad(v); }));
}

template <typename T>
Mat<T> layer_norm(const Mat<T>& x, const Mat<T>& gain, const Mat<T>& bias,
                  LayerNormCache<T>& cache) {
    const auto rows = x.rows();
    const auto cols = x.cols();
    cache.xhat.resize(rows, cols);
    cache.rstd.resize(static_cast<std::size_t>(rows));
    Mat<T> y(rows, cols);
    for (Eigen::Index r = 0; r < rows; ++r) {
        const T mean = x.row(r).mean();
        const T var = (x.row(r).array() - mean).square().mean();
        const T rstd = T(1) / std::sqrt(var + kLayerNormEps<T>);
        cache.rstd[static_cast<std::size_t>(r)] = rstd;
        cache.xhat.row(r) = (x.row(r).array() - mean) * rstd;
        y.row(r) = cache.xhat.row(r).cwiseProduct(gain.row(0)) + bias.row(0);
    }
    return y;
}

/// Returns dx; accumulates into dgain and dbias.
template <typename T>
Mat<T> layer_norm_backward(const Mat<T>& dy, const LayerNormCache<T>& cache, const Mat<T>& gain,
                           Mat<T>& dgain, Mat<T>& dbias) {
    dgain.row(0) += dy.cwiseProduct(cache.xhat).colwise().sum();
    dbias.row(0) += dy.colwise().sum();
    Mat<T> dx(dy.rows(), dy.cols());
    for (Eigen::Index r = 0; r < dy.rows(); ++r) {
        RowVec<T> dxhat = dy.row(r).cwiseProduct(gain.row(0));
        const T mean_d = dxhat.mean();
        const T mean_dx = dxhat.cwiseProduct(cache.xhat.row(r)).mean();
        dx.row(r) = (dxhat.array() - mean_d - cache.xhat.row(r).array() * mean_dx) *
                    cache.rstd[static_cast<std::size_t>(r)];
    }
    return dx;
}

/// Row softmax with max subtraction, in place.
template <typename T>
void softmax_rows(Mat<T>& x) {
    for (Eigen::Index r = 0; r < x.rows(); ++r) {
        const T mx = x.row(r).maxCoeff();
        x.row(r) = (x.row(r).array() - mx).exp();
        x.row(r) /= x.row(r).sum();
    }
}

/// -log softmax(row)[label] for one row.
template <typename T>
T cross_entropy_row(const Mat<T>& logits, Eigen::Index row, Eigen::Index label) {
    const T mx = logits.row(row).maxCoeff();
    const T lse = mx + std::log((logits.row(row).array() - mx).exp().sum());
    return lse - logits(row, label);
}

}  // namespace dombert::nn
