#pragma once

#include <Eigen/Core>

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>

#include "dpipe/error.hpp"

namespace dpipe {

/// Dense H x W x C tensor with row-major storage and the channel index
/// fastest: element (y, x, ch) lives at ((y*w + x)*c + ch).
template <typename Scalar>
struct TensorT {
    int h = 0, w = 0, c = 0;
    Eigen::Array<Scalar, Eigen::Dynamic, 1> data;

    TensorT() = default;
    TensorT(int height, int width, int channels)
        : h(height), w(width), c(channels) {
        if (height < 0 || width < 0 || channels < 0)
            throw std::invalid_argument("tensor dimensions must be non-negative");
        data = Eigen::Array<Scalar, Eigen::Dynamic, 1>::Zero(
            static_cast<Eigen::Index>(height) * width * channels);
    }

    static TensorT constant(int height, int width, int channels, Scalar v) {
        TensorT t(height, width, channels);
        t.data.setConstant(v);
        return t;
    }
    static TensorT scalar(Scalar v) { return constant(1, 1, 1, v); }

    Eigen::Index size() const { return data.size(); }
    bool empty() const { return data.size() == 0; }

    Scalar& at(int y, int x, int ch) {
        return data[(static_cast<Eigen::Index>(y) * w + x) * c + ch];
    }
    Scalar at(int y, int x, int ch) const {
        return data[(static_cast<Eigen::Index>(y) * w + x) * c + ch];
    }

    bool same_shape(const TensorT& o) const { return h == o.h && w == o.w && c == o.c; }

    std::string shape_str() const {
        return std::to_string(h) + "x" + std::to_string(w) + "x" + std::to_string(c);
    }
};

using Tensor = TensorT<double>;

/// Complex-valued H x W field stored as separate real/imag planes. Produced by
/// fft2 and consumed by the elementwise complex ops and ifft2.
struct ComplexField {
    int h = 0, w = 0;
    Eigen::ArrayXd re, im;

    ComplexField() = default;
    ComplexField(int height, int width) : h(height), w(width) {
        re = Eigen::ArrayXd::Zero(static_cast<Eigen::Index>(height) * width);
        im = Eigen::ArrayXd::Zero(static_cast<Eigen::Index>(height) * width);
    }

    Eigen::Index size() const { return re.size(); }
    bool same_shape(const ComplexField& o) const { return h == o.h && w == o.w; }
};

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using RowMatrixMap = Eigen::Map<RowMatrix>;
using ConstRowMatrixMap = Eigen::Map<const RowMatrix>;

/// View of tensor data as a (h*w*groups) x (c/groups) row-major matrix; each
/// row is one pixel's channel vector (or one group's slice of it).
inline ConstRowMatrixMap as_rows(const Tensor& t, int groups = 1) {
    if (groups < 1 || t.c % groups != 0)
        throw std::invalid_argument("as_rows: channel count not divisible by groups");
    return ConstRowMatrixMap(t.data.data(),
                             static_cast<Eigen::Index>(t.h) * t.w * groups, t.c / groups);
}
inline RowMatrixMap as_rows_mut(Tensor& t, int groups = 1) {
    if (groups < 1 || t.c % groups != 0)
        throw std::invalid_argument("as_rows: channel count not divisible by groups");
    return RowMatrixMap(t.data.data(),
                        static_cast<Eigen::Index>(t.h) * t.w * groups, t.c / groups);
}

inline bool all_finite(const Tensor& t) { return t.data.isFinite().all(); }
inline bool all_finite(const ComplexField& f) {
    return f.re.isFinite().all() && f.im.isFinite().all();
}

inline void require_finite(const Tensor& t, const char* what) {
    if (!all_finite(t)) throw NumericalError(std::string(what) + ": non-finite values");
}

inline double max_abs(const Tensor& t) { return t.empty() ? 0.0 : t.data.abs().maxCoeff(); }
inline double max_abs_diff(const Tensor& a, const Tensor& b) {
    if (!a.same_shape(b)) throw std::invalid_argument("max_abs_diff: shape mismatch");
    return a.size() == 0 ? 0.0 : (a.data - b.data).abs().maxCoeff();
}
inline double dot(const Tensor& a, const Tensor& b) {
    if (!a.same_shape(b)) throw std::invalid_argument("dot: shape mismatch");
    return (a.data * b.data).sum();
}

/// Extract channel `ch` as an H x W x 1 plane.
inline Tensor channel_plane(const Tensor& t, int ch) {
    if (ch < 0 || ch >= t.c) throw std::invalid_argument("channel_plane: channel out of range");
    Tensor p(t.h, t.w, 1);
    const Eigen::Index n = static_cast<Eigen::Index>(t.h) * t.w;
    for (Eigen::Index i = 0; i < n; ++i) p.data[i] = t.data[i * t.c + ch];
    return p;
}

inline void set_channel_plane(Tensor& t, int ch, const Tensor& plane) {
    if (plane.h != t.h || plane.w != t.w || plane.c != 1)
        throw std::invalid_argument("set_channel_plane: shape mismatch");
    const Eigen::Index n = static_cast<Eigen::Index>(t.h) * t.w;
    for (Eigen::Index i = 0; i < n; ++i) t.data[i * t.c + ch] = plane.data[i];
}

inline Tensor clamp01(Tensor t) {
    t.data = t.data.min(1.0).max(0.0);
    return t;
}

} // namespace dpipe
