#ifndef TABGPT_TENSOR_HPP
#define TABGPT_TENSOR_HPP

#include <cmath>
#include <cstddef>
#include <limits>
#include <numeric>
#include <string>
#include <vector>

#include "tabgpt/common.hpp"

namespace tabgpt {

// Dense row-major tensor. Real is float for training, double for the
// finite-difference verification mode.
template <typename Real>
struct Tensor {
    std::vector<int> shape;
    std::vector<Real> data;

    Tensor() = default;

    static Tensor zeros(std::vector<int> s) {
        Tensor t;
        std::size_t n = 1;
        for (int d : s) {
            if (d <= 0) throw Error("tensor dimensions must be positive");
            n *= static_cast<std::size_t>(d);
        }
        t.shape = std::move(s);
        t.data.assign(n, Real(0));
        return t;
    }

    static Tensor from(std::vector<int> s, std::vector<Real> values) {
        Tensor t = zeros(std::move(s));
        if (values.size() != t.data.size()) throw Error("tensor data length does not match shape");
        t.data = std::move(values);
        return t;
    }

    std::size_t size() const { return data.size(); }
    int rank() const { return static_cast<int>(shape.size()); }

    int rows() const { return shape.empty() ? 0 : shape[0]; }
    int cols() const { return shape.size() < 2 ? 1 : shape[1]; }

    Real& at(int r, int c) { return data[static_cast<std::size_t>(r) * cols() + c]; }
    Real at(int r, int c) const { return data[static_cast<std::size_t>(r) * cols() + c]; }

    bool same_shape(const Tensor& o) const { return shape == o.shape; }

    std::string shape_str() const {
        std::string s = "[";
        for (std::size_t i = 0; i < shape.size(); ++i) {
            if (i) s += "x";
            s += std::to_string(shape[i]);
        }
        return s + "]";
    }
};

// Row softmax with -inf allowed as a mask sentinel; masked entries come out
// exactly 0. A row of all -inf or any NaN input is an error.
template <typename Real>
Tensor<Real> softmax_rows(const Tensor<Real>& m) {
    if (m.rank() != 2) throw Error("softmax_rows: expected a rank-2 tensor, got " + m.shape_str());
    const int r = m.rows(), c = m.cols();
    Tensor<Real> out = Tensor<Real>::zeros({r, c});
    for (int i = 0; i < r; ++i) {
        Real mx = -std::numeric_limits<Real>::infinity();
        for (int j = 0; j < c; ++j) {
            Real v = m.at(i, j);
            if (std::isnan(v)) throw Error("softmax_rows: NaN input");
            if (v > mx) mx = v;
        }
        if (mx == -std::numeric_limits<Real>::infinity())
            throw Error("softmax_rows: row " + std::to_string(i) + " is entirely masked");
        Real sum = 0;
        for (int j = 0; j < c; ++j) {
            Real e = std::exp(m.at(i, j) - mx); // exp(-inf - mx) == 0
            out.at(i, j) = e;
            sum += e;
        }
        for (int j = 0; j < c; ++j) out.at(i, j) /= sum;
    }
    return out;
}

} // namespace tabgpt

#endif
