#pragma once

#include <cstddef>
#include <initializer_list>
#include <numeric>
#include <string>
#include <vector>

#include "sws/errors.hpp"

namespace sws::nn {

/// Dense row-major tensor. Ops interpret it as a matrix (rows x cols);
/// higher-rank data is carried as a reshaped matrix with the logical shape
/// tracked by the caller. No implicit broadcasting.
template <typename T>
struct Tensor {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<T> data;

    Tensor() = default;
    Tensor(std::size_t r, std::size_t c) : rows(r), cols(c), data(r * c, T{0}) {}
    Tensor(std::size_t r, std::size_t c, std::vector<T> values)
        : rows(r), cols(c), data(std::move(values)) {
        if (data.size() != rows * cols) throw ShapeError("tensor data does not match shape");
    }

    static Tensor zeros(std::size_t r, std::size_t c) { return Tensor(r, c); }
    static Tensor scalar(T v) {
        Tensor t(1, 1);
        t.data[0] = v;
        return t;
    }
    static Tensor row(std::vector<T> values) {
        const std::size_t n = values.size();
        return Tensor(1, n, std::move(values));
    }

    std::size_t size() const { return data.size(); }
    bool is_scalar() const { return rows == 1 && cols == 1; }
    bool operator==(const Tensor&) const = default;

    T& at(std::size_t r, std::size_t c) { return data[r * cols + c]; }
    T at(std::size_t r, std::size_t c) const { return data[r * cols + c]; }

    std::string shape_str() const {
        return "(" + std::to_string(rows) + ", " + std::to_string(cols) + ")";
    }

    template <typename U>
    Tensor<U> cast() const {
        Tensor<U> out(rows, cols);
        for (std::size_t i = 0; i < data.size(); ++i) out.data[i] = static_cast<U>(data[i]);
        return out;
    }
};

template <typename T>
void check_same_shape(const Tensor<T>& a, const Tensor<T>& b, const char* op) {
    if (a.rows != b.rows || a.cols != b.cols)
        throw ShapeError(std::string(op) + ": shape mismatch " + a.shape_str() + " vs " +
                         b.shape_str());
}

}  // namespace sws::nn
