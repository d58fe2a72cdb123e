#pragma once

#include <cstddef>
#include <functional>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "printattr/error.hpp"

namespace printattr::nn {

using Shape = std::vector<std::size_t>;

inline std::size_t shape_size(const Shape& s) {
    return std::accumulate(s.begin(), s.end(), std::size_t{1}, std::multiplies<>{});
}

inline std::string shape_str(const Shape& s) {
    std::ostringstream os;
    for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "x" : "") << s[i];
    return os.str();
}

// Dense row-major tensor. The last axis is the channel axis (NHWC).
template <class T>
class Tensor {
public:
    using value_type = T;

    Tensor() = default;
    explicit Tensor(Shape shape, T fill = T{}) : shape_(std::move(shape)), data_(shape_size(shape_), fill) {}
    Tensor(Shape shape, std::vector<T> data) : shape_(std::move(shape)), data_(std::move(data)) {
        if (data_.size() != shape_size(shape_))
            throw ShapeError("tensor data length " + std::to_string(data_.size()) + " does not match shape " +
                             shape_str(shape_));
    }

    const Shape& shape() const { return shape_; }
    std::size_t dim(std::size_t i) const { return shape_.at(i); }
    std::size_t rank() const { return shape_.size(); }
    std::size_t size() const { return data_.size(); }

    T* data() { return data_.data(); }
    const T* data() const { return data_.data(); }
    std::vector<T>& vec() { return data_; }
    const std::vector<T>& vec() const { return data_; }
    std::span<T> span() { return data_; }
    std::span<const T> span() const { return data_; }

    T& operator[](std::size_t i) { return data_[i]; }
    const T& operator[](std::size_t i) const { return data_[i]; }

    void fill(T v) { std::fill(data_.begin(), data_.end(), v); }

    // Reinterpret with a new shape of the same size.
    Tensor reshaped(Shape s) const& { return Tensor(std::move(s), data_); }
    Tensor reshaped(Shape s) && { return Tensor(std::move(s), std::move(data_)); }

    template <class U>
    Tensor<U> cast() const {
        return Tensor<U>(shape_, std::vector<U>(data_.begin(), data_.end()));
    }

    friend bool operator==(const Tensor&, const Tensor&) = default;

private:
    Shape shape_;
    std::vector<T> data_;
};

inline void require_shape(const Shape& got, const Shape& want, const char* what) {
    if (got != want)
        throw ShapeError(std::string(what) + ": expected shape " + shape_str(want) + ", got " + shape_str(got));
}

namespace detail {

// C[m x n] += A * B where A(i, p) = a[i * a_row + p * a_inner] and B, C are
// row-major with leading dimension n. Register-blocked over 4 rows of C and
// 16 columns so each B load feeds four accumulators.
template <class T>
void gemm_strided_acc(const T* a, std::size_t a_row, std::size_t a_inner, const T* b, T* c, std::size_t m,
                      std::size_t k, std::size_t n) {
    constexpr std::size_t MR = 4, NR = 16;
    std::size_t i = 0;
    for (; i + MR <= m; i += MR) {
        std::size_t j = 0;
        for (; j + NR <= n; j += NR) {
            T acc[MR][NR];
            for (std::size_t r = 0; r < MR; ++r)
                for (std::size_t q = 0; q < NR; ++q) acc[r][q] = c[(i + r) * n + j + q];
            for (std::size_t p = 0; p < k; ++p) {
                const T* brow = b + p * n + j;
                const T a0 = a[(i + 0) * a_row + p * a_inner];
                const T a1 = a[(i + 1) * a_row + p * a_inner];
                const T a2 = a[(i + 2) * a_row + p * a_inner];
                const T a3 = a[(i + 3) * a_row + p * a_inner];
                for (std::size_t q = 0; q < NR; ++q) {
                    const T bv = brow[q];
                    acc[0][q] += a0 * bv;
                    acc[1][q] += a1 * bv;
                    acc[2][q] += a2 * bv;
                    acc[3][q] += a3 * bv;
                }
            }
            for (std::size_t r = 0; r < MR; ++r)
                for (std::size_t q = 0; q < NR; ++q) c[(i + r) * n + j + q] = acc[r][q];
        }
        if (j < n) {
            for (std::size_t r = 0; r < MR; ++r)
                for (std::size_t p = 0; p < k; ++p) {
                    const T av = a[(i + r) * a_row + p * a_inner];
                    const T* brow = b + p * n;
                    T* crow = c + (i + r) * n;
                    for (std::size_t q = j; q < n; ++q) crow[q] += av * brow[q];
                }
        }
    }
    for (; i < m; ++i) {
        T* crow = c + i * n;
        for (std::size_t p = 0; p < k; ++p) {
            const T av = a[i * a_row + p * a_inner];
            const T* brow = b + p * n;
            for (std::size_t q = 0; q < n; ++q) crow[q] += av * brow[q];
        }
    }
}

}  // namespace detail

// C[m x n] += A[m x k] * B[k x n], all row-major.
template <class T>
void gemm_acc(const T* a, const T* b, T* c, std::size_t m, std::size_t k, std::size_t n) {
    detail::gemm_strided_acc(a, k, 1, b, c, m, k, n);
}

// C[k x n] += A^T * B where A is [m x k] and B is [m x n].
template <class T>
void gemm_at_b_acc(const T* a, const T* b, T* c, std::size_t m, std::size_t k, std::size_t n) {
    detail::gemm_strided_acc(a, 1, k, b, c, k, m, n);
}

// out[n x k] = transpose of in[k x n].
template <class T>
void transpose(const T* in, T* out, std::size_t k, std::size_t n) {
    for (std::size_t i = 0; i < k; ++i)
        for (std::size_t j = 0; j < n; ++j) out[j * k + i] = in[i * n + j];
}

}  // namespace printattr::nn
