#pragma once

#include <cstddef>
#include <new>
#include <span>
#include <vector>

#include "errors.hpp"

namespace swiftf0 {

/// Allocator returning 64-byte aligned blocks. Vectorized reductions peel off
/// a different number of leading elements depending on the address, so fixed
/// alignment is what keeps floating-point results identical from run to run.
template <typename T>
struct AlignedAllocator {
    using value_type = T;
    static constexpr std::align_val_t kAlign{64};

    AlignedAllocator() = default;
    template <typename U>
    AlignedAllocator(const AlignedAllocator<U>&) noexcept {}

    T* allocate(std::size_t n) { return static_cast<T*>(::operator new(n * sizeof(T), kAlign)); }
    void deallocate(T* p, std::size_t) noexcept { ::operator delete(p, kAlign); }

    template <typename U>
    bool operator==(const AlignedAllocator<U>&) const noexcept { return true; }
};

template <typename T>
using AlignedVector = std::vector<T, AlignedAllocator<T>>;

/// Dense row-major matrix. Rows are time frames throughout the library.
template <typename T>
class Matrix {
public:
    Matrix() = default;
    Matrix(std::size_t rows, std::size_t cols, T fill = T{})
        : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

    std::size_t rows() const noexcept { return rows_; }
    std::size_t cols() const noexcept { return cols_; }
    std::size_t size() const noexcept { return data_.size(); }
    bool empty() const noexcept { return data_.empty(); }

    T& operator()(std::size_t r, std::size_t c) noexcept { return data_[r * cols_ + c]; }
    const T& operator()(std::size_t r, std::size_t c) const noexcept { return data_[r * cols_ + c]; }

    std::span<T> row(std::size_t r) noexcept { return {data_.data() + r * cols_, cols_}; }
    std::span<const T> row(std::size_t r) const noexcept { return {data_.data() + r * cols_, cols_}; }

    T* data() noexcept { return data_.data(); }
    const T* data() const noexcept { return data_.data(); }
    AlignedVector<T>& values() noexcept { return data_; }
    const AlignedVector<T>& values() const noexcept { return data_; }

    bool operator==(const Matrix&) const = default;

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    AlignedVector<T> data_;
};

/// Copies rows [first, first + count) into a new matrix.
template <typename T>
Matrix<T> slice_rows(const Matrix<T>& m, std::size_t first, std::size_t count) {
    if (first + count > m.rows()) throw IndexError("row slice out of range");
    Matrix<T> out(count, m.cols());
    for (std::size_t r = 0; r < count; ++r) {
        auto src = m.row(first + r);
        std::copy(src.begin(), src.end(), out.row(r).begin());
    }
    return out;
}

template <typename To, typename From>
Matrix<To> matrix_cast(const Matrix<From>& m) {
    Matrix<To> out(m.rows(), m.cols());
    for (std::size_t i = 0; i < m.size(); ++i) out.data()[i] = static_cast<To>(m.data()[i]);
    return out;
}

} // namespace swiftf0
