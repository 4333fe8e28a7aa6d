#pragma once

#include <cstddef>
#include <stdexcept>
#include <vector>

#include "padic.hpp"
#include "series.hpp"

namespace isoslope {

inline PadicScalar element_invert(const PadicScalar& x) { return x.inv(); }
inline TruncatedSeries element_invert(const TruncatedSeries& x) { return x.invert(); }

// Dense little matrices over a commutative coefficient ring (PadicScalar or
// TruncatedSeries). Ranks here are tiny; Laplace determinants and adjugate
// inverses are fine.
template <typename T>
struct Matrix {
    std::size_t rows = 0, cols = 0;
    std::vector<T> a;

    Matrix() = default;
    Matrix(std::size_t r, std::size_t c, const T& fill) : rows(r), cols(c), a(r * c, fill) {}

    T& at(std::size_t i, std::size_t j) { return a[i * cols + j]; }
    const T& at(std::size_t i, std::size_t j) const { return a[i * cols + j]; }

    static Matrix identity(std::size_t n, const T& zero, const T& one) {
        Matrix m(n, n, zero);
        for (std::size_t i = 0; i < n; i++) m.at(i, i) = one;
        return m;
    }

    friend Matrix operator+(const Matrix& x, const Matrix& y) {
        Matrix r = x;
        for (std::size_t i = 0; i < r.a.size(); i++) r.a[i] = x.a[i] + y.a[i];
        return r;
    }
    friend Matrix operator-(const Matrix& x, const Matrix& y) {
        Matrix r = x;
        for (std::size_t i = 0; i < r.a.size(); i++) r.a[i] = x.a[i] - y.a[i];
        return r;
    }
    friend Matrix operator*(const Matrix& x, const Matrix& y) {
        if (x.cols != y.rows) throw std::invalid_argument("Matrix: shape mismatch");
        Matrix r(x.rows, y.cols, x.a.empty() ? y.a.front() : x.a.front());
        for (std::size_t i = 0; i < x.rows; i++)
            for (std::size_t j = 0; j < y.cols; j++) {
                T acc = x.at(i, 0) * y.at(0, j);
                for (std::size_t k = 1; k < x.cols; k++) acc = acc + x.at(i, k) * y.at(k, j);
                r.at(i, j) = acc;
            }
        return r;
    }

    Matrix transpose() const {
        Matrix r(cols, rows, a.front());
        for (std::size_t i = 0; i < rows; i++)
            for (std::size_t j = 0; j < cols; j++) r.at(j, i) = at(i, j);
        return r;
    }

    Matrix scaled(const T& c) const {
        Matrix r = *this;
        for (auto& x : r.a) x = x * c;
        return r;
    }

    Matrix minor_at(std::size_t di, std::size_t dj) const {
        Matrix r(rows - 1, cols - 1, a.front());
        for (std::size_t i = 0, ri = 0; i < rows; i++) {
            if (i == di) continue;
            for (std::size_t j = 0, rj = 0; j < cols; j++) {
                if (j == dj) continue;
                r.at(ri, rj) = at(i, j);
                rj++;
            }
            ri++;
        }
        return r;
    }

    T det() const {
        if (rows != cols) throw std::invalid_argument("Matrix: det of non-square");
        if (rows == 1) return at(0, 0);
        if (rows == 2) return at(0, 0) * at(1, 1) - at(0, 1) * at(1, 0);
        T acc = at(0, 0) * minor_at(0, 0).det();
        for (std::size_t j = 1; j < cols; j++) {
            T term = at(0, j) * minor_at(0, j).det();
            acc = (j % 2) ? acc - term : acc + term;
        }
        return acc;
    }

    // adjugate * det^{-1}; throws when det is not invertible at precision
    Matrix inverse() const {
        T d = det();
        T dinv = element_invert(d);
        Matrix r(rows, cols, a.front());
        if (rows == 1) {
            r.at(0, 0) = dinv;
            return r;
        }
        for (std::size_t i = 0; i < rows; i++)
            for (std::size_t j = 0; j < cols; j++) {
                T cof = minor_at(i, j).det();
                if ((i + j) % 2) cof = -cof;
                r.at(j, i) = cof * dinv;
            }
        return r;
    }
};

// negation that works for both coefficient types (T() - x is not valid for
// context-carrying types)
template <typename T>
Matrix<T> negate(const Matrix<T>& m) {
    Matrix<T> r = m;
    for (auto& x : r.a) x = -x;
    return r;
}

inline Matrix<TruncatedSeries> matrix_phi(const Matrix<TruncatedSeries>& m) {
    Matrix<TruncatedSeries> r = m;
    for (auto& x : r.a) x = x.phi();
    return r;
}
inline Matrix<TruncatedSeries> matrix_phi_inv(const Matrix<TruncatedSeries>& m) {
    Matrix<TruncatedSeries> r = m;
    for (auto& x : r.a) x = x.phi_inv();
    return r;
}
inline Matrix<TruncatedSeries> matrix_derivative(const Matrix<TruncatedSeries>& m) {
    Matrix<TruncatedSeries> r = m;
    for (auto& x : r.a) x = x.derivative();
    return r;
}

// minimal Gauss ord over the entries; nullopt when the matrix is zero at
// precision
inline std::optional<Rational> matrix_gauss_ord(const Matrix<TruncatedSeries>& m) {
    std::optional<Rational> best;
    for (const auto& x : m.a) {
        auto g = x.gauss_ord();
        if (g && (!best || *g < *best)) best = g;
    }
    return best;
}

inline bool matrix_is_zero(const Matrix<TruncatedSeries>& m) {
    for (const auto& x : m.a)
        if (!x.is_zero()) return false;
    return true;
}

inline Matrix<TruncatedSeries> matrix_truncate_abs(const Matrix<TruncatedSeries>& m, std::int64_t Nabs) {
    Matrix<TruncatedSeries> r = m;
    for (auto& x : r.a) x = x.truncate_abs(Nabs);
    return r;
}

inline std::uint32_t matrix_loss(const Matrix<TruncatedSeries>& m) {
    std::uint32_t worst = 0;
    for (const auto& x : m.a) worst = std::max(worst, x.loss());
    return worst;
}

} // namespace isoslope
