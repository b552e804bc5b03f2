#include "autogcn/spectral.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "autogcn/error.hpp"

namespace autogcn {

namespace {

double off_diagonal_norm(const Matrix& a) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.rows(); ++i) {
        for (std::size_t j = 0; j < a.cols(); ++j) {
            if (i != j) {
                s += a(i, j) * a(i, j);
            }
        }
    }
    return std::sqrt(s);
}

// Applies the Jacobi rotation that annihilates a(p,q).
void rotate(Matrix& a, Matrix& v, std::size_t p, std::size_t q) {
    const double apq = a(p, q);
    if (apq == 0.0) {
        return;
    }
    const double theta = (a(q, q) - a(p, p)) / (2.0 * apq);
    const double t = (theta >= 0.0 ? 1.0 : -1.0) / (std::abs(theta) + std::sqrt(theta * theta + 1.0));
    const double c = 1.0 / std::sqrt(t * t + 1.0);
    const double s = t * c;
    const std::size_t n = a.rows();

    for (std::size_t k = 0; k < n; ++k) {
        const double akp = a(k, p);
        const double akq = a(k, q);
        a(k, p) = c * akp - s * akq;
        a(k, q) = s * akp + c * akq;
    }
    for (std::size_t k = 0; k < n; ++k) {
        const double apk = a(p, k);
        const double aqk = a(q, k);
        a(p, k) = c * apk - s * aqk;
        a(q, k) = s * apk + c * aqk;
    }
    a(p, q) = 0.0;
    a(q, p) = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
        const double vkp = v(k, p);
        const double vkq = v(k, q);
        v(k, p) = c * vkp - s * vkq;
        v(k, q) = s * vkp + c * vkq;
    }
}

}  // namespace

EigenSystem eig_sym(const Matrix& m) {
    const std::size_t n = m.rows();
    if (m.cols() != n) {
        throw input_error("eig_sym: matrix is not square (" + m.shape_str() + ")");
    }
    if (n > kMaxOracleNodes) {
        throw input_error("eig_sym: n=" + std::to_string(n) + " exceeds oracle limit " +
                          std::to_string(kMaxOracleNodes));
    }
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = i + 1; j < n; ++j) {
            if (std::abs(m(i, j) - m(j, i)) >= 1e-10) {
                throw input_error("eig_sym: input not symmetric at (" + std::to_string(i) + "," +
                                  std::to_string(j) + ")");
            }
        }
    }

    Matrix a = m;
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = i + 1; j < n; ++j) {
            a(j, i) = a(i, j);
        }
    }
    Matrix v = Matrix::identity(n);
    const double tol = 1e-12 * frobenius_norm(m);

    constexpr int kMaxSweeps = 100;
    int sweep = 0;
    while (off_diagonal_norm(a) > tol) {
        if (++sweep > kMaxSweeps) {
            throw numerical_error("eig_sym: no convergence after 100 sweeps");
        }
        for (std::size_t p = 0; p + 1 < n; ++p) {
            for (std::size_t q = p + 1; q < n; ++q) {
                rotate(a, v, p, q);
            }
        }
    }

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t x, std::size_t y) { return a(x, x) < a(y, y); });

    EigenSystem out;
    out.values.resize(n);
    out.vectors = Matrix(n, n);
    for (std::size_t c = 0; c < n; ++c) {
        out.values[c] = a(order[c], order[c]);
        for (std::size_t r = 0; r < n; ++r) {
            out.vectors(r, c) = v(r, order[c]);
        }
    }
    return out;
}

std::vector<double> frequency_profile(const Matrix& c, const EigenSystem& eig) {
    const std::size_t n = eig.values.size();
    if (c.rows() != n || c.cols() != n) {
        throw input_error("frequency_profile: kernel is " + c.shape_str() + ", eigensystem has n=" +
                          std::to_string(n));
    }
    const Matrix cu = matmul(c, eig.vectors);
    std::vector<double> profile(n, 0.0);
    for (std::size_t k = 0; k < n; ++k) {
        double s = 0.0;
        for (std::size_t r = 0; r < n; ++r) {
            s += eig.vectors(r, k) * cu(r, k);
        }
        profile[k] = s;
    }
    return profile;
}

Matrix kernel_from_profile(const std::function<double(double)>& f, const EigenSystem& eig) {
    const std::size_t n = eig.values.size();
    std::vector<double> fl(n);
    for (std::size_t k = 0; k < n; ++k) {
        fl[k] = f(eig.values[k]);
    }
    const Matrix& u = eig.vectors;
    Matrix out(n, n);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = i; j < n; ++j) {
            double s = 0.0;
            for (std::size_t k = 0; k < n; ++k) {
                s += u(i, k) * fl[k] * u(j, k);
            }
            out(i, j) = s;
            out(j, i) = s;
        }
    }
    return out;
}

Matrix reconstruct(const EigenSystem& eig) {
    return kernel_from_profile([](double l) { return l; }, eig);
}

}  // namespace autogcn
