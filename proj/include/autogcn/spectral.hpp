#pragma once

#include <cstddef>
#include <functional>
#include <vector>

#include "autogcn/matrix.hpp"

namespace autogcn {

/// Eigenpairs of a dense symmetric matrix: eigenvalues ascending, eigenvectors
/// stored as the orthonormal columns of `vectors`.
struct EigenSystem {
    std::vector<double> values;
    Matrix vectors;
};

inline constexpr std::size_t kMaxOracleNodes = 2000;

/// Cyclic Jacobi eigendecomposition.
///
/// Sweeps over all (p,q) pairs until the off-diagonal Frobenius norm falls
/// below 1e-12 * ||m||_F. Throws input_error for non-square, oversized or
/// non-symmetric input (defect >= 1e-10) and numerical_error when 100 sweeps
/// do not converge.
EigenSystem eig_sym(const Matrix& m);

/// diag(Uᵀ C U): the response of kernel C at every eigenvalue of the system.
std::vector<double> frequency_profile(const Matrix& c, const EigenSystem& eig);

/// U diag(f(λ)) Uᵀ, assembled from the upper triangle so the result is exactly symmetric.
Matrix kernel_from_profile(const std::function<double(double)>& f, const EigenSystem& eig);

/// U diag(λ) Uᵀ.
Matrix reconstruct(const EigenSystem& eig);

}  // namespace autogcn
