#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "autogcn/filters.hpp"
#include "autogcn/graph.hpp"
#include "autogcn/matrix.hpp"
#include "autogcn/rng.hpp"

namespace autogcn {

/// Outcome of one property in a verification suite.
struct CheckResult {
    std::string name;
    bool pass = false;
    double measured = 0.0;
    double tolerance = 0.0;
    /// Failing case description, empty on success.
    std::string detail;
};

struct SuiteReport {
    std::string suite;
    std::vector<CheckResult> checks;
    bool passed() const;
};

/// Spatial kernel under test; defaults to apply_kernel.
using KernelFn = std::function<Matrix(FilterKind, double p, double a, const SparseSymMatrix& atilde,
                                      const Matrix& h)>;

struct VerifyOptions {
    std::uint64_t seed = 7;
    KernelFn kernel;
};

/// Random undirected graph with n nodes and edge probability `density`.
Graph random_graph(std::size_t n, double density, Rng& rng);

/// Spatial kernels against U diag(F(λ)) Uᵀ on 50 random graphs with n <= 30,
/// 10 admissible (p, a) per family. Tolerance 1e-8 in max norm.
SuiteReport verify_spectral(const VerifyOptions& opt = {});

/// Bank collapse: apply_bank against the explicit dense sum Σ p_i C(1, a_i) for
/// K in {1, 3, 16}, three families, 20 random graphs. Tolerance 1e-10.
SuiteReport verify_theorems(const VerifyOptions& opt = {});

/// Finite-difference gradient checks of complete models (2-layer AutoGCN with
/// n = 12, hidden = 5, K = 4 and dropout off, plus other configurations).
/// Tolerance 1e-4 relative.
SuiteReport verify_gradients(const VerifyOptions& opt = {});

/// Kernel with the sign of the Ã term of the high-pass filter flipped.
KernelFn faulty_high_kernel();

}  // namespace autogcn
