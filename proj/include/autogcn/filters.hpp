#pragma once

#include <array>
#include <cstddef>
#include <functional>
#include <string>
#include <string_view>
#include <vector>

#include "autogcn/graph.hpp"
#include "autogcn/matrix.hpp"

namespace autogcn {

enum class FilterKind { low, high, mid };

inline constexpr std::array<FilterKind, 3> kAllKinds{FilterKind::low, FilterKind::high,
                                                    FilterKind::mid};

std::string_view to_string(FilterKind kind);
/// Accepts "low", "high", "mid"; throws parameter_error otherwise.
FilterKind parse_filter_kind(std::string_view name);

/// A single filter with magnitude p and bandwidth a.
struct EffectiveFilter {
    double p = 1.0;
    double a = 0.5;
};

/// Throws parameter_error unless p > 0 and a lies in (0,1) for low/high, (0,1] for mid.
void check_admissible(FilterKind kind, double p, double a);

/// Frequency response at eigenvalue lambda:
///   low  p(1 - aλ)
///   high p(aλ + 1 - 2a)
///   mid  p((λ - 1)² - a)
double filter_value(FilterKind kind, double p, double a, double lambda);

/// Unchecked profile as a callable, for oracles and plotting.
std::function<double(double)> filter_profile(FilterKind kind, double p, double a);

/// Spatial kernel applied to h using the normalized adjacency:
///   low  p(aÃh + (1-a)h)
///   high p(-aÃh + (1-a)h)
///   mid  p(Ã(Ãh) - ah)
/// Ã² is never formed.
Matrix apply_kernel(FilterKind kind, double p, double a, const SparseSymMatrix& atilde,
                    const Matrix& h);

inline constexpr double kGridEpsilon = 1e-6;

double softplus(double x);
double softplus_inverse(double y);

/// Over-parameterized filter: K base filters on a fixed bandwidth grid, each
/// weighted by p_i = softplus(theta_i) > 0. The bank collapses exactly to one
/// filter with p̃ = Σ p_i and ã = Σ p_i a_i / p̃.
class FilterBank {
public:
    FilterBank(FilterKind kind, std::vector<double> a_grid, std::vector<double> theta);

    FilterKind kind() const noexcept { return kind_; }
    std::size_t size() const noexcept { return a_grid_.size(); }
    const std::vector<double>& a_grid() const noexcept { return a_grid_; }
    const std::vector<double>& theta() const noexcept { return theta_; }
    std::vector<double>& theta() noexcept { return theta_; }

    std::vector<double> weights() const;
    EffectiveFilter effective() const;
    Matrix apply(const SparseSymMatrix& atilde, const Matrix& h) const;

private:
    FilterKind kind_;
    std::vector<double> a_grid_;
    std::vector<double> theta_;
};

/// Equally spaced grid with every weight initialized to 1/K (so p̃ = 1).
FilterBank make_bank(FilterKind kind, std::size_t k);
std::vector<double> bank_grid(FilterKind kind, std::size_t k);

EffectiveFilter bank_effective(const FilterBank& bank);
Matrix apply_bank(const FilterBank& bank, const SparseSymMatrix& atilde, const Matrix& h);

}  // namespace autogcn
