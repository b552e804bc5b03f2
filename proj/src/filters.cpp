#include "autogcn/filters.hpp"

#include <algorithm>
#include <cmath>

#include "autogcn/error.hpp"

namespace autogcn {

std::string_view to_string(FilterKind kind) {
    switch (kind) {
        case FilterKind::low:
            return "low";
        case FilterKind::high:
            return "high";
        case FilterKind::mid:
            return "mid";
    }
    return "?";
}

FilterKind parse_filter_kind(std::string_view name) {
    if (name == "low") {
        return FilterKind::low;
    }
    if (name == "high") {
        return FilterKind::high;
    }
    if (name == "mid") {
        return FilterKind::mid;
    }
    throw parameter_error("unknown filter kind '" + std::string(name) + "'");
}

void check_admissible(FilterKind kind, double p, double a) {
    if (!(p > 0.0) || !std::isfinite(p)) {
        throw parameter_error("filter magnitude p must be positive and finite, got " +
                              std::to_string(p));
    }
    const bool ok = kind == FilterKind::mid ? (a > 0.0 && a <= 1.0) : (a > 0.0 && a < 1.0);
    if (!ok) {
        throw parameter_error(std::string(to_string(kind)) + " filter bandwidth out of range: a=" +
                              std::to_string(a));
    }
}

std::function<double(double)> filter_profile(FilterKind kind, double p, double a) {
    switch (kind) {
        case FilterKind::low:
            return [p, a](double l) { return p * (1.0 - a * l); };
        case FilterKind::high:
            return [p, a](double l) { return p * (a * l + 1.0 - 2.0 * a); };
        case FilterKind::mid:
            return [p, a](double l) { return p * ((l - 1.0) * (l - 1.0) - a); };
    }
    throw parameter_error("unknown filter kind");
}

double filter_value(FilterKind kind, double p, double a, double lambda) {
    check_admissible(kind, p, a);
    return filter_profile(kind, p, a)(lambda);
}

Matrix apply_kernel(FilterKind kind, double p, double a, const SparseSymMatrix& atilde,
                    const Matrix& h) {
    check_admissible(kind, p, a);
    const Matrix ah = spmm(atilde, h);
    Matrix out(h.rows(), h.cols());
    auto& o = out.data();
    const auto& x = h.data();
    switch (kind) {
        case FilterKind::low:
            for (std::size_t i = 0; i < o.size(); ++i) {
                o[i] = p * (a * ah.data()[i] + (1.0 - a) * x[i]);
            }
            break;
        case FilterKind::high:
            for (std::size_t i = 0; i < o.size(); ++i) {
                o[i] = p * (-a * ah.data()[i] + (1.0 - a) * x[i]);
            }
            break;
        case FilterKind::mid: {
            const Matrix a2h = spmm(atilde, ah);
            for (std::size_t i = 0; i < o.size(); ++i) {
                o[i] = p * (a2h.data()[i] - a * x[i]);
            }
            break;
        }
    }
    return out;
}

double softplus(double x) {
    return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

double softplus_inverse(double y) {
    if (!(y > 0.0)) {
        throw parameter_error("softplus_inverse: argument must be positive");
    }
    return y > 30.0 ? y + std::log(-std::expm1(-y)) : std::log(std::expm1(y));
}

std::vector<double> bank_grid(FilterKind kind, std::size_t k) {
    if (k == 0) {
        throw parameter_error("filter bank needs K >= 1");
    }
    std::vector<double> grid(k);
    const double eps = kGridEpsilon;
    if (kind == FilterKind::mid) {
        if (k == 1) {
            return {1.0};
        }
        for (std::size_t i = 0; i < k; ++i) {
            grid[i] = eps + static_cast<double>(i) * (1.0 - eps) / static_cast<double>(k - 1);
        }
        grid.back() = 1.0;
    } else {
        if (k == 1) {
            return {0.5};
        }
        for (std::size_t i = 0; i < k; ++i) {
            grid[i] = eps + static_cast<double>(i) * (1.0 - 2.0 * eps) / static_cast<double>(k - 1);
        }
    }
    return grid;
}

FilterBank::FilterBank(FilterKind kind, std::vector<double> a_grid, std::vector<double> theta)
    : kind_(kind), a_grid_(std::move(a_grid)), theta_(std::move(theta)) {
    if (a_grid_.empty() || a_grid_.size() != theta_.size()) {
        throw parameter_error("FilterBank: grid and theta must be non-empty and equally sized");
    }
    for (std::size_t i = 0; i < a_grid_.size(); ++i) {
        check_admissible(kind_, 1.0, a_grid_[i]);
        if (i > 0 && !(a_grid_[i] > a_grid_[i - 1])) {
            throw parameter_error("FilterBank: grid must be strictly increasing");
        }
    }
}

std::vector<double> FilterBank::weights() const {
    std::vector<double> p(theta_.size());
    std::transform(theta_.begin(), theta_.end(), p.begin(), softplus);
    return p;
}

EffectiveFilter FilterBank::effective() const {
    const auto p = weights();
    double total = 0.0;
    double moment = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) {
        total += p[i];
        moment += p[i] * a_grid_[i];
    }
    // The convex combination can drift one ulp past the grid ends.
    const double a = std::clamp(moment / total, a_grid_.front(), a_grid_.back());
    return {total, a};
}

Matrix FilterBank::apply(const SparseSymMatrix& atilde, const Matrix& h) const {
    const auto eff = effective();
    return apply_kernel(kind_, eff.p, eff.a, atilde, h);
}

FilterBank make_bank(FilterKind kind, std::size_t k) {
    auto grid = bank_grid(kind, k);
    std::vector<double> theta(k, softplus_inverse(1.0 / static_cast<double>(k)));
    return FilterBank(kind, std::move(grid), std::move(theta));
}

EffectiveFilter bank_effective(const FilterBank& bank) { return bank.effective(); }

Matrix apply_bank(const FilterBank& bank, const SparseSymMatrix& atilde, const Matrix& h) {
    return bank.apply(atilde, h);
}

}  // namespace autogcn
