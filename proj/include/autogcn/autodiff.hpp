#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "autogcn/graph.hpp"
#include "autogcn/matrix.hpp"
#include "autogcn/rng.hpp"

namespace autogcn {

/// A named trainable tensor that outlives individual tapes.
struct Parameter {
    std::string name;
    Matrix value;
    Matrix grad;

    Parameter() = default;
    Parameter(std::string n, Matrix v)
        : name(std::move(n)), value(std::move(v)), grad(value.rows(), value.cols()) {}

    void zero_grad() { grad = Matrix(value.rows(), value.cols()); }
};

class Tape;

/// Handle to a node on a tape. Cheap to copy; valid while the tape lives.
class Value {
public:
    Value() = default;

    const Matrix& data() const;
    /// Gradient after backward(); an all-zero matrix if nothing flowed here.
    Matrix grad() const;
    std::size_t rows() const { return data().rows(); }
    std::size_t cols() const { return data().cols(); }
    double scalar() const;

    Tape* tape() const noexcept { return tape_; }
    std::size_t id() const noexcept { return id_; }
    bool requires_grad() const;

private:
    friend class Tape;
    Value(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

    Tape* tape_ = nullptr;
    std::size_t id_ = 0;
};

/// Append-only record of an eager computation.
///
/// Every primitive computes its value immediately and registers a closure
/// that, given the node's incoming gradient, accumulates into its parents.
/// Node ids increase with creation order, so the sequence is topological and
/// backward() simply walks it in reverse.
class Tape {
public:
    using BackwardFn = std::function<void(Tape&, const Matrix& grad)>;

    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    Value constant(Matrix m);
    /// Leaf whose gradient stays on the tape.
    Value variable(Matrix m);
    /// Leaf bound to a parameter; backward adds into param.grad.
    Value parameter(Parameter& param);

    /// Records a derived node. `backward` is only kept when some parent needs a gradient.
    Value record(Matrix data, std::initializer_list<Value> parents, BackwardFn backward);

    /// Reverse sweep from a 1x1 loss. Tape-held gradients are reset first;
    /// parameter gradients accumulate.
    void backward(const Value& loss);

    /// Adds g into the gradient slot of v (no-op for constants).
    void accumulate(const Value& v, const Matrix& g);

    std::size_t size() const noexcept { return nodes_.size(); }
    const Matrix& data(std::size_t id) const { return nodes_[id].data; }
    Matrix grad(std::size_t id) const;
    bool requires_grad(std::size_t id) const { return nodes_[id].requires_grad; }

private:
    struct Node {
        Matrix data;
        Matrix grad;
        bool requires_grad = false;
        Parameter* param = nullptr;
        BackwardFn backward;
    };

    Value push(Node node);

    std::vector<Node> nodes_;
};

namespace ad {

Value matmul(const Value& a, const Value& b);
/// m * a for a constant symmetric operator; m must outlive the tape.
Value spmm_const(const SparseSymMatrix& m, const Value& a);
Value add(const Value& a, const Value& b);
Value sub(const Value& a, const Value& b);
Value hadamard(const Value& a, const Value& b);
/// s * a where s is a 1x1 value.
Value scale(const Value& a, const Value& s);
Value scale_const(const Value& a, double s);
/// Adds a 1xd row to every row of a.
Value add_row(const Value& a, const Value& row);
/// Multiplies row i of a by the constant factors[i].
Value scale_rows_const(const Value& a, std::span<const double> factors);
Value relu(const Value& a);
Value sigmoid(const Value& a);
Value softplus(const Value& a);
/// Inverted dropout: kept entries are divided by (1 - rate). rate 0 returns a unchanged.
Value dropout(const Value& a, double rate, Rng& rng);
/// 1xd column means.
Value mean_rows(const Value& a);
/// Means over consecutive row segments of the given sizes (B x d).
Value segment_mean(const Value& a, std::span<const std::size_t> sizes);
/// Gathers rows; repeated indices accumulate in backward.
Value row_select(const Value& a, std::span<const std::size_t> idx);
/// Single entry as a 1x1 value.
Value element(const Value& a, std::size_t r, std::size_t c);
/// Per-column standardization over rows, then gain * x + bias (gain, bias are 1xd).
Value affine_norm(const Value& a, const Value& gain, const Value& bias, double eps = 1e-5);

/// Mean over masked rows of -log softmax(logits)[label].
Value softmax_cross_entropy(const Value& logits, std::span<const std::size_t> labels,
                            std::span<const std::uint8_t> mask);
/// Mean |pred - target| for an n x 1 prediction; subgradient 0 at ties.
Value mae_loss(const Value& pred, std::span<const double> target);
/// Sum of squares of a parameter value times coeff / 2.
Value l2_penalty(const Value& a, double coeff);

}  // namespace ad

/// Denominator floor of the gradient check. Central differences with step 1e-5
/// resolve derivatives to about 1e-11, so smaller gradients are compared on an
/// absolute scale.
inline constexpr double kGradCheckFloor = 1e-6;

/// Central-difference check of every coordinate of `params` against the
/// reverse-mode gradient of `program`. Returns the largest relative error
/// |g_ad - g_fd| / max(kGradCheckFloor, |g_ad| + |g_fd|). `program` must be
/// deterministic.
double grad_check(const std::function<Value(Tape&)>& program, std::span<Parameter* const> params,
                  double step);

}  // namespace autogcn
