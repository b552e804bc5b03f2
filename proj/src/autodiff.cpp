#include "autogcn/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "autogcn/error.hpp"
#include "autogcn/filters.hpp"

namespace autogcn {

const Matrix& Value::data() const { return tape_->data(id_); }
Matrix Value::grad() const { return tape_->grad(id_); }
bool Value::requires_grad() const { return tape_->requires_grad(id_); }

double Value::scalar() const {
    const Matrix& d = data();
    if (d.rows() != 1 || d.cols() != 1) {
        throw input_error("Value::scalar on a " + d.shape_str() + " value");
    }
    return d(0, 0);
}

Value Tape::push(Node node) {
    nodes_.push_back(std::move(node));
    return Value(this, nodes_.size() - 1);
}

Value Tape::constant(Matrix m) {
    Node n;
    n.data = std::move(m);
    return push(std::move(n));
}

Value Tape::variable(Matrix m) {
    Node n;
    n.data = std::move(m);
    n.requires_grad = true;
    return push(std::move(n));
}

Value Tape::parameter(Parameter& param) {
    Node n;
    n.data = param.value;
    n.requires_grad = true;
    n.param = &param;
    return push(std::move(n));
}

Value Tape::record(Matrix data, std::initializer_list<Value> parents, BackwardFn backward) {
    Node n;
    n.data = std::move(data);
    for (const auto& p : parents) {
        if (p.tape() != this) {
            throw input_error("Tape::record: parent belongs to a different tape");
        }
        n.requires_grad = n.requires_grad || requires_grad(p.id());
    }
    if (n.requires_grad) {
        n.backward = std::move(backward);
    }
    return push(std::move(n));
}

Matrix Tape::grad(std::size_t id) const {
    const Node& n = nodes_[id];
    if (n.grad.empty() && !n.data.empty()) {
        return Matrix(n.data.rows(), n.data.cols());
    }
    return n.grad;
}

void Tape::accumulate(const Value& v, const Matrix& g) {
    Node& n = nodes_[v.id()];
    if (!n.requires_grad) {
        return;
    }
    if (n.grad.empty()) {
        n.grad = Matrix(n.data.rows(), n.data.cols());
    }
    n.grad += g;
}

void Tape::backward(const Value& loss) {
    if (loss.tape() != this) {
        throw input_error("backward: loss is not on this tape");
    }
    const Matrix& l = nodes_[loss.id()].data;
    if (l.rows() != 1 || l.cols() != 1) {
        throw input_error("backward: loss must be 1x1, got " + l.shape_str());
    }
    for (auto& n : nodes_) {
        n.grad = Matrix();
    }
    if (!nodes_[loss.id()].requires_grad) {
        return;
    }
    nodes_[loss.id()].grad = Matrix(1, 1, 1.0);
    for (std::size_t id = loss.id() + 1; id-- > 0;) {
        Node& n = nodes_[id];
        if (!n.requires_grad || n.grad.empty()) {
            continue;
        }
        if (n.param != nullptr) {
            n.param->grad += n.grad;
        } else if (n.backward) {
            // Parents have smaller ids, so n.grad is final here.
            n.backward(*this, n.grad);
        }
    }
}

namespace ad {

namespace {

void require_same_tape(const Value& a, const Value& b, const char* what) {
    if (a.tape() != b.tape() || a.tape() == nullptr) {
        throw input_error(std::string(what) + ": operands on different tapes");
    }
}

template <typename F>
Matrix map(const Matrix& a, F f) {
    Matrix out(a.rows(), a.cols());
    for (std::size_t i = 0; i < a.size(); ++i) {
        out.data()[i] = f(a.data()[i]);
    }
    return out;
}

double sigmoid_scalar(double x) {
    if (x >= 0.0) {
        return 1.0 / (1.0 + std::exp(-x));
    }
    const double e = std::exp(x);
    return e / (1.0 + e);
}

}  // namespace

Value matmul(const Value& a, const Value& b) {
    require_same_tape(a, b, "matmul");
    Tape& t = *a.tape();
    return t.record(autogcn::matmul(a.data(), b.data()), {a, b},
                    [a, b](Tape& tape, const Matrix& g) {
                        if (a.requires_grad()) {
                            tape.accumulate(a, matmul_nt(g, b.data()));
                        }
                        if (b.requires_grad()) {
                            tape.accumulate(b, matmul_tn(a.data(), g));
                        }
                    });
}

Value spmm_const(const SparseSymMatrix& m, const Value& a) {
    Tape& t = *a.tape();
    const SparseSymMatrix* mp = &m;
    return t.record(spmm(m, a.data()), {a}, [mp, a](Tape& tape, const Matrix& g) {
        tape.accumulate(a, spmm(*mp, g));
    });
}

Value add(const Value& a, const Value& b) {
    require_same_tape(a, b, "add");
    require_same_shape(a.data(), b.data(), "add");
    return a.tape()->record(a.data() + b.data(), {a, b}, [a, b](Tape& tape, const Matrix& g) {
        tape.accumulate(a, g);
        tape.accumulate(b, g);
    });
}

Value sub(const Value& a, const Value& b) {
    require_same_tape(a, b, "sub");
    require_same_shape(a.data(), b.data(), "sub");
    return a.tape()->record(a.data() - b.data(), {a, b}, [a, b](Tape& tape, const Matrix& g) {
        tape.accumulate(a, g);
        if (b.requires_grad()) {
            tape.accumulate(b, g * -1.0);
        }
    });
}

Value hadamard(const Value& a, const Value& b) {
    require_same_tape(a, b, "hadamard");
    return a.tape()->record(autogcn::hadamard(a.data(), b.data()), {a, b},
                            [a, b](Tape& tape, const Matrix& g) {
                                if (a.requires_grad()) {
                                    tape.accumulate(a, autogcn::hadamard(g, b.data()));
                                }
                                if (b.requires_grad()) {
                                    tape.accumulate(b, autogcn::hadamard(g, a.data()));
                                }
                            });
}

Value scale(const Value& a, const Value& s) {
    require_same_tape(a, s, "scale");
    const double sv = s.scalar();
    return a.tape()->record(a.data() * sv, {a, s}, [a, s, sv](Tape& tape, const Matrix& g) {
        if (a.requires_grad()) {
            tape.accumulate(a, g * sv);
        }
        if (s.requires_grad()) {
            double dot = 0.0;
            for (std::size_t i = 0; i < g.size(); ++i) {
                dot += g.data()[i] * a.data().data()[i];
            }
            tape.accumulate(s, Matrix(1, 1, dot));
        }
    });
}

Value scale_const(const Value& a, double s) {
    return a.tape()->record(a.data() * s, {a},
                            [a, s](Tape& tape, const Matrix& g) { tape.accumulate(a, g * s); });
}

Value add_row(const Value& a, const Value& row) {
    require_same_tape(a, row, "add_row");
    if (row.rows() != 1 || row.cols() != a.cols()) {
        throw input_error("add_row: row is " + row.data().shape_str() + ", expected 1x" +
                          std::to_string(a.cols()));
    }
    Matrix out = a.data();
    for (std::size_t i = 0; i < out.rows(); ++i) {
        for (std::size_t j = 0; j < out.cols(); ++j) {
            out(i, j) += row.data()(0, j);
        }
    }
    return a.tape()->record(std::move(out), {a, row}, [a, row](Tape& tape, const Matrix& g) {
        tape.accumulate(a, g);
        if (row.requires_grad()) {
            Matrix gr(1, g.cols());
            for (std::size_t i = 0; i < g.rows(); ++i) {
                for (std::size_t j = 0; j < g.cols(); ++j) {
                    gr(0, j) += g(i, j);
                }
            }
            tape.accumulate(row, gr);
        }
    });
}

Value scale_rows_const(const Value& a, std::span<const double> factors) {
    if (factors.size() != a.rows()) {
        throw input_error("scale_rows_const: factor count does not match row count");
    }
    std::vector<double> f(factors.begin(), factors.end());
    Matrix out = a.data();
    for (std::size_t i = 0; i < out.rows(); ++i) {
        for (double& v : out.row(i)) {
            v *= f[i];
        }
    }
    return a.tape()->record(std::move(out), {a}, [a, f = std::move(f)](Tape& tape, const Matrix& g) {
        Matrix ga = g;
        for (std::size_t i = 0; i < ga.rows(); ++i) {
            for (double& v : ga.row(i)) {
                v *= f[i];
            }
        }
        tape.accumulate(a, ga);
    });
}

Value relu(const Value& a) {
    return a.tape()->record(map(a.data(), [](double x) { return x > 0.0 ? x : 0.0; }), {a},
                            [a](Tape& tape, const Matrix& g) {
                                Matrix ga = g;
                                for (std::size_t i = 0; i < ga.size(); ++i) {
                                    if (!(a.data().data()[i] > 0.0)) {
                                        ga.data()[i] = 0.0;
                                    }
                                }
                                tape.accumulate(a, ga);
                            });
}

Value sigmoid(const Value& a) {
    Matrix y = map(a.data(), sigmoid_scalar);
    Matrix out = y;
    return a.tape()->record(std::move(out), {a}, [a, y = std::move(y)](Tape& tape, const Matrix& g) {
        Matrix ga = g;
        for (std::size_t i = 0; i < ga.size(); ++i) {
            ga.data()[i] *= y.data()[i] * (1.0 - y.data()[i]);
        }
        tape.accumulate(a, ga);
    });
}

Value softplus(const Value& a) {
    return a.tape()->record(map(a.data(), autogcn::softplus), {a},
                            [a](Tape& tape, const Matrix& g) {
                                Matrix ga = g;
                                for (std::size_t i = 0; i < ga.size(); ++i) {
                                    ga.data()[i] *= sigmoid_scalar(a.data().data()[i]);
                                }
                                tape.accumulate(a, ga);
                            });
}

Value dropout(const Value& a, double rate, Rng& rng) {
    if (!(rate >= 0.0 && rate < 1.0)) {
        throw input_error("dropout: rate must lie in [0,1)");
    }
    if (rate == 0.0) {
        return a;
    }
    const double keep_scale = 1.0 / (1.0 - rate);
    Matrix mask(a.rows(), a.cols());
    for (double& m : mask.data()) {
        m = rng.uniform() < rate ? 0.0 : keep_scale;
    }
    Matrix out = autogcn::hadamard(a.data(), mask);
    return a.tape()->record(std::move(out), {a},
                            [a, mask = std::move(mask)](Tape& tape, const Matrix& g) {
                                tape.accumulate(a, autogcn::hadamard(g, mask));
                            });
}

Value mean_rows(const Value& a) {
    const std::size_t sizes[] = {a.rows()};
    return segment_mean(a, sizes);
}

Value segment_mean(const Value& a, std::span<const std::size_t> sizes) {
    const std::size_t total = std::accumulate(sizes.begin(), sizes.end(), std::size_t{0});
    if (total != a.rows()) {
        throw input_error("segment_mean: segment sizes sum to " + std::to_string(total) +
                          " but value has " + std::to_string(a.rows()) + " rows");
    }
    std::vector<std::size_t> seg(sizes.begin(), sizes.end());
    if (std::any_of(seg.begin(), seg.end(), [](std::size_t s) { return s == 0; })) {
        throw input_error("segment_mean: empty segment");
    }
    const std::size_t d = a.cols();
    Matrix out(seg.size(), d);
    std::size_t r = 0;
    for (std::size_t b = 0; b < seg.size(); ++b) {
        for (std::size_t k = 0; k < seg[b]; ++k, ++r) {
            for (std::size_t j = 0; j < d; ++j) {
                out(b, j) += a.data()(r, j);
            }
        }
        for (std::size_t j = 0; j < d; ++j) {
            out(b, j) /= static_cast<double>(seg[b]);
        }
    }
    return a.tape()->record(std::move(out), {a}, [a, seg = std::move(seg)](Tape& tape, const Matrix& g) {
        Matrix ga(a.rows(), a.cols());
        std::size_t row = 0;
        for (std::size_t b = 0; b < seg.size(); ++b) {
            const double inv = 1.0 / static_cast<double>(seg[b]);
            for (std::size_t k = 0; k < seg[b]; ++k, ++row) {
                for (std::size_t j = 0; j < ga.cols(); ++j) {
                    ga(row, j) = g(b, j) * inv;
                }
            }
        }
        tape.accumulate(a, ga);
    });
}

Value row_select(const Value& a, std::span<const std::size_t> idx) {
    std::vector<std::size_t> rows(idx.begin(), idx.end());
    Matrix out(rows.size(), a.cols());
    for (std::size_t i = 0; i < rows.size(); ++i) {
        if (rows[i] >= a.rows()) {
            throw input_error("row_select: index " + std::to_string(rows[i]) + " out of range");
        }
        std::copy(a.data().row(rows[i]).begin(), a.data().row(rows[i]).end(), out.row(i).begin());
    }
    return a.tape()->record(std::move(out), {a}, [a, rows = std::move(rows)](Tape& tape, const Matrix& g) {
        Matrix ga(a.rows(), a.cols());
        for (std::size_t i = 0; i < rows.size(); ++i) {
            for (std::size_t j = 0; j < ga.cols(); ++j) {
                ga(rows[i], j) += g(i, j);
            }
        }
        tape.accumulate(a, ga);
    });
}

Value element(const Value& a, std::size_t r, std::size_t c) {
    if (r >= a.rows() || c >= a.cols()) {
        throw input_error("element: index out of range");
    }
    return a.tape()->record(Matrix(1, 1, a.data()(r, c)), {a}, [a, r, c](Tape& tape, const Matrix& g) {
        Matrix ga(a.rows(), a.cols());
        ga(r, c) = g(0, 0);
        tape.accumulate(a, ga);
    });
}

Value affine_norm(const Value& a, const Value& gain, const Value& bias, double eps) {
    require_same_tape(a, gain, "affine_norm");
    require_same_tape(a, bias, "affine_norm");
    const std::size_t n = a.rows();
    const std::size_t d = a.cols();
    if (gain.rows() != 1 || gain.cols() != d || bias.rows() != 1 || bias.cols() != d) {
        throw input_error("affine_norm: gain and bias must be 1x" + std::to_string(d));
    }
    if (n == 0) {
        throw input_error("affine_norm: empty input");
    }
    Matrix xhat(n, d);
    std::vector<double> inv_std(d);
    for (std::size_t j = 0; j < d; ++j) {
        double mu = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            mu += a.data()(i, j);
        }
        mu /= static_cast<double>(n);
        double var = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            const double c = a.data()(i, j) - mu;
            var += c * c;
        }
        var /= static_cast<double>(n);
        inv_std[j] = 1.0 / std::sqrt(var + eps);
        for (std::size_t i = 0; i < n; ++i) {
            xhat(i, j) = (a.data()(i, j) - mu) * inv_std[j];
        }
    }
    Matrix out(n, d);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < d; ++j) {
            out(i, j) = gain.data()(0, j) * xhat(i, j) + bias.data()(0, j);
        }
    }
    return a.tape()->record(
        std::move(out), {a, gain, bias},
        [a, gain, bias, xhat = std::move(xhat), inv_std = std::move(inv_std)](Tape& tape,
                                                                              const Matrix& g) {
            const std::size_t rows = g.rows();
            const std::size_t cols = g.cols();
            const double nn = static_cast<double>(rows);
            Matrix ggain(1, cols);
            Matrix gbias(1, cols);
            Matrix ga(rows, cols);
            for (std::size_t j = 0; j < cols; ++j) {
                double sum_dx = 0.0;
                double sum_dx_x = 0.0;
                for (std::size_t i = 0; i < rows; ++i) {
                    ggain(0, j) += g(i, j) * xhat(i, j);
                    gbias(0, j) += g(i, j);
                    const double dx = g(i, j) * gain.data()(0, j);
                    sum_dx += dx;
                    sum_dx_x += dx * xhat(i, j);
                }
                for (std::size_t i = 0; i < rows; ++i) {
                    const double dx = g(i, j) * gain.data()(0, j);
                    ga(i, j) = inv_std[j] / nn * (nn * dx - sum_dx - xhat(i, j) * sum_dx_x);
                }
            }
            tape.accumulate(a, ga);
            tape.accumulate(gain, ggain);
            tape.accumulate(bias, gbias);
        });
}

Value softmax_cross_entropy(const Value& logits, std::span<const std::size_t> labels,
                            std::span<const std::uint8_t> mask) {
    const std::size_t n = logits.rows();
    const std::size_t c = logits.cols();
    if (labels.size() != n || mask.size() != n) {
        throw input_error("softmax_cross_entropy: labels/mask length must equal row count " +
                          std::to_string(n));
    }
    std::size_t count = 0;
    for (std::size_t i = 0; i < n; ++i) {
        if (mask[i] != 0) {
            ++count;
            if (labels[i] >= c) {
                throw input_error("softmax_cross_entropy: label " + std::to_string(labels[i]) +
                                  " out of range for " + std::to_string(c) + " classes");
            }
        }
    }
    if (count == 0) {
        throw input_error("softmax_cross_entropy: empty mask");
    }
    Matrix probs(n, c);
    double loss = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        if (mask[i] == 0) {
            continue;
        }
        const auto row = logits.data().row(i);
        const double mx = *std::max_element(row.begin(), row.end());
        double z = 0.0;
        for (std::size_t j = 0; j < c; ++j) {
            z += std::exp(row[j] - mx);
        }
        const double logz = std::log(z) + mx;
        for (std::size_t j = 0; j < c; ++j) {
            probs(i, j) = std::exp(row[j] - logz);
        }
        loss += logz - row[labels[i]];
    }
    const double inv = 1.0 / static_cast<double>(count);
    std::vector<std::size_t> lab(labels.begin(), labels.end());
    std::vector<std::uint8_t> msk(mask.begin(), mask.end());
    return logits.tape()->record(
        Matrix(1, 1, loss * inv), {logits},
        [logits, probs = std::move(probs), lab = std::move(lab), msk = std::move(msk), inv](
            Tape& tape, const Matrix& g) {
            Matrix gl(probs.rows(), probs.cols());
            const double s = g(0, 0) * inv;
            for (std::size_t i = 0; i < gl.rows(); ++i) {
                if (msk[i] == 0) {
                    continue;
                }
                for (std::size_t j = 0; j < gl.cols(); ++j) {
                    gl(i, j) = s * (probs(i, j) - (j == lab[i] ? 1.0 : 0.0));
                }
            }
            tape.accumulate(logits, gl);
        });
}

Value mae_loss(const Value& pred, std::span<const double> target) {
    if (pred.cols() != 1 || pred.rows() != target.size()) {
        throw input_error("mae_loss: prediction " + pred.data().shape_str() +
                          " does not match target length " + std::to_string(target.size()));
    }
    if (target.empty()) {
        throw input_error("mae_loss: empty target");
    }
    const double n = static_cast<double>(target.size());
    double loss = 0.0;
    std::vector<double> sign(target.size());
    for (std::size_t i = 0; i < target.size(); ++i) {
        const double r = pred.data()(i, 0) - target[i];
        loss += std::abs(r);
        sign[i] = r > 0.0 ? 1.0 : (r < 0.0 ? -1.0 : 0.0);
    }
    return pred.tape()->record(Matrix(1, 1, loss / n), {pred},
                               [pred, sign = std::move(sign), n](Tape& tape, const Matrix& g) {
                                   Matrix gp(sign.size(), 1);
                                   for (std::size_t i = 0; i < sign.size(); ++i) {
                                       gp(i, 0) = g(0, 0) * sign[i] / n;
                                   }
                                   tape.accumulate(pred, gp);
                               });
}

Value l2_penalty(const Value& a, double coeff) {
    double s = 0.0;
    for (double v : a.data().data()) {
        s += v * v;
    }
    return a.tape()->record(Matrix(1, 1, 0.5 * coeff * s), {a},
                            [a, coeff](Tape& tape, const Matrix& g) {
                                tape.accumulate(a, a.data() * (coeff * g(0, 0)));
                            });
}

}  // namespace ad

double grad_check(const std::function<Value(Tape&)>& program, std::span<Parameter* const> params,
                  double step) {
    for (Parameter* p : params) {
        p->zero_grad();
    }
    {
        Tape tape;
        const Value loss = program(tape);
        tape.backward(loss);
    }
    auto eval = [&]() {
        Tape tape;
        return program(tape).scalar();
    };
    double worst = 0.0;
    for (Parameter* p : params) {
        for (std::size_t i = 0; i < p->value.size(); ++i) {
            double& x = p->value.data()[i];
            const double saved = x;
            x = saved + step;
            const double fp = eval();
            x = saved - step;
            const double fm = eval();
            x = saved;
            const double fd = (fp - fm) / (2.0 * step);
            const double g = p->grad.data()[i];
            const double rel = std::abs(g - fd) / std::max(kGradCheckFloor, std::abs(g) + std::abs(fd));
            worst = std::max(worst, rel);
        }
    }
    return worst;
}

}  // namespace autogcn
