#include "autogcn/graph.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>

#include "autogcn/error.hpp"

namespace autogcn {

SparseSymMatrix::SparseSymMatrix(std::size_t n, std::vector<std::size_t> row_ptr,
                                 std::vector<std::size_t> col_idx, std::vector<double> vals)
    : n_(n), row_ptr_(std::move(row_ptr)), col_idx_(std::move(col_idx)), vals_(std::move(vals)) {
    if (row_ptr_.size() != n_ + 1 || row_ptr_.front() != 0 || row_ptr_.back() != col_idx_.size()) {
        throw input_error("SparseSymMatrix: malformed row_ptr");
    }
    if (vals_.size() != col_idx_.size()) {
        throw input_error("SparseSymMatrix: vals and col_idx differ in length");
    }
    for (std::size_t i = 0; i < n_; ++i) {
        if (row_ptr_[i] > row_ptr_[i + 1]) {
            throw input_error("SparseSymMatrix: row_ptr not monotone");
        }
        for (std::size_t k = row_ptr_[i]; k < row_ptr_[i + 1]; ++k) {
            if (col_idx_[k] >= n_) {
                throw input_error("SparseSymMatrix: column index out of range");
            }
            if (k > row_ptr_[i] && col_idx_[k] <= col_idx_[k - 1]) {
                throw input_error("SparseSymMatrix: columns not strictly increasing in row " +
                                  std::to_string(i));
            }
        }
    }
    for (std::size_t i = 0; i < n_; ++i) {
        for (std::size_t k = row_ptr_[i]; k < row_ptr_[i + 1]; ++k) {
            const std::size_t j = col_idx_[k];
            const auto first = col_idx_.begin() + static_cast<std::ptrdiff_t>(row_ptr_[j]);
            const auto last = col_idx_.begin() + static_cast<std::ptrdiff_t>(row_ptr_[j + 1]);
            const auto it = std::lower_bound(first, last, i);
            if (it == last || *it != i ||
                vals_[static_cast<std::size_t>(it - col_idx_.begin())] != vals_[k]) {
                throw input_error("SparseSymMatrix: not symmetric at (" + std::to_string(i) + "," +
                                  std::to_string(j) + ")");
            }
        }
    }
}

SparseSymMatrix SparseSymMatrix::from_upper(std::size_t n, std::vector<Entry> upper) {
    std::vector<Entry> all;
    all.reserve(2 * upper.size());
    for (const auto& e : upper) {
        if (e.row >= n || e.col >= n) {
            throw input_error("SparseSymMatrix::from_upper: index out of range");
        }
        if (e.row > e.col) {
            throw input_error("SparseSymMatrix::from_upper: entry below the diagonal");
        }
        all.push_back(e);
        if (e.row != e.col) {
            all.push_back({e.col, e.row, e.value});
        }
    }
    std::sort(all.begin(), all.end(), [](const Entry& a, const Entry& b) {
        return a.row != b.row ? a.row < b.row : a.col < b.col;
    });
    std::vector<std::size_t> row_ptr(n + 1, 0);
    std::vector<std::size_t> col_idx;
    std::vector<double> vals;
    col_idx.reserve(all.size());
    vals.reserve(all.size());
    for (std::size_t k = 0; k < all.size(); ++k) {
        if (k > 0 && all[k].row == all[k - 1].row && all[k].col == all[k - 1].col) {
            throw input_error("SparseSymMatrix::from_upper: duplicate entry");
        }
        ++row_ptr[all[k].row + 1];
        col_idx.push_back(all[k].col);
        vals.push_back(all[k].value);
    }
    for (std::size_t i = 0; i < n; ++i) {
        row_ptr[i + 1] += row_ptr[i];
    }
    return SparseSymMatrix(n, std::move(row_ptr), std::move(col_idx), std::move(vals));
}

double SparseSymMatrix::at(std::size_t i, std::size_t j) const {
    const auto first = col_idx_.begin() + static_cast<std::ptrdiff_t>(row_ptr_[i]);
    const auto last = col_idx_.begin() + static_cast<std::ptrdiff_t>(row_ptr_[i + 1]);
    const auto it = std::lower_bound(first, last, j);
    if (it == last || *it != j) {
        return 0.0;
    }
    return vals_[static_cast<std::size_t>(it - col_idx_.begin())];
}

double SparseSymMatrix::row_sum(std::size_t i) const {
    double s = 0.0;
    for (std::size_t k = row_ptr_[i]; k < row_ptr_[i + 1]; ++k) {
        s += vals_[k];
    }
    return s;
}

Matrix SparseSymMatrix::to_dense() const {
    Matrix d(n_, n_);
    for (std::size_t i = 0; i < n_; ++i) {
        for (std::size_t k = row_ptr_[i]; k < row_ptr_[i + 1]; ++k) {
            d(i, col_idx_[k]) = vals_[k];
        }
    }
    return d;
}

Graph build_graph(const std::vector<Edge>& edges, std::size_t n, Matrix features) {
    if (features.rows() != n) {
        throw input_error("build_graph: feature matrix has " + std::to_string(features.rows()) +
                          " rows, expected " + std::to_string(n));
    }
    std::vector<Edge> canon;
    canon.reserve(edges.size());
    for (const auto& [u, v] : edges) {
        if (u >= n || v >= n) {
            throw input_error("build_graph: edge (" + std::to_string(u) + "," + std::to_string(v) +
                              ") out of range for n=" + std::to_string(n));
        }
        if (u != v) {
            canon.emplace_back(std::min(u, v), std::max(u, v));
        }
    }
    std::sort(canon.begin(), canon.end());
    canon.erase(std::unique(canon.begin(), canon.end()), canon.end());

    std::vector<SparseSymMatrix::Entry> upper;
    upper.reserve(canon.size());
    for (const auto& [u, v] : canon) {
        upper.push_back({u, v, 1.0});
    }
    Graph g;
    g.adjacency = SparseSymMatrix::from_upper(n, std::move(upper));
    g.features = std::move(features);
    g.degrees.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        g.degrees[i] = g.adjacency.row_sum(i);
    }
    return g;
}

namespace {

std::vector<double> inv_sqrt(const std::vector<double>& d, double shift) {
    std::vector<double> out(d.size());
    for (std::size_t i = 0; i < d.size(); ++i) {
        const double v = d[i] + shift;
        out[i] = v > 0.0 ? 1.0 / std::sqrt(v) : 0.0;
    }
    return out;
}

// Scales A (optionally + I) symmetrically by s on both sides. The upper
// triangle is computed once and mirrored, so symmetry is exact.
SparseSymMatrix scaled(const SparseSymMatrix& a, const std::vector<double>& s, bool add_identity) {
    std::vector<SparseSymMatrix::Entry> upper;
    upper.reserve(a.nnz() / 2 + a.n());
    for (std::size_t i = 0; i < a.n(); ++i) {
        if (add_identity) {
            upper.push_back({i, i, s[i] * s[i]});
        }
        for (std::size_t k = a.row_ptr()[i]; k < a.row_ptr()[i + 1]; ++k) {
            const std::size_t j = a.col_idx()[k];
            if (j < i || s[i] == 0.0 || s[j] == 0.0) {
                continue;
            }
            upper.push_back({i, j, a.vals()[k] * s[i] * s[j]});
        }
    }
    return SparseSymMatrix::from_upper(a.n(), std::move(upper));
}

}  // namespace

SparseSymMatrix normalized_adjacency(const Graph& g) {
    return scaled(g.adjacency, inv_sqrt(g.degrees, 0.0), false);
}

SparseSymMatrix renormalized_adjacency(const Graph& g) {
    return scaled(g.adjacency, inv_sqrt(g.degrees, 1.0), true);
}

SparseSymMatrix laplacian(const Graph& g) {
    const auto s = inv_sqrt(g.degrees, 0.0);
    std::vector<SparseSymMatrix::Entry> upper;
    upper.reserve(g.adjacency.nnz() / 2 + g.num_nodes());
    const auto& a = g.adjacency;
    for (std::size_t i = 0; i < a.n(); ++i) {
        upper.push_back({i, i, 1.0});
        for (std::size_t k = a.row_ptr()[i]; k < a.row_ptr()[i + 1]; ++k) {
            const std::size_t j = a.col_idx()[k];
            if (j <= i || s[i] == 0.0 || s[j] == 0.0) {
                continue;
            }
            upper.push_back({i, j, -(a.vals()[k] * s[i] * s[j])});
        }
    }
    return SparseSymMatrix::from_upper(a.n(), std::move(upper));
}

Matrix spmm(const SparseSymMatrix& m, const Matrix& h) {
    if (m.n() != h.rows()) {
        throw input_error("spmm: operator is " + std::to_string(m.n()) + "x" +
                          std::to_string(m.n()) + " but dense operand is " + h.shape_str());
    }
    const std::size_t d = h.cols();
    Matrix out(h.rows(), d);
    const auto& rp = m.row_ptr();
    const auto& ci = m.col_idx();
    const auto& vs = m.vals();
    for (std::size_t i = 0; i < m.n(); ++i) {
        double* o = out.data().data() + i * d;
        for (std::size_t k = rp[i]; k < rp[i + 1]; ++k) {
            const double v = vs[k];
            const double* hr = h.data().data() + ci[k] * d;
            for (std::size_t c = 0; c < d; ++c) {
                o[c] += v * hr[c];
            }
        }
    }
    return out;
}

std::vector<Edge> edge_list(const SparseSymMatrix& adjacency) {
    std::vector<Edge> out;
    out.reserve(adjacency.nnz() / 2);
    for (std::size_t i = 0; i < adjacency.n(); ++i) {
        for (std::size_t k = adjacency.row_ptr()[i]; k < adjacency.row_ptr()[i + 1]; ++k) {
            if (adjacency.col_idx()[k] > i) {
                out.emplace_back(i, adjacency.col_idx()[k]);
            }
        }
    }
    return out;
}

std::vector<Edge> parse_edge_list(std::istream& in) {
    std::vector<Edge> edges;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const auto first = line.find_first_not_of(" \t\r");
        if (first == std::string::npos || line[first] == '#') {
            continue;
        }
        std::istringstream ls(line);
        long long u = -1;
        long long v = -1;
        if (!(ls >> u >> v) || u < 0 || v < 0) {
            throw input_error("edge list line " + std::to_string(line_no) +
                              ": expected two nonnegative integers");
        }
        std::string extra;
        if (ls >> extra) {
            throw input_error("edge list line " + std::to_string(line_no) +
                              ": unexpected third column (weighted edges are not supported)");
        }
        edges.emplace_back(static_cast<std::size_t>(u), static_cast<std::size_t>(v));
    }
    return edges;
}

std::vector<Edge> read_edge_list(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw input_error("cannot open edge list " + path.string());
    }
    return parse_edge_list(in);
}

void write_edge_list(std::ostream& out, const std::vector<Edge>& edges) {
    for (const auto& [u, v] : edges) {
        out << u << ' ' << v << '\n';
    }
}

}  // namespace autogcn
