#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <utility>
#include <vector>

#include "autogcn/matrix.hpp"

namespace autogcn {

using Edge = std::pair<std::size_t, std::size_t>;

/// Symmetric sparse matrix in CSR form.
///
/// Construction validates the layout: row_ptr starts at 0, is monotone and
/// ends at nnz; column indices are strictly increasing within each row; and
/// every stored (i,j) has a stored (j,i) with a bit-identical value.
/// Instances are immutable afterwards.
class SparseSymMatrix {
public:
    SparseSymMatrix() = default;
    SparseSymMatrix(std::size_t n, std::vector<std::size_t> row_ptr,
                    std::vector<std::size_t> col_idx, std::vector<double> vals);

    struct Entry {
        std::size_t row;
        std::size_t col;
        double value;
    };

    /// Builds from entries given for the upper triangle (row <= col); the
    /// mirror image is generated. Duplicate positions are an error.
    static SparseSymMatrix from_upper(std::size_t n, std::vector<Entry> upper);

    std::size_t n() const noexcept { return n_; }
    std::size_t nnz() const noexcept { return col_idx_.size(); }
    const std::vector<std::size_t>& row_ptr() const noexcept { return row_ptr_; }
    const std::vector<std::size_t>& col_idx() const noexcept { return col_idx_; }
    const std::vector<double>& vals() const noexcept { return vals_; }

    /// Stored value at (i,j), 0 when absent.
    double at(std::size_t i, std::size_t j) const;
    double row_sum(std::size_t i) const;
    Matrix to_dense() const;

private:
    std::size_t n_ = 0;
    std::vector<std::size_t> row_ptr_{0};
    std::vector<std::size_t> col_idx_;
    std::vector<double> vals_;
};

/// Undirected attributed graph with unit edge weights.
struct Graph {
    SparseSymMatrix adjacency;
    Matrix features;
    std::vector<double> degrees;

    std::size_t num_nodes() const noexcept { return adjacency.n(); }
    /// Undirected edge count.
    std::size_t num_edges() const noexcept { return adjacency.nnz() / 2; }
};

/// Symmetrizes and deduplicates the edge list. Self-loops are dropped.
Graph build_graph(const std::vector<Edge>& edges, std::size_t n, Matrix features);

/// Ã = D^{-1/2} A D^{-1/2}; rows of isolated nodes are empty.
SparseSymMatrix normalized_adjacency(const Graph& g);
/// Â = D̃^{-1/2} (A + I) D̃^{-1/2} with D̃ = D + I.
SparseSymMatrix renormalized_adjacency(const Graph& g);
/// L = I - Ã.
SparseSymMatrix laplacian(const Graph& g);

/// Sparse-dense product m * h, cost O(nnz(m) * cols(h)).
Matrix spmm(const SparseSymMatrix& m, const Matrix& h);

/// Undirected edge list of a graph (u < v), in CSR order.
std::vector<Edge> edge_list(const SparseSymMatrix& adjacency);

/// Edge-list text: one "u v" pair per line, '#' comments and blank lines ignored.
std::vector<Edge> parse_edge_list(std::istream& in);
std::vector<Edge> read_edge_list(const std::filesystem::path& path);
void write_edge_list(std::ostream& out, const std::vector<Edge>& edges);

}  // namespace autogcn
