#include <doctest.h>

#include <cmath>
#include <sstream>

#include "autogcn/error.hpp"
#include "autogcn/graph.hpp"
#include "autogcn/rng.hpp"
#include "autogcn/spectral.hpp"
#include "autogcn/verify.hpp"

using namespace autogcn;

namespace {

Graph make(std::vector<Edge> edges, std::size_t n) { return build_graph(edges, n, Matrix(n, 0)); }

double symmetry_defect(const SparseSymMatrix& m) {
    const Matrix d = m.to_dense();
    return max_abs_diff(d, d.transpose());
}

}  // namespace

TEST_CASE("matrix arithmetic") {
    const Matrix a{{1, 2}, {3, 4}};
    const Matrix b{{0, 1}, {1, 0}};
    CHECK(matmul(a, b)(0, 0) == 2);
    CHECK(matmul(a, b)(1, 1) == 3);
    CHECK(max_abs_diff(matmul_tn(a, b), matmul(a.transpose(), b)) == 0);
    CHECK(max_abs_diff(matmul_nt(a, b), matmul(a, b.transpose())) == 0);
    CHECK(hadamard(a, b)(0, 1) == 2);
    CHECK(frobenius_norm(b) == doctest::Approx(std::sqrt(2.0)));
    CHECK_THROWS_AS(matmul(a, Matrix(3, 1)), input_error);
    CHECK_THROWS_AS(require_same_shape(a, Matrix(2, 3), "test"), input_error);
}

TEST_CASE("build_graph examples") {
    SUBCASE("single edge") {
        const Graph g = build_graph({{0, 1}}, 2, Matrix::identity(2));
        CHECK(max_abs_diff(g.adjacency.to_dense(), Matrix{{0, 1}, {1, 0}}) == 0);
        CHECK(g.degrees == std::vector<double>{1, 1});
    }
    SUBCASE("empty graph") {
        const Graph g = make({}, 3);
        CHECK(g.adjacency.nnz() == 0);
        CHECK(g.degrees == std::vector<double>{0, 0, 0});
    }
    SUBCASE("duplicates and reversed pairs collapse") {
        const Graph g = make({{0, 1}, {1, 0}, {0, 1}}, 2);
        CHECK(g.num_edges() == 1);
        CHECK(max_abs_diff(g.adjacency.to_dense(), Matrix{{0, 1}, {1, 0}}) == 0);
    }
    SUBCASE("errors") {
        CHECK_THROWS_AS(make({{0, 2}}, 2), input_error);
        CHECK_THROWS_AS(build_graph({}, 3, Matrix(2, 1)), input_error);
    }
}

TEST_CASE("CSR construction rejects asymmetric layouts") {
    CHECK_THROWS_AS(SparseSymMatrix(2, {0, 1, 1}, {1}, {1.0}), input_error);
    CHECK_THROWS_AS(SparseSymMatrix(2, {0, 1, 2}, {1, 0}, {1.0, 2.0}), input_error);
    CHECK_THROWS_AS(SparseSymMatrix(2, {0, 2, 2}, {1, 0}, {1.0, 1.0}), input_error);
    CHECK_NOTHROW(SparseSymMatrix(2, {0, 1, 2}, {1, 0}, {1.5, 1.5}));
}

TEST_CASE("normalized adjacency examples") {
    CHECK(max_abs_diff(normalized_adjacency(make({{0, 1}}, 2)).to_dense(), Matrix{{0, 1}, {1, 0}}) == 0);

    const SparseSymMatrix star = normalized_adjacency(make({{0, 1}, {0, 2}, {0, 3}}, 4));
    for (std::size_t j = 1; j < 4; ++j) {
        CHECK(star.at(0, j) == doctest::Approx(1 / std::sqrt(3.0)).epsilon(1e-15));
        CHECK(star.at(j, 0) == star.at(0, j));
    }
    const SparseSymMatrix tri = normalized_adjacency(make({{0, 1}, {1, 2}, {0, 2}}, 3));
    CHECK(tri.at(0, 1) == doctest::Approx(0.5));
    CHECK(tri.at(1, 2) == doctest::Approx(0.5));

    const SparseSymMatrix isolated = normalized_adjacency(make({{0, 1}}, 3));
    CHECK(isolated.row_sum(2) == 0);
}

TEST_CASE("renormalized adjacency examples") {
    CHECK(max_abs_diff(renormalized_adjacency(make({}, 1)).to_dense(), Matrix{{1}}) == 0);
    CHECK(max_abs_diff(renormalized_adjacency(make({{0, 1}}, 2)).to_dense(),
                       Matrix{{0.5, 0.5}, {0.5, 0.5}}) < 1e-15);
    const Matrix star = renormalized_adjacency(make({{0, 1}, {0, 2}, {0, 3}}, 4)).to_dense();
    CHECK(star(0, 0) == doctest::Approx(0.25));
    for (std::size_t j = 1; j < 4; ++j) {
        CHECK(star(j, j) == doctest::Approx(0.5));
        CHECK(star(0, j) == doctest::Approx(1 / std::sqrt(8.0)));
    }
}

TEST_CASE("laplacian examples") {
    CHECK(max_abs_diff(laplacian(make({{0, 1}}, 2)).to_dense(), Matrix{{1, -1}, {-1, 1}}) == 0);
    CHECK(max_abs_diff(laplacian(make({}, 2)).to_dense(), Matrix::identity(2)) == 0);
    const auto eig = eig_sym(laplacian(make({{0, 1}, {1, 2}, {0, 2}}, 3)).to_dense());
    CHECK(eig.values[0] == doctest::Approx(0).epsilon(1e-12));
    CHECK(eig.values[1] == doctest::Approx(1.5));
    CHECK(eig.values[2] == doctest::Approx(1.5));
}

TEST_CASE("spmm examples") {
    Rng rng(3);
    const Matrix h{{1, 2}, {3, 4}, {5, 6}};
    const Graph empty = make({}, 3);
    CHECK(max_abs_diff(spmm(laplacian(empty), h), h) == 0);
    CHECK(max_abs_diff(spmm(normalized_adjacency(make({{0, 1}}, 2)), Matrix{{1}, {0}}), Matrix{{0}, {1}}) == 0);
    CHECK_THROWS_AS(spmm(laplacian(empty), Matrix(2, 1)), input_error);
}

TEST_CASE("operator properties on random graphs") {
    Rng rng(17);
    for (int t = 0; t < 30; ++t) {
        const std::size_t n = 2 + rng.below(40);
        const Graph g = random_graph(n, rng.uniform(0.05, 0.6), rng);
        const auto atilde = normalized_adjacency(g);
        const auto ahat = renormalized_adjacency(g);
        const auto lap = laplacian(g);
        CHECK(symmetry_defect(g.adjacency) == 0);
        CHECK(symmetry_defect(atilde) == 0);
        CHECK(symmetry_defect(ahat) == 0);
        CHECK(symmetry_defect(lap) == 0);
        for (std::size_t i = 0; i < n; ++i) {
            CHECK(g.degrees[i] == g.adjacency.row_sum(i));
        }

        const auto eig = eig_sym(lap.to_dense());
        CHECK(eig.values.front() > -1e-9);
        CHECK(eig.values.back() < 2 + 1e-9);

        if (n <= 64) {
            Matrix h(n, 3);
            for (double& x : h.data()) {
                x = rng.normal();
            }
            CHECK(max_abs_diff(spmm(atilde, h), matmul(atilde.to_dense(), h)) < 1e-12);
            CHECK(max_abs_diff(spmm(ahat, h), matmul(ahat.to_dense(), h)) < 1e-12);
        }
    }
}

TEST_CASE("renormalized rows sum to one on regular graphs") {
    // Cycle C_8 (2-regular) and complete K_5 (4-regular).
    std::vector<Edge> cycle;
    for (std::size_t i = 0; i < 8; ++i) {
        cycle.emplace_back(i, (i + 1) % 8);
    }
    std::vector<Edge> complete;
    for (std::size_t i = 0; i < 5; ++i) {
        for (std::size_t j = i + 1; j < 5; ++j) {
            complete.emplace_back(i, j);
        }
    }
    for (const auto& [edges, n] : {std::pair{cycle, std::size_t{8}}, std::pair{complete, std::size_t{5}}}) {
        const auto ahat = renormalized_adjacency(make(edges, n));
        for (std::size_t i = 0; i < n; ++i) {
            CHECK(std::abs(ahat.row_sum(i) - 1.0) < 1e-12);
        }
    }
}

TEST_CASE("edge list text") {
    std::istringstream in("# comment\n0 1\n\n2 1\n");
    const auto edges = parse_edge_list(in);
    REQUIRE(edges.size() == 2);
    CHECK(edges[1] == Edge{2, 1});

    std::ostringstream out;
    write_edge_list(out, edges);
    std::istringstream back(out.str());
    CHECK(parse_edge_list(back) == edges);

    std::istringstream bad("0 1\n0 x\n");
    try {
        parse_edge_list(bad);
        FAIL("expected input_error");
    } catch (const input_error& e) {
        CHECK(std::string(e.what()).find("line 2") != std::string::npos);
    }
    std::istringstream negative("0 -1\n");
    CHECK_THROWS_AS(parse_edge_list(negative), input_error);
}
