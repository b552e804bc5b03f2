#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <numeric>

#include "autogcn/data.hpp"
#include "autogcn/error.hpp"
#include "autogcn/model.hpp"
#include "autogcn/spectral.hpp"
#include "autogcn/training.hpp"
#include "autogcn/verify.hpp"

using namespace autogcn;

namespace {

Matrix random_matrix(std::size_t r, std::size_t c, Rng& rng) {
    Matrix m(r, c);
    for (double& x : m.data()) {
        x = rng.normal();
    }
    return m;
}

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

ModelConfig small_config() {
    ModelConfig cfg;
    cfg.layers = 2;
    cfg.hidden = 4;
    cfg.k = 4;
    cfg.in_dim = 3;
    cfg.out_dim = 2;
    cfg.dropout = 0;
    return cfg;
}

struct Operators {
    Graph graph;
    SparseSymMatrix atilde;
    SparseSymMatrix ahat;
};

Operators operators(const Graph& g) { return {g, normalized_adjacency(g), renormalized_adjacency(g)}; }

Matrix logits(Model& model, const Operators& ops, const Matrix& features) {
    Tape tape;
    GraphInput in;
    in.atilde = &ops.atilde;
    in.ahat = &ops.ahat;
    in.features = &features;
    return model.forward(tape, in, nullptr).data();
}

}  // namespace

TEST_CASE("variant and enum parsing") {
    CHECK(parse_variant("no_high") == AblationVariant::no_high);
    CHECK(parse_variant("FULL") == AblationVariant::full);
    CHECK_THROWS_AS(parse_variant("NO_EVERYTHING"), parameter_error);
    CHECK(all_variants().size() == 7);
    for (AblationVariant v : all_variants()) {
        CHECK(parse_variant(to_string(v)) == v);
    }
}

TEST_CASE("config validation") {
    ModelConfig cfg = small_config();
    cfg.layers = 0;
    CHECK_THROWS_AS(Model(cfg, AblationVariant::full, 1), parameter_error);
    cfg = small_config();
    cfg.model = ModelKind::gcn;
    CHECK_THROWS_AS(Model(cfg, AblationVariant::no_low, 1), parameter_error);
}

TEST_CASE("equal branches combine to 3 Z sigmoid(2Z)") {
    Rng rng(201);
    const Matrix z = random_matrix(5, 3, rng);
    Tape tape;
    const Value v = tape.constant(z);
    const std::vector<Value> branches{v, v, v};
    const Matrix out = combine_branches(branches, true, Activation::sigmoid).data();
    for (std::size_t i = 0; i < z.rows(); ++i) {
        for (std::size_t j = 0; j < z.cols(); ++j) {
            CHECK(out(i, j) == doctest::Approx(3 * z(i, j) * sigmoid(2 * z(i, j))).epsilon(1e-14));
        }
    }
}

TEST_CASE("gated combine is symmetric in the branches") {
    Rng rng(202);
    Tape tape;
    const Value a = tape.constant(random_matrix(4, 3, rng));
    const Value b = tape.constant(random_matrix(4, 3, rng));
    const Value c = tape.constant(random_matrix(4, 3, rng));
    const Matrix ref = combine_branches(std::vector<Value>{a, b, c}, true, Activation::sigmoid).data();
    for (const auto& order : {std::vector<Value>{b, c, a}, std::vector<Value>{c, a, b}, std::vector<Value>{b, a, c}}) {
        CHECK(max_abs_diff(combine_branches(order, true, Activation::sigmoid).data(), ref) < 1e-14);
    }
    const Matrix sum = combine_branches(std::vector<Value>{a, b, c}, false, Activation::sigmoid).data();
    CHECK(max_abs_diff(sum, (a.data() + b.data()) + c.data()) == 0);
}

TEST_CASE("zero input gives zero layer output") {
    ModelConfig cfg = small_config();
    cfg.in_dim = 4;
    Model model(cfg, AblationVariant::full, 3);
    const Graph g = build_graph({{0, 1}, {1, 2}}, 3, Matrix(3, 4));
    const Operators ops = operators(g);
    GraphInput in;
    in.atilde = &ops.atilde;
    Tape tape;
    const Value h = tape.constant(Matrix(3, 4));
    CHECK(max_abs(model.layer_forward(tape, model.layers()[0], h, in, nullptr).data()) == 0);
}

TEST_CASE("zero input gives bias-only logits") {
    ModelConfig cfg = small_config();
    Model model(cfg, AblationVariant::full, 4);
    model.parameter("head.fc1.bias").value = Matrix{{0.5, -1, 2, 0.25}};
    model.parameter("head.fc2.bias").value = Matrix{{0.1, -0.2}};
    const Graph g = build_graph({{0, 1}}, 4, Matrix(4, 3));
    const Operators ops = operators(g);
    const Matrix out = logits(model, ops, Matrix(4, 3));

    Matrix hidden = model.parameter("head.fc1.bias").value;
    for (double& x : hidden.data()) {
        x = std::max(0.0, x);
    }
    const Matrix expect = matmul(hidden, model.parameter("head.fc2.weight").value) + model.parameter("head.fc2.bias").value;
    CHECK(out.rows() == 4);
    CHECK(out.cols() == 2);
    for (std::size_t i = 0; i < 4; ++i) {
        CHECK(out(i, 0) == doctest::Approx(expect(0, 0)));
        CHECK(out(i, 1) == doctest::Approx(expect(0, 1)));
    }
}

TEST_CASE("single isolated node with identity weights") {
    ModelConfig cfg = small_config();
    cfg.layers = 1;
    cfg.in_dim = 4;
    Model model(cfg, AblationVariant::full, 5);
    for (FilterKind kind : kAllKinds) {
        model.parameter("layer0." + std::string(to_string(kind)) + ".weight").value = Matrix::identity(4);
    }
    Rng rng(205);
    auto& theta = model.parameter("layer0.low.theta").value;
    for (double& t : theta.data()) {
        t = rng.normal();
    }
    const Graph g = build_graph({}, 1, Matrix(1, 4));
    const Operators ops = operators(g);
    GraphInput in;
    in.atilde = &ops.atilde;
    const Matrix h{{0.3, -0.7, 1.2, 0.05}};
    Tape tape;
    const Matrix out = model.layer_forward(tape, model.layers()[0], tape.constant(h), in, nullptr).data();

    const auto lo = *model.effective_filter(0, FilterKind::low);
    const auto hi = *model.effective_filter(0, FilterKind::high);
    const auto mi = *model.effective_filter(0, FilterKind::mid);
    for (std::size_t j = 0; j < 4; ++j) {
        const double l = lo.p * (1 - lo.a) * h(0, j);
        const double s = hi.p * (1 - hi.a) * h(0, j);
        const double m = -mi.p * mi.a * h(0, j);
        const double pre = l * sigmoid(s + m) + s * sigmoid(l + m) + m * sigmoid(l + s);
        CHECK(out(0, j) == doctest::Approx(std::max(0.0, pre)).epsilon(1e-13));
    }
}

TEST_CASE("GCN layer examples") {
    ModelConfig cfg = small_config();
    cfg.model = ModelKind::gcn;
    cfg.layers = 1;
    cfg.in_dim = 2;
    cfg.hidden = 2;
    Model model(cfg, AblationVariant::full, 6);
    model.parameter("layer0.weight").value = Matrix::identity(2);
    Tape tape;
    GraphInput in;

    const Graph single = build_graph({}, 1, Matrix(1, 2));
    const Operators s = operators(single);
    in.ahat = &s.ahat;
    const Matrix h1{{-1, 2}};
    CHECK(max_abs_diff(model.layer_forward(tape, model.layers()[0], tape.constant(h1), in, nullptr).data(),
                       Matrix{{0, 2}}) == 0);

    const Graph path = build_graph({{0, 1}}, 2, Matrix(2, 2));
    const Operators p = operators(path);
    in.ahat = &p.ahat;
    CHECK(max_abs_diff(model.layer_forward(tape, model.layers()[0], tape.constant(Matrix::identity(2)), in, nullptr).data(),
                       Matrix{{0.5, 0.5}, {0.5, 0.5}}) < 1e-15);
}

TEST_CASE("GCN kernel profile follows the degree approximation") {
    Rng rng(207);
    for (int t = 0; t < 5; ++t) {
        const Graph g = random_graph(30, 0.3, rng);
        double dbar = 0;
        for (double d : g.degrees) {
            dbar += d;
        }
        dbar /= 30;
        const auto eig = eig_sym(laplacian(g).to_dense());
        const auto prof = frequency_profile(renormalized_adjacency(g).to_dense(), eig);
        for (std::size_t i = 0; i < prof.size(); ++i) {
            CHECK(std::abs(prof[i] - (1 - eig.values[i] * dbar / (1 + dbar))) < 0.2);
        }
    }
}

TEST_CASE("layer is equivariant under node permutation") {
    Rng rng(208);
    ModelConfig cfg = small_config();
    cfg.residual = cfg.norm = true;
    for (ModelKind kind : {ModelKind::autogcn, ModelKind::gcn}) {
        cfg.model = kind;
        Model model(cfg, AblationVariant::full, 8);
        const std::size_t n = 15;
        const Graph g = random_graph(n, 0.3, rng);
        std::vector<std::size_t> perm(n);
        std::iota(perm.begin(), perm.end(), 0);
        rng.shuffle(perm);
        std::vector<std::size_t> inv(n);
        for (std::size_t i = 0; i < n; ++i) {
            inv[perm[i]] = i;
        }
        std::vector<Edge> pedges;
        for (const auto& [u, v] : edge_list(g.adjacency)) {
            pedges.emplace_back(inv[u], inv[v]);
        }
        const Graph pg = build_graph(pedges, n, Matrix(n, 0));
        const Matrix h = random_matrix(n, 3, rng);
        Matrix ph(n, 3);
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t j = 0; j < 3; ++j) {
                ph(i, j) = h(perm[i], j);
            }
        }
        const Operators a = operators(g);
        const Operators b = operators(pg);
        GraphInput ia;
        ia.atilde = &a.atilde;
        ia.ahat = &a.ahat;
        GraphInput ib;
        ib.atilde = &b.atilde;
        ib.ahat = &b.ahat;
        Tape tape;
        const Matrix out = model.layer_forward(tape, model.layers()[0], tape.constant(h), ia, nullptr).data();
        const Matrix pout = model.layer_forward(tape, model.layers()[0], tape.constant(ph), ib, nullptr).data();
        double err = 0;
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t j = 0; j < out.cols(); ++j) {
                err = std::max(err, std::abs(pout(i, j) - out(perm[i], j)));
            }
        }
        CHECK(err < 1e-10);
    }
}

TEST_CASE("graph readout") {
    Rng rng(209);
    ModelConfig cfg = small_config();
    cfg.task = TaskKind::graph_classification;
    cfg.token_features = true;
    cfg.vocab = 4;
    cfg.in_dim = 0;
    cfg.graph_norm = true;
    Model model(cfg, AblationVariant::full, 9);
    for (auto& p : model.parameters()) {
        for (double& x : p.value.data()) {
            x += 0.1 * rng.normal();
        }
    }

    const Graph g = random_graph(7, 0.4, rng);
    std::vector<std::size_t> tokens(7);
    for (auto& t : tokens) {
        t = rng.below(4);
    }
    auto run = [&](const std::vector<Edge>& edges, std::size_t n, const std::vector<std::size_t>& toks,
                   const std::vector<std::size_t>& sizes) {
        const Graph batch = build_graph(edges, n, Matrix(n, 0));
        const Operators ops = operators(batch);
        std::vector<double> scale;
        for (std::size_t s : sizes) {
            scale.insert(scale.end(), s, 1 / std::sqrt(double(s)));
        }
        GraphInput in;
        in.atilde = &ops.atilde;
        in.tokens = toks;
        in.graph_sizes = sizes;
        in.size_scale = scale;
        Tape tape;
        return model.forward(tape, in, nullptr).data();
    };

    const auto edges = edge_list(g.adjacency);
    const Matrix single = run(edges, 7, tokens, {7});
    CHECK(single.rows() == 1);

    // Two identical graphs in one batch.
    auto doubled = edges;
    for (const auto& [u, v] : edges) {
        doubled.emplace_back(u + 7, v + 7);
    }
    auto tokens2 = tokens;
    tokens2.insert(tokens2.end(), tokens.begin(), tokens.end());
    const Matrix pair = run(doubled, 14, tokens2, {7, 7});
    CHECK(pair(0, 0) == pair(1, 0));
    CHECK(pair(0, 1) == pair(1, 1));

    // Permuting nodes within the graph.
    std::vector<std::size_t> perm(7);
    std::iota(perm.begin(), perm.end(), 0);
    rng.shuffle(perm);
    std::vector<Edge> pedges;
    for (const auto& [u, v] : edges) {
        pedges.emplace_back(perm[u], perm[v]);
    }
    std::vector<std::size_t> ptokens(7);
    for (std::size_t i = 0; i < 7; ++i) {
        ptokens[perm[i]] = tokens[i];
    }
    CHECK(max_abs_diff(run(pedges, 7, ptokens, {7}), single) < 1e-12);

    const Operators ops = operators(g);
    GraphInput missing;
    missing.atilde = &ops.atilde;
    missing.tokens = tokens;
    Tape tape;
    CHECK_THROWS_AS(model.forward(tape, missing, nullptr), input_error);
}

TEST_CASE("parameter counts") {
    SUBCASE("linear layer and a single bank") {
        ModelConfig cfg;
        cfg.model = ModelKind::gcn;
        cfg.layers = 1;
        cfg.in_dim = 2;
        cfg.hidden = 3;
        cfg.out_dim = 1;
        Model m(cfg, AblationVariant::full, 1);
        CHECK(m.parameter("layer0.weight").value.size() + m.parameter("layer0.bias").value.size() == 9);

        ModelConfig ac;
        ac.in_dim = 2;
        ac.out_dim = 2;
        Model a(ac, AblationVariant::full, 1);
        CHECK(a.parameter("layer0.low.theta").value.size() == 16);
    }
    SUBCASE("ablation budgets") {
        ModelConfig cfg;
        cfg.layers = 2;
        cfg.hidden = 16;
        cfg.in_dim = 20;
        cfg.out_dim = 3;
        const std::size_t full = Model(cfg, AblationVariant::full, 1).count_params();
        CHECK(Model(cfg, AblationVariant::no_gate, 1).count_params() == full);
        for (AblationVariant v : {AblationVariant::no_low, AblationVariant::no_high, AblationVariant::no_mid}) {
            const double ratio = double(Model(cfg, v, 1).count_params()) / double(full);
            CHECK(ratio > 0.9);
            CHECK(ratio < 1.1);
        }
        Model no_par(cfg, AblationVariant::no_par, 1);
        for (const auto& p : no_par.parameters()) {
            CHECK(p.name.find("theta") == std::string::npos);
            CHECK(p.name.find("a_logit") == std::string::npos);
        }
        CHECK(no_par.count_params() < full);
        CHECK(no_par.effective_filter(0, FilterKind::mid)->a == 0.5);
        Model no_over(cfg, AblationVariant::no_over, 1);
        CHECK(no_over.parameter("layer0.low.theta").value.size() == 1);
        CHECK(no_over.effective_filter(0, FilterKind::low)->p == doctest::Approx(1));
    }
    SUBCASE("PUBMED configuration") {
        ModelConfig cfg;
        cfg.layers = 1;
        cfg.hidden = 16;
        cfg.k = 16;
        cfg.in_dim = 500;
        cfg.out_dim = 3;
        const double count = double(Model(cfg, AblationVariant::full, 1).count_params());
        MESSAGE("PUBMED AutoGCN parameters: " << count << " (reported 24297)");
        CHECK(std::abs(count - 24297) / 24297 < 0.15);
    }
}

TEST_CASE("checkpoint round trip") {
    const auto dir = std::filesystem::temp_directory_path() / "autogcn_unit_ckpt";
    std::filesystem::create_directories(dir);
    ModelConfig cfg = small_config();
    cfg.norm = true;
    Model a(cfg, AblationVariant::no_over, 11);
    CheckpointMeta meta;
    meta.config_text = "hidden = 4\n";
    meta.config_digest = fnv1a64(meta.config_text);
    meta.seed = 11;
    meta.variant = AblationVariant::no_over;
    save_checkpoint(a, meta, dir / "m.ckpt");
    CHECK(std::filesystem::exists(dir / "m.ckpt.txt"));

    const auto back = read_checkpoint_meta(dir / "m.ckpt");
    CHECK(back.config_text == meta.config_text);
    CHECK(back.config_digest == meta.config_digest);
    CHECK(back.seed == 11);
    CHECK(back.variant == AblationVariant::no_over);

    Model b(cfg, AblationVariant::no_over, 99);
    load_checkpoint_into(b, dir / "m.ckpt");
    for (std::size_t i = 0; i < a.parameters().size(); ++i) {
        CHECK(a.parameters()[i].value.data() == b.parameters()[i].value.data());
    }
    Model wrong(small_config(), AblationVariant::full, 1);
    CHECK_THROWS_AS(load_checkpoint_into(wrong, dir / "m.ckpt"), input_error);
    std::filesystem::remove_all(dir);
}

TEST_CASE("depth: residual models reach lower training loss than a plain 8-layer model") {
    // CLUSTER generator settings (6 blocks, p = 0.55, q = 0.25) on one graph,
    // trained with the CLUSTER hyperparameter row at hidden width 16.
    SBMSpec spec;
    spec.block_sizes = {30, 30, 30, 30, 30, 30};
    spec.p_in = 0.55;
    spec.q_out = 0.25;
    spec.seed = 3;
    const Dataset data = sbm_generate(spec);

    TrainConfig base;
    base.model.hidden = 16;
    base.model.k = 16;
    base.model.dropout = 0;
    base.model.norm = true;
    base.model.graph_norm = true;
    base.init_lr = 1e-3;
    base.patience = 5;
    base.min_lr = 1e-5;
    base.epochs = 1000;
    base.seeds = {1};

    auto final_loss = [&](std::size_t layers, bool residual) {
        TrainConfig cfg = base;
        cfg.model.layers = layers;
        cfg.model.residual = residual;
        return train(cfg, data, 1).history.back().train_loss;
    };
    const double plain8 = final_loss(8, false);
    for (std::size_t l : {2u, 4u, 8u}) {
        const double res = final_loss(l, true);
        INFO("L=" << l << " residual loss " << res << " vs plain L=8 " << plain8);
        CHECK(res < plain8);
    }
}
