#include "autogcn/training.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <exception>
#include <fstream>
#include <istream>
#include <mutex>
#include <numeric>
#include <ostream>
#include <sstream>
#include <thread>
#include <tuple>

#include <json.hpp>

#include "autogcn/error.hpp"

namespace autogcn {

OptimState make_optim_state(const std::vector<Parameter>& params, double lr, double weight_decay) {
    OptimState st;
    st.lr = lr;
    st.weight_decay = weight_decay;
    for (const auto& p : params) {
        st.m.emplace_back(p.value.rows(), p.value.cols());
        st.v.emplace_back(p.value.rows(), p.value.cols());
    }
    return st;
}

void adam_step(std::vector<Parameter>& params, OptimState& st) {
    if (st.m.size() != params.size() || st.v.size() != params.size()) {
        throw input_error("adam_step: optimizer state does not match the parameter list");
    }
    for (std::size_t i = 0; i < params.size(); ++i) {
        if (!params[i].grad.same_shape(params[i].value) || !st.m[i].same_shape(params[i].value)) {
            throw input_error("adam_step: shape mismatch for " + params[i].name);
        }
        if (!all_finite(params[i].grad)) {
            throw numerical_error("non-finite gradient in parameter " + params[i].name);
        }
    }
    ++st.step;
    const double t = static_cast<double>(st.step);
    const double c1 = 1.0 - std::pow(st.beta1, t);
    const double c2 = 1.0 - std::pow(st.beta2, t);
    for (std::size_t i = 0; i < params.size(); ++i) {
        auto& theta = params[i].value.data();
        const auto& grad = params[i].grad.data();
        auto& m = st.m[i].data();
        auto& v = st.v[i].data();
        const std::size_t n = params[i].value.size();
        for (std::size_t k = 0; k < n; ++k) {
            const double g = grad[k] + st.weight_decay * theta[k];
            m[k] = st.beta1 * m[k] + (1.0 - st.beta1) * g;
            v[k] = st.beta2 * v[k] + (1.0 - st.beta2) * g * g;
            const double mhat = m[k] / c1;
            const double vhat = v[k] / c2;
            theta[k] -= st.lr * mhat / (std::sqrt(vhat) + st.eps);
        }
    }
}

PlateauStep plateau_update(SchedulerState& st, double metric, MetricMode mode) {
    const bool improved =
        !st.best || (mode == MetricMode::min ? metric < *st.best : metric > *st.best);
    if (improved) {
        st.best = metric;
        st.wait = 0;
        return {st.lr, false};
    }
    ++st.wait;
    if (st.wait <= st.patience) {
        return {st.lr, false};
    }
    st.wait = 0;
    if (st.lr <= st.min_lr) {
        return {st.lr, true};
    }
    st.lr = std::max(st.lr * st.factor, st.min_lr);
    return {st.lr, false};
}

// ---------------------------------------------------------------------------
// Configuration

void TrainConfig::validate() const {
    if (!(init_lr > 0.0) || !std::isfinite(init_lr)) {
        throw parameter_error("init_lr must be positive");
    }
    if (!(min_lr > 0.0) || min_lr > init_lr) {
        throw parameter_error("min_lr must be positive and at most init_lr");
    }
    if (!(weight_decay >= 0.0)) {
        throw parameter_error("weight_decay must be nonnegative");
    }
    if (!(lr_reduce_factor > 0.0 && lr_reduce_factor < 1.0)) {
        throw parameter_error("lr_reduce_factor must lie in (0,1)");
    }
    if (epochs < 1) {
        throw parameter_error("epochs must be >= 1");
    }
    if (seeds.empty()) {
        throw parameter_error("at least one seed is required");
    }
    if (batch_size < 1) {
        throw parameter_error("batch_size must be >= 1");
    }
    if (train_ratio < 0 || val_ratio < 0 || test_ratio < 0 ||
        std::abs(train_ratio + val_ratio + test_ratio - 1.0) > 1e-9) {
        throw parameter_error("split ratios must be nonnegative and sum to 1");
    }
    if (model.layers < 1 || model.hidden < 1 || model.k < 1) {
        throw parameter_error("L, hidden and K must be >= 1");
    }
    if (!(model.dropout >= 0.0 && model.dropout < 1.0)) {
        throw parameter_error("dropout must lie in [0,1)");
    }
    if (model.model == ModelKind::gcn && variant != AblationVariant::full) {
        throw parameter_error("ablation variants apply to AutoGCN only");
    }
}

namespace {

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) {
        return {};
    }
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

std::vector<std::string> split_list(const std::string& s) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : s + ",") {
        if (c == ',' || c == ' ' || c == '\t') {
            if (!cur.empty()) {
                out.push_back(cur);
            }
            cur.clear();
        } else {
            cur.push_back(c);
        }
    }
    return out;
}

template <typename T>
T parse_number(const std::string& s, const std::string& ctx) {
    T v{};
    const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc() || res.ptr != s.data() + s.size()) {
        throw input_error(ctx + ": malformed number '" + s + "'");
    }
    if constexpr (std::is_floating_point_v<T>) {
        if (!std::isfinite(v)) {
            throw input_error(ctx + ": non-finite number");
        }
    }
    return v;
}

bool is_dash(const std::string& s) { return s == "-" || s == "none"; }

}  // namespace

TrainConfig parse_train_config(std::istream& in) {
    TrainConfig cfg;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const auto hash = line.find('#');
        const std::string body = trim(hash == std::string::npos ? line : line.substr(0, hash));
        if (body.empty()) {
            continue;
        }
        const std::string ctx = "config line " + std::to_string(line_no);
        const auto eq = body.find('=');
        if (eq == std::string::npos) {
            throw input_error(ctx + ": expected 'key = value'");
        }
        const std::string key = trim(body.substr(0, eq));
        const std::string value = trim(body.substr(eq + 1));
        if (value.empty()) {
            throw input_error(ctx + ": empty value for '" + key + "'");
        }
        try {
            if (key == "task") {
                cfg.model.task = parse_task(value);
            } else if (key == "model") {
                cfg.model.model = parse_model_kind(value);
            } else if (key == "variant") {
                cfg.variant = parse_variant(value);
            } else if (key == "L") {
                cfg.model.layers = parse_number<std::size_t>(value, ctx);
            } else if (key == "hidden") {
                cfg.model.hidden = parse_number<std::size_t>(value, ctx);
            } else if (key == "K") {
                cfg.model.k = parse_number<std::size_t>(value, ctx);
            } else if (key == "dropout") {
                cfg.model.dropout = parse_number<double>(value, ctx);
            } else if (key == "head_hidden") {
                cfg.model.head_hidden = parse_number<std::size_t>(value, ctx);
            } else if (key == "gate_act") {
                cfg.model.gate_act = parse_activation(value);
            } else if (key == "outer_act") {
                cfg.model.outer_act = parse_activation(value);
            } else if (key == "flags") {
                cfg.model.residual = cfg.model.norm = cfg.model.graph_norm = false;
                cfg.model.gating = true;
                for (const auto& f : split_list(value)) {
                    if (is_dash(f)) {
                        continue;
                    } else if (f == "residual") {
                        cfg.model.residual = true;
                    } else if (f == "norm") {
                        cfg.model.norm = true;
                    } else if (f == "graph_norm") {
                        cfg.model.graph_norm = true;
                    } else if (f == "no_gating") {
                        cfg.model.gating = false;
                    } else {
                        throw input_error(ctx + ": unknown flag '" + f + "'");
                    }
                }
            } else if (key == "init_lr") {
                cfg.init_lr = parse_number<double>(value, ctx);
            } else if (key == "patience") {
                cfg.patience = is_dash(value)
                                   ? std::nullopt
                                   : std::optional<std::size_t>(parse_number<std::size_t>(value, ctx));
            } else if (key == "min_lr") {
                if (!is_dash(value)) {
                    cfg.min_lr = parse_number<double>(value, ctx);
                }
            } else if (key == "weight_decay") {
                cfg.weight_decay = is_dash(value) ? 0.0 : parse_number<double>(value, ctx);
            } else if (key == "lr_reduce_factor") {
                cfg.lr_reduce_factor = parse_number<double>(value, ctx);
            } else if (key == "epochs") {
                cfg.epochs = parse_number<std::size_t>(value, ctx);
            } else if (key == "seeds") {
                cfg.seeds.clear();
                for (const auto& s : split_list(value)) {
                    cfg.seeds.push_back(parse_number<std::uint64_t>(s, ctx));
                }
            } else if (key == "split") {
                const auto parts = split_list(value);
                if (parts.size() != 3) {
                    throw input_error(ctx + ": split needs three ratios");
                }
                cfg.train_ratio = parse_number<double>(parts[0], ctx);
                cfg.val_ratio = parse_number<double>(parts[1], ctx);
                cfg.test_ratio = parse_number<double>(parts[2], ctx);
            } else if (key == "batch_size") {
                cfg.batch_size = parse_number<std::size_t>(value, ctx);
            } else {
                throw input_error(ctx + ": unknown key '" + key + "'");
            }
        } catch (const parameter_error& e) {
            throw input_error(ctx + ": " + e.what());
        }
    }
    cfg.validate();
    return cfg;
}

TrainConfig parse_train_config_text(const std::string& text) {
    std::istringstream in(text);
    return parse_train_config(in);
}

TrainConfig load_train_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw input_error("cannot open config " + path.string());
    }
    return parse_train_config(in);
}

std::string TrainConfig::to_text() const {
    std::ostringstream out;
    out << "task = " << to_string(model.task) << '\n';
    out << "model = " << to_string(model.model) << '\n';
    out << "variant = " << to_string(variant) << '\n';
    out << "L = " << model.layers << '\n';
    out << "hidden = " << model.hidden << '\n';
    out << "K = " << model.k << '\n';
    out << "dropout = " << format_double(model.dropout) << '\n';
    out << "head_hidden = " << model.head_hidden << '\n';
    out << "gate_act = " << to_string(model.gate_act) << '\n';
    out << "outer_act = " << to_string(model.outer_act) << '\n';
    std::vector<std::string> flags;
    if (model.residual) {
        flags.emplace_back("residual");
    }
    if (model.norm) {
        flags.emplace_back("norm");
    }
    if (model.graph_norm) {
        flags.emplace_back("graph_norm");
    }
    if (!model.gating) {
        flags.emplace_back("no_gating");
    }
    out << "flags = ";
    if (flags.empty()) {
        out << '-';
    }
    for (std::size_t i = 0; i < flags.size(); ++i) {
        out << (i ? "," : "") << flags[i];
    }
    out << '\n';
    out << "init_lr = " << format_double(init_lr) << '\n';
    out << "patience = " << (patience ? std::to_string(*patience) : std::string("-")) << '\n';
    out << "min_lr = " << format_double(min_lr) << '\n';
    out << "weight_decay = " << format_double(weight_decay) << '\n';
    out << "lr_reduce_factor = " << format_double(lr_reduce_factor) << '\n';
    out << "epochs = " << epochs << '\n';
    out << "seeds = ";
    for (std::size_t i = 0; i < seeds.size(); ++i) {
        out << (i ? "," : "") << seeds[i];
    }
    out << '\n';
    out << "split = " << format_double(train_ratio) << ',' << format_double(val_ratio) << ','
        << format_double(test_ratio) << '\n';
    out << "batch_size = " << batch_size << '\n';
    return out.str();
}

// ---------------------------------------------------------------------------
// Data plumbing

Dataset load_dataset(const std::filesystem::path& path) {
    if (std::filesystem::is_directory(path)) {
        return load_node_dataset(path);
    }
    if (!std::filesystem::exists(path)) {
        throw input_error("dataset not found: " + path.string());
    }
    GraphDataset ds = load_graph_dataset(path);
    ds.validate();
    return ds;
}

ModelConfig resolve_model_config(const TrainConfig& cfg, const Dataset& data) {
    ModelConfig mc = cfg.model;
    if (const auto* nd = std::get_if<NodeDataset>(&data)) {
        if (mc.task != TaskKind::node_classification) {
            throw input_error("config task is '" + std::string(to_string(mc.task)) +
                              "' but the data is a node dataset");
        }
        mc.token_features = nd->token_features;
        mc.vocab = nd->token_features ? nd->vocab() : 0;
        mc.in_dim = nd->token_features ? 0 : nd->graph.features.cols();
        mc.out_dim = nd->num_classes;
    } else {
        const auto& gd = std::get<GraphDataset>(data);
        if (mc.task == TaskKind::node_classification) {
            throw input_error("config task is 'node' but the data is a graph dataset");
        }
        if (gd.regression != (mc.task == TaskKind::graph_regression)) {
            throw input_error("graph dataset kind does not match the config task");
        }
        mc.token_features = true;
        mc.vocab = gd.vocab();
        mc.in_dim = 0;
        mc.out_dim = gd.regression ? 1 : gd.num_classes();
    }
    if (mc.out_dim < 1) {
        throw input_error("dataset has no labels");
    }
    return mc;
}

SplitMasks run_split(const TrainConfig& cfg, const Dataset& data, std::uint64_t seed) {
    if (const auto* nd = std::get_if<NodeDataset>(&data)) {
        if (!nd->masks.empty()) {
            return nd->masks;
        }
        Rng rng = make_stream(seed, Stream::split);
        return random_split(nd->num_nodes(), cfg.train_ratio, cfg.val_ratio, cfg.test_ratio, rng);
    }
    const auto& gd = std::get<GraphDataset>(data);
    const std::size_t n = gd.records.size();
    if (n == 0) {
        throw input_error("graph dataset is empty");
    }
    const bool stored = std::any_of(gd.records.begin(), gd.records.end(),
                                    [](const GraphRecord& r) { return r.split != Split::none; });
    if (!stored) {
        Rng rng = make_stream(seed, Stream::split);
        return random_split(n, cfg.train_ratio, cfg.val_ratio, cfg.test_ratio, rng);
    }
    SplitMasks m;
    m.train.assign(n, 0);
    m.val.assign(n, 0);
    m.test.assign(n, 0);
    for (std::size_t i = 0; i < n; ++i) {
        switch (gd.records[i].split) {
            case Split::train:
                m.train[i] = 1;
                break;
            case Split::val:
                m.val[i] = 1;
                break;
            case Split::test:
                m.test[i] = 1;
                break;
            case Split::none:
                break;
        }
    }
    return m;
}

namespace {

const std::vector<std::uint8_t>& mask_of(const SplitMasks& m, Split s) {
    switch (s) {
        case Split::train:
            return m.train;
        case Split::val:
            return m.val;
        case Split::test:
            return m.test;
        case Split::none:
            break;
    }
    throw input_error("no mask for split 'none'");
}

std::vector<std::size_t> indices_of(const std::vector<std::uint8_t>& mask) {
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < mask.size(); ++i) {
        if (mask[i]) {
            idx.push_back(i);
        }
    }
    return idx;
}

struct NodeContext {
    SparseSymMatrix atilde;
    SparseSymMatrix ahat;
    const NodeDataset* ds = nullptr;
    std::vector<double> scale;

    NodeContext(const NodeDataset& d, const ModelConfig& mc)
        : atilde(normalized_adjacency(d.graph)), ahat(renormalized_adjacency(d.graph)), ds(&d) {
        if (mc.graph_norm) {
            scale.assign(d.num_nodes(), 1.0 / std::sqrt(static_cast<double>(d.num_nodes())));
        }
    }

    GraphInput input() const {
        GraphInput in;
        in.atilde = &atilde;
        in.ahat = &ahat;
        in.features = &ds->graph.features;
        if (ds->token_features) {
            in.tokens = ds->tokens;
        }
        in.size_scale = scale;
        return in;
    }
};

/// Block-diagonal union of several graphs.
struct GraphBatch {
    SparseSymMatrix atilde;
    SparseSymMatrix ahat;
    Matrix features;
    std::vector<std::size_t> tokens;
    std::vector<std::size_t> sizes;
    std::vector<double> scale;
    std::vector<std::size_t> labels;
    std::vector<double> targets;

    GraphInput input() const {
        GraphInput in;
        in.atilde = &atilde;
        in.ahat = &ahat;
        in.features = &features;
        in.tokens = tokens;
        in.graph_sizes = sizes;
        in.size_scale = scale;
        return in;
    }
};

GraphBatch make_batch(const GraphDataset& gd, std::span<const std::size_t> idx, bool graph_norm) {
    GraphBatch b;
    std::vector<Edge> edges;
    std::size_t offset = 0;
    for (std::size_t i : idx) {
        const auto& r = gd.records[i];
        for (const auto& [u, v] : r.edges) {
            edges.emplace_back(u + offset, v + offset);
        }
        b.tokens.insert(b.tokens.end(), r.tokens.begin(), r.tokens.end());
        b.sizes.push_back(r.n);
        if (graph_norm) {
            b.scale.insert(b.scale.end(), r.n, 1.0 / std::sqrt(static_cast<double>(r.n)));
        }
        b.labels.push_back(gd.regression ? 0 : static_cast<std::size_t>(r.target));
        b.targets.push_back(r.target);
        offset += r.n;
    }
    Graph g = build_graph(edges, offset, Matrix(offset, 0));
    b.atilde = normalized_adjacency(g);
    b.ahat = renormalized_adjacency(g);
    b.features = std::move(g.features);
    return b;
}

std::vector<GraphBatch> make_batches(const GraphDataset& gd, const std::vector<std::size_t>& idx,
                                     std::size_t batch_size, bool graph_norm) {
    std::vector<GraphBatch> out;
    for (std::size_t s = 0; s < idx.size(); s += batch_size) {
        const std::size_t e = std::min(idx.size(), s + batch_size);
        out.push_back(make_batch(gd, std::span<const std::size_t>(idx).subspan(s, e - s), graph_norm));
    }
    return out;
}

Value graph_loss(const Value& out, const GraphBatch& b, bool regression) {
    if (regression) {
        return ad::mae_loss(out, b.targets);
    }
    const std::vector<std::uint8_t> all(b.labels.size(), 1);
    return ad::softmax_cross_entropy(out, b.labels, all);
}

struct SplitScore {
    double metric = 0.0;
    double loss = 0.0;
};

SplitScore score_node(Model& model, const NodeContext& ctx, const std::vector<std::uint8_t>& mask) {
    if (std::find(mask.begin(), mask.end(), std::uint8_t{1}) == mask.end()) {
        throw input_error("evaluation split is empty");
    }
    Tape tape;
    const Value logits = model.forward(tape, ctx.input(), nullptr);
    const Value loss = ad::softmax_cross_entropy(logits, ctx.ds->labels, mask);
    return {accuracy(logits.data(), ctx.ds->labels, mask), loss.scalar()};
}

SplitScore score_graphs(Model& model, const std::vector<GraphBatch>& batches, bool regression) {
    double metric_sum = 0.0;
    double loss_sum = 0.0;
    std::size_t count = 0;
    for (const auto& b : batches) {
        Tape tape;
        const Value out = model.forward(tape, b.input(), nullptr);
        const std::size_t nb = b.sizes.size();
        const double loss = graph_loss(out, b, regression).scalar();
        if (regression) {
            metric_sum += loss * static_cast<double>(nb);
        } else {
            const std::vector<std::uint8_t> all(nb, 1);
            metric_sum += accuracy(out.data(), b.labels, all) * static_cast<double>(nb);
        }
        loss_sum += loss * static_cast<double>(nb);
        count += nb;
    }
    if (count == 0) {
        throw input_error("evaluation split is empty");
    }
    return {metric_sum / static_cast<double>(count), loss_sum / static_cast<double>(count)};
}

bool better(const SplitScore& a, const SplitScore& best, bool higher_is_better) {
    if (a.metric != best.metric) {
        return higher_is_better ? a.metric > best.metric : a.metric < best.metric;
    }
    return a.loss < best.loss;
}

void check_finite_loss(double loss, std::size_t epoch, std::uint64_t seed) {
    if (!std::isfinite(loss)) {
        throw numerical_error("training diverged at epoch " + std::to_string(epoch) + " (seed " +
                              std::to_string(seed) + "): non-finite loss");
    }
}

}  // namespace

double accuracy(const Matrix& logits, const std::vector<std::size_t>& labels,
                const std::vector<std::uint8_t>& mask) {
    if (labels.size() != logits.rows() || mask.size() != logits.rows()) {
        throw input_error("accuracy: label or mask length does not match logits");
    }
    std::size_t hits = 0;
    std::size_t total = 0;
    for (std::size_t i = 0; i < logits.rows(); ++i) {
        if (!mask[i]) {
            continue;
        }
        std::size_t arg = 0;
        for (std::size_t j = 1; j < logits.cols(); ++j) {
            if (logits(i, j) > logits(i, arg)) {
                arg = j;
            }
        }
        hits += arg == labels[i] ? 1 : 0;
        ++total;
    }
    if (total == 0) {
        throw input_error("accuracy: empty split");
    }
    return static_cast<double>(hits) / static_cast<double>(total);
}

double evaluate(Model& model, const Dataset& data, const SplitMasks& masks, Split split,
                std::size_t batch_size) {
    const auto& mask = mask_of(masks, split);
    if (const auto* nd = std::get_if<NodeDataset>(&data)) {
        if (mask.size() != nd->num_nodes()) {
            throw input_error("evaluate: mask length does not match the dataset");
        }
        const NodeContext ctx(*nd, model.config());
        return score_node(model, ctx, mask).metric;
    }
    const auto& gd = std::get<GraphDataset>(data);
    if (mask.size() != gd.records.size()) {
        throw input_error("evaluate: mask length does not match the dataset");
    }
    const auto batches = make_batches(gd, indices_of(mask), batch_size, model.config().graph_norm);
    return score_graphs(model, batches, gd.regression).metric;
}

RunResult train(const TrainConfig& cfg, const Dataset& data, std::uint64_t seed) {
    cfg.validate();
    const ModelConfig mc = resolve_model_config(cfg, data);
    Model model(mc, cfg.variant, seed);
    const SplitMasks masks = run_split(cfg, data, seed);
    for (Split s : {Split::train, Split::val, Split::test}) {
        if (masks.count(s) == 0) {
            throw input_error("split '" + std::string(s == Split::train ? "train"
                                                       : s == Split::val ? "val"
                                                                         : "test") +
                              "' is empty");
        }
    }

    Rng dropout_rng = make_stream(seed, Stream::dropout);
    Rng batch_rng = make_stream(seed, Stream::batch);
    OptimState opt = make_optim_state(model.parameters(), cfg.init_lr, cfg.weight_decay);
    SchedulerState sched;
    sched.lr = cfg.init_lr;
    sched.min_lr = cfg.min_lr;
    sched.patience = cfg.patience.value_or(0);
    sched.factor = cfg.lr_reduce_factor;

    RunResult run;
    run.seed = seed;
    run.num_params = model.count_params();

    const bool regression = mc.task == TaskKind::graph_regression;
    const bool higher_is_better = !regression;
    std::optional<SplitScore> best;

    const auto* nd = std::get_if<NodeDataset>(&data);
    const auto* gd = std::get_if<GraphDataset>(&data);
    std::optional<NodeContext> node_ctx;
    std::vector<std::size_t> train_idx;
    std::vector<GraphBatch> val_batches;
    std::vector<GraphBatch> test_batches;
    if (nd != nullptr) {
        node_ctx.emplace(*nd, mc);
    } else {
        train_idx = indices_of(masks.train);
        val_batches = make_batches(*gd, indices_of(masks.val), cfg.batch_size, mc.graph_norm);
    }

    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        double train_loss = 0.0;
        if (nd != nullptr) {
            model.zero_grad();
            Tape tape;
            const Value logits = model.forward(tape, node_ctx->input(), &dropout_rng);
            const Value loss = ad::softmax_cross_entropy(logits, nd->labels, masks.train);
            train_loss = loss.scalar();
            check_finite_loss(train_loss, epoch, seed);
            tape.backward(loss);
            adam_step(model.parameters(), opt);
        } else {
            batch_rng.shuffle(train_idx);
            double weighted = 0.0;
            for (std::size_t s = 0; s < train_idx.size(); s += cfg.batch_size) {
                const std::size_t e = std::min(train_idx.size(), s + cfg.batch_size);
                const GraphBatch b = make_batch(
                    *gd, std::span<const std::size_t>(train_idx).subspan(s, e - s), mc.graph_norm);
                model.zero_grad();
                Tape tape;
                const Value out = model.forward(tape, b.input(), &dropout_rng);
                const Value loss = graph_loss(out, b, regression);
                check_finite_loss(loss.scalar(), epoch, seed);
                weighted += loss.scalar() * static_cast<double>(e - s);
                tape.backward(loss);
                adam_step(model.parameters(), opt);
            }
            train_loss = weighted / static_cast<double>(train_idx.size());
        }

        const SplitScore val = nd != nullptr ? score_node(model, *node_ctx, masks.val)
                                             : score_graphs(model, val_batches, regression);
        check_finite_loss(val.loss, epoch, seed);
        run.history.push_back({train_loss, val.metric, opt.lr});
        if (!best || better(val, *best, higher_is_better)) {
            best = val;
            run.best_epoch = epoch;
            run.best_state = model.snapshot();
        }
        if (cfg.patience) {
            const PlateauStep step = plateau_update(sched, val.loss, MetricMode::min);
            opt.lr = step.lr;
            if (step.stop) {
                break;
            }
        }
    }

    model.restore(run.best_state);
    run.test_metric = evaluate(model, data, masks, Split::test, cfg.batch_size);
    return run;
}

// ---------------------------------------------------------------------------
// Multi-seed runs and reporting

std::pair<double, double> mean_std(const std::vector<double>& xs) {
    if (xs.empty()) {
        return {0.0, 0.0};
    }
    const double n = static_cast<double>(xs.size());
    const double mean = std::accumulate(xs.begin(), xs.end(), 0.0) / n;
    if (xs.size() < 2) {
        return {mean, 0.0};
    }
    double ss = 0.0;
    for (double x : xs) {
        ss += (x - mean) * (x - mean);
    }
    return {mean, std::sqrt(ss / (n - 1.0))};
}

std::size_t worker_count() {
    std::size_t n = std::max(1u, std::thread::hardware_concurrency());
    if (const char* env = std::getenv("AUTOSPEC_THREADS")) {
        std::size_t cap = 0;
        const std::string s(env);
        const auto res = std::from_chars(s.data(), s.data() + s.size(), cap);
        if (res.ec == std::errc() && cap >= 1) {
            n = std::min(n, cap);
        }
    }
    return n;
}

MultiSeedResult multi_seed(const TrainConfig& cfg, const Dataset& data) {
    cfg.validate();
    const std::size_t n = cfg.seeds.size();
    std::vector<RunResult> runs(n);
    std::vector<std::exception_ptr> errors(n);
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (std::size_t i = next++; i < n; i = next++) {
            try {
                runs[i] = train(cfg, data, cfg.seeds[i]);
            } catch (...) {
                errors[i] = std::current_exception();
            }
        }
    };
    const std::size_t workers = std::min(worker_count(), n);
    if (workers <= 1) {
        worker();
    } else {
        std::vector<std::jthread> pool;
        for (std::size_t w = 0; w < workers; ++w) {
            pool.emplace_back(worker);
        }
    }
    for (const auto& e : errors) {
        if (e) {
            std::rethrow_exception(e);
        }
    }
    MultiSeedResult res;
    std::vector<double> metrics;
    for (const auto& r : runs) {
        metrics.push_back(r.test_metric);
    }
    std::tie(res.mean, res.std) = mean_std(metrics);
    res.runs = std::move(runs);
    return res;
}

void write_run_log(std::ostream& out, const RunResult& run) {
    out << "epoch,train_loss,val_metric,lr\n";
    for (std::size_t e = 0; e < run.history.size(); ++e) {
        const auto& h = run.history[e];
        out << e << ',' << format_double(h.train_loss) << ',' << format_double(h.val_metric) << ','
            << format_double(h.lr) << '\n';
    }
}

void write_summary(std::ostream& out, const TrainConfig& cfg, const MultiSeedResult& res) {
    nlohmann::ordered_json j;
    char digest[17];
    std::snprintf(digest, sizeof(digest), "%016llx",
                  static_cast<unsigned long long>(fnv1a64(cfg.to_text())));
    j["config_digest"] = digest;
    j["model"] = to_string(cfg.model.model);
    j["variant"] = to_string(cfg.variant);
    j["metric"] = cfg.model.task == TaskKind::graph_regression ? "mae" : "accuracy";
    j["num_params"] = res.runs.empty() ? 0 : res.runs.front().num_params;
    nlohmann::ordered_json runs = nlohmann::ordered_json::array();
    for (const auto& r : res.runs) {
        nlohmann::ordered_json jr;
        jr["seed"] = r.seed;
        jr["test_metric"] = r.test_metric;
        jr["best_epoch"] = r.best_epoch;
        jr["epochs_run"] = r.history.size();
        runs.push_back(jr);
    }
    j["runs"] = runs;
    j["mean"] = res.mean;
    j["std"] = res.std;
    out << j.dump(2) << '\n';
}

}  // namespace autogcn
