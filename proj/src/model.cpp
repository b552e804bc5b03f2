#include "autogcn/model.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cctype>
#include <cmath>
#include <cstring>
#include <fstream>

#include "autogcn/error.hpp"

namespace autogcn {

namespace {

std::string lower(std::string_view s) {
    std::string out(s);
    std::transform(out.begin(), out.end(), out.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return out;
}

Matrix glorot(std::size_t fan_in, std::size_t fan_out, Rng& rng) {
    const double s = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    Matrix w(fan_in, fan_out);
    for (double& v : w.data()) {
        v = rng.uniform(-s, s);
    }
    return w;
}

}  // namespace

std::string_view to_string(TaskKind v) {
    switch (v) {
        case TaskKind::node_classification:
            return "node";
        case TaskKind::graph_classification:
            return "graph";
        case TaskKind::graph_regression:
            return "graph_regression";
    }
    return "?";
}

std::string_view to_string(ModelKind v) { return v == ModelKind::autogcn ? "autogcn" : "gcn"; }

std::string_view to_string(Activation v) {
    switch (v) {
        case Activation::relu:
            return "relu";
        case Activation::sigmoid:
            return "sigmoid";
        case Activation::identity:
            return "identity";
    }
    return "?";
}

std::string_view to_string(AblationVariant v) {
    switch (v) {
        case AblationVariant::full:
            return "FULL";
        case AblationVariant::no_low:
            return "NO_LOW";
        case AblationVariant::no_high:
            return "NO_HIGH";
        case AblationVariant::no_mid:
            return "NO_MID";
        case AblationVariant::no_over:
            return "NO_OVER";
        case AblationVariant::no_par:
            return "NO_PAR";
        case AblationVariant::no_gate:
            return "NO_GATE";
    }
    return "?";
}

TaskKind parse_task(std::string_view s) {
    const auto l = lower(s);
    if (l == "node") {
        return TaskKind::node_classification;
    }
    if (l == "graph") {
        return TaskKind::graph_classification;
    }
    if (l == "graph_regression") {
        return TaskKind::graph_regression;
    }
    throw parameter_error("unknown task '" + std::string(s) + "'");
}

ModelKind parse_model_kind(std::string_view s) {
    const auto l = lower(s);
    if (l == "autogcn") {
        return ModelKind::autogcn;
    }
    if (l == "gcn") {
        return ModelKind::gcn;
    }
    throw parameter_error("unknown model '" + std::string(s) + "'");
}

Activation parse_activation(std::string_view s) {
    const auto l = lower(s);
    if (l == "relu") {
        return Activation::relu;
    }
    if (l == "sigmoid") {
        return Activation::sigmoid;
    }
    if (l == "identity") {
        return Activation::identity;
    }
    throw parameter_error("unknown activation '" + std::string(s) + "'");
}

std::vector<AblationVariant> all_variants() {
    return {AblationVariant::full,    AblationVariant::no_low, AblationVariant::no_high,
            AblationVariant::no_mid,  AblationVariant::no_over, AblationVariant::no_par,
            AblationVariant::no_gate};
}

AblationVariant parse_variant(std::string_view s) {
    const auto l = lower(s);
    for (auto v : all_variants()) {
        if (lower(to_string(v)) == l) {
            return v;
        }
    }
    throw parameter_error("unknown ablation variant '" + std::string(s) + "'");
}

void ModelConfig::validate() const {
    if (layers < 1 || hidden < 1 || k < 1) {
        throw parameter_error("model config needs layers >= 1, hidden >= 1, K >= 1");
    }
    if (!(dropout >= 0.0 && dropout < 1.0)) {
        throw parameter_error("dropout must lie in [0,1)");
    }
    if (out_dim < 1) {
        throw parameter_error("model config has no output dimension");
    }
    if (token_features ? vocab < 1 : in_dim < 1) {
        throw parameter_error("model config has no input dimension");
    }
    if (task == TaskKind::graph_regression && out_dim != 1) {
        throw parameter_error("regression head must have out_dim 1");
    }
}

Model::Model(const ModelConfig& cfg, AblationVariant variant, std::uint64_t seed)
    : cfg_(cfg), variant_(variant), width_(cfg.hidden) {
    cfg_.validate();
    if (cfg_.model == ModelKind::gcn && variant_ != AblationVariant::full) {
        throw parameter_error("ablation variants apply to AutoGCN only");
    }
    const bool drops_branch = variant_ == AblationVariant::no_low ||
                              variant_ == AblationVariant::no_high ||
                              variant_ == AblationVariant::no_mid;
    if (drops_branch) {
        width_ = static_cast<std::size_t>(std::lround(static_cast<double>(cfg_.hidden) * std::sqrt(1.5)));
    }
    Rng rng = make_stream(seed, Stream::init);

    std::size_t d_in = cfg_.in_dim;
    if (cfg_.token_features) {
        embedding_ = add_param("embed.weight", glorot(cfg_.vocab, width_, rng));
        d_in = width_;
    }

    for (std::size_t l = 0; l < cfg_.layers; ++l) {
        const std::string prefix = "layer" + std::to_string(l) + ".";
        Layer layer;
        layer.d_in = d_in;
        layer.d_out = width_;
        if (cfg_.model == ModelKind::gcn) {
            layer.gcn_weight = add_param(prefix + "weight", glorot(d_in, width_, rng));
            layer.gcn_bias = add_param(prefix + "bias", Matrix(1, width_));
        } else {
            for (FilterKind kind : kAllKinds) {
                if ((kind == FilterKind::low && variant_ == AblationVariant::no_low) ||
                    (kind == FilterKind::high && variant_ == AblationVariant::no_high) ||
                    (kind == FilterKind::mid && variant_ == AblationVariant::no_mid)) {
                    continue;
                }
                const std::string bp = prefix + std::string(to_string(kind)) + ".";
                Branch b;
                b.kind = kind;
                switch (variant_) {
                    case AblationVariant::no_par:
                        break;
                    case AblationVariant::no_over:
                        b.theta = add_param(bp + "theta", Matrix(1, 1, softplus_inverse(1.0)));
                        b.a_logit = add_param(bp + "a_logit", Matrix(1, 1, 0.0));
                        break;
                    default: {
                        b.grid = bank_grid(kind, cfg_.k);
                        const double t0 = softplus_inverse(1.0 / static_cast<double>(cfg_.k));
                        b.theta = add_param(bp + "theta", Matrix(1, cfg_.k, t0));
                        break;
                    }
                }
                b.weight = add_param(bp + "weight", glorot(d_in, width_, rng));
                layer.branches.push_back(std::move(b));
            }
        }
        if (cfg_.residual && d_in != width_) {
            layer.residual_proj = add_param(prefix + "residual", glorot(d_in, width_, rng));
        }
        if (cfg_.norm) {
            layer.norm_gain = add_param(prefix + "norm.gain", Matrix(1, width_, 1.0));
            layer.norm_bias = add_param(prefix + "norm.bias", Matrix(1, width_));
        }
        layers_.push_back(std::move(layer));
        d_in = width_;
    }

    const std::size_t hh = cfg_.head_hidden == 0 ? width_ : cfg_.head_hidden;
    head_w1_ = add_param("head.fc1.weight", glorot(width_, hh, rng));
    head_b1_ = add_param("head.fc1.bias", Matrix(1, hh));
    head_w2_ = add_param("head.fc2.weight", glorot(hh, cfg_.out_dim, rng));
    head_b2_ = add_param("head.fc2.bias", Matrix(1, cfg_.out_dim));
}

std::size_t Model::add_param(std::string name, Matrix value) {
    params_.emplace_back(std::move(name), std::move(value));
    return params_.size() - 1;
}

Parameter& Model::parameter(std::string_view name) {
    for (auto& p : params_) {
        if (p.name == name) {
            return p;
        }
    }
    throw input_error("no parameter named '" + std::string(name) + "'");
}

std::size_t Model::count_params() const {
    std::size_t n = 0;
    for (const auto& p : params_) {
        n += p.value.size();
    }
    return n;
}

void Model::zero_grad() {
    for (auto& p : params_) {
        p.zero_grad();
    }
}

std::vector<Matrix> Model::snapshot() const {
    std::vector<Matrix> out;
    out.reserve(params_.size());
    for (const auto& p : params_) {
        out.push_back(p.value);
    }
    return out;
}

void Model::restore(const std::vector<Matrix>& values) {
    if (values.size() != params_.size()) {
        throw input_error("Model::restore: tensor count mismatch");
    }
    for (std::size_t i = 0; i < values.size(); ++i) {
        require_same_shape(params_[i].value, values[i], "Model::restore");
        params_[i].value = values[i];
    }
}

std::optional<EffectiveFilter> Model::effective_filter(std::size_t layer, FilterKind kind) const {
    if (layer >= layers_.size()) {
        return std::nullopt;
    }
    for (const auto& b : layers_[layer].branches) {
        if (b.kind != kind) {
            continue;
        }
        if (!b.theta) {
            return EffectiveFilter{1.0, 0.5};
        }
        const Matrix& theta = params_[*b.theta].value;
        if (b.a_logit) {
            const double z = params_[*b.a_logit].value(0, 0);
            return EffectiveFilter{softplus(theta(0, 0)), 1.0 / (1.0 + std::exp(-z))};
        }
        return FilterBank(kind, b.grid, theta.data()).effective();
    }
    return std::nullopt;
}

Value activate(const Value& x, Activation act) {
    switch (act) {
        case Activation::relu:
            return ad::relu(x);
        case Activation::sigmoid:
            return ad::sigmoid(x);
        case Activation::identity:
            return x;
    }
    return x;
}

Value combine_branches(std::span<const Value> branches, bool gating, Activation gate) {
    if (branches.empty()) {
        throw input_error("combine_branches: no branches");
    }
    Value total = branches[0];
    for (std::size_t i = 1; i < branches.size(); ++i) {
        total = ad::add(total, branches[i]);
    }
    if (!gating || branches.size() == 1) {
        return total;
    }
    Value out;
    for (std::size_t i = 0; i < branches.size(); ++i) {
        Value others;
        bool first = true;
        for (std::size_t j = 0; j < branches.size(); ++j) {
            if (j == i) {
                continue;
            }
            others = first ? branches[j] : ad::add(others, branches[j]);
            first = false;
        }
        const Value term = ad::hadamard(branches[i], activate(others, gate));
        out = i == 0 ? term : ad::add(out, term);
    }
    return out;
}

std::pair<Value, Value> Model::branch_coefficients(Tape& tape, const Branch& b) {
    if (!b.theta) {
        return {tape.constant(Matrix(1, 1, 1.0)), tape.constant(Matrix(1, 1, 0.5))};
    }
    const Value p = ad::softplus(param(tape, *b.theta));
    if (b.a_logit) {
        const Value a = ad::sigmoid(param(tape, *b.a_logit));
        return {p, ad::hadamard(p, a)};
    }
    // [p̃, Σ p_i a_i] = p · [1 | a]
    Matrix basis(b.grid.size(), 2);
    for (std::size_t i = 0; i < b.grid.size(); ++i) {
        basis(i, 0) = 1.0;
        basis(i, 1) = b.grid[i];
    }
    const Value s = ad::matmul(p, tape.constant(std::move(basis)));
    return {ad::element(s, 0, 0), ad::element(s, 0, 1)};
}

Value Model::layer_forward(Tape& tape, const Layer& layer, const Value& h, const GraphInput& input,
                           Rng* dropout_rng) {
    if (h.cols() != layer.d_in) {
        throw input_error("layer_forward: input has " + std::to_string(h.cols()) +
                          " columns, layer expects " + std::to_string(layer.d_in));
    }
    Value x;
    if (layer.gcn_weight) {
        if (input.ahat == nullptr) {
            throw input_error("GCN layer needs the renormalized adjacency");
        }
        const Value ah = ad::spmm_const(*input.ahat, h);
        x = ad::add_row(ad::matmul(ah, param(tape, *layer.gcn_weight)), param(tape, *layer.gcn_bias));
        x = ad::relu(x);
    } else {
        if (input.atilde == nullptr) {
            throw input_error("AutoGCN layer needs the normalized adjacency");
        }
        // Shared propagations: Ãh and Ã²h are computed once per layer.
        const Value ah = ad::spmm_const(*input.atilde, h);
        std::optional<Value> a2h;
        std::optional<Value> ah_minus_h;
        std::optional<Value> ah_plus_h;
        std::vector<Value> outs;
        for (const auto& b : layer.branches) {
            const auto [ptilde, q] = branch_coefficients(tape, b);
            Value filtered;
            switch (b.kind) {
                case FilterKind::low:
                    // p̃(ãÃh + (1-ã)h) = p̃h + p̃ã(Ãh - h)
                    if (!ah_minus_h) {
                        ah_minus_h = ad::sub(ah, h);
                    }
                    filtered = ad::add(ad::scale(h, ptilde), ad::scale(*ah_minus_h, q));
                    break;
                case FilterKind::high:
                    // p̃(-ãÃh + (1-ã)h) = p̃h - p̃ã(Ãh + h)
                    if (!ah_plus_h) {
                        ah_plus_h = ad::add(ah, h);
                    }
                    filtered = ad::sub(ad::scale(h, ptilde), ad::scale(*ah_plus_h, q));
                    break;
                case FilterKind::mid:
                    // p̃(Ã²h - ãh)
                    if (!a2h) {
                        a2h = ad::spmm_const(*input.atilde, ah);
                    }
                    filtered = ad::sub(ad::scale(*a2h, ptilde), ad::scale(h, q));
                    break;
            }
            outs.push_back(ad::matmul(filtered, param(tape, b.weight)));
        }
        const bool gating = cfg_.gating && variant_ != AblationVariant::no_gate;
        x = activate(combine_branches(outs, gating, cfg_.gate_act), cfg_.outer_act);
    }

    if (cfg_.graph_norm && !input.size_scale.empty()) {
        x = ad::scale_rows_const(x, input.size_scale);
    }
    if (cfg_.residual) {
        x = ad::add(x, layer.residual_proj ? ad::matmul(h, param(tape, *layer.residual_proj)) : h);
    }
    if (layer.norm_gain) {
        x = ad::affine_norm(x, param(tape, *layer.norm_gain), param(tape, *layer.norm_bias));
    }
    if (dropout_rng != nullptr) {
        x = ad::dropout(x, cfg_.dropout, *dropout_rng);
    }
    return x;
}

Value Model::head_forward(Tape& tape, const Value& h) {
    Value z = ad::add_row(ad::matmul(h, param(tape, head_w1_)), param(tape, head_b1_));
    z = ad::relu(z);
    return ad::add_row(ad::matmul(z, param(tape, head_w2_)), param(tape, head_b2_));
}

Value Model::forward(Tape& tape, const GraphInput& input, Rng* dropout_rng) {
    Value h;
    if (cfg_.token_features) {
        if (input.tokens.empty()) {
            throw input_error("model expects token features");
        }
        for (std::size_t t : input.tokens) {
            if (t >= cfg_.vocab) {
                throw input_error("token " + std::to_string(t) + " outside embedding vocabulary " +
                                  std::to_string(cfg_.vocab));
            }
        }
        h = ad::row_select(param(tape, *embedding_), input.tokens);
    } else {
        if (input.features == nullptr || input.features->cols() != cfg_.in_dim) {
            throw input_error("model expects real features with " + std::to_string(cfg_.in_dim) +
                              " columns");
        }
        h = tape.constant(*input.features);
    }
    for (const auto& layer : layers_) {
        h = layer_forward(tape, layer, h, input, dropout_rng);
    }
    if (cfg_.task != TaskKind::node_classification) {
        if (input.graph_sizes.empty()) {
            throw input_error("graph readout needs graph sizes");
        }
        h = ad::segment_mean(h, input.graph_sizes);
    }
    return head_forward(tape, h);
}

Model build_model(const ModelConfig& cfg, AblationVariant variant, std::uint64_t seed) {
    return Model(cfg, variant, seed);
}

std::size_t count_params(const Model& model) { return model.count_params(); }

std::uint64_t fnv1a64(std::string_view text) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : text) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

namespace {

constexpr char kMagic[8] = {'A', 'G', 'C', 'N', 'C', 'K', 'P', 'T'};
constexpr std::uint32_t kCheckpointVersion = 1;

template <typename T>
void put_le(std::ostream& out, T v) {
    static_assert(std::is_integral_v<T>);
    for (std::size_t i = 0; i < sizeof(T); ++i) {
        out.put(static_cast<char>((static_cast<std::uint64_t>(v) >> (8 * i)) & 0xff));
    }
}

template <typename T>
T get_le(std::istream& in) {
    std::uint64_t v = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i) {
        const int c = in.get();
        if (c == EOF) {
            throw input_error("checkpoint truncated");
        }
        v |= static_cast<std::uint64_t>(static_cast<unsigned char>(c)) << (8 * i);
    }
    return static_cast<T>(v);
}

void put_string(std::ostream& out, const std::string& s) {
    put_le<std::uint64_t>(out, s.size());
    out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

std::string get_string(std::istream& in) {
    const auto n = get_le<std::uint64_t>(in);
    if (n > (1u << 26)) {
        throw input_error("checkpoint string too long");
    }
    std::string s(n, '\0');
    in.read(s.data(), static_cast<std::streamsize>(n));
    if (!in) {
        throw input_error("checkpoint truncated");
    }
    return s;
}

CheckpointMeta read_header(std::istream& in) {
    char magic[8];
    in.read(magic, 8);
    if (!in || std::memcmp(magic, kMagic, 8) != 0) {
        throw input_error("not a checkpoint file (bad magic)");
    }
    const auto version = get_le<std::uint32_t>(in);
    if (version != kCheckpointVersion) {
        throw input_error("unsupported checkpoint version " + std::to_string(version));
    }
    CheckpointMeta meta;
    meta.config_digest = get_le<std::uint64_t>(in);
    meta.seed = get_le<std::uint64_t>(in);
    meta.variant = parse_variant(get_string(in));
    meta.config_text = get_string(in);
    if (fnv1a64(meta.config_text) != meta.config_digest) {
        throw input_error("checkpoint config digest mismatch");
    }
    return meta;
}

}  // namespace

void save_checkpoint(const Model& model, const CheckpointMeta& meta,
                     const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw input_error("cannot write checkpoint " + path.string());
    }
    out.write(kMagic, 8);
    put_le<std::uint32_t>(out, kCheckpointVersion);
    put_le<std::uint64_t>(out, fnv1a64(meta.config_text));
    put_le<std::uint64_t>(out, meta.seed);
    put_string(out, std::string(to_string(meta.variant)));
    put_string(out, meta.config_text);
    put_le<std::uint64_t>(out, model.parameters().size());
    std::ofstream side(path.string() + ".txt", std::ios::trunc);
    for (const auto& p : model.parameters()) {
        put_le<std::uint64_t>(out, p.value.rows());
        put_le<std::uint64_t>(out, p.value.cols());
        for (double v : p.value.data()) {
            put_le<std::uint64_t>(out, std::bit_cast<std::uint64_t>(v));
        }
        side << p.name << ' ' << p.value.rows() << ' ' << p.value.cols() << '\n';
    }
    if (!out || !side) {
        throw input_error("failed writing checkpoint " + path.string());
    }
}

CheckpointMeta read_checkpoint_meta(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw input_error("cannot open checkpoint " + path.string());
    }
    return read_header(in);
}

void load_checkpoint_into(Model& model, const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw input_error("cannot open checkpoint " + path.string());
    }
    read_header(in);
    const auto count = get_le<std::uint64_t>(in);
    auto& params = model.parameters();
    if (count != params.size()) {
        throw input_error("checkpoint holds " + std::to_string(count) + " tensors, model has " +
                          std::to_string(params.size()));
    }
    for (auto& p : params) {
        const auto rows = get_le<std::uint64_t>(in);
        const auto cols = get_le<std::uint64_t>(in);
        if (rows != p.value.rows() || cols != p.value.cols()) {
            throw input_error("checkpoint tensor " + p.name + " has wrong shape");
        }
        for (double& v : p.value.data()) {
            v = std::bit_cast<double>(get_le<std::uint64_t>(in));
        }
    }
}

}  // namespace autogcn
