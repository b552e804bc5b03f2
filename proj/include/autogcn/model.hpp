#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "autogcn/autodiff.hpp"
#include "autogcn/filters.hpp"
#include "autogcn/graph.hpp"

namespace autogcn {

enum class TaskKind { node_classification, graph_classification, graph_regression };
enum class ModelKind { autogcn, gcn };
enum class Activation { relu, sigmoid, identity };
enum class AblationVariant { full, no_low, no_high, no_mid, no_over, no_par, no_gate };

std::string_view to_string(TaskKind v);
std::string_view to_string(ModelKind v);
std::string_view to_string(Activation v);
std::string_view to_string(AblationVariant v);
TaskKind parse_task(std::string_view s);
ModelKind parse_model_kind(std::string_view s);
Activation parse_activation(std::string_view s);
/// Accepts FULL, NO_LOW, ... in any case; throws parameter_error otherwise.
AblationVariant parse_variant(std::string_view s);
std::vector<AblationVariant> all_variants();

struct ModelConfig {
    TaskKind task = TaskKind::node_classification;
    ModelKind model = ModelKind::autogcn;
    std::size_t layers = 1;
    std::size_t hidden = 16;
    std::size_t k = 16;
    double dropout = 0.5;
    bool residual = false;
    bool norm = false;
    bool graph_norm = false;
    bool gating = true;
    Activation gate_act = Activation::sigmoid;
    Activation outer_act = Activation::relu;
    /// Width of the head's hidden layer; 0 means `hidden`.
    std::size_t head_hidden = 0;

    // Input/output description, normally filled in from the dataset.
    std::size_t in_dim = 0;
    bool token_features = false;
    /// Embedding rows when token_features is set (max token + 1).
    std::size_t vocab = 0;
    /// Classes, or 1 for regression.
    std::size_t out_dim = 0;

    void validate() const;
};

/// One forward-pass input: a single graph or a block-diagonal batch of graphs.
struct GraphInput {
    const SparseSymMatrix* atilde = nullptr;  ///< normalized adjacency
    const SparseSymMatrix* ahat = nullptr;    ///< renormalized adjacency (GCN)
    const Matrix* features = nullptr;         ///< real-valued features
    std::span<const std::size_t> tokens;      ///< token features
    /// Node counts per graph for readout; empty for node tasks.
    std::span<const std::size_t> graph_sizes;
    /// Per-node 1/sqrt(n_g) factors when graph_norm is on.
    std::span<const double> size_scale;
};

/// AutoGCN / GCN network with an MLP head.
///
/// Parameters live in one flat list in declaration order; layers refer to
/// them by index, so copying a Model copies an independent parameter set.
class Model {
public:
    Model(const ModelConfig& cfg, AblationVariant variant, std::uint64_t seed);

    const ModelConfig& config() const noexcept { return cfg_; }
    AblationVariant variant() const noexcept { return variant_; }
    /// Hidden width after ablation budget matching.
    std::size_t width() const noexcept { return width_; }

    /// Logits (n x c for node tasks, B x c for graph tasks). Dropout is only
    /// applied when `dropout_rng` is non-null.
    Value forward(Tape& tape, const GraphInput& input, Rng* dropout_rng);

    std::vector<Parameter>& parameters() noexcept { return params_; }
    const std::vector<Parameter>& parameters() const noexcept { return params_; }
    Parameter& parameter(std::string_view name);

    std::size_t count_params() const;
    void zero_grad();

    std::vector<Matrix> snapshot() const;
    void restore(const std::vector<Matrix>& values);

    /// Effective (p, a) of a branch, e.g. ("low", layer 0).
    std::optional<EffectiveFilter> effective_filter(std::size_t layer, FilterKind kind) const;

    // Building blocks, exposed for tests.
    struct Branch {
        FilterKind kind;
        std::vector<double> grid;
        std::optional<std::size_t> theta;   ///< 1xK pre-weights (bank) or 1x1 (direct)
        std::optional<std::size_t> a_logit; ///< 1x1, direct parameterization only
        std::size_t weight = 0;
    };
    struct Layer {
        std::size_t d_in = 0;
        std::size_t d_out = 0;
        std::vector<Branch> branches;           ///< AutoGCN only
        std::optional<std::size_t> gcn_weight;  ///< GCN only
        std::optional<std::size_t> gcn_bias;
        std::optional<std::size_t> residual_proj;
        std::optional<std::size_t> norm_gain;
        std::optional<std::size_t> norm_bias;
    };

    Value layer_forward(Tape& tape, const Layer& layer, const Value& h, const GraphInput& input,
                        Rng* dropout_rng);
    const std::vector<Layer>& layers() const noexcept { return layers_; }

private:
    std::size_t add_param(std::string name, Matrix value);
    Value param(Tape& tape, std::size_t idx) { return tape.parameter(params_[idx]); }
    Value head_forward(Tape& tape, const Value& h);
    /// (p̃, p̃·ã) for a branch, as 1x1 values.
    std::pair<Value, Value> branch_coefficients(Tape& tape, const Branch& b);

    ModelConfig cfg_;
    AblationVariant variant_;
    std::size_t width_;
    std::vector<Parameter> params_;
    std::optional<std::size_t> embedding_;
    std::vector<Layer> layers_;
    std::size_t head_w1_ = 0, head_b1_ = 0, head_w2_ = 0, head_b2_ = 0;
};

Model build_model(const ModelConfig& cfg, AblationVariant variant, std::uint64_t seed = 0);
std::size_t count_params(const Model& model);

/// Σ_i H_i ⊙ gate(Σ_{j≠i} H_j), before the outer activation. With gating
/// disabled this is the plain sum of the branches.
Value combine_branches(std::span<const Value> branches, bool gating, Activation gate);

Value activate(const Value& x, Activation act);

/// Binary checkpoint: magic, version, config digest, metadata text, then every
/// parameter as (rows, cols, little-endian doubles) in declaration order. A
/// sidecar "<path>.txt" lists names and shapes.
struct CheckpointMeta {
    std::string config_text;
    std::uint64_t config_digest = 0;
    std::uint64_t seed = 0;
    AblationVariant variant = AblationVariant::full;
};

void save_checkpoint(const Model& model, const CheckpointMeta& meta,
                     const std::filesystem::path& path);
CheckpointMeta read_checkpoint_meta(const std::filesystem::path& path);
/// Loads tensors into a model built from the same configuration.
void load_checkpoint_into(Model& model, const std::filesystem::path& path);

std::uint64_t fnv1a64(std::string_view text);

}  // namespace autogcn
