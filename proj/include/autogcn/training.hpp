#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "autogcn/data.hpp"
#include "autogcn/model.hpp"

namespace autogcn {

struct OptimState {
    std::vector<Matrix> m;
    std::vector<Matrix> v;
    std::size_t step = 0;
    double lr = 1e-2;
    double weight_decay = 0.0;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

OptimState make_optim_state(const std::vector<Parameter>& params, double lr, double weight_decay);

/// One Adam update from the gradients held in `params`. Weight decay is added
/// to the gradient (L2-coupled). Throws numerical_error naming the parameter
/// on a non-finite gradient.
void adam_step(std::vector<Parameter>& params, OptimState& st);

enum class MetricMode { min, max };

struct SchedulerState {
    double lr = 1e-2;
    double min_lr = 1e-5;
    std::size_t patience = 10;
    double factor = 0.5;
    std::size_t wait = 0;
    std::optional<double> best;
};

struct PlateauStep {
    double lr;
    bool stop;
};

/// Reduce-on-plateau. After more than `patience` epochs without strict
/// improvement the rate becomes max(lr * factor, min_lr); a trigger at
/// lr <= min_lr requests a stop instead.
PlateauStep plateau_update(SchedulerState& st, double metric, MetricMode mode);

/// Flat "key = value" run configuration. Unknown keys are rejected.
struct TrainConfig {
    ModelConfig model;
    AblationVariant variant = AblationVariant::full;
    double init_lr = 1e-2;
    /// Unset: constant learning rate for the whole epoch budget.
    std::optional<std::size_t> patience;
    double min_lr = 1e-5;
    double weight_decay = 0.0;
    double lr_reduce_factor = 0.5;
    std::size_t epochs = 1000;
    std::vector<std::uint64_t> seeds{1, 2, 3, 4, 5};
    double train_ratio = 0.6;
    double val_ratio = 0.2;
    double test_ratio = 0.2;
    std::size_t batch_size = 128;

    void validate() const;
    /// Canonical text; parse(to_text()) reproduces the config.
    std::string to_text() const;
};

TrainConfig parse_train_config(std::istream& in);
TrainConfig parse_train_config_text(const std::string& text);
TrainConfig load_train_config(const std::filesystem::path& path);

struct EpochRecord {
    double train_loss = 0.0;
    double val_metric = 0.0;
    double lr = 0.0;
};

struct RunResult {
    double test_metric = 0.0;
    std::size_t best_epoch = 0;
    std::uint64_t seed = 0;
    std::vector<EpochRecord> history;
    /// Parameter values of the best-validation snapshot.
    std::vector<Matrix> best_state;
    std::size_t num_params = 0;
};

using Dataset = std::variant<NodeDataset, GraphDataset>;

/// Directory: node dataset; file: graph dataset.
Dataset load_dataset(const std::filesystem::path& path);

/// Model configuration completed with the dataset's input/output sizes.
ModelConfig resolve_model_config(const TrainConfig& cfg, const Dataset& data);

/// Train/val/test assignment used by a run: stored masks or splits when the
/// dataset has them, otherwise a random split from the seed's split stream.
SplitMasks run_split(const TrainConfig& cfg, const Dataset& data, std::uint64_t seed);

/// One full training run.
RunResult train(const TrainConfig& cfg, const Dataset& data, std::uint64_t seed);

/// Accuracy for classification, MAE for regression. Throws input_error on an
/// empty split.
double evaluate(Model& model, const Dataset& data, const SplitMasks& masks, Split split,
                std::size_t batch_size = 128);

/// Accuracy of row-wise argmax (lowest index wins ties) over masked rows.
double accuracy(const Matrix& logits, const std::vector<std::size_t>& labels,
                const std::vector<std::uint8_t>& mask);

struct MultiSeedResult {
    double mean = 0.0;
    double std = 0.0;
    std::vector<RunResult> runs;
};

/// Runs every seed in cfg.seeds, possibly in parallel (AUTOSPEC_THREADS caps
/// the worker count). Results are in seed order; std uses n - 1.
MultiSeedResult multi_seed(const TrainConfig& cfg, const Dataset& data);

/// Mean and sample standard deviation.
std::pair<double, double> mean_std(const std::vector<double>& xs);

std::size_t worker_count();

void write_run_log(std::ostream& out, const RunResult& run);
/// Summary JSON: config digest, per-seed metrics, mean and std.
void write_summary(std::ostream& out, const TrainConfig& cfg, const MultiSeedResult& res);

}  // namespace autogcn
