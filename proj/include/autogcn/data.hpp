#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "autogcn/graph.hpp"
#include "autogcn/rng.hpp"

namespace autogcn {

enum class Split : std::uint8_t { none = 0, train = 1, val = 2, test = 3 };

struct SplitMasks {
    std::vector<std::uint8_t> train;
    std::vector<std::uint8_t> val;
    std::vector<std::uint8_t> test;

    bool empty() const noexcept { return train.empty(); }
    std::size_t count(Split s) const;
};

/// Node-level dataset on a single graph. Token features (integer ids) are kept
/// in `tokens` and the feature matrix is then n x 0.
struct NodeDataset {
    Graph graph;
    std::vector<std::size_t> labels;
    std::vector<std::string> label_names;
    std::size_t num_classes = 0;
    bool token_features = false;
    std::vector<std::size_t> tokens;
    SplitMasks masks;  ///< empty when the split is drawn at train time

    std::size_t num_nodes() const noexcept { return graph.num_nodes(); }
    std::size_t vocab() const;  ///< max token + 1
    void validate() const;
};

/// One attributed graph of a graph-level dataset.
struct GraphRecord {
    std::size_t n = 0;
    std::vector<Edge> edges;
    std::vector<std::size_t> tokens;
    double target = 0.0;
    Split split = Split::none;
};

struct GraphDataset {
    std::vector<GraphRecord> records;
    bool regression = false;

    std::size_t num_classes() const;  ///< 1 for regression
    std::size_t vocab() const;
    void validate() const;
};

struct SBMSpec {
    std::vector<std::size_t> block_sizes;
    double p_in = 0.5;
    double q_out = 0.05;
    std::size_t vocab = 3;
    std::uint64_t seed = 1;

    void validate() const;
    std::size_t num_nodes() const;
};

/// One SBM draw: edges, uniform tokens in {1..vocab}, block ids as labels.
struct SBMSample {
    std::size_t n = 0;
    std::vector<Edge> edges;
    std::vector<std::size_t> tokens;
    std::vector<std::size_t> blocks;
};

SBMSample sbm_sample(const SBMSpec& spec, Rng& rng);

/// Node dataset from one SBM draw seeded by spec.seed; labels are block ids.
NodeDataset sbm_generate(const SBMSpec& spec);
/// `num_graphs` independent draws from one RNG seeded by spec.seed.
std::vector<SBMSample> sbm_generate(const SBMSpec& spec, std::size_t num_graphs);

/// Heterophilous node task: an SBM where q_out may exceed p_in.
NodeDataset heterophily_task(const SBMSpec& spec);

/// Pattern-membership node task: a base SBM with one planted block of
/// distinct density; label 1 marks planted nodes.
NodeDataset pattern_task(const SBMSpec& base, std::size_t pattern_size, double p_pattern,
                         double q_pattern);

/// Two-class graph task: class c graphs drawn from spec_c.
GraphDataset sbm_graph_classes(const SBMSpec& spec0, const SBMSpec& spec1, std::size_t per_class,
                               std::uint64_t seed);

/// Fraction of edges whose endpoints share a label.
double edge_homophily(const NodeDataset& ds);

/// Random permutation split. Validation and test sizes are floor(ratio * n);
/// the remainder goes to training.
SplitMasks random_split(std::size_t n, double train_ratio, double val_ratio, double test_ratio,
                        Rng& rng);

/// Directory layout: edges.txt, features.csv ("#tokens" first line for token
/// features), labels.txt, optional classes.txt and splits.txt.
NodeDataset load_node_dataset(const std::filesystem::path& dir);
void save_node_dataset(const NodeDataset& ds, const std::filesystem::path& dir);

/// One record per line: "n;u v u v ...;t0 t1 ...;target[;split]". The first
/// line may be "#regression" or "#classification".
GraphDataset load_graph_dataset(const std::filesystem::path& path);
GraphDataset parse_graph_dataset(std::istream& in);
void save_graph_dataset(const GraphDataset& ds, const std::filesystem::path& path);
void write_graph_dataset(std::ostream& out, const GraphDataset& ds);

/// Shortest decimal representation that round-trips.
std::string format_double(double v);

}  // namespace autogcn
