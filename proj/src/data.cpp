#include "autogcn/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <map>
#include <numeric>
#include <ostream>
#include <sstream>

#include "autogcn/error.hpp"

namespace autogcn {

std::string format_double(double v) {
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
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

std::vector<std::string> split_on(const std::string& s, char sep) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : s) {
        if (c == sep) {
            out.push_back(cur);
            cur.clear();
        } else {
            cur.push_back(c);
        }
    }
    out.push_back(cur);
    return out;
}

std::string where(const std::filesystem::path& file, std::size_t line) {
    return file.filename().string() + " line " + std::to_string(line);
}

bool parse_size(const std::string& s, std::size_t& out) {
    const auto t = trim(s);
    if (t.empty()) {
        return false;
    }
    const auto res = std::from_chars(t.data(), t.data() + t.size(), out);
    return res.ec == std::errc() && res.ptr == t.data() + t.size();
}

bool parse_real(const std::string& s, double& out) {
    const auto t = trim(s);
    if (t.empty()) {
        return false;
    }
    const auto res = std::from_chars(t.data(), t.data() + t.size(), out);
    return res.ec == std::errc() && res.ptr == t.data() + t.size() && std::isfinite(out);
}

std::vector<std::size_t> parse_size_list(const std::string& s, const std::string& ctx) {
    std::vector<std::size_t> out;
    std::istringstream in(s);
    std::string tok;
    while (in >> tok) {
        std::size_t v = 0;
        if (!parse_size(tok, v)) {
            throw input_error(ctx + ": expected a nonnegative integer, got '" + tok + "'");
        }
        out.push_back(v);
    }
    return out;
}

// Reads all lines, keeping numbering; '#' comment lines are reported as empty.
std::vector<std::string> read_lines(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw input_error("cannot open " + path.string());
    }
    std::vector<std::string> lines;
    std::string line;
    while (std::getline(in, line)) {
        lines.push_back(line);
    }
    return lines;
}

std::string_view split_name(Split s) {
    switch (s) {
        case Split::train:
            return "train";
        case Split::val:
            return "val";
        case Split::test:
            return "test";
        case Split::none:
            return "-";
    }
    return "-";
}

bool parse_split_name(const std::string& s, Split& out) {
    const auto t = trim(s);
    if (t == "train") {
        out = Split::train;
    } else if (t == "val") {
        out = Split::val;
    } else if (t == "test") {
        out = Split::test;
    } else if (t == "-" || t == "none") {
        out = Split::none;
    } else {
        return false;
    }
    return true;
}

}  // namespace

std::size_t SplitMasks::count(Split s) const {
    const auto& m = s == Split::train ? train : (s == Split::val ? val : test);
    return static_cast<std::size_t>(std::count(m.begin(), m.end(), std::uint8_t{1}));
}

std::size_t NodeDataset::vocab() const {
    return tokens.empty() ? 0 : *std::max_element(tokens.begin(), tokens.end()) + 1;
}

void NodeDataset::validate() const {
    const std::size_t n = num_nodes();
    if (labels.size() != n) {
        throw input_error("node dataset: " + std::to_string(labels.size()) + " labels for " +
                          std::to_string(n) + " nodes");
    }
    for (std::size_t y : labels) {
        if (y >= num_classes) {
            throw input_error("node dataset: label out of range");
        }
    }
    if (token_features && tokens.size() != n) {
        throw input_error("node dataset: token count does not match node count");
    }
    if (!masks.empty()) {
        if (masks.train.size() != n || masks.val.size() != n || masks.test.size() != n) {
            throw input_error("node dataset: mask length mismatch");
        }
        for (std::size_t i = 0; i < n; ++i) {
            if (masks.train[i] + masks.val[i] + masks.test[i] > 1) {
                throw input_error("node dataset: split masks overlap at node " + std::to_string(i));
            }
        }
    }
}

std::size_t GraphDataset::num_classes() const {
    if (regression) {
        return 1;
    }
    std::size_t c = 0;
    for (const auto& r : records) {
        c = std::max(c, static_cast<std::size_t>(r.target) + 1);
    }
    return c;
}

std::size_t GraphDataset::vocab() const {
    std::size_t v = 0;
    for (const auto& r : records) {
        for (std::size_t t : r.tokens) {
            v = std::max(v, t + 1);
        }
    }
    return v;
}

void GraphDataset::validate() const {
    for (std::size_t i = 0; i < records.size(); ++i) {
        const auto& r = records[i];
        const std::string ctx = "graph record " + std::to_string(i);
        if (r.n == 0) {
            throw input_error(ctx + ": empty graph");
        }
        if (r.tokens.size() != r.n) {
            throw input_error(ctx + ": token count does not match node count");
        }
        for (const auto& [u, v] : r.edges) {
            if (u >= r.n || v >= r.n) {
                throw input_error(ctx + ": edge index out of range");
            }
        }
        if (!regression && (r.target < 0 || r.target != std::floor(r.target))) {
            throw input_error(ctx + ": class target must be a nonnegative integer");
        }
    }
}

void SBMSpec::validate() const {
    if (block_sizes.empty()) {
        throw parameter_error("SBM spec needs at least one block");
    }
    for (std::size_t b : block_sizes) {
        if (b < 1) {
            throw parameter_error("SBM block sizes must be >= 1");
        }
    }
    if (!(p_in >= 0.0 && p_in <= 1.0 && q_out >= 0.0 && q_out <= 1.0)) {
        throw parameter_error("SBM probabilities must lie in [0,1]");
    }
    if (vocab < 1) {
        throw parameter_error("SBM vocabulary must be >= 1");
    }
}

std::size_t SBMSpec::num_nodes() const {
    return std::accumulate(block_sizes.begin(), block_sizes.end(), std::size_t{0});
}

SBMSample sbm_sample(const SBMSpec& spec, Rng& rng) {
    spec.validate();
    SBMSample s;
    s.n = spec.num_nodes();
    for (std::size_t b = 0; b < spec.block_sizes.size(); ++b) {
        s.blocks.insert(s.blocks.end(), spec.block_sizes[b], b);
    }
    for (std::size_t i = 0; i < s.n; ++i) {
        for (std::size_t j = i + 1; j < s.n; ++j) {
            const double p = s.blocks[i] == s.blocks[j] ? spec.p_in : spec.q_out;
            if (rng.bernoulli(p)) {
                s.edges.emplace_back(i, j);
            }
        }
    }
    s.tokens.resize(s.n);
    for (auto& t : s.tokens) {
        t = 1 + rng.below(spec.vocab);
    }
    return s;
}

namespace {

NodeDataset node_dataset_from(SBMSample s, std::size_t num_classes) {
    NodeDataset ds;
    ds.graph = build_graph(s.edges, s.n, Matrix(s.n, 0));
    ds.labels = std::move(s.blocks);
    ds.num_classes = num_classes;
    for (std::size_t c = 0; c < num_classes; ++c) {
        ds.label_names.push_back(std::to_string(c));
    }
    ds.token_features = true;
    ds.tokens = std::move(s.tokens);
    return ds;
}

}  // namespace

NodeDataset sbm_generate(const SBMSpec& spec) {
    Rng rng = make_stream(spec.seed, Stream::data);
    return node_dataset_from(sbm_sample(spec, rng), spec.block_sizes.size());
}

std::vector<SBMSample> sbm_generate(const SBMSpec& spec, std::size_t num_graphs) {
    Rng rng = make_stream(spec.seed, Stream::data);
    std::vector<SBMSample> out;
    out.reserve(num_graphs);
    for (std::size_t g = 0; g < num_graphs; ++g) {
        out.push_back(sbm_sample(spec, rng));
    }
    return out;
}

NodeDataset heterophily_task(const SBMSpec& spec) { return sbm_generate(spec); }

NodeDataset pattern_task(const SBMSpec& base, std::size_t pattern_size, double p_pattern,
                         double q_pattern) {
    base.validate();
    if (!(p_pattern >= 0.0 && p_pattern <= 1.0 && q_pattern >= 0.0 && q_pattern <= 1.0)) {
        throw parameter_error("pattern probabilities must lie in [0,1]");
    }
    Rng rng = make_stream(base.seed, Stream::data);
    SBMSample s = sbm_sample(base, rng);
    const std::size_t n0 = s.n;
    s.n += pattern_size;
    for (std::size_t i = n0; i < s.n; ++i) {
        for (std::size_t j = 0; j < i; ++j) {
            if (rng.bernoulli(j >= n0 ? p_pattern : q_pattern)) {
                s.edges.emplace_back(j, i);
            }
        }
        s.tokens.push_back(1 + rng.below(base.vocab));
    }
    s.blocks.assign(s.n, 0);
    std::fill(s.blocks.begin() + static_cast<std::ptrdiff_t>(n0), s.blocks.end(), 1);
    return node_dataset_from(std::move(s), 2);
}

GraphDataset sbm_graph_classes(const SBMSpec& spec0, const SBMSpec& spec1, std::size_t per_class,
                               std::uint64_t seed) {
    Rng rng = make_stream(seed, Stream::data);
    GraphDataset ds;
    for (std::size_t i = 0; i < per_class; ++i) {
        for (std::size_t c = 0; c < 2; ++c) {
            SBMSample s = sbm_sample(c == 0 ? spec0 : spec1, rng);
            GraphRecord r;
            r.n = s.n;
            r.edges = std::move(s.edges);
            r.tokens = std::move(s.tokens);
            r.target = static_cast<double>(c);
            ds.records.push_back(std::move(r));
        }
    }
    return ds;
}

double edge_homophily(const NodeDataset& ds) {
    const auto edges = edge_list(ds.graph.adjacency);
    if (edges.empty()) {
        return 0.0;
    }
    std::size_t same = 0;
    for (const auto& [u, v] : edges) {
        same += ds.labels[u] == ds.labels[v] ? 1 : 0;
    }
    return static_cast<double>(same) / static_cast<double>(edges.size());
}

SplitMasks random_split(std::size_t n, double train_ratio, double val_ratio, double test_ratio,
                        Rng& rng) {
    if (n == 0) {
        throw input_error("random_split: no items to split");
    }
    if (train_ratio < 0 || val_ratio < 0 || test_ratio < 0 ||
        std::abs(train_ratio + val_ratio + test_ratio - 1.0) > 1e-9) {
        throw input_error("random_split: ratios must be nonnegative and sum to 1");
    }
    const auto n_val = static_cast<std::size_t>(std::floor(val_ratio * static_cast<double>(n)));
    const auto n_test = static_cast<std::size_t>(std::floor(test_ratio * static_cast<double>(n)));
    const std::size_t n_train = n - n_val - n_test;
    std::vector<std::size_t> perm(n);
    std::iota(perm.begin(), perm.end(), 0);
    rng.shuffle(perm);
    SplitMasks m;
    m.train.assign(n, 0);
    m.val.assign(n, 0);
    m.test.assign(n, 0);
    for (std::size_t k = 0; k < n; ++k) {
        auto& target = k < n_train ? m.train : (k < n_train + n_val ? m.val : m.test);
        target[perm[k]] = 1;
    }
    return m;
}

NodeDataset load_node_dataset(const std::filesystem::path& dir) {
    if (!std::filesystem::is_directory(dir)) {
        throw input_error("dataset directory not found: " + dir.string());
    }
    NodeDataset ds;

    // features.csv
    const auto fpath = dir / "features.csv";
    const auto flines = read_lines(fpath);
    std::size_t first = 0;
    if (!flines.empty() && trim(flines[0]) == "#tokens") {
        ds.token_features = true;
        first = 1;
    }
    std::vector<double> values;
    std::size_t d = 0;
    std::size_t n = 0;
    for (std::size_t i = first; i < flines.size(); ++i) {
        const auto line = trim(flines[i]);
        if (line.empty() || line[0] == '#') {
            continue;
        }
        if (ds.token_features) {
            std::size_t t = 0;
            if (!parse_size(line, t)) {
                throw input_error(where(fpath, i + 1) + ": expected one integer token");
            }
            ds.tokens.push_back(t);
        } else {
            const auto cells = split_on(line, ',');
            if (n == 0) {
                d = cells.size();
            } else if (cells.size() != d) {
                throw input_error(where(fpath, i + 1) + ": expected " + std::to_string(d) +
                                  " columns, found " + std::to_string(cells.size()));
            }
            for (const auto& c : cells) {
                double v = 0;
                if (!parse_real(c, v)) {
                    throw input_error(where(fpath, i + 1) + ": malformed number '" + trim(c) + "'");
                }
                values.push_back(v);
            }
        }
        ++n;
    }
    Matrix features = ds.token_features ? Matrix(n, 0) : Matrix::from_rows(n, d, std::move(values));

    // edges.txt
    const auto epath = dir / "edges.txt";
    std::vector<Edge> edges;
    {
        std::ifstream in(epath);
        if (!in) {
            throw input_error("cannot open " + epath.string());
        }
        edges = parse_edge_list(in);
    }
    ds.graph = build_graph(edges, n, std::move(features));

    // classes.txt (optional) and labels.txt
    const auto cpath = dir / "classes.txt";
    std::map<std::string, std::size_t> index;
    const bool fixed_classes = std::filesystem::exists(cpath);
    if (fixed_classes) {
        for (const auto& raw : read_lines(cpath)) {
            const auto name = trim(raw);
            if (name.empty() || name[0] == '#') {
                continue;
            }
            if (!index.emplace(name, ds.label_names.size()).second) {
                throw input_error("classes.txt: duplicate class '" + name + "'");
            }
            ds.label_names.push_back(name);
        }
    }
    const auto lpath = dir / "labels.txt";
    const auto llines = read_lines(lpath);
    std::vector<std::pair<std::string, std::size_t>> raw_labels;
    for (std::size_t i = 0; i < llines.size(); ++i) {
        const auto name = trim(llines[i]);
        if (name.empty() || name[0] == '#') {
            continue;
        }
        raw_labels.emplace_back(name, i + 1);
    }
    if (raw_labels.size() != n) {
        throw input_error(where(lpath, llines.size()) + ": " + std::to_string(raw_labels.size()) +
                          " labels for " + std::to_string(n) + " feature rows");
    }
    if (fixed_classes) {
        for (const auto& [name, line] : raw_labels) {
            const auto it = index.find(name);
            if (it == index.end()) {
                throw input_error(where(lpath, line) + ": unknown class '" + name + "'");
            }
            ds.labels.push_back(it->second);
        }
    } else {
        bool numeric = true;
        std::size_t max_label = 0;
        for (const auto& [name, line] : raw_labels) {
            std::size_t v = 0;
            if (!parse_size(name, v)) {
                numeric = false;
                break;
            }
            max_label = std::max(max_label, v);
        }
        if (numeric) {
            for (const auto& [name, line] : raw_labels) {
                std::size_t v = 0;
                parse_size(name, v);
                ds.labels.push_back(v);
            }
            for (std::size_t c = 0; c <= max_label && n > 0; ++c) {
                ds.label_names.push_back(std::to_string(c));
            }
        } else {
            for (const auto& [name, line] : raw_labels) {
                const auto [it, inserted] = index.emplace(name, ds.label_names.size());
                if (inserted) {
                    ds.label_names.push_back(name);
                }
                ds.labels.push_back(it->second);
            }
        }
    }
    ds.num_classes = ds.label_names.size();

    // splits.txt (optional)
    const auto spath = dir / "splits.txt";
    if (std::filesystem::exists(spath)) {
        const auto slines = read_lines(spath);
        ds.masks.train.assign(n, 0);
        ds.masks.val.assign(n, 0);
        ds.masks.test.assign(n, 0);
        std::size_t node = 0;
        for (std::size_t i = 0; i < slines.size(); ++i) {
            const auto t = trim(slines[i]);
            if (t.empty() || t[0] == '#') {
                continue;
            }
            Split s{};
            if (!parse_split_name(t, s)) {
                throw input_error(where(spath, i + 1) + ": expected train, val, test or -");
            }
            if (node >= n) {
                throw input_error(where(spath, i + 1) + ": more split entries than nodes");
            }
            if (s == Split::train) {
                ds.masks.train[node] = 1;
            } else if (s == Split::val) {
                ds.masks.val[node] = 1;
            } else if (s == Split::test) {
                ds.masks.test[node] = 1;
            }
            ++node;
        }
        if (node != n) {
            throw input_error("splits.txt: " + std::to_string(node) + " entries for " +
                              std::to_string(n) + " nodes");
        }
    }
    ds.validate();
    return ds;
}

void save_node_dataset(const NodeDataset& ds, const std::filesystem::path& dir) {
    ds.validate();
    std::filesystem::create_directories(dir);
    {
        std::ofstream out(dir / "edges.txt", std::ios::trunc);
        write_edge_list(out, edge_list(ds.graph.adjacency));
    }
    {
        std::ofstream out(dir / "features.csv", std::ios::trunc);
        if (ds.token_features) {
            out << "#tokens\n";
            for (std::size_t t : ds.tokens) {
                out << t << '\n';
            }
        } else {
            const Matrix& x = ds.graph.features;
            for (std::size_t i = 0; i < x.rows(); ++i) {
                for (std::size_t j = 0; j < x.cols(); ++j) {
                    out << (j ? "," : "") << format_double(x(i, j));
                }
                out << '\n';
            }
        }
    }
    {
        std::ofstream out(dir / "classes.txt", std::ios::trunc);
        for (const auto& name : ds.label_names) {
            out << name << '\n';
        }
    }
    {
        std::ofstream out(dir / "labels.txt", std::ios::trunc);
        for (std::size_t y : ds.labels) {
            out << (ds.label_names.empty() ? std::to_string(y) : ds.label_names[y]) << '\n';
        }
    }
    const auto spath = dir / "splits.txt";
    if (!ds.masks.empty()) {
        std::ofstream out(spath, std::ios::trunc);
        for (std::size_t i = 0; i < ds.num_nodes(); ++i) {
            const Split s = ds.masks.train[i] ? Split::train
                            : ds.masks.val[i] ? Split::val
                            : ds.masks.test[i] ? Split::test
                                               : Split::none;
            out << split_name(s) << '\n';
        }
    } else if (std::filesystem::exists(spath)) {
        std::filesystem::remove(spath);
    }
}

GraphDataset parse_graph_dataset(std::istream& in) {
    GraphDataset ds;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const auto t = trim(line);
        if (t.empty()) {
            continue;
        }
        if (t[0] == '#') {
            if (t == "#regression") {
                ds.regression = true;
            } else if (t == "#classification") {
                ds.regression = false;
            }
            continue;
        }
        const std::string ctx = "graph dataset line " + std::to_string(line_no);
        const auto fields = split_on(t, ';');
        if (fields.size() != 4 && fields.size() != 5) {
            throw input_error(ctx + ": expected 4 or 5 ';'-separated fields");
        }
        GraphRecord r;
        if (!parse_size(fields[0], r.n) || r.n == 0) {
            throw input_error(ctx + ": node count must be a positive integer");
        }
        const auto ends = parse_size_list(fields[1], ctx);
        if (ends.size() % 2 != 0) {
            throw input_error(ctx + ": odd number of edge endpoints");
        }
        for (std::size_t k = 0; k < ends.size(); k += 2) {
            if (ends[k] >= r.n || ends[k + 1] >= r.n) {
                throw input_error(ctx + ": edge endpoint out of range");
            }
            r.edges.emplace_back(ends[k], ends[k + 1]);
        }
        r.tokens = parse_size_list(fields[2], ctx);
        if (r.tokens.size() != r.n) {
            throw input_error(ctx + ": expected " + std::to_string(r.n) + " node features, found " +
                              std::to_string(r.tokens.size()));
        }
        if (!parse_real(fields[3], r.target)) {
            throw input_error(ctx + ": malformed target");
        }
        if (!ds.regression && (r.target < 0 || r.target != std::floor(r.target))) {
            throw input_error(ctx + ": class target must be a nonnegative integer");
        }
        if (fields.size() == 5 && !parse_split_name(fields[4], r.split)) {
            throw input_error(ctx + ": unknown split '" + trim(fields[4]) + "'");
        }
        ds.records.push_back(std::move(r));
    }
    return ds;
}

GraphDataset load_graph_dataset(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw input_error("cannot open graph dataset " + path.string());
    }
    return parse_graph_dataset(in);
}

void write_graph_dataset(std::ostream& out, const GraphDataset& ds) {
    out << (ds.regression ? "#regression" : "#classification") << '\n';
    for (const auto& r : ds.records) {
        out << r.n << ';';
        for (std::size_t k = 0; k < r.edges.size(); ++k) {
            out << (k ? " " : "") << r.edges[k].first << ' ' << r.edges[k].second;
        }
        out << ';';
        for (std::size_t k = 0; k < r.tokens.size(); ++k) {
            out << (k ? " " : "") << r.tokens[k];
        }
        out << ';' << format_double(r.target);
        if (r.split != Split::none) {
            out << ';' << split_name(r.split);
        }
        out << '\n';
    }
}

void save_graph_dataset(const GraphDataset& ds, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) {
        throw input_error("cannot write " + path.string());
    }
    write_graph_dataset(out, ds);
}

}  // namespace autogcn
