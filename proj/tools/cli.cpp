#include "cli.hpp"

#include <CLI11.hpp>

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <ostream>
#include <sstream>

#include "autogcn/data.hpp"
#include "autogcn/error.hpp"
#include "autogcn/spectral.hpp"
#include "autogcn/training.hpp"
#include "autogcn/verify.hpp"

namespace autogcn {

namespace {

std::vector<std::uint64_t> parse_seed_list(const std::string& s) {
    std::vector<std::uint64_t> out;
    std::stringstream in(s);
    std::string tok;
    while (std::getline(in, tok, ',')) {
        std::uint64_t v = 0;
        const auto res = std::from_chars(tok.data(), tok.data() + tok.size(), v);
        if (tok.empty() || res.ec != std::errc() || res.ptr != tok.data() + tok.size()) {
            throw input_error("malformed seed list '" + s + "'");
        }
        out.push_back(v);
    }
    if (out.empty()) {
        throw input_error("empty seed list");
    }
    return out;
}

SBMSpec parse_sbm_spec(const std::string& text) {
    SBMSpec spec;
    std::string norm = text;
    for (char& c : norm) {
        if (c == ';') {
            c = ' ';
        }
    }
    std::istringstream in(norm);
    std::string item;
    auto number = [](const std::string& key, const std::string& v) {
        double x = 0;
        const auto res = std::from_chars(v.data(), v.data() + v.size(), x);
        if (v.empty() || res.ec != std::errc() || res.ptr != v.data() + v.size()) {
            throw input_error("SBM spec: malformed value for " + key + ": '" + v + "'");
        }
        return x;
    };
    auto integer = [](const std::string& key, const std::string& v) {
        std::uint64_t x = 0;
        const auto res = std::from_chars(v.data(), v.data() + v.size(), x);
        if (v.empty() || res.ec != std::errc() || res.ptr != v.data() + v.size()) {
            throw input_error("SBM spec: malformed value for " + key + ": '" + v + "'");
        }
        return x;
    };
    while (in >> item) {
        const auto eq = item.find('=');
        if (eq == std::string::npos) {
            throw input_error("SBM spec: expected key=value, got '" + item + "'");
        }
        const std::string key = item.substr(0, eq);
        const std::string value = item.substr(eq + 1);
        if (key == "blocks") {
            spec.block_sizes.clear();
            std::stringstream bs(value);
            std::string b;
            while (std::getline(bs, b, ',')) {
                spec.block_sizes.push_back(integer(key, b));
            }
        } else if (key == "p_in") {
            spec.p_in = number(key, value);
        } else if (key == "q_out") {
            spec.q_out = number(key, value);
        } else if (key == "vocab") {
            spec.vocab = integer(key, value);
        } else if (key == "seed") {
            spec.seed = integer(key, value);
        } else {
            throw input_error("SBM spec: unknown key '" + key + "'");
        }
    }
    try {
        spec.validate();
    } catch (const parameter_error& e) {
        throw input_error(e.what());
    }
    return spec;
}

std::string format_profile_number(double v) {
    if (std::abs(v) < 1e-12) {
        v = 0.0;
    }
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.15g", v);
    return buf;
}

Graph load_graph_for_profile(const std::filesystem::path& path) {
    if (std::filesystem::is_directory(path)) {
        return load_node_dataset(path).graph;
    }
    const auto edges = read_edge_list(path);
    std::size_t n = 0;
    for (const auto& [u, v] : edges) {
        n = std::max({n, u + 1, v + 1});
    }
    return build_graph(edges, n, Matrix(n, 0));
}

void print_report(std::ostream& out, const SuiteReport& r) {
    for (const auto& c : r.checks) {
        out << (c.pass ? "PASS " : "FAIL ") << c.name << " measured=" << format_double(c.measured)
            << " tol=" << format_double(c.tolerance);
        if (!c.detail.empty()) {
            out << " case: " << c.detail;
        }
        out << '\n';
    }
}

int cmd_train(const std::string& config, const std::string& data, const std::string& out_dir,
              const std::string& seeds, std::ostream& out) {
    TrainConfig cfg = load_train_config(config);
    if (!seeds.empty()) {
        cfg.seeds = parse_seed_list(seeds);
    }
    const Dataset ds = load_dataset(data);
    const ModelConfig mc = resolve_model_config(cfg, ds);
    const MultiSeedResult res = multi_seed(cfg, ds);

    std::filesystem::create_directories(out_dir);
    const std::filesystem::path dir(out_dir);
    for (const auto& run : res.runs) {
        const std::string stem = "seed_" + std::to_string(run.seed);
        std::ofstream log(dir / (stem + ".csv"), std::ios::trunc);
        write_run_log(log, run);
        Model model(mc, cfg.variant, run.seed);
        model.restore(run.best_state);
        CheckpointMeta meta;
        meta.config_text = cfg.to_text();
        meta.config_digest = fnv1a64(meta.config_text);
        meta.seed = run.seed;
        meta.variant = cfg.variant;
        save_checkpoint(model, meta, dir / (stem + ".ckpt"));
    }
    std::ofstream summary(dir / "summary.json", std::ios::trunc);
    write_summary(summary, cfg, res);
    for (const auto& run : res.runs) {
        out << "seed " << run.seed << " test=" << format_double(run.test_metric)
            << " best_epoch=" << run.best_epoch << '\n';
    }
    out << "mean=" << format_double(res.mean) << " std=" << format_double(res.std) << '\n';
    return 0;
}

int cmd_eval(const std::string& checkpoint, const std::string& data, const std::string& split,
             std::ostream& out) {
    const CheckpointMeta meta = read_checkpoint_meta(checkpoint);
    const TrainConfig cfg = parse_train_config_text(meta.config_text);
    const Dataset ds = load_dataset(data);
    Model model(resolve_model_config(cfg, ds), meta.variant, meta.seed);
    load_checkpoint_into(model, checkpoint);
    const SplitMasks masks = run_split(cfg, ds, meta.seed);
    const Split s = split == "train" ? Split::train : split == "val" ? Split::val : Split::test;
    const double metric = evaluate(model, ds, masks, s, cfg.batch_size);
    out << format_double(metric) << '\n';
    return 0;
}

int cmd_ablate(const std::string& config, const std::string& data, const std::string& variants,
               const std::string& out_dir, const std::string& seeds, std::ostream& out) {
    TrainConfig cfg = load_train_config(config);
    if (!seeds.empty()) {
        cfg.seeds = parse_seed_list(seeds);
    }
    std::vector<AblationVariant> list;
    if (variants == "all") {
        list = all_variants();
    } else {
        std::stringstream in(variants);
        std::string tok;
        while (std::getline(in, tok, ',')) {
            try {
                list.push_back(parse_variant(tok));
            } catch (const parameter_error& e) {
                throw input_error(e.what());
            }
        }
    }
    const Dataset ds = load_dataset(data);
    std::ostringstream table;
    table << "variant,mean,std,params\n";
    for (AblationVariant v : list) {
        TrainConfig c = cfg;
        c.variant = v;
        const MultiSeedResult res = multi_seed(c, ds);
        table << to_string(v) << ',' << format_double(res.mean) << ',' << format_double(res.std)
              << ',' << res.runs.front().num_params << '\n';
    }
    std::filesystem::create_directories(out_dir);
    std::ofstream file(std::filesystem::path(out_dir) / "ablation.csv", std::ios::trunc);
    file << table.str();
    out << table.str();
    return 0;
}

int cmd_verify(const std::string& suite, const std::string& fault, std::ostream& out) {
    VerifyOptions opt;
    if (fault == "high-sign") {
        opt.kernel = faulty_high_kernel();
    } else if (!fault.empty()) {
        throw input_error("unknown fault '" + fault + "'");
    }
    bool ok = true;
    auto run = [&](const SuiteReport& r) {
        print_report(out, r);
        ok = ok && r.passed();
    };
    if (suite == "spectral" || suite == "all") {
        run(verify_spectral(opt));
    }
    if (suite == "theorems" || suite == "all") {
        run(verify_theorems(opt));
    }
    if (suite == "gradients" || suite == "all") {
        run(verify_gradients(opt));
    }
    out << (ok ? "verify: all properties hold" : "verify: FAILED") << '\n';
    return ok ? 0 : 1;
}

int cmd_profile(const std::string& data, const std::string& filter, double p, double a,
                const std::string& out_path, std::ostream& out) {
    const Graph g = load_graph_for_profile(data);
    const std::size_t n = g.num_nodes();
    if (n == 0) {
        throw input_error("graph has no nodes");
    }
    if (n > kMaxOracleNodes) {
        throw input_error("graph has " + std::to_string(n) + " nodes; the spectral oracle handles at most " +
                          std::to_string(kMaxOracleNodes));
    }
    const EigenSystem eig = eig_sym(laplacian(g).to_dense());
    Matrix kernel;
    if (filter == "gcn") {
        kernel = renormalized_adjacency(g).to_dense();
    } else {
        FilterKind kind{};
        try {
            kind = parse_filter_kind(filter);
            check_admissible(kind, p, a);
        } catch (const parameter_error& e) {
            throw input_error(e.what());
        }
        kernel = apply_kernel(kind, p, a, normalized_adjacency(g), Matrix::identity(n));
    }
    const auto profile = frequency_profile(kernel, eig);
    std::ostringstream csv;
    csv << "lambda,magnitude\n";
    for (std::size_t i = 0; i < n; ++i) {
        csv << format_profile_number(eig.values[i]) << ','
            << format_profile_number(std::abs(profile[i])) << '\n';
    }
    if (out_path.empty() || out_path == "-") {
        out << csv.str();
    } else {
        std::ofstream file(out_path, std::ios::trunc);
        if (!file) {
            throw input_error("cannot write " + out_path);
        }
        file << csv.str();
    }
    return 0;
}

int cmd_generate(const std::string& sbm, const std::string& sbm2, std::size_t per_class,
                 const std::string& out_dir, std::ostream& out) {
    const SBMSpec spec = parse_sbm_spec(sbm);
    if (sbm2.empty()) {
        const NodeDataset ds = sbm_generate(spec);
        save_node_dataset(ds, out_dir);
        out << "nodes=" << ds.num_nodes() << " edges=" << ds.graph.num_edges()
            << " homophily=" << format_double(edge_homophily(ds)) << '\n';
        return 0;
    }
    const SBMSpec spec2 = parse_sbm_spec(sbm2);
    const GraphDataset ds = sbm_graph_classes(spec, spec2, per_class, spec.seed);
    std::filesystem::create_directories(out_dir);
    save_graph_dataset(ds, std::filesystem::path(out_dir) / "graphs.txt");
    out << "graphs=" << ds.records.size() << '\n';
    return 0;
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
    CLI::App app{"AutoGCN graph filters: training, ablation, verification and spectral profiles"};
    app.require_subcommand(1);

    std::string config, data, out_dir, seeds, checkpoint, split = "test", variants = "all";
    std::string suite = "all", fault, filter, out_path, sbm, sbm2;
    double p = 1.0, a = 0.5;
    std::size_t per_class = 100;

    auto* train = app.add_subcommand("train", "Train over several seeds");
    train->add_option("--config", config, "Run configuration (key = value)")->required();
    train->add_option("--data", data, "Node dataset directory or graph dataset file")->required();
    train->add_option("--out", out_dir, "Output directory")->required();
    train->add_option("--seeds", seeds, "Comma-separated seeds overriding the config");

    auto* eval = app.add_subcommand("eval", "Recompute a metric from a checkpoint");
    eval->add_option("--checkpoint", checkpoint, "Checkpoint file")->required();
    eval->add_option("--data", data, "Dataset used for training")->required();
    eval->add_option("--split", split, "train, val or test")
        ->check(CLI::IsMember({"train", "val", "test"}));

    auto* ablate = app.add_subcommand("ablate", "Compare ablation variants");
    ablate->add_option("--config", config, "Run configuration")->required();
    ablate->add_option("--data", data, "Dataset")->required();
    ablate->add_option("--variants", variants, "all or a comma-separated list");
    ablate->add_option("--out", out_dir, "Output directory")->required();
    ablate->add_option("--seeds", seeds, "Comma-separated seeds overriding the config");

    auto* verify = app.add_subcommand("verify", "Run the oracle suites");
    verify->add_option("--suite", suite, "spectral, theorems, gradients or all")
        ->check(CLI::IsMember({"spectral", "theorems", "gradients", "all"}));
    verify->add_option("--inject-fault", fault, "Mutation check: high-sign");

    auto* profile = app.add_subcommand("profile", "Frequency profile of a filter on a graph");
    profile->add_option("--data", data, "Edge-list file or node dataset directory")->required();
    profile->add_option("--filter", filter, "low, high, mid or gcn")
        ->required()
        ->check(CLI::IsMember({"low", "high", "mid", "gcn"}));
    profile->add_option("--p", p, "Magnitude p");
    profile->add_option("--a", a, "Bandwidth a");
    profile->add_option("--out", out_path, "CSV path, '-' for stdout");

    auto* generate = app.add_subcommand("generate", "Write a synthetic SBM dataset");
    generate->add_option("--sbm", sbm, "e.g. \"blocks=100,100 p_in=0.05 q_out=0.5 vocab=3 seed=1\"")
        ->required();
    generate->add_option("--sbm2", sbm2, "Second class spec: writes a graph classification file");
    generate->add_option("--per-class", per_class, "Graphs per class with --sbm2");
    generate->add_option("--out", out_dir, "Output directory")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? 0 : 2;
    }

    try {
        if (*train) {
            return cmd_train(config, data, out_dir, seeds, out);
        }
        if (*eval) {
            return cmd_eval(checkpoint, data, split, out);
        }
        if (*ablate) {
            return cmd_ablate(config, data, variants, out_dir, seeds, out);
        }
        if (*verify) {
            return cmd_verify(suite, fault, out);
        }
        if (*profile) {
            return cmd_profile(data, filter, p, a, out_path, out);
        }
        if (*generate) {
            return cmd_generate(sbm, sbm2, per_class, out_dir, out);
        }
    } catch (const numerical_error& e) {
        err << "error: " << e.what() << '\n';
        return 3;
    } catch (const input_error& e) {
        err << "error: " << e.what() << '\n';
        return 2;
    } catch (const parameter_error& e) {
        err << "error: " << e.what() << '\n';
        return 2;
    } catch (const std::filesystem::filesystem_error& e) {
        err << "error: " << e.what() << '\n';
        return 2;
    }
    return 2;
}

}  // namespace autogcn
