// Acceptance runner: one PASS/FAIL/SKIP line per criterion.
// Exit status is 0 only when no criterion fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iterator>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "../../tools/cli.hpp"
#include "autogcn/data.hpp"
#include "autogcn/filters.hpp"
#include "autogcn/spectral.hpp"
#include "autogcn/training.hpp"
#include "autogcn/verify.hpp"

namespace fs = std::filesystem;
using namespace autogcn;

namespace {

const fs::path kSource = AUTOGCN_SOURCE_DIR;

enum class Status { pass, fail, skip };

struct Outcome {
    Status status = Status::fail;
    std::string detail;
};

class Stopwatch {
public:
    double seconds() const {
        return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
    }

private:
    std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

std::string fmt(const char* f, double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, f, v);
    return buf;
}

std::string read_file(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

int cli(std::vector<std::string> args, std::string* out_text = nullptr) {
    args.insert(args.begin(), "autogcn");
    std::vector<const char*> argv;
    for (const auto& a : args) {
        argv.push_back(a.c_str());
    }
    std::ostringstream out;
    std::ostringstream err;
    const int rc = run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
    if (out_text != nullptr) {
        *out_text = out.str() + err.str();
    }
    return rc;
}

fs::path scratch_dir(const std::string& name) {
    const fs::path dir = fs::temp_directory_path() / ("autogcn_acceptance_" + name);
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

Outcome from_suite(const SuiteReport& report, double elapsed, double budget) {
    Outcome o;
    double worst = 0.0;
    std::string failing;
    for (const auto& c : report.checks) {
        worst = std::max(worst, c.measured);
        if (!c.pass) {
            failing += " " + c.name + "=" + fmt("%.3g", c.measured);
        }
    }
    const bool in_time = elapsed < budget;
    o.status = report.passed() && in_time ? Status::pass : Status::fail;
    o.detail = std::to_string(report.checks.size()) + " checks, max error " + fmt("%.3g", worst) +
               ", " + fmt("%.2f", elapsed) + " s (budget " + fmt("%.0f", budget) + " s)";
    if (!failing.empty()) {
        o.detail += ", failing:" + failing;
    }
    return o;
}

Outcome spectral_equivalence() {
    Stopwatch sw;
    const auto report = verify_spectral();
    return from_suite(report, sw.seconds(), 30.0);
}

Outcome bank_collapse() {
    Stopwatch sw;
    const auto report = verify_theorems();
    return from_suite(report, sw.seconds(), 10.0);
}

Outcome gradient_check() {
    Stopwatch sw;
    const auto report = verify_gradients();
    return from_suite(report, sw.seconds(), 60.0);
}

// Heterophily protocol: 2 blocks of 100, p_in = 0.05, q_out = 0.5, tokens
// from {1,2,3}. Seed s draws the graph with SBM seed s and trains with run
// seed s.
struct HeterophilyResults {
    std::map<std::string, double> means;
    std::map<std::string, std::vector<double>> per_seed;
    double seconds = 0.0;
};

double run_protocol(const TrainConfig& cfg, std::vector<double>& metrics) {
    for (std::uint64_t seed : cfg.seeds) {
        SBMSpec spec;
        spec.block_sizes = {100, 100};
        spec.p_in = 0.05;
        spec.q_out = 0.5;
        spec.vocab = 3;
        spec.seed = seed;
        const Dataset data = heterophily_task(spec);
        metrics.push_back(train(cfg, data, seed).test_metric);
    }
    return mean_std(metrics).first;
}

const HeterophilyResults& heterophily() {
    static const HeterophilyResults results = [] {
        HeterophilyResults r;
        Stopwatch sw;
        const TrainConfig base = load_train_config(kSource / "configs" / "heterophily_autogcn.cfg");
        for (AblationVariant v : {AblationVariant::full, AblationVariant::no_low, AblationVariant::no_high,
                                  AblationVariant::no_mid, AblationVariant::no_gate}) {
            TrainConfig cfg = base;
            cfg.variant = v;
            const std::string name(to_string(v));
            r.means[name] = run_protocol(cfg, r.per_seed[name]);
        }
        const TrainConfig gcn = load_train_config(kSource / "configs" / "heterophily_gcn.cfg");
        r.means["GCN"] = run_protocol(gcn, r.per_seed["GCN"]);
        r.seconds = sw.seconds();
        return r;
    }();
    return results;
}

// Means recorded on the first faithful run of the protocol; the test split
// has 40 nodes, so every mean is a multiple of 0.005.
const std::map<std::string, double> kFrozenMeans{
    {"FULL", 1.0}, {"NO_LOW", 0.875}, {"NO_HIGH", 1.0}, {"NO_MID", 0.915}, {"NO_GATE", 1.0}, {"GCN", 0.78},
};

std::string baseline_drift(const HeterophilyResults& r) {
    std::string drift;
    for (const auto& [name, expect] : kFrozenMeans) {
        const double got = r.means.at(name);
        if (std::abs(got - expect) > 1e-9) {
            drift += " " + name + " " + fmt("%.4f", got) + " (frozen " + fmt("%.4f", expect) + ")";
        }
    }
    return drift;
}

Outcome filter_role_separation() {
    const auto& r = heterophily();
    const double full = r.means.at("FULL");
    const double over_gcn = full - r.means.at("GCN");
    const double over_high = full - r.means.at("NO_HIGH");
    const std::string drift = baseline_drift(r);
    Outcome o;
    o.status = over_gcn >= 0.05 && over_high >= 0.05 && drift.empty() && r.seconds < 600.0 ? Status::pass : Status::fail;
    o.detail = "FULL " + fmt("%.4f", full) + ", GCN " + fmt("%.4f", r.means.at("GCN")) + " (margin " +
               fmt("%+.4f", over_gcn) + "), NO_HIGH " + fmt("%.4f", r.means.at("NO_HIGH")) + " (margin " +
               fmt("%+.4f", over_high) + "), required margin 0.05";
    if (!drift.empty()) {
        o.detail += ", baseline drift:" + drift;
    }
    return o;
}

Outcome ablation_direction() {
    const auto& r = heterophily();
    const double full = r.means.at("FULL");
    Outcome o;
    o.status = Status::pass;
    o.detail = "FULL " + fmt("%.4f", full);
    for (const char* name : {"NO_LOW", "NO_HIGH", "NO_MID", "NO_GATE"}) {
        const double m = r.means.at(name);
        o.detail += std::string(", ") + name + " " + fmt("%.4f", m);
        if (m > full) {
            o.status = Status::fail;
        }
    }
    // Criteria 4 and 5 share the same runs; the budget covers both.
    o.detail += ", " + fmt("%.1f", r.seconds) + " s for 30 runs";
    if (r.seconds >= 20 * 60.0) {
        o.status = Status::fail;
    }
    return o;
}

Outcome pubmed() {
    fs::path dir = kSource / "data" / "pubmed";
    if (const char* env = std::getenv("AUTOGCN_PUBMED_DIR")) {
        dir = env;
    }
    if (!fs::is_directory(dir)) {
        return {Status::skip, "dataset directory " + dir.string() + " not found"};
    }
    Stopwatch sw;
    const Dataset data = load_dataset(dir);
    const auto ours = multi_seed(load_train_config(kSource / "configs" / "pubmed_autogcn.cfg"), data);
    const auto gcn = multi_seed(load_train_config(kSource / "configs" / "pubmed_gcn.cfg"), data);
    const double elapsed = sw.seconds();
    Outcome o;
    const bool ok = ours.mean >= 0.87 && ours.mean - gcn.mean >= 0.01 && elapsed <= 30 * 60.0;
    o.status = ok ? Status::pass : Status::fail;
    o.detail = "AutoGCN " + fmt("%.4f", ours.mean) + " ± " + fmt("%.4f", ours.std) + ", GCN " +
               fmt("%.4f", gcn.mean) + " ± " + fmt("%.4f", gcn.std) + ", " + fmt("%.0f", elapsed) + " s";
    return o;
}

std::vector<std::pair<double, double>> parse_profile_csv(const std::string& text) {
    std::vector<std::pair<double, double>> rows;
    std::istringstream in(text);
    std::string line;
    std::getline(in, line);
    while (std::getline(in, line)) {
        const auto comma = line.find(',');
        rows.emplace_back(std::stod(line.substr(0, comma)), std::stod(line.substr(comma + 1)));
    }
    return rows;
}

Outcome frequency_profiles() {
    Stopwatch sw;
    const fs::path dir = scratch_dir("profile");
    Rng rng = make_stream(11, Stream::data);
    const Graph g = random_graph(30, 0.2, rng);
    const fs::path edges = dir / "graph.txt";
    {
        std::ofstream out(edges);
        write_edge_list(out, edge_list(g.adjacency));
    }
    double closed_form_err = 0.0;
    std::size_t rows_checked = 0;
    bool cli_ok = true;
    for (FilterKind kind : kAllKinds) {
        for (double a : {0.2, 0.5, 0.8}) {
            const fs::path csv = dir / "profile.csv";
            const int rc = cli({"profile", "--data", edges.string(), "--filter", std::string(to_string(kind)),
                                "--p", "1", "--a", fmt("%g", a), "--out", csv.string()});
            if (rc != 0) {
                cli_ok = false;
                continue;
            }
            const auto rows = parse_profile_csv(read_file(csv));
            cli_ok = cli_ok && rows.size() == g.num_nodes();
            for (const auto& [lambda, mag] : rows) {
                const double expect = std::abs(filter_value(kind, 1.0, a, lambda));
                closed_form_err = std::max(closed_form_err, std::abs(mag - expect));
                ++rows_checked;
            }
        }
    }

    // GCN: exact diag(UᵀÂU) against 1 − λ d̄/(1 + d̄).
    double gcn_err = 0.0;
    for (std::uint64_t s = 1; s <= 10; ++s) {
        Rng grng = make_stream(s, Stream::data);
        const Graph rg = random_graph(40, 0.3, grng);
        double mean_degree = 0.0;
        for (double d : rg.degrees) {
            mean_degree += d;
        }
        mean_degree /= static_cast<double>(rg.num_nodes());
        const EigenSystem eig = eig_sym(laplacian(rg).to_dense());
        const auto prof = frequency_profile(renormalized_adjacency(rg).to_dense(), eig);
        for (std::size_t i = 0; i < prof.size(); ++i) {
            const double approx = 1.0 - eig.values[i] * mean_degree / (1.0 + mean_degree);
            gcn_err = std::max(gcn_err, std::abs(prof[i] - approx));
        }
    }
    const double elapsed = sw.seconds();
    fs::remove_all(dir);
    Outcome o;
    const bool ok = cli_ok && closed_form_err < 1e-8 && gcn_err < 0.2 && elapsed < 10.0;
    o.status = ok ? Status::pass : Status::fail;
    o.detail = std::to_string(rows_checked) + " profile rows, max closed-form error " +
               fmt("%.3g", closed_form_err) + " (tol 1e-8), GCN approximation max deviation " +
               fmt("%.4f", gcn_err) + " (tol 0.2), " + fmt("%.2f", elapsed) + " s";
    if (!cli_ok) {
        o.detail += ", profile command failed";
    }
    return o;
}

Outcome determinism() {
    const fs::path dir = scratch_dir("determinism");
    const std::string config = (kSource / "tests" / "data" / "two_triangles.cfg").string();
    const std::string data = (kSource / "tests" / "data" / "two_triangles").string();
    auto run = [&](const std::string& name) {
        const int rc = cli({"train", "--config", config, "--data", data, "--out", (dir / name).string()});
        return rc == 0 ? read_file(dir / name / "summary.json") : std::string();
    };
    Stopwatch toy_clock;
    run("reference");
    const double toy = toy_clock.seconds();
    Stopwatch sw;
    const std::string first = run("first");
    const std::string second = run("second");
    const double elapsed = sw.seconds();
    fs::remove_all(dir);
    Outcome o;
    // Half a second of slack absorbs file-system jitter on millisecond runs.
    const bool ok = !first.empty() && first == second && elapsed < 2.0 * toy + 0.5;
    o.status = ok ? Status::pass : Status::fail;
    o.detail = std::string(first.empty() ? "train command failed" : first == second ? "summaries byte-identical"
                                                                                     : "summaries differ") +
               " (" + std::to_string(first.size()) + " bytes), " + fmt("%.3f", elapsed) + " s for two runs, toy run " +
               fmt("%.3f", toy) + " s";
    return o;
}

Outcome graph_classification_smoke() {
    Stopwatch sw;
    SBMSpec homophilous;
    homophilous.block_sizes = {10, 10};
    homophilous.p_in = 0.5;
    homophilous.q_out = 0.05;
    SBMSpec heterophilous = homophilous;
    heterophilous.p_in = 0.05;
    heterophilous.q_out = 0.5;
    const Dataset data = sbm_graph_classes(homophilous, heterophilous, 200, 1);
    const TrainConfig cfg = load_train_config(kSource / "configs" / "graph_smoke.cfg");
    const RunResult run = train(cfg, data, cfg.seeds.front());
    const double elapsed = sw.seconds();
    Outcome o;
    o.status = run.test_metric >= 0.9 && elapsed < 120.0 ? Status::pass : Status::fail;
    o.detail = "test accuracy " + fmt("%.4f", run.test_metric) + " (min 0.9), " + fmt("%.1f", elapsed) +
               " s (budget 120 s)";
    return o;
}

}  // namespace

int main() {
    const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
        {"1 spectral-spatial equivalence", spectral_equivalence},
        {"2 filter bank collapse", bank_collapse},
        {"3 gradient correctness", gradient_check},
        {"4 filter-role separation", filter_role_separation},
        {"5 ablation direction", ablation_direction},
        {"6 PUBMED reproduction", pubmed},
        {"7 frequency profiles", frequency_profiles},
        {"8 determinism", determinism},
        {"graph classification smoke", graph_classification_smoke},
    };
    int failures = 0;
    for (const auto& [name, check] : criteria) {
        Outcome o;
        try {
            o = check();
        } catch (const std::exception& e) {
            o = {Status::fail, std::string("exception: ") + e.what()};
        }
        const char* tag = o.status == Status::pass ? "PASS" : o.status == Status::skip ? "SKIP" : "FAIL";
        failures += o.status == Status::fail;
        std::printf("%s  %s: %s\n", tag, name.c_str(), o.detail.c_str());
        std::fflush(stdout);
    }
    std::printf("%d criterion(s) failed\n", failures);
    return failures == 0 ? 0 : 1;
}
