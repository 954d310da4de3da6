#include "amcmc/cli/commands.hpp"

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>

#include "CLI11.hpp"
#include "amcmc/diagnostics.hpp"
#include "amcmc/io.hpp"
#include "amcmc/structure.hpp"

namespace amcmc::cli {

namespace fs = std::filesystem;

namespace {

const std::vector<std::string> kSections = {"run", "target", "structure", "output", "bench"};

Index to_index(std::int64_t v, const std::string& key) {
    if (v < 0 || v > std::numeric_limits<Index>::max()) throw ConfigError("config key '" + key + "' out of range");
    return static_cast<Index>(v);
}

fs::path output_dir(const Config& config) {
    fs::path dir = config.get_string("output.dir", "out");
    fs::create_directories(dir);
    return dir;
}

void write_effective(const Config& config, const fs::path& dir) {
    std::ofstream out(dir / "effective_config.ini", std::ios::binary);
    out << config.effective();
}

}  // namespace

std::unique_ptr<TargetModel> make_target(const Config& config) {
    const std::string name = config.get_string("target.name", "lattice_gmrf");
    if (name == "lattice_gmrf") {
        LatticeGmrfParams p;
        p.side = to_index(config.get_int("target.side", p.side), "target.side");
        p.kappa2 = config.get_double("target.kappa2", p.kappa2);
        p.alpha = static_cast<int>(config.get_int("target.alpha", p.alpha));
        p.sigma_obs = config.get_double("target.sigma_obs", p.sigma_obs);
        p.n_obs = static_cast<Index>(config.get_int("target.n_obs", p.n_obs));
        p.seed = config.get_uint("target.seed", p.seed);
        try {
            return std::make_unique<LatticeGmrfPosterior>(p);
        } catch (const std::invalid_argument& e) {
            throw ConfigError(e.what());
        }
    }
    if (name == "spline") {
        const Index n_basis = to_index(config.get_int("target.n_basis", 50), "target.n_basis");
        XyData data;
        if (auto path = config.get_optional("target.data")) {
            data = load_xy_csv(*path);
        } else {
            data = synthetic_spline_data(config.get_uint("target.synthetic_points", 133),
                                         config.get_uint("target.data_seed", 1));
        }
        try {
            return std::make_unique<SplinePosterior>(n_basis, std::move(data));
        } catch (const std::invalid_argument& e) {
            throw ConfigError(e.what());
        }
    }
    if (name == "ar1") {
        const Index n = to_index(config.get_int("target.n", 10), "target.n");
        const double rho = config.get_double("target.rho", 0.9);
        try {
            return std::make_unique<GaussianTarget>(GaussianTarget::ar1(n, rho));
        } catch (const std::invalid_argument& e) {
            throw ConfigError(e.what());
        }
    }
    if (name == "iid") {
        const Index n = to_index(config.get_int("target.n", 10), "target.n");
        const double sd = config.get_double("target.sd", 1.0);
        if (!(sd > 0.0)) throw ConfigError("config key 'target.sd' must be positive");
        return std::make_unique<GaussianTarget>(GaussianTarget::independent(Vector::Constant(n, sd)));
    }
    throw ConfigError("config key 'target.name': unknown target '" + name +
                      "' (expected lattice_gmrf, spline, ar1 or iid)");
}

RunConfig make_run_config(const Config& config, const TargetModel& target) {
    RunConfig rc;
    const std::string kernel = config.get_string("run.kernel", "mala");
    const std::string backend = config.get_string("run.backend", "precision");
    auto k = parse_kernel(kernel);
    if (!k) throw ConfigError("config key 'run.kernel': expected mhrw or mala, got '" + kernel + "'");
    auto b = parse_backend(backend);
    if (!b) throw ConfigError("config key 'run.backend': expected covariance or precision, got '" + backend + "'");
    rc.kernel = *k;
    rc.backend = *b;
    rc.iterations = config.get_uint("run.iterations", 10000);
    rc.thin = config.get_uint("run.thin", 1);
    if (rc.thin == 0) throw ConfigError("config key 'run.thin' must be >= 1");
    rc.seed = config.get_uint("run.seed", 1);
    rc.adapt.warmup = config.get_uint("run.warmup", 100);
    rc.adapt.ridge = config.get_double("run.ridge", 1e-3);
    if (!(rc.adapt.ridge > 0.0)) throw ConfigError("config key 'run.ridge' must be positive");
    rc.freeze_after = config.get_uint("run.freeze_after", 0);
    rc.bfactor_every = config.get_uint("run.bfactor_every", 0);
    rc.acceptance_window = config.get_uint("run.acceptance_window", 1000);
    if (rc.acceptance_window == 0) throw ConfigError("config key 'run.acceptance_window' must be >= 1");
    rc.acceptance_every = config.get_uint("run.acceptance_every", 100);
    rc.step_c = config.get_double("run.step_c", 1.0);
    rc.step_kappa = config.get_double("run.step_kappa", 0.7);
    if (!(rc.step_kappa > 0.5 && rc.step_kappa <= 1.0)) throw ConfigError("config key 'run.step_kappa' must be in (0.5, 1]");
    const double sigma = config.get_double("run.initial_sigma", 0.0);
    if (sigma > 0.0) rc.initial_sigma = sigma;
    const double rate = config.get_double("run.target_rate", default_target_rate(rc.kernel));
    if (!(rate > 0.0 && rate < 1.0)) throw ConfigError("config key 'run.target_rate' must be in (0, 1)");
    rc.target_rate = rate;
    for (auto c : config.get_int_list("run.trace_coords", {})) {
        if (c < 0 || c >= target.dim()) {
            throw ConfigError("config key 'run.trace_coords': index " + std::to_string(c) + " out of range");
        }
        rc.trace_coords.push_back(static_cast<Index>(c));
    }
    return rc;
}

std::optional<RegressorSets> resolve_structure(const Config& config, const TargetModel& target, std::ostream& log) {
    const std::string source = config.get_string("structure.source", "estimate");
    const Index n = target.dim();
    if (source == "full") return std::nullopt;
    if (source == "diagonal") return build_regressor_sets(SparsityPattern(n), Permutation::identity(n));
    if (source == "files") {
        auto edges_path = config.get_optional("structure.edges");
        if (!edges_path) throw ConfigError("config key 'structure.edges' is required when structure.source = files");
        const SparsityPattern edges = read_edges(*edges_path, n);
        if (auto perm_path = config.get_optional("structure.perm")) {
            Permutation perm = read_permutation(*perm_path);
            if (perm.size() != n) throw std::runtime_error("permutation file does not match the target dimension");
            return build_regressor_sets(edges, perm);
        }
        return build_regressor_sets(edges);
    }
    if (source == "estimate") {
        EdgeEstimateOptions opts;
        opts.tol = config.get_double("structure.tol", opts.tol);
        opts.warn = [&log](const std::string& m) { log << "warning: " << m << '\n'; };
        const auto probes = default_probes(n, config.get_uint("structure.probes", 3),
                                           config.get_uint("structure.probe_seed", 20240611));
        return build_regressor_sets(estimate_edges(target, probes, opts));
    }
    throw ConfigError("config key 'structure.source': expected estimate, files, full or diagonal, got '" + source + "'");
}

void cmd_structure(const Config& config, std::ostream& log) {
    auto target = make_target(config);
    EdgeEstimateOptions opts;
    opts.tol = config.get_double("structure.tol", opts.tol);
    opts.warn = [&log](const std::string& m) { log << "warning: " << m << '\n'; };
    const auto probes = default_probes(target->dim(), config.get_uint("structure.probes", 3),
                                       config.get_uint("structure.probe_seed", 20240611));
    const fs::path dir = output_dir(config);
    config.check_unknown(kSections);

    const SparsityPattern edges = estimate_edges(*target, probes, opts);
    const RegressorSets sets = build_regressor_sets(edges);
    write_edges(dir / "edges.txt", edges);
    write_permutation(dir / "perm.txt", sets.perm);
    write_effective(config, dir);
    log << "target " << target->name() << ": n = " << target->dim() << ", |E| = " << edges.edge_count()
        << ", factor nnz natural = " << sets.natural_factor_nnz << ", reordered = " << sets.factor_nnz << '\n';
}

void cmd_run(const Config& config, std::ostream& log) {
    auto target = make_target(config);
    RunConfig rc = make_run_config(config, *target);
    if (rc.backend == Backend::precision) rc.structure = resolve_structure(config, *target, log);
    const fs::path dir = output_dir(config);
    config.check_unknown(kSections);
    write_effective(config, dir);

    RunResult res;
    try {
        res = run_chain(rc, *target);
    } catch (const RunAbortedError& e) {
        write_json(dir / "checkpoint.json", e.checkpoint());
        throw;
    }
    write_trace_csv(dir / "trace.csv", res.trace, res.trace_coords);
    write_series_csv(dir / "acceptance.csv", "rate", res.acceptance);
    if (rc.bfactor_every > 0) write_series_csv(dir / "bfactor.csv", "b", res.bfactor);
    write_json(dir / "checkpoint.json", res.checkpoint);

    const double rate = rc.iterations ? static_cast<double>(res.chain.accepts) / static_cast<double>(rc.iterations) : 0.0;
    log << to_string(rc.kernel) << '/' << to_string(rc.backend) << " on " << target->name() << " (n = " << target->dim()
        << "): " << rc.iterations << " iterations, acceptance " << format_double(rate) << ", sigma "
        << format_double(res.scale.sigma()) << '\n';
    if (!res.bfactor.empty()) log << "final b = " << format_double(res.bfactor.back().value) << '\n';
}

void cmd_bench(const Config& config, std::ostream& log) {
    const auto names = config.get_string_list("bench.components", {"l_update", "cov_update"});
    const auto dims = config.get_int_list("bench.dims", {100, 400, 1600});
    const auto reps = config.get_uint("bench.reps", 200);
    const auto seed = config.get_uint("bench.seed", 7);
    const fs::path dir = output_dir(config);
    config.check_unknown(kSections);
    if (reps == 0) throw ConfigError("config key 'bench.reps' must be >= 1");

    std::vector<TimingComponent> comps;
    for (const auto& name : names) {
        auto c = parse_timing_component(name);
        if (!c) {
            throw ConfigError("config key 'bench.components': unknown component '" + name +
                              "' (expected cov_update, l_update, sample_cov or sample_prec)");
        }
        comps.push_back(*c);
    }
    std::vector<TimingResult> rows;
    std::map<std::string, std::map<Index, double>> table;
    for (auto c : comps) {
        for (auto n : dims) {
            if (n < 1) throw ConfigError("config key 'bench.dims': dimensions must be >= 1");
            rows.push_back(timing_probe(c, static_cast<Index>(n), reps, seed));
            table[rows.back().component][rows.back().n] = rows.back().mean_ns;
            log << rows.back().component << " n=" << n << ": " << format_double(rows.back().mean_ns) << " ns\n";
        }
    }
    write_timings_csv(dir / "timings.csv", rows);
    write_effective(config, dir);

    if (table.count("l_update") && table.count("cov_update") && dims.size() >= 2) {
        const auto [lo, hi] = std::ranges::minmax(dims);
        const double rl = table["l_update"][static_cast<Index>(hi)] / table["l_update"][static_cast<Index>(lo)];
        const double rc = table["cov_update"][static_cast<Index>(hi)] / table["cov_update"][static_cast<Index>(lo)];
        log << "scaling n=" << lo << " -> " << hi << ": l_update x" << format_double(rl) << ", cov_update x"
            << format_double(rc) << (rl <= 0.5 * rc ? "  (ratio check ok)" : "  (ratio check FAILED)") << '\n';
    }
    if (table.count("sample_prec") && table.count("sample_cov")) {
        for (auto n : dims) {
            const auto idx = static_cast<Index>(n);
            if (table["sample_prec"][idx] > table["sample_cov"][idx]) {
                log << "note: sample_prec slower than sample_cov at n=" << n << '\n';
            }
        }
    }
}

void cmd_bfactor(const Config& config, std::ostream& log) {
    auto target = make_target(config);
    RunConfig rc = make_run_config(config, *target);
    if (rc.bfactor_every == 0) rc.bfactor_every = std::max<std::uint64_t>(1, rc.iterations / 50);
    auto structure = resolve_structure(config, *target, log);
    const fs::path dir = output_dir(config);
    config.check_unknown(kSections);
    write_effective(config, dir);
    if (!target->analytic_covariance()) throw ConfigError("target '" + target->name() + "' has no analytic covariance");

    for (Backend b : {Backend::covariance, Backend::precision}) {
        RunConfig c = rc;
        c.backend = b;
        if (b == Backend::precision) c.structure = structure;
        const RunResult res = run_chain(c, *target);
        write_series_csv(dir / ("bfactor_" + to_string(b) + ".csv"), "b", res.bfactor);
        log << to_string(b) << ": b(0) = " << format_double(res.bfactor.front().value)
            << ", b(final) = " << format_double(res.bfactor.back().value) << '\n';
    }
}

int main_entry(int argc, char** argv) {
    CLI::App app{"Adaptive MCMC with sparse precision-Cholesky adaptation"};
    app.require_subcommand(1);
    std::string config_path;
    std::vector<std::string> overrides;
    std::string out_dir;
    app.add_option("-c,--config", config_path, "config file (key = value with [sections])");
    app.add_option("-s,--set", overrides, "override a key: section.key=value (repeatable)");
    app.add_option("-o,--output-dir", out_dir, "output directory (overrides AMCMC_OUTPUT_DIR and output.dir)");
    app.fallthrough();

    auto* structure = app.add_subcommand("structure", "estimate the conditional-dependence graph");
    auto* run = app.add_subcommand("run", "run one adaptive chain");
    auto* bench = app.add_subcommand("bench", "time adaptation and sampling kernels");
    auto* bfactor = app.add_subcommand("bfactor", "b-measure curves for both backends");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? exit_ok : exit_usage;
    }

    try {
        Config config = config_path.empty() ? Config{} : Config::load(config_path);
        if (const char* env = std::getenv("AMCMC_OUTPUT_DIR"); env && *env) config.set("output.dir", env);
        for (const auto& o : overrides) config.set_assignment(o);
        if (!out_dir.empty()) config.set("output.dir", out_dir);

        if (structure->parsed()) cmd_structure(config, std::cout);
        else if (run->parsed()) cmd_run(config, std::cout);
        else if (bench->parsed()) cmd_bench(config, std::cout);
        else if (bfactor->parsed()) cmd_bfactor(config, std::cout);
        return exit_ok;
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return exit_usage;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return exit_runtime;
    }
}

}  // namespace amcmc::cli
