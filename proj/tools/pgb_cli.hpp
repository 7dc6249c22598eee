#pragma once

// Command-line front end: synth, prune, eval, bench, inspect.
// Exit codes: 0 ok, 2 budget infeasible, 3 I/O or format, 4 validation.

#include <algorithm>
#include <chrono>
#include <cstdint>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "pgb/pgb.hpp"

namespace pgb::cli {

enum ExitCode : int { kOk = 0, kBudgetInfeasible = 2, kFormat = 3, kValidation = 4 };

namespace detail {

using Clock = std::chrono::steady_clock;

inline double ms_since(Clock::time_point t0) {
    return std::chrono::duration<double, std::milli>(Clock::now() - t0).count();
}

inline std::uint64_t fnv1a(std::span<const std::size_t> v) {
    std::uint64_t h = 1469598103934665603ULL;
    for (std::size_t x : v) {
        for (int b = 0; b < 8; ++b) {
            h ^= (static_cast<std::uint64_t>(x) >> (8 * b)) & 0xffU;
            h *= 1099511628211ULL;
        }
    }
    return h;
}

inline std::string hex(std::uint64_t v) {
    std::ostringstream os;
    os << std::hex << std::setw(16) << std::setfill('0') << v;
    return os.str();
}

inline Matrix load_inputs(const std::string& path, std::size_t max_rows = 0) {
    const auto a = load_archive(path);
    Matrix x = a.matrix("X");
    if (max_rows == 0 || x.rows() <= max_rows) return x;
    Matrix head(max_rows, x.cols());
    std::copy(x.data(), x.data() + max_rows * x.cols(), head.data());
    return head;
}

inline void write_text(const std::string& path, const std::string& text) {
    std::ofstream f(path, std::ios::trunc);
    if (!f) throw FormatError("cannot open '" + path + "' for writing");
    f << text;
}

template <typename T>
T median(std::vector<T> v) {
    std::sort(v.begin(), v.end());
    return v[v.size() / 2];
}

} // namespace detail

struct SynthOptions {
    std::size_t layers = 2, d = 32, d_ffn = 128, heads = 4, seq = 64, grad_samples = 0;
    std::uint64_t seed = 0;
    std::string out_model, out_inputs, out_grads;
};

inline int cmd_synth(const SynthOptions& o, std::ostream& out) {
    std::mt19937_64 rng(o.seed);
    const ModelDims dims{o.d, o.d_ffn, o.heads};
    const auto model = synthetic_model(dims, o.layers, rng);
    save_archive(to_archive(model), o.out_model);
    out << "wrote " << o.out_model << " (" << o.layers << " layers, d=" << o.d << ", d_ffn=" << o.d_ffn
        << ", heads=" << o.heads << ", params=" << model_param_count(model) << ")\n";
    if (!o.out_inputs.empty()) {
        TensorArchive x;
        x.add_matrix("X", random_matrix(o.seq, o.d, rng));
        save_archive(x, o.out_inputs);
        out << "wrote " << o.out_inputs << " (X: " << o.seq << "x" << o.d << ")\n";
    }
    if (!o.out_grads.empty()) {
        TensorArchive g;
        for (std::size_t l = 0; l < o.layers; ++l)
            for (Slot s : kAllSlots) {
                const auto [r, c] = dims.shape(s);
                for (std::size_t k = 0; k < std::max<std::size_t>(o.grad_samples, 1); ++k)
                    g.add_matrix(tensor_name(l, s) + ".grad." + std::to_string(k), random_matrix(r, c, rng, 1e-2));
            }
        save_archive(g, o.out_grads);
        out << "wrote " << o.out_grads << "\n";
    }
    return kOk;
}

struct PruneOptions {
    std::string model, out, report, importance = "magnitude2", grads, calib;
    PruneConfig cfg;
    std::size_t calib_rows = 2000, threads = 0, seq_len = 128;
};

/// Report totals recomputed from the archives only.
inline json build_report(const ModelSpec& dense, const PrunedModel& pruned, std::size_t seq_len) {
    const auto before = model_param_count(dense);
    const auto after = model_param_count(pruned);
    const auto prov = provenance_json(pruned);
    std::size_t dropped_ffn = 0;
    for (const auto& l : pruned.layers) dropped_ffn += l.ffn_skipped() ? 1 : 0;
    return {{"schema", kReportSchema},
            {"config",
             {{"gamma", prov["gamma"]},
              {"tau", prov["tau"]},
              {"g_max", prov["g_max"]},
              {"n_perm", prov["n_perm"]},
              {"lambda", prov["lambda"]},
              {"importance", prov["importance"]}}},
            {"layers", prov["layers"]},
            {"ffn_selection", prov["ffn_selection"]},
            {"dropped_ffn_layers", dropped_ffn},
            {"params", {{"before", before}, {"after", after}, {"kept_fraction", double(after) / double(before)}}},
            {"macs", {{"seq_len", seq_len}, {"before", model_flops(dense, seq_len)}, {"after", model_flops(pruned, seq_len)}}}};
}

inline int cmd_prune(const PruneOptions& o, std::ostream& out) {
    auto t0 = detail::Clock::now();
    const auto dense = model_from_archive(load_archive(o.model));
    const auto provider = parse_importance_provider(o.importance);
    std::optional<TensorArchive> grads;
    if (!o.grads.empty()) grads = load_archive(o.grads);
    if (provider == ImportanceProvider::Fisher && !grads) {
        throw ValidationError("--importance fisher requires --grads");
    }
    const double load_ms = detail::ms_since(t0);

    t0 = detail::Clock::now();
    const auto importances = compute_importances(dense, provider, grads ? &*grads : nullptr);
    const double importance_ms = detail::ms_since(t0);

    t0 = detail::Clock::now();
    auto pruned = pgb_compress(dense, importances, o.cfg, o.threads, to_string(provider));
    const double prune_ms = detail::ms_since(t0);

    json compensation = nullptr;
    double compensate_ms = 0.0;
    if (!o.calib.empty()) {
        t0 = detail::Clock::now();
        const Matrix x = detail::load_inputs(o.calib, o.calib_rows);
        ModelCompensationReport rep;
        pruned = compensate_model(pruned, dense, x, o.cfg.ridge_lambda, o.threads, &rep);
        compensate_ms = detail::ms_since(t0);
        compensation = json::array();
        for (const auto& e : rep.entries) {
            compensation.push_back({{"tensor", tensor_name(e.layer, e.slot)},
                                    {"error_before", e.error_before},
                                    {"error_after", e.error_after},
                                    {"fallbacks", e.fallbacks}});
        }
    }

    save_archive(to_archive(pruned), o.out);

    json report = build_report(dense, pruned, o.seq_len);
    report["timings_ms"] = {{"load", load_ms}, {"importance", importance_ms}, {"prune", prune_ms}, {"compensate", compensate_ms}};
    report["compensation"] = compensation;
    const std::string report_path = o.report.empty() ? o.out + ".report.json" : o.report;
    detail::write_text(report_path, report.dump(2) + "\n");

    out << "G_max=" << o.cfg.g_max << " N_perm=" << o.cfg.n_perm << " tau=" << o.cfg.tau << " gamma=" << o.cfg.gamma
        << " importance=" << to_string(provider) << "\n";
    for (const auto& l : report["layers"]) {
        out << "layer " << l["index"].get<std::size_t>() << ":";
        for (Slot s : kAllSlots) {
            const auto& v = l[std::string(slot_name(s))];
            out << " " << slot_name(s) << "=" << (v.is_string() ? std::string("dropped") : "G" + std::to_string(v.get<std::size_t>()));
        }
        out << (l["ffn_skipped"].get<bool>() ? "  [ffn dropped]" : "") << "\n";
    }
    out << "params " << report["params"]["before"] << " -> " << report["params"]["after"] << " (kept "
        << std::setprecision(4) << report["params"]["kept_fraction"].get<double>() << ")\n";
    out << "wrote " << o.out << " and " << report_path << "\n";
    return kOk;
}

struct EvalOptions {
    std::string dense, pruned, inputs;
    double lambda = 0.0;
    std::size_t baseline_seeds = 0, threads = 0;
    std::uint64_t seed = 0;
    bool as_json = false;
};

inline json layer_discrepancies(const std::vector<LayerTrace>& a, const std::vector<LayerTrace>& b) {
    json out = json::array();
    for (std::size_t l = 0; l < a.size(); ++l) out.push_back(frobenius_distance(a[l].output, b[l].output));
    return out;
}

inline int cmd_eval(const EvalOptions& o, std::ostream& out) {
    const auto dense = model_from_archive(load_archive(o.dense));
    const auto pruned = pruned_from_archive(load_archive(o.pruned));
    const Matrix x = detail::load_inputs(o.inputs);
    if (!(pruned.dims == dense.dims) || pruned.layers.size() != dense.layers.size()) {
        throw ShapeError("pruned model structure does not match the dense model");
    }
    if (x.cols() != dense.dims.d) throw ShapeError("input width does not match the model width");

    std::vector<LayerTrace> t_dense, t_pruned, t_comp;
    const Matrix y_dense = encoder_forward(x, dense, nullptr, &t_dense);
    const Matrix y_pruned = encoder_forward(x, pruned, nullptr, &t_pruned);
    const auto compensated = compensate_model(pruned, dense, x, o.lambda, o.threads);
    const Matrix y_comp = encoder_forward(x, compensated, nullptr, &t_comp);

    json report{{"schema", kReportSchema},
                {"rows", x.rows()},
                {"per_layer", {{"uncompensated", layer_discrepancies(t_dense, t_pruned)},
                               {"compensated", layer_discrepancies(t_dense, t_comp)}}},
                {"end_to_end", {{"uncompensated", frobenius_distance(y_dense, y_pruned)},
                                {"compensated", frobenius_distance(y_dense, y_comp)}}}};

    if (o.baseline_seeds > 0) {
        const double ours = report["end_to_end"]["uncompensated"].get<double>();
        std::size_t wins = 0;
        json runs = json::array();
        for (std::size_t i = 0; i < o.baseline_seeds; ++i) {
            std::mt19937_64 rng(o.seed + i);
            const auto baseline = random_grouping_baseline(pruned, dense, rng);
            const double d = frobenius_distance(y_dense, encoder_forward(x, baseline));
            wins += ours < d ? 1 : 0;
            runs.push_back(d);
        }
        report["random_baseline"] = {{"seeds", o.baseline_seeds}, {"discrepancy", runs},
                                     {"pgb_lower_fraction", double(wins) / double(o.baseline_seeds)}};
    }

    if (o.as_json) {
        out << report.dump(2) << "\n";
        return kOk;
    }
    out << "layer  uncompensated  compensated\n";
    for (std::size_t l = 0; l < dense.layers.size(); ++l) {
        out << std::setw(5) << l << "  " << std::setw(13) << report["per_layer"]["uncompensated"][l].get<double>()
            << "  " << std::setw(11) << report["per_layer"]["compensated"][l].get<double>() << "\n";
    }
    out << "end-to-end  uncompensated=" << report["end_to_end"]["uncompensated"].get<double>()
        << "  compensated=" << report["end_to_end"]["compensated"].get<double>() << "\n";
    if (report.contains("random_baseline")) {
        out << "random same-size grouping: PGB lower on "
            << report["random_baseline"]["pgb_lower_fraction"].get<double>() * 100.0 << "% of "
            << o.baseline_seeds << " seeds\n";
    }
    return kOk;
}

struct BenchOptions {
    std::vector<std::string> shapes{"768x768"};
    std::vector<std::size_t> groups{1, 2, 3, 4, 6};
    std::size_t seq = 128, reps = 30;
    std::uint64_t seed = 0;
    std::string csv;
};

struct BenchRow {
    std::size_t m, n, seq, g;
    std::uint64_t macs, dense_macs;
    double median_us, dense_median_us;
};

inline std::vector<BenchRow> run_bench(const BenchOptions& o) {
    std::mt19937_64 rng(o.seed);
    std::vector<BenchRow> rows;
    volatile float sink = 0.0f;  // keeps the timed calls observable
    for (const auto& shape : o.shapes) {
        std::size_t m = 0, n = 0;
        char sep = 0;
        std::istringstream is(shape);
        if (!(is >> m >> sep >> n) || sep != 'x' || m == 0 || n == 0) {
            throw ValidationError("shape '" + shape + "' is not of the form MxN");
        }
        const MatrixF x = random_matrix(o.seq, m, rng).cast<float>();
        const MatrixF w = random_matrix(m, n, rng).cast<float>();

        std::vector<double> dense_us;
        MacCounter dense_count;
        for (std::size_t r = 0; r < o.reps; ++r) {
            const auto t0 = detail::Clock::now();
            const auto y = dense_linear(x, w, r == 0 ? &dense_count : nullptr);
            dense_us.push_back(detail::ms_since(t0) * 1e3);
            sink = sink + y(0, 0);
        }
        const double dense_median = detail::median(dense_us);

        for (std::size_t g : o.groups) {
            if (g == 0 || m % g || n % g) continue;
            std::vector<std::size_t> pr(m), pc(n);
            std::iota(pr.begin(), pr.end(), std::size_t{0});
            std::iota(pc.begin(), pc.end(), std::size_t{0});
            std::shuffle(pr.begin(), pr.end(), rng);
            std::shuffle(pc.begin(), pc.end(), rng);
            const auto gm = grouped_from_plan(w, g, Permutation(pr), Permutation(pc));
            std::vector<double> us;
            MacCounter count;
            for (std::size_t r = 0; r < o.reps; ++r) {
                const auto t0 = detail::Clock::now();
                const auto y = pgb_linear(x, gm, r == 0 ? &count : nullptr);
                us.push_back(detail::ms_since(t0) * 1e3);
                sink = sink + y(0, 0);
            }
            rows.push_back({m, n, o.seq, g, count.macs, dense_count.macs, detail::median(us), dense_median});
        }
    }
    return rows;
}

inline int cmd_bench(const BenchOptions& o, std::ostream& out) {
    if (o.reps < 1) throw ValidationError("--reps must be at least 1");
    std::ostringstream csv;
    csv << "m,n,seq,G,macs,dense_macs,median_us,dense_median_us,speedup\n";
    for (const auto& r : run_bench(o)) {
        csv << r.m << "," << r.n << "," << r.seq << "," << r.g << "," << r.macs << "," << r.dense_macs << ","
            << std::fixed << std::setprecision(2) << r.median_us << "," << r.dense_median_us << ","
            << std::setprecision(3) << r.dense_median_us / r.median_us << "\n";
        csv.unsetf(std::ios::fixed);
    }
    if (o.csv.empty()) {
        out << csv.str();
    } else {
        detail::write_text(o.csv, csv.str());
        out << "wrote " << o.csv << "\n";
    }
    return kOk;
}

inline int cmd_inspect(const std::string& path, std::ostream& out) {
    const auto a = load_archive(path);
    if (a.meta().contains("model")) out << "model: " << a.meta()["model"].dump() << "\n";
    std::size_t grouped = 0, dropped = 0;
    for (const auto& e : a.entries()) {
        out << e.name << "  [";
        for (std::size_t i = 0; i < e.shape.size(); ++i) out << (i ? "x" : "") << e.shape[i];
        out << "] " << e.dtype;
        if (e.extra.value("dropped", false)) {
            ++dropped;
            out << "  dropped";
        } else if (e.extra.contains("group")) {
            ++grouped;
            const auto gm = grouped_from_entry(a, e);
            out << "  G=" << gm.group_count << " blocks=" << gm.group_count << "x(" << gm.block_rows() << "x"
                << gm.block_cols() << ") pr#" << detail::hex(detail::fnv1a(gm.pr.entries())) << " pc#"
                << detail::hex(detail::fnv1a(gm.pc.entries()));
        } else {
            out << "  ungrouped";
        }
        out << "\n";
    }
    out << a.entries().size() << " tensors, " << grouped << " grouped, " << dropped << " dropped\n";
    return kOk;
}

/// Parses argv and dispatches; every library error maps to its exit code.
inline int run(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
    CLI::App app{"Permutation-and-grouping compression for transformer weight matrices", "pgb"};
    app.require_subcommand(1);
    const std::uint64_t default_seed = seed_from_env(42);

    SynthOptions so;
    so.seed = default_seed;
    auto* synth = app.add_subcommand("synth", "Write a synthetic dense model (and optional inputs/gradients)");
    synth->add_option("--layers", so.layers)->check(CLI::PositiveNumber);
    synth->add_option("--d", so.d)->check(CLI::PositiveNumber);
    synth->add_option("--dffn", so.d_ffn)->check(CLI::PositiveNumber);
    synth->add_option("--heads", so.heads)->check(CLI::PositiveNumber);
    synth->add_option("--seq", so.seq, "Rows of the input activation matrix X")->check(CLI::PositiveNumber);
    synth->add_option("--seed", so.seed, "RNG seed (default: PGB_SEED or 42)");
    synth->add_option("--out-model", so.out_model)->required();
    synth->add_option("--out-inputs", so.out_inputs);
    synth->add_option("--out-grads", so.out_grads);
    synth->add_option("--grad-samples", so.grad_samples);

    PruneOptions po;
    auto* prune = app.add_subcommand("prune", "Compress a dense model archive");
    prune->add_option("--model", po.model)->required();
    prune->add_option("--out", po.out)->required();
    prune->add_option("--report", po.report, "JSON report path (default: <out>.report.json)");
    prune->add_option("--gamma", po.cfg.gamma, "Kept fraction of prunable parameters")->capture_default_str();
    prune->add_option("--tau", po.cfg.tau, "Importance threshold")->capture_default_str();
    prune->add_option("--gmax", po.cfg.g_max)->capture_default_str();
    prune->add_option("--nperm", po.cfg.n_perm)->capture_default_str();
    prune->add_option("--lambda", po.cfg.ridge_lambda, "Compensation ridge strength")->capture_default_str();
    prune->add_option("--importance", po.importance)->check(CLI::IsMember({"magnitude2", "fisher"}))->capture_default_str();
    prune->add_option("--grads", po.grads, "Gradient archive (<tensor>.grad.<k>)");
    prune->add_option("--calib", po.calib, "Calibration activations archive (tensor X); enables compensation");
    prune->add_option("--calib-rows", po.calib_rows)->capture_default_str();
    prune->add_option("--threads", po.threads, "Worker cap (0 = all cores)");
    prune->add_option("--seq-len", po.seq_len, "Sequence length for MAC accounting")->capture_default_str();

    EvalOptions eo;
    eo.seed = default_seed;
    auto* eval = app.add_subcommand("eval", "Output discrepancy between a dense and a pruned model");
    eval->add_option("--dense", eo.dense)->required();
    eval->add_option("--pruned", eo.pruned)->required();
    eval->add_option("--inputs", eo.inputs)->required();
    eval->add_option("--lambda", eo.lambda)->capture_default_str();
    eval->add_option("--baseline-seeds", eo.baseline_seeds, "Random same-size grouping baselines to compare");
    eval->add_option("--seed", eo.seed);
    eval->add_option("--threads", eo.threads);
    eval->add_flag("--json", eo.as_json);

    BenchOptions bo;
    bo.seed = default_seed;
    auto* bench = app.add_subcommand("bench", "Time grouped vs dense linears");
    bench->add_option("--shapes", bo.shapes, "MxN shapes")->delimiter(',');
    bench->add_option("--groups", bo.groups)->delimiter(',');
    bench->add_option("--seq", bo.seq)->check(CLI::PositiveNumber);
    bench->add_option("--reps", bo.reps)->capture_default_str();
    bench->add_option("--seed", bo.seed);
    bench->add_option("--csv", bo.csv);

    std::string inspect_path;
    auto* inspect = app.add_subcommand("inspect", "List an archive's tensors and grouping metadata");
    inspect->add_option("archive", inspect_path)->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e, out, err);
    }

    try {
        if (*synth) return cmd_synth(so, out);
        if (*prune) return cmd_prune(po, out);
        if (*eval) return cmd_eval(eo, out);
        if (*bench) return cmd_bench(bo, out);
        if (*inspect) return cmd_inspect(inspect_path, out);
    } catch (const BudgetInfeasible& e) {
        err << "error: " << e.what() << "\n";
        return kBudgetInfeasible;
    } catch (const FormatError& e) {
        err << "error: " << e.what() << "\n";
        return kFormat;
    } catch (const Error& e) {
        err << "error: " << e.what() << "\n";
        return kValidation;
    }
    return kOk;
}

} // namespace pgb::cli
