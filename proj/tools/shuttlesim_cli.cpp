// Command-line front end: every run is driven by a manifest file and writes a
// result bundle (CSV artifacts + bundle.json with checksums) into one output
// directory. Identical manifests produce byte-identical CSVs for any --threads.
#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "shuttlesim/analysis.hpp"
#include "shuttlesim/dynamics.hpp"
#include "shuttlesim/errors.hpp"
#include "shuttlesim/figures.hpp"
#include "shuttlesim/io.hpp"
#include "shuttlesim/landscape.hpp"
#include "shuttlesim/manifest.hpp"
#include "shuttlesim/mapping.hpp"
#include "shuttlesim/parallel.hpp"
#include "shuttlesim/planner.hpp"
#include "shuttlesim/rng.hpp"
#include "shuttlesim/stats.hpp"

namespace fs = std::filesystem;
using namespace shuttlesim;

namespace {

struct Ctx {
    ExperimentManifest m;
    fs::path out;
    bool quiet = false;
};

struct GlobalFlags {
    std::string manifest_path;
    std::string out_dir;
    uint64_t seed = 0;
    bool seed_given = false;
    int threads = 0;
    bool quiet = false;
};

Ctx resolve(const GlobalFlags& g) {
    require(!g.manifest_path.empty(), Errc::invalid_config,
            "--manifest <file> is required for this subcommand");
    Ctx c;
    c.m = ExperimentManifest::load(g.manifest_path);
    if (g.seed_given) {
        c.m.master_seed = g.seed;
        c.m.landscape.seed = g.seed;
    }
    if (!g.out_dir.empty()) {
        c.out = g.out_dir;
    } else if (const char* env = std::getenv("SHUTTLESIM_OUT"); env && *env) {
        c.out = env;
    } else {
        c.out = c.m.output_dir;
    }
    if (g.threads > 0) set_max_threads(g.threads);
    c.quiet = g.quiet;
    fs::create_directories(c.out);
    return c;
}

// Figure emission reads an existing bundle; no manifest needed.
Ctx resolve_out_only(const GlobalFlags& g) {
    if (!g.manifest_path.empty()) return resolve(g);
    Ctx c;
    if (!g.out_dir.empty()) {
        c.out = g.out_dir;
    } else if (const char* env = std::getenv("SHUTTLESIM_OUT"); env && *env) {
        c.out = env;
    } else {
        fail(Errc::invalid_config, "--out, $SHUTTLESIM_OUT, or --manifest is required");
    }
    if (g.threads > 0) set_max_threads(g.threads);
    c.quiet = g.quiet;
    fs::create_directories(c.out);
    return c;
}

ResultBundle open_bundle(const Ctx& c) {
    ResultBundle b;
    if (fs::exists(c.out / "bundle.json")) b = ResultBundle::load(c.out);
    b.manifest = c.m.to_json();
    return b;
}

void register_file(ResultBundle& b, const Ctx& c, const std::string& kind,
                   const std::string& rel) {
    std::erase_if(b.files, [&](const ResultBundle::FileRef& f) { return f.path == rel; });
    b.add_file(c.out, kind, rel);
    if (!c.quiet) std::cout << "wrote " << (c.out / rel).string() << "\n";
}

ValleyLandscape regen_landscape(const Ctx& c) {
    if (!c.quiet)
        std::cout << "generating landscape (seed " << c.m.landscape.seed << ", "
                  << c.m.landscape.extent_x_nm << " x " << c.m.landscape.extent_y_nm
                  << " nm)\n";
    return ValleyLandscape::generate(c.m.landscape);
}

double gauss_acf_model(double lag, double a_dot) {
    const double denom = (4.0 - kPi) * a_dot * a_dot;
    return std::exp(-lag * lag / denom);
}

void cmd_landscape_generate(const Ctx& c) {
    const auto land = regen_landscape(c);
    save_landscape(c.out / "landscape.csv", land);
    ResultBundle b = open_bundle(c);
    register_file(b, c, "landscape", "landscape.csv");
    b.summary["landscape"] = {{"nx", land.nx()},
                              {"ny", land.ny()},
                              {"grid_spacing_nm", land.spacing()}};
    b.save(c.out);
}

void cmd_landscape_stats(const Ctx& c) {
    const auto land = regen_landscape(c);
    const auto samples = land.decorrelated_evs(3.0 * c.m.landscape.a_dot_nm);
    const RiceFit rice = fit_rice(samples);

    AcfResult acf = averaged_row_acf(land);
    fit_acf(acf);
    Table acf_t;
    acf_t.columns = {"lag_nm", "acf", "acf_fit"};
    for (std::size_t i = 0; i < acf.lags.size(); ++i)
        acf_t.add_row({acf.lags[i], acf.acf_values[i],
                       gauss_acf_model(acf.lags[i], acf.fitted_a_dot)});
    write_text_file(c.out / "acf.csv", table_to_csv(acf_t));

    const double top = *std::max_element(samples.begin(), samples.end()) * 1.02;
    const int n_bins = 50;
    const double width = top / n_bins;
    std::vector<double> counts(n_bins, 0.0);
    for (double s : samples) {
        auto k = static_cast<std::size_t>(s / width);
        if (k >= counts.size()) k = counts.size() - 1;
        counts[k] += 1.0;
    }
    Table hist;
    hist.columns = {"evs_ueV", "density", "rice_fit"};
    for (int k = 0; k < n_bins; ++k) {
        const double center = (k + 0.5) * width;
        hist.add_row({center, counts[k] / (static_cast<double>(samples.size()) * width),
                      rice_pdf(center, rice.nu, rice.sigma)});
    }
    write_text_file(c.out / "evs_hist.csv", table_to_csv(hist));

    ResultBundle b = open_bundle(c);
    register_file(b, c, "acf", "acf.csv");
    register_file(b, c, "evs-hist", "evs_hist.csv");
    b.summary["rice"] = {{"nu_ueV", rice.nu},
                         {"sigma_ueV", rice.sigma},
                         {"nu_stderr_ueV", rice.nu_stderr},
                         {"sigma_stderr_ueV", rice.sigma_stderr},
                         {"n_samples", rice.n}};
    b.summary["acf"] = {{"fitted_a_dot_nm", acf.fitted_a_dot},
                        {"fit_residual", acf.fit_residual}};
    b.save(c.out);
    if (!c.quiet)
        std::cout << "rice sigma " << rice.sigma << " ueV (nu " << rice.nu << " ueV), acf a_dot "
                  << acf.fitted_a_dot << " nm\n";
}

void cmd_shuttle_run(const Ctx& c) {
    const auto land = regen_landscape(c);
    const auto trace =
        simulate_ps_vs_tau(c.m.schedule, land, c.m.coupling, c.m.events, c.m.sweep.n_points,
                           c.m.sweep.n_samples, derive_stream_seed(c.m.master_seed, 0));
    save_trace(c.out / "decay_trace.csv", trace);
    ResultBundle b = open_bundle(c);
    register_file(b, c, "decay-trace", "decay_trace.csv");
    b.summary["run"] = {{"B_T", trace.B_T},
                        {"v_s_nm_per_ns", trace.v_s_nm_per_ns},
                        {"n_points", c.m.sweep.n_points},
                        {"n_samples", c.m.sweep.n_samples}};
    b.save(c.out);
}

void sweep_tau_s(const Ctx& c, const ValleyLandscape& land, ResultBundle& b) {
    const auto& sw = c.m.sweep;
    std::vector<double> Bs = sw.B_T.empty() ? std::vector<double>{c.m.schedule.B_T} : sw.B_T;
    uint64_t counter = 0;
    for (std::size_t ib = 0; ib < Bs.size(); ++ib) {
        std::vector<SingletTrace> columns;
        for (std::size_t jd = 0; jd < sw.d_nm.size(); ++jd) {
            ShuttleSchedule sched = c.m.schedule;
            sched.B_T = Bs[ib];
            sched.d_nm = sw.d_nm[jd];
            sched.n_rep = 1;
            auto trace = simulate_ps_vs_tau_s(sched, land, c.m.coupling, c.m.events, sw.tau_s_ns,
                                              sw.n_samples,
                                              derive_stream_seed(c.m.master_seed, counter++));
            const std::string name =
                "st_b" + std::to_string(ib) + "_d" + std::to_string(jd) + ".csv";
            save_trace(c.out / name, trace);
            register_file(b, c, "st-trace", name);
            columns.push_back(std::move(trace));
        }
        try {
            const StSpectrum spec = st_fft(columns, Bs[ib]);
            const std::string name = "spectrum_b" + std::to_string(ib) + ".csv";
            save_spectrum(c.out / name, spec);
            register_file(b, c, "spectrum", name);
        } catch (const SimError& e) {
            b.add_warning(e.code(), std::string("st_fft skipped: ") + e.what());
        }
    }
    b.summary["sweep"] = {{"mode", "tau_s"},
                          {"n_B", Bs.size()},
                          {"n_d", sw.d_nm.size()},
                          {"n_tau_s", sw.tau_s_ns.size()}};
}

void sweep_decay(const Ctx& c, const ValleyLandscape& land, ResultBundle& b) {
    const auto& sw = c.m.sweep;
    std::vector<double> Bs = sw.B_T.empty() ? std::vector<double>{c.m.schedule.B_T} : sw.B_T;
    std::vector<double> vs =
        sw.v_s_nm_per_ns.empty() ? std::vector<double>{c.m.schedule.v_s()} : sw.v_s_nm_per_ns;
    const bool explicit_y = !sw.y_nm.empty();
    std::vector<double> ys = explicit_y ? sw.y_nm : std::vector<double>{0.0};
    const int n_points = sw.n_points;

    Table fits;
    fits.columns = {"B_T", "v_s_nm_per_ns", "y_nm", "T_ns", "T_stderr_ns", "a1", "omega_per_ns"};
    uint64_t counter = 0;
    for (std::size_t ib = 0; ib < Bs.size(); ++ib)
        for (std::size_t iv = 0; iv < vs.size(); ++iv)
            for (std::size_t iy = 0; iy < ys.size(); ++iy) {
                ShuttleSchedule sched = c.m.schedule;
                sched.B_T = Bs[ib];
                sched.tau_s_ns = 2.0 * sched.d_nm / vs[iv];
                if (explicit_y) sched.trajectory = Path::straight(ys[iy]);
                auto trace =
                    simulate_ps_vs_tau(sched, land, c.m.coupling, c.m.events, n_points,
                                       sw.n_samples,
                                       derive_stream_seed(c.m.master_seed, counter++));
                const std::string name = "decay_b" + std::to_string(ib) + "_v" +
                                         std::to_string(iv) + "_y" + std::to_string(iy) + ".csv";
                save_trace(c.out / name, trace);
                register_file(b, c, "decay-trace", name);
                try {
                    const DecayFitResult r = fit_exponential(trace);
                    fits.add_row({Bs[ib], vs[iv], ys[iy], r.decay_ns, r.decay_stderr_ns, r.a1,
                                  r.omega1});
                } catch (const SimError& e) {
                    b.add_warning(e.code(), name + ": exponential fit failed: " + e.what());
                }
            }
    write_text_file(c.out / "sweep_fits.csv", table_to_csv(fits));
    register_file(b, c, "sweep-summary", "sweep_fits.csv");
    b.summary["sweep"] = {{"mode", "decay"},
                          {"n_B", Bs.size()},
                          {"n_v", vs.size()},
                          {"n_y", ys.size()},
                          {"n_points", n_points}};
}

void cmd_shuttle_sweep(const Ctx& c) {
    const auto land = regen_landscape(c);
    ResultBundle b = open_bundle(c);
    if (!c.m.sweep.d_nm.empty() && !c.m.sweep.tau_s_ns.empty())
        sweep_tau_s(c, land, b);
    else
        sweep_decay(c, land, b);
    b.save(c.out);
}

void cmd_map_simulate(const Ctx& c) {
    const auto land = regen_landscape(c);
    const auto& sw = c.m.sweep;
    std::vector<double> ys = sw.y_nm.empty() ? std::vector<double>{0.0} : sw.y_nm;
    std::vector<double> Bg = sw.B_T.size() >= 2 ? sw.B_T : default_b_grid();
    std::vector<double> dg = sw.d_nm;
    if (dg.empty())
        for (int i = 1; i < land.nx(); ++i) dg.push_back(land.spacing() * i);

    ResultBundle b = open_bundle(c);
    for (std::size_t k = 0; k < ys.size(); ++k) {
        const auto patch =
            simulate_ps_scan(land, c.m.coupling, ys[k], Bg, dg, sw.n_samples,
                             derive_stream_seed(c.m.master_seed, k), c.m.scan);
        const std::string name = "psscan_y" + std::to_string(k) + ".csv";
        save_patch(patch, (c.out / name).string());
        register_file(b, c, "psscan", name);
    }
    b.summary["map_simulate"] = {{"n_B", Bg.size()}, {"n_d", dg.size()}, {"n_y", ys.size()}};
    b.save(c.out);
}

void cmd_map_extract(const Ctx& c) {
    ResultBundle b = open_bundle(c);
    std::vector<std::string> patch_paths; // registering results mutates b.files
    for (const auto* ref : b.find_all("psscan")) patch_paths.push_back(ref->path);
    require(!patch_paths.empty(), Errc::missing_runs,
            "no 'psscan' runs in " + (c.out / "bundle.json").string() +
                "; run `map simulate` first");
    std::size_t k = 0;
    nlohmann::json coverage = nlohmann::json::array();
    for (const auto& patch_path : patch_paths) {
        const auto patch = normalize_linewise(load_patch((c.out / patch_path).string()));
        const auto est = extract_ridge(patch, c.m.coupling);
        if (est.low_coverage)
            b.add_warning(Errc::no_ridge_found,
                          patch_path + ": ridge resolved on under 80% of columns");
        const std::string name = "evstrace_y" + std::to_string(k++) + ".csv";
        save_trace_estimate(est, (c.out / name).string());
        register_file(b, c, "evstrace", name);
        coverage.push_back({{"patch", patch_path},
                            {"y_nm", est.y_nm},
                            {"n_missing", est.n_missing()},
                            {"n_columns", est.d_nm.size()}});
    }
    b.summary["map_extract"] = coverage;
    b.save(c.out);
}

std::vector<EvsTraceEstimate> bundle_traces(const Ctx& c, const ResultBundle& b) {
    std::vector<EvsTraceEstimate> traces;
    for (const auto* ref : b.find_all("evstrace"))
        traces.push_back(load_trace_estimate((c.out / ref->path).string()));
    require(!traces.empty(), Errc::missing_runs,
            "no 'evstrace' runs in " + (c.out / "bundle.json").string() +
                "; run `map extract` first");
    return traces;
}

void cmd_map_assemble(const Ctx& c) {
    ResultBundle b = open_bundle(c);
    const EvsMap map = assemble_map(bundle_traces(c, b));
    save_map(map, (c.out / "map.csv").string());
    register_file(b, c, "map", "map.csv");
    b.summary["map_assemble"] = {{"n_x", map.d_nm.size()}, {"n_y", map.y_nm.size()}};
    b.save(c.out);
}

void cmd_map_time_estimate(const Ctx& c) {
    const TimeEstimate est = estimate_measurement_time(c.m.time_params);
    if (c.quiet) {
        std::cout << est.total_seconds << "\n";
    } else {
        std::cout << "grid: " << est.n_x << " x positions x " << est.n_y << " y positions\n"
                  << "per point: " << est.n_B << " field values x " << est.n_samples
                  << " single-shot samples x " << est.tau_ss_s << " s\n"
                  << "sampling time: " << est.sampling_seconds << " s\n"
                  << "field ramps:   " << est.tau_B_s << " s\n"
                  << "total:         " << est.total_seconds << " s\n";
    }
    ResultBundle b = open_bundle(c);
    b.summary["time_estimate"] = {{"n_x", est.n_x},
                                  {"n_y", est.n_y},
                                  {"n_B", est.n_B},
                                  {"n_samples", est.n_samples},
                                  {"sampling_seconds", est.sampling_seconds},
                                  {"ramp_seconds", est.tau_B_s},
                                  {"total_seconds", est.total_seconds}};
    b.save(c.out);
}

nlohmann::json fit_to_json(const DecayFitResult& r) {
    nlohmann::json j = {{"a1", r.a1},
                        {"omega1_per_ns", r.omega1},
                        {"phi1_rad", r.phi1},
                        {"decay_ns", r.decay_ns},
                        {"decay_stderr_ns", r.decay_stderr_ns},
                        {"epsilon", r.epsilon},
                        {"residual_rms", r.residual_rms},
                        {"iterations", r.iterations}};
    if (r.model == DecayModel::gaussian_two_tone) {
        j["a2"] = r.a2;
        j["omega2_per_ns"] = r.omega2;
        j["phi2_rad"] = r.phi2;
    }
    if (!r.excluded_indices.empty()) j["excluded_indices"] = r.excluded_indices;
    return j;
}

void cmd_fit_eq5(const Ctx& c, const std::string& trace_path) {
    const auto trace = load_trace(trace_path);
    const auto r = fit_gaussian_two_tone(trace);
    if (!c.quiet)
        std::cout << "two-tone fit: T2* " << r.decay_ns << " ns (stderr " << r.decay_stderr_ns
                  << "), f1 " << r.omega1 / (2.0 * kPi) << " /ns, f2 " << r.omega2 / (2.0 * kPi)
                  << " /ns\n";
    ResultBundle b = open_bundle(c);
    b.summary["eq5"] = fit_to_json(r);
    b.summary["eq5"]["trace"] = trace_path;
    b.save(c.out);
}

void cmd_fit_eq6(const Ctx& c, const std::string& trace_path, int exclude_first) {
    const auto trace = load_trace(trace_path);
    const auto r = fit_exponential(trace, exclude_first);
    if (!c.quiet)
        std::cout << "exponential fit: T " << r.decay_ns << " ns (stderr " << r.decay_stderr_ns
                  << ")\n";
    ResultBundle b = open_bundle(c);
    b.summary["eq6"] = fit_to_json(r);
    b.summary["eq6"]["trace"] = trace_path;
    b.save(c.out);
}

void cmd_fit_narrowing(const Ctx& c, const std::vector<std::string>& trace_paths,
                       int exclude_first) {
    std::vector<NarrowingRow> rows;
    std::vector<double> fitted_T;
    for (const auto& p : trace_paths) {
        const auto trace = load_trace(p);
        const auto r = fit_exponential(trace, exclude_first);
        rows.push_back({trace.B_T, trace.v_s_nm_per_ns, r.decay_ns, false});
        fitted_T.push_back(r.decay_ns);
    }
    const double lambda = c.m.schedule.lambda_nm;
    const NarrowingModel model = fit_narrowing_model(rows, lambda);
    Table t;
    t.columns = {"B_T", "v_s_nm_per_ns", "gamma_per_ns", "T_fit_ns", "T_model_ns"};
    for (const auto& row : rows)
        t.add_row({row.B_T, row.v_s_nm_per_ns, model.gamma_per_ns(row.v_s_nm_per_ns), row.T_ns,
                   model.model_T_ns(row.B_T, row.v_s_nm_per_ns)});
    write_text_file(c.out / "narrowing_summary.csv", table_to_csv(t));
    ResultBundle b = open_bundle(c);
    register_file(b, c, "narrowing-summary", "narrowing_summary.csv");
    b.summary["narrowing"] = {{"q_v", model.q_v},
                              {"q_v_stderr", model.q_v_stderr},
                              {"scale", model.scale},
                              {"scale_stderr", model.scale_stderr},
                              {"lambda_nm", model.lambda_nm},
                              {"residual_rms", model.residual_rms}};
    b.save(c.out);
    if (!c.quiet)
        std::cout << "narrowing fit: Q_v " << model.q_v << " (stderr " << model.q_v_stderr
                  << "), dg scale " << model.scale << "\n";
}

void cmd_plan(const Ctx& c, bool on_map, bool score) {
    ResultBundle b = open_bundle(c);
    const auto land = regen_landscape(c);
    CostGraph graph;
    if (on_map) {
        const EvsMap map = assemble_map(bundle_traces(c, b));
        graph = build_cost_graph(map, c.m.schedule.B_T, c.m.schedule.v_s(), c.m.coupling,
                                 c.m.planner, c.m.landscape.constants);
    } else {
        graph = build_cost_graph(land, c.m.schedule.B_T, c.m.schedule.v_s(), c.m.coupling,
                                 c.m.planner, c.m.landscape.constants);
    }
    std::vector<std::size_t> all_rows(graph.ny());
    for (std::size_t j = 0; j < all_rows.size(); ++j) all_rows[j] = j;
    const TrajectoryPlan plan = plan_trajectory(graph, all_rows, all_rows);

    Table t;
    t.columns = {"x_nm", "y_nm"};
    for (std::size_t i = 0; i < plan.x_nm.size(); ++i) t.add_row({plan.x_nm[i], plan.y_nm[i]});
    write_text_file(c.out / "plan.csv", table_to_csv(t));
    register_file(b, c, "plan", "plan.csv");
    b.summary["plan"] = {{"total_cost", plan.total_cost},
                         {"valley_cost", plan.breakdown.valley},
                         {"resonance_cost", plan.breakdown.resonance},
                         {"dephasing_cost", plan.breakdown.dephasing},
                         {"predicted_fidelity", plan.predicted_fidelity},
                         {"on_map", on_map}};
    if (score) {
        const ScoreResult sc =
            score_trajectory(plan, land, c.m.schedule, c.m.coupling, c.m.events,
                             static_cast<std::size_t>(c.m.sweep.n_samples),
                             derive_stream_seed(c.m.master_seed, 0x509e));
        b.summary["score"] = {{"predicted_fidelity", sc.predicted_fidelity},
                              {"simulated_fidelity", sc.simulated_fidelity},
                              {"sim_stderr", sc.sim_stderr},
                              {"event_free_fraction", sc.event_free_fraction},
                              {"n_mc", sc.n_mc},
                              {"passes", sc.passes}};
        if (!c.quiet)
            std::cout << "plan fidelity: predicted " << sc.predicted_fidelity << ", simulated "
                      << sc.simulated_fidelity << " +- " << sc.sim_stderr << "\n";
    } else if (!c.quiet) {
        std::cout << "plan cost " << plan.total_cost << " (predicted fidelity "
                  << plan.predicted_fidelity << ")\n";
    }
    b.save(c.out);
}

void cmd_figures(const Ctx& c, const std::vector<std::string>& ids,
                 const std::string& bundle_dir) {
    const fs::path src = bundle_dir.empty() ? c.out : fs::path(bundle_dir);
    for (const auto& id : ids) {
        const auto written = emit_figure_data(src, id, c.out / "figures");
        if (!c.quiet)
            for (const auto& p : written) std::cout << "wrote " << p.string() << "\n";
    }
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Conveyor-mode spin-shuttling simulator and analysis toolkit"};
    app.require_subcommand(1);
    GlobalFlags g;
    app.add_option("--manifest", g.manifest_path, "Experiment manifest (JSON)");
    app.add_option("--seed", g.seed, "Override master and landscape seeds")
        ->each([&](const std::string&) { g.seed_given = true; });
    app.add_option("--out", g.out_dir,
                   "Output directory (default: $SHUTTLESIM_OUT, then manifest output_dir)");
    app.add_option("--threads", g.threads, "Worker thread count (results do not depend on it)");
    app.add_flag("--quiet", g.quiet, "Suppress progress output");

    std::function<void()> action;

    auto* landscape = app.add_subcommand("landscape", "Disorder landscape synthesis");
    landscape->require_subcommand(1)->fallthrough();
    landscape->add_subcommand("generate", "Synthesize and store a landscape")
        ->fallthrough()
        ->callback([&] { action = [&] { cmd_landscape_generate(resolve(g)); }; });
    landscape->add_subcommand("stats", "Rice fit, acf fit, and histogram of a landscape")
        ->fallthrough()
        ->callback([&] { action = [&] { cmd_landscape_stats(resolve(g)); }; });

    auto* shuttle = app.add_subcommand("shuttle", "Stochastic-event shuttling runs");
    shuttle->require_subcommand(1)->fallthrough();
    shuttle->add_subcommand("run", "Single P_S decay trace for the manifest schedule")
        ->fallthrough()
        ->callback([&] { action = [&] { cmd_shuttle_run(resolve(g)); }; });
    shuttle
        ->add_subcommand("sweep", "Trace grid over sweep axes (tau_S mode when the manifest "
                                  "lists d_nm and tau_s_ns, decay mode otherwise)")
        ->fallthrough()
        ->callback([&] { action = [&] { cmd_shuttle_sweep(resolve(g)); }; });

    auto* mapcmd = app.add_subcommand("map", "Valley-splitting mapping pipeline");
    mapcmd->require_subcommand(1)->fallthrough();
    mapcmd->add_subcommand("simulate", "P_S(B, d) scan patches per sweep y row")
        ->fallthrough()
        ->callback([&] { action = [&] { cmd_map_simulate(resolve(g)); }; });
    mapcmd->add_subcommand("extract", "Ridge extraction on every scan patch in the bundle")
        ->fallthrough()
        ->callback([&] { action = [&] { cmd_map_extract(resolve(g)); }; });
    mapcmd->add_subcommand("assemble", "Interpolate extracted traces into a 2D map")
        ->fallthrough()
        ->callback([&] { action = [&] { cmd_map_assemble(resolve(g)); }; });
    mapcmd->add_subcommand("time-estimate", "Measurement-time budget for the mapping protocol")
        ->fallthrough()
        ->callback([&] { action = [&] { cmd_map_time_estimate(resolve(g)); }; });

    auto* fit = app.add_subcommand("fit", "Decay-model fits on stored traces");
    fit->require_subcommand(1)->fallthrough();
    std::string eq5_trace, eq6_trace;
    int eq6_exclude = 0, nar_exclude = 0;
    std::vector<std::string> nar_traces;
    auto* eq5 = fit->add_subcommand("eq5", "Gaussian-envelope two-tone fit");
    eq5->fallthrough();
    eq5->add_option("trace", eq5_trace, "Trace CSV")->required()->check(CLI::ExistingFile);
    eq5->callback([&] { action = [&] { cmd_fit_eq5(resolve(g), eq5_trace); }; });
    auto* eq6 = fit->add_subcommand("eq6", "Exponential-envelope single-tone fit");
    eq6->fallthrough();
    eq6->add_option("trace", eq6_trace, "Trace CSV")->required()->check(CLI::ExistingFile);
    eq6->add_option("--exclude-first", eq6_exclude, "Drop the first n points from the fit");
    eq6->callback([&] { action = [&] { cmd_fit_eq6(resolve(g), eq6_trace, eq6_exclude); }; });
    auto* nar = fit->add_subcommand("narrowing", "Motional-narrowing model over decay fits");
    nar->fallthrough();
    nar->add_option("traces", nar_traces, "Trace CSVs (one decay trace per B, v point)")
        ->required()
        ->check(CLI::ExistingFile);
    nar->add_option("--exclude-first", nar_exclude, "Drop the first n points from each fit");
    nar->callback(
        [&] { action = [&] { cmd_fit_narrowing(resolve(g), nar_traces, nar_exclude); }; });

    auto* plan = app.add_subcommand("plan", "Minimum-cost lateral trajectory");
    plan->fallthrough();
    bool plan_on_map = false, plan_score = false;
    plan->add_flag("--on-map", plan_on_map,
                   "Plan on the assembled map from the bundle instead of the true landscape");
    plan->add_flag("--score", plan_score, "Monte-Carlo check of the predicted fidelity");
    plan->callback([&] { action = [&] { cmd_plan(resolve(g), plan_on_map, plan_score); }; });

    auto* figures = app.add_subcommand("figures", "Plot-ready CSV projections of a bundle");
    figures->fallthrough();
    std::vector<std::string> figure_ids_arg;
    std::string figures_bundle;
    figures->add_option("ids", figure_ids_arg, "Panel ids (see docs)")->required();
    figures->add_option("--bundle", figures_bundle, "Bundle directory (default: --out)");
    figures->callback(
        [&] { action = [&] { cmd_figures(resolve_out_only(g), figure_ids_arg, figures_bundle); }; });

    try {
        app.parse(argc, argv);
        if (action) action();
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    } catch (const SimError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return errc_is_validation(e.code()) ? 2 : 3;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    }
    return 0;
}
