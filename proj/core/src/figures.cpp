#include "shuttlesim/figures.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>

#include "shuttlesim/analysis.hpp"
#include "shuttlesim/errors.hpp"
#include "shuttlesim/io.hpp"
#include "shuttlesim/mapping.hpp"
#include "shuttlesim/planner.hpp"

namespace shuttlesim {

namespace {

[[noreturn]] void missing(const std::string& what) { fail(Errc::missing_runs, what); }

std::vector<std::filesystem::path> kind_paths(const ResultBundle& bundle,
                                              const std::filesystem::path& dir,
                                              const std::string& kind) {
    std::vector<std::filesystem::path> out;
    for (const auto* ref : bundle.find_all(kind)) out.push_back(dir / ref->path);
    if (out.empty()) missing("bundle has no '" + kind + "' run, which this panel needs");
    return out;
}

std::filesystem::path write_panel(const std::filesystem::path& out_dir, const std::string& id,
                                  const Table& t) {
    std::filesystem::create_directories(out_dir);
    const auto p = out_dir / ("fig" + id + ".csv");
    write_text_file(p, table_to_csv(t));
    return p;
}

// Pass-through panels: validate the source columns, emit the subset requested.
Table project_csv(const std::filesystem::path& src, const std::vector<std::string>& cols) {
    const Table t = table_from_csv(read_text_file(src));
    Table out;
    out.columns = cols;
    std::vector<std::size_t> idx;
    for (const auto& c : cols) idx.push_back(t.col_index(c));
    for (const auto& row : t.rows) {
        std::vector<double> r;
        for (auto i : idx) r.push_back(row[i]);
        out.rows.push_back(std::move(r));
    }
    return out;
}

// Traces of one kind, bucketed by a key field (B or v), ascending, exact match.
std::vector<std::vector<SingletTrace>> trace_groups(const std::vector<std::filesystem::path>& ps,
                                                    bool key_on_field) {
    std::map<double, std::vector<SingletTrace>> buckets;
    for (const auto& p : ps) {
        SingletTrace t = load_trace(p);
        const double key = key_on_field ? t.B_T : t.v_s_nm_per_ns;
        buckets[key].push_back(std::move(t));
    }
    std::vector<std::vector<SingletTrace>> out;
    for (auto& [unused, v] : buckets) out.push_back(std::move(v));
    return out;
}

Table st_panel(std::vector<SingletTrace> traces) {
    std::sort(traces.begin(), traces.end(),
              [](const SingletTrace& a, const SingletTrace& b) { return a.d_nm < b.d_nm; });
    Table t;
    t.columns = {"d_nm", "tau_s_ns", "p_s"};
    for (const auto& tr : traces)
        for (std::size_t i = 0; i < tr.abscissa.size(); ++i)
            t.add_row({tr.d_nm, tr.abscissa[i], tr.p_s[i]});
    return t;
}

Table decay_panel(std::vector<SingletTrace> traces) {
    std::sort(traces.begin(), traces.end(),
              [](const SingletTrace& a, const SingletTrace& b) { return a.B_T < b.B_T; });
    Table t;
    t.columns = {"B_T", "tau_ns", "p_s"};
    for (const auto& tr : traces)
        for (std::size_t i = 0; i < tr.abscissa.size(); ++i)
            t.add_row({tr.B_T, tr.abscissa[i], tr.p_s[i]});
    return t;
}

Table narrowing_summary(const std::filesystem::path& src) {
    return project_csv(src, {"B_T", "v_s_nm_per_ns", "gamma_per_ns", "T_fit_ns", "T_model_ns"});
}

} // namespace

const std::vector<std::string>& figure_ids() {
    static const std::vector<std::string> ids = {"1d", "1e", "2b", "2c", "2d", "3b",
                                                 "3c", "3d", "3e", "3f", "3g", "4b",
                                                 "4d", "4f", "4g", "4h"};
    return ids;
}

std::vector<std::filesystem::path> emit_figure_data(const std::filesystem::path& bundle_dir,
                                                    const std::string& figure_id,
                                                    const std::filesystem::path& out_dir) {
    const auto& ids = figure_ids();
    if (std::find(ids.begin(), ids.end(), figure_id) == ids.end()) {
        std::string valid;
        for (const auto& id : ids) valid += (valid.empty() ? "" : ", ") + id;
        missing("unknown figure id '" + figure_id + "' (valid ids: " + valid + ")");
    }
    const ResultBundle bundle = ResultBundle::load(bundle_dir);
    std::vector<std::filesystem::path> written;

    if (figure_id == "1d") {
        const auto patch = load_patch(kind_paths(bundle, bundle_dir, "psscan").front());
        Table t;
        t.columns = {"B_T", "d_nm", "p_s"};
        for (std::size_t ib = 0; ib < patch.B_T.size(); ++ib)
            for (std::size_t jd = 0; jd < patch.d_nm.size(); ++jd)
                t.add_row({patch.B_T[ib], patch.d_nm[jd], patch.p_s[ib][jd]});
        written.push_back(write_panel(out_dir, figure_id, t));
    } else if (figure_id == "1e") {
        const auto trace =
            load_trace_estimate(kind_paths(bundle, bundle_dir, "evstrace").front());
        Table t;
        t.columns = {"d_nm", "evs_ueV", "confidence_ueV"};
        for (std::size_t i = 0; i < trace.d_nm.size(); ++i) {
            if (trace.missing[i]) continue;
            t.add_row({trace.d_nm[i], trace.evs_ueV[i], trace.confidence_ueV[i]});
        }
        written.push_back(write_panel(out_dir, figure_id, t));
    } else if (figure_id == "2b") {
        const auto src = kind_paths(bundle, bundle_dir, "evs-hist").front();
        written.push_back(
            write_panel(out_dir, figure_id, project_csv(src, {"evs_ueV", "density", "rice_fit"})));
    } else if (figure_id == "2c") {
        const auto src = kind_paths(bundle, bundle_dir, "acf").front();
        written.push_back(
            write_panel(out_dir, figure_id, project_csv(src, {"lag_nm", "acf", "acf_fit"})));
    } else if (figure_id == "2d") {
        const auto src = kind_paths(bundle, bundle_dir, "map").front();
        written.push_back(
            write_panel(out_dir, figure_id, project_csv(src, {"d_nm", "y_nm", "evs_ueV"})));
    } else if (figure_id == "3b" || figure_id == "3c" || figure_id == "3d") {
        auto groups = trace_groups(kind_paths(bundle, bundle_dir, "st-trace"), true);
        const std::size_t panel = static_cast<std::size_t>(figure_id[1] - 'b');
        if (panel >= groups.size())
            missing("panel " + figure_id + " needs " + std::to_string(panel + 1) +
                    " distinct B groups of 'st-trace' runs, bundle has " +
                    std::to_string(groups.size()));
        written.push_back(write_panel(out_dir, figure_id, st_panel(std::move(groups[panel]))));
    } else if (figure_id == "3e" || figure_id == "3f" || figure_id == "3g") {
        const auto paths = kind_paths(bundle, bundle_dir, "spectrum");
        const std::size_t panel = static_cast<std::size_t>(figure_id[1] - 'e');
        if (panel >= paths.size())
            missing("panel " + figure_id + " needs " + std::to_string(panel + 1) +
                    " 'spectrum' runs, bundle has " + std::to_string(paths.size()));
        const StSpectrum s = load_spectrum(paths[panel]);
        Table t;
        t.columns = {"d_nm", "delta_g", "magnitude"};
        for (std::size_t c = 0; c < s.d_nm.size(); ++c)
            for (std::size_t k = 0; k < s.delta_g_axis.size(); ++k)
                t.add_row({s.d_nm[c], s.delta_g_axis[k], s.magnitude[c][k]});
        written.push_back(write_panel(out_dir, figure_id, t));
    } else if (figure_id == "4b" || figure_id == "4d" || figure_id == "4f") {
        auto groups = trace_groups(kind_paths(bundle, bundle_dir, "decay-trace"), false);
        const std::size_t panel = figure_id == "4b" ? 0 : figure_id == "4d" ? 1 : 2;
        if (panel >= groups.size())
            missing("panel " + figure_id + " needs " + std::to_string(panel + 1) +
                    " distinct velocity groups of 'decay-trace' runs, bundle has " +
                    std::to_string(groups.size()));
        written.push_back(write_panel(out_dir, figure_id, decay_panel(std::move(groups[panel]))));
    } else if (figure_id == "4g") {
        const auto src = kind_paths(bundle, bundle_dir, "narrowing-summary").front();
        const Table rows = narrowing_summary(src);
        Table t;
        t.columns = {"gamma_per_s", "B_T", "T_model_us", "T_fit_us"};
        for (const auto& r : rows.rows)
            t.add_row({r[2] * 1e9, r[0], r[4] * 1e-3, r[3] * 1e-3});
        written.push_back(write_panel(out_dir, figure_id, t));
    } else { // 4h
        const auto src = kind_paths(bundle, bundle_dir, "narrowing-summary").front();
        const Table rows = narrowing_summary(src);
        Table t;
        t.columns = {"distance_nm", "B_T", "v_s_nm_per_ns", "fidelity"};
        // Log-spaced distance axis, 100 nm .. 10 mm, exponential envelope per row.
        for (const auto& r : rows.rows) {
            for (int i = 0; i <= 100; ++i) {
                const double d = 100.0 * std::pow(10.0, 5.0 * i / 100.0);
                t.add_row({d, r[0], r[1],
                           long_range_fidelity(d, r[1], r[3], DecayModel::exponential)});
            }
        }
        written.push_back(write_panel(out_dir, figure_id, t));
    }
    return written;
}

} // namespace shuttlesim
