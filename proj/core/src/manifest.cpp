#include "shuttlesim/manifest.hpp"

#include <set>

#include "shuttlesim/errors.hpp"
#include "shuttlesim/io.hpp"

namespace shuttlesim {

namespace {

using nlohmann::json;

// Strict section reader: every consumed key is recorded and leftovers fail.
class Section {
public:
    Section(const json& j, std::string name) : j_(j), name_(std::move(name)) {
        require(j_.is_object(), Errc::invalid_config, "manifest section '" + name_ +
                                                          "' must be an object");
    }

    template <typename T>
    T value(const char* key, const T& fallback) {
        seen_.insert(key);
        if (!j_.contains(key)) return fallback;
        try {
            return j_.at(key).get<T>();
        } catch (const json::exception&) {
            fail(Errc::invalid_config, "manifest key '" + name_ + "." + key +
                                           "' has the wrong type");
        }
    }

    bool has(const char* key) {
        seen_.insert(key);
        return j_.contains(key);
    }

    const json& raw(const char* key) {
        seen_.insert(key);
        return j_.at(key);
    }

    void done() const {
        for (const auto& [key, unused] : j_.items())
            require(seen_.count(key) > 0, Errc::invalid_config,
                    "unknown manifest key '" + name_ + "." + key + "'");
    }

private:
    const json& j_;
    std::string name_;
    std::set<std::string> seen_;
};

json constants_to_json(const PhysicalConstants& c) {
    return {{"mu_B_ueV_per_T", c.mu_B}, {"hbar_ueV_ns", c.hbar}, {"g0", c.g0}};
}

PhysicalConstants constants_from_json(const json& j) {
    PhysicalConstants c;
    Section s(j, "constants");
    c.mu_B = s.value("mu_B_ueV_per_T", c.mu_B);
    c.hbar = s.value("hbar_ueV_ns", c.hbar);
    c.g0 = s.value("g0", c.g0);
    s.done();
    return c;
}

json landscape_to_json(const LandscapeConfig& c) {
    return {{"extent_x_nm", c.extent_x_nm},
            {"extent_y_nm", c.extent_y_nm},
            {"grid_spacing_nm", c.grid_spacing_nm},
            {"a_dot_nm", c.a_dot_nm},
            {"rice_nu_ueV", c.rice_nu_ueV},
            {"rice_sigma_ueV", c.rice_sigma_ueV},
            {"g_dev_rms", c.g_dev_rms},
            {"seed", c.seed},
            {"max_grid_points", c.max_grid_points},
            {"constants", constants_to_json(c.constants)}};
}

LandscapeConfig landscape_from_json(const json& j) {
    LandscapeConfig c;
    Section s(j, "landscape");
    c.extent_x_nm = s.value("extent_x_nm", c.extent_x_nm);
    c.extent_y_nm = s.value("extent_y_nm", c.extent_y_nm);
    c.grid_spacing_nm = s.value("grid_spacing_nm", c.grid_spacing_nm);
    c.a_dot_nm = s.value("a_dot_nm", c.a_dot_nm);
    c.rice_nu_ueV = s.value("rice_nu_ueV", c.rice_nu_ueV);
    c.rice_sigma_ueV = s.value("rice_sigma_ueV", c.rice_sigma_ueV);
    c.g_dev_rms = s.value("g_dev_rms", c.g_dev_rms);
    c.seed = s.value("seed", c.seed);
    c.max_grid_points = s.value("max_grid_points", c.max_grid_points);
    if (s.has("constants")) c.constants = constants_from_json(s.raw("constants"));
    s.done();
    return c;
}

json path_to_json(const Path& p) {
    json arr = json::array();
    for (const auto& [x, y] : p.vertices()) arr.push_back({x, y});
    return arr;
}

Path path_from_json(const json& j) {
    require(j.is_array() && !j.empty(), Errc::invalid_config,
            "trajectory must be a non-empty [[x, y], ...] array");
    std::vector<std::pair<double, double>> pts;
    for (const auto& v : j) {
        require(v.is_array() && v.size() == 2, Errc::invalid_config,
                "trajectory vertices must be [x, y] pairs");
        pts.emplace_back(v[0].get<double>(), v[1].get<double>());
    }
    return Path(std::move(pts));
}

json schedule_to_json(const ShuttleSchedule& c) {
    return {{"d_nm", c.d_nm},
            {"tau_s_ns", c.tau_s_ns},
            {"tau_w_ns", c.tau_w_ns},
            {"n_rep", c.n_rep},
            {"B_T", c.B_T},
            {"f_MHz", c.f_MHz},
            {"lambda_nm", c.lambda_nm},
            {"trajectory", path_to_json(c.trajectory)},
            {"drive_amplitudes_mV", c.drive_amplitudes_mV},
            {"drive_offsets_mV", c.drive_offsets_mV}};
}

ShuttleSchedule schedule_from_json(const json& j) {
    ShuttleSchedule c;
    Section s(j, "schedule");
    c.d_nm = s.value("d_nm", c.d_nm);
    c.tau_s_ns = s.value("tau_s_ns", c.tau_s_ns);
    c.tau_w_ns = s.value("tau_w_ns", c.tau_w_ns);
    c.n_rep = s.value("n_rep", c.n_rep);
    c.B_T = s.value("B_T", c.B_T);
    c.f_MHz = s.value("f_MHz", c.f_MHz);
    c.lambda_nm = s.value("lambda_nm", c.lambda_nm);
    if (s.has("trajectory")) c.trajectory = path_from_json(s.raw("trajectory"));
    c.drive_amplitudes_mV = s.value("drive_amplitudes_mV", c.drive_amplitudes_mV);
    c.drive_offsets_mV = s.value("drive_offsets_mV", c.drive_offsets_mV);
    s.done();
    return c;
}

json coupling_to_json(const CouplingParams& c) {
    return {{"delta_sv_ueV", c.delta_sv_ueV},
            {"g_L", c.g_L},
            {"t2_static_ns", c.t2_static_ns},
            {"spam_epsilon", c.spam_epsilon}};
}

CouplingParams coupling_from_json(const json& j) {
    CouplingParams c;
    Section s(j, "coupling");
    c.delta_sv_ueV = s.value("delta_sv_ueV", c.delta_sv_ueV);
    c.g_L = s.value("g_L", c.g_L);
    c.t2_static_ns = s.value("t2_static_ns", c.t2_static_ns);
    c.spam_epsilon = s.value("spam_epsilon", c.spam_epsilon);
    s.done();
    return c;
}

json events_to_json(const EventModelConfig& c) {
    return {{"mode", c.mode == ValleyFlipMode::landscape ? "landscape" : "periodic"},
            {"q_v", c.q_v},
            {"period_nm", c.period_nm},
            {"q_max", c.q_max},
            {"evs_midpoint_ueV", c.evs_midpoint_ueV},
            {"evs_width_ueV", c.evs_width_ueV},
            {"record_threshold", c.record_threshold}};
}

EventModelConfig events_from_json(const json& j) {
    EventModelConfig c;
    Section s(j, "events");
    const std::string mode = s.value<std::string>("mode", "landscape");
    if (mode == "landscape")
        c.mode = ValleyFlipMode::landscape;
    else if (mode == "periodic")
        c.mode = ValleyFlipMode::periodic;
    else
        fail(Errc::invalid_config, "events.mode must be 'landscape' or 'periodic'");
    c.q_v = s.value("q_v", c.q_v);
    c.period_nm = s.value("period_nm", c.period_nm);
    c.q_max = s.value("q_max", c.q_max);
    c.evs_midpoint_ueV = s.value("evs_midpoint_ueV", c.evs_midpoint_ueV);
    c.evs_width_ueV = s.value("evs_width_ueV", c.evs_width_ueV);
    c.record_threshold = s.value("record_threshold", c.record_threshold);
    s.done();
    return c;
}

json scan_to_json(const ScanConfig& c) {
    return {{"phase_budget_rad", c.phase_budget_rad},
            {"g_ref", c.g_ref},
            {"delta_g_eff", c.delta_g_eff},
            {"max_tau_w_ns", c.max_tau_w_ns},
            {"v_s_nm_per_ns", c.v_s_nm_per_ns},
            {"row_offset_rms", c.row_offset_rms}};
}

ScanConfig scan_from_json(const json& j) {
    ScanConfig c;
    Section s(j, "scan");
    c.phase_budget_rad = s.value("phase_budget_rad", c.phase_budget_rad);
    c.g_ref = s.value("g_ref", c.g_ref);
    c.delta_g_eff = s.value("delta_g_eff", c.delta_g_eff);
    c.max_tau_w_ns = s.value("max_tau_w_ns", c.max_tau_w_ns);
    c.v_s_nm_per_ns = s.value("v_s_nm_per_ns", c.v_s_nm_per_ns);
    c.row_offset_rms = s.value("row_offset_rms", c.row_offset_rms);
    s.done();
    return c;
}

json time_to_json(const TimeEstimateParams& c) {
    return {{"tau_ss_s", c.tau_ss_s},   {"n_B", c.n_B},
            {"n_samples", c.n_samples}, {"l_x_nm", c.l_x_nm},
            {"delta_x_nm", c.delta_x_nm}, {"l_y_nm", c.l_y_nm},
            {"delta_y_nm", c.delta_y_nm}, {"tau_B_s", c.tau_B_s}};
}

TimeEstimateParams time_from_json(const json& j) {
    TimeEstimateParams c;
    Section s(j, "time_estimate");
    c.tau_ss_s = s.value("tau_ss_s", c.tau_ss_s);
    c.n_B = s.value("n_B", c.n_B);
    c.n_samples = s.value("n_samples", c.n_samples);
    c.l_x_nm = s.value("l_x_nm", c.l_x_nm);
    c.delta_x_nm = s.value("delta_x_nm", c.delta_x_nm);
    c.l_y_nm = s.value("l_y_nm", c.l_y_nm);
    c.delta_y_nm = s.value("delta_y_nm", c.delta_y_nm);
    c.tau_B_s = s.value("tau_B_s", c.tau_B_s);
    s.done();
    return c;
}

json planner_to_json(const PlannerWeights& c) {
    return {{"q_max", c.q_max},
            {"evs_midpoint_ueV", c.evs_midpoint_ueV},
            {"evs_width_ueV", c.evs_width_ueV},
            {"t2_budget_ns", c.t2_budget_ns},
            {"w_valley", c.w_valley},
            {"w_resonance", c.w_resonance},
            {"w_dephasing", c.w_dephasing},
            {"narrowing_mode", c.narrowing_mode},
            {"narrowing_qv", c.narrowing_qv},
            {"narrowing_scale", c.narrowing_scale},
            {"lambda_nm", c.lambda_nm},
            {"max_lateral_step", c.max_lateral_step}};
}

PlannerWeights planner_from_json(const json& j) {
    PlannerWeights c;
    Section s(j, "planner");
    c.q_max = s.value("q_max", c.q_max);
    c.evs_midpoint_ueV = s.value("evs_midpoint_ueV", c.evs_midpoint_ueV);
    c.evs_width_ueV = s.value("evs_width_ueV", c.evs_width_ueV);
    c.t2_budget_ns = s.value("t2_budget_ns", c.t2_budget_ns);
    c.w_valley = s.value("w_valley", c.w_valley);
    c.w_resonance = s.value("w_resonance", c.w_resonance);
    c.w_dephasing = s.value("w_dephasing", c.w_dephasing);
    c.narrowing_mode = s.value("narrowing_mode", c.narrowing_mode);
    c.narrowing_qv = s.value("narrowing_qv", c.narrowing_qv);
    c.narrowing_scale = s.value("narrowing_scale", c.narrowing_scale);
    c.lambda_nm = s.value("lambda_nm", c.lambda_nm);
    c.max_lateral_step = s.value("max_lateral_step", c.max_lateral_step);
    s.done();
    return c;
}

json sweep_to_json(const SweepAxes& c) {
    return {{"B_T", c.B_T},
            {"v_s_nm_per_ns", c.v_s_nm_per_ns},
            {"y_nm", c.y_nm},
            {"n_rep", c.n_rep},
            {"d_nm", c.d_nm},
            {"tau_s_ns", c.tau_s_ns},
            {"n_samples", c.n_samples},
            {"n_points", c.n_points}};
}

SweepAxes sweep_from_json(const json& j) {
    SweepAxes c;
    Section s(j, "sweep");
    c.B_T = s.value("B_T", c.B_T);
    c.v_s_nm_per_ns = s.value("v_s_nm_per_ns", c.v_s_nm_per_ns);
    c.y_nm = s.value("y_nm", c.y_nm);
    c.n_rep = s.value("n_rep", c.n_rep);
    c.d_nm = s.value("d_nm", c.d_nm);
    c.tau_s_ns = s.value("tau_s_ns", c.tau_s_ns);
    c.n_samples = s.value("n_samples", c.n_samples);
    c.n_points = s.value("n_points", c.n_points);
    s.done();
    return c;
}

} // namespace

json ExperimentManifest::to_json() const {
    json j;
    j["version"] = version;
    j["master_seed"] = master_seed;
    j["landscape"] = landscape_to_json(landscape);
    j["schedule"] = schedule_to_json(schedule);
    j["coupling"] = coupling_to_json(coupling);
    j["events"] = events_to_json(events);
    j["scan"] = scan_to_json(scan);
    j["time_estimate"] = time_to_json(time_params);
    j["planner"] = planner_to_json(planner);
    j["sweep"] = sweep_to_json(sweep);
    j["output_dir"] = output_dir;
    j["tool_version"] = tool_version;
    return j;
}

ExperimentManifest ExperimentManifest::from_json(const json& j) {
    ExperimentManifest m;
    Section s(j, "manifest");
    require(s.has("version"), Errc::invalid_config, "manifest must declare a version");
    m.version = s.value<std::string>("version", "1");
    require(m.version == "1", Errc::invalid_config,
            "unsupported manifest version '" + m.version + "' (this build reads version 1)");
    m.master_seed = s.value<uint64_t>("master_seed", m.master_seed);
    if (s.has("landscape")) m.landscape = landscape_from_json(s.raw("landscape"));
    if (s.has("schedule")) m.schedule = schedule_from_json(s.raw("schedule"));
    if (s.has("coupling")) m.coupling = coupling_from_json(s.raw("coupling"));
    if (s.has("events")) m.events = events_from_json(s.raw("events"));
    if (s.has("scan")) m.scan = scan_from_json(s.raw("scan"));
    if (s.has("time_estimate")) m.time_params = time_from_json(s.raw("time_estimate"));
    if (s.has("planner")) m.planner = planner_from_json(s.raw("planner"));
    if (s.has("sweep")) m.sweep = sweep_from_json(s.raw("sweep"));
    m.output_dir = s.value<std::string>("output_dir", m.output_dir);
    m.tool_version = s.value<std::string>("tool_version", m.tool_version);
    s.done();
    m.validate();
    return m;
}

void ExperimentManifest::validate() const {
    landscape.validate();
    schedule.validate();
    coupling.validate();
    scan.validate();
    planner.validate();
    require(!output_dir.empty(), Errc::invalid_config, "output_dir must not be empty");
    for (double b : sweep.B_T)
        require(b > 0.0, Errc::invalid_config, "sweep B values must be positive");
    for (double v : sweep.v_s_nm_per_ns)
        require(v > 0.0, Errc::invalid_config, "sweep velocities must be positive");
    for (int n : sweep.n_rep)
        require(n >= 1, Errc::invalid_config, "sweep repetition counts must be >= 1");
    require(sweep.n_samples >= 1, Errc::invalid_config, "sweep.n_samples must be >= 1");
    require(sweep.n_points >= 1, Errc::invalid_config, "sweep.n_points must be >= 1");
}

void ExperimentManifest::save(const std::filesystem::path& p) const {
    write_text_file(p, to_json().dump(2) + "\n");
}

ExperimentManifest ExperimentManifest::load(const std::filesystem::path& p) {
    json j;
    try {
        j = json::parse(read_text_file(p));
    } catch (const json::exception& e) {
        fail(Errc::invalid_config, std::string("manifest parse error: ") + e.what());
    }
    return from_json(j);
}

void ResultBundle::add_file(const std::filesystem::path& dir, const std::string& kind,
                            const std::string& relative_path) {
    FileRef ref;
    ref.kind = kind;
    ref.path = relative_path;
    ref.checksum = checksum_file(dir / relative_path);
    files.push_back(std::move(ref));
}

void ResultBundle::add_warning(Errc code, const std::string& message) {
    warnings.push_back({std::string(errc_name(code)), message});
}

const ResultBundle::FileRef* ResultBundle::find(const std::string& kind) const {
    for (const auto& f : files)
        if (f.kind == kind) return &f;
    return nullptr;
}

std::vector<const ResultBundle::FileRef*> ResultBundle::find_all(const std::string& kind) const {
    std::vector<const FileRef*> out;
    for (const auto& f : files)
        if (f.kind == kind) out.push_back(&f);
    return out;
}

void ResultBundle::save(const std::filesystem::path& dir) const {
    json j;
    j["manifest"] = manifest;
    j["files"] = json::array();
    for (const auto& f : files)
        j["files"].push_back({{"kind", f.kind}, {"path", f.path}, {"checksum", f.checksum}});
    j["summary"] = summary;
    j["warnings"] = json::array();
    for (const auto& w : warnings)
        j["warnings"].push_back({{"code", w.code}, {"message", w.message}});
    write_text_file(dir / "bundle.json", j.dump(2) + "\n");
}

ResultBundle ResultBundle::load(const std::filesystem::path& dir) {
    json j;
    try {
        j = json::parse(read_text_file(dir / "bundle.json"));
    } catch (const json::exception& e) {
        fail(Errc::io_error, std::string("bundle parse error: ") + e.what());
    }
    ResultBundle b;
    b.manifest = j.value("manifest", json::object());
    b.summary = j.value("summary", json::object());
    for (const auto& f : j.value("files", json::array()))
        b.files.push_back({f.at("kind").get<std::string>(), f.at("path").get<std::string>(),
                           f.value("checksum", "")});
    for (const auto& w : j.value("warnings", json::array()))
        b.warnings.push_back({w.at("code").get<std::string>(), w.value("message", "")});
    return b;
}

} // namespace shuttlesim
