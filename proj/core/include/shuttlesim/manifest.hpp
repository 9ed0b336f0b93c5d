#pragma once

#include <filesystem>
#include <nlohmann/json.hpp>
#include <string>
#include <vector>

#include "shuttlesim/dynamics.hpp"
#include "shuttlesim/landscape.hpp"
#include "shuttlesim/mapping.hpp"
#include "shuttlesim/planner.hpp"

namespace shuttlesim {

struct SweepAxes {
    std::vector<double> B_T;
    std::vector<double> v_s_nm_per_ns;
    std::vector<double> y_nm;
    std::vector<int> n_rep;
    std::vector<double> d_nm;     // one-way distances for tau_S scans
    std::vector<double> tau_s_ns; // round-trip time grid for tau_S scans
    int n_samples = 200;          // stochastic records per trace point
    int n_points = 40;            // points per accumulated-time trace
};

// One file that pins every run input: seeds, configs, sweep axes. Identical
// manifests produce byte-identical outputs for any thread count.
struct ExperimentManifest {
    std::string version = "1";
    uint64_t master_seed = 1;
    LandscapeConfig landscape;
    ShuttleSchedule schedule;
    CouplingParams coupling;
    EventModelConfig events;
    ScanConfig scan;
    TimeEstimateParams time_params;
    PlannerWeights planner;
    SweepAxes sweep;
    std::string output_dir = "out";
    std::string tool_version;

    nlohmann::json to_json() const;
    // Strict: unknown keys and version mismatches fail loudly.
    static ExperimentManifest from_json(const nlohmann::json& j);
    void save(const std::filesystem::path& p) const;
    static ExperimentManifest load(const std::filesystem::path& p);
    void validate() const;
};

struct ResultBundle {
    nlohmann::json manifest;
    struct FileRef {
        std::string kind;
        std::string path; // relative to the bundle directory
        std::string checksum;
    };
    std::vector<FileRef> files;
    nlohmann::json summary;
    struct Warning {
        std::string code;
        std::string message;
    };
    std::vector<Warning> warnings;

    // Registers (and checksums) a file that already exists under `dir`.
    void add_file(const std::filesystem::path& dir, const std::string& kind,
                  const std::string& relative_path);
    void add_warning(Errc code, const std::string& message);
    const FileRef* find(const std::string& kind) const;
    std::vector<const FileRef*> find_all(const std::string& kind) const;

    void save(const std::filesystem::path& dir) const; // dir/bundle.json
    static ResultBundle load(const std::filesystem::path& dir);
};

} // namespace shuttlesim
