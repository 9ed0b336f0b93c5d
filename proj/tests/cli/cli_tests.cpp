// End-to-end checks of the shuttlesim executable: exit codes, bundle
// contents, determinism, and the output-directory resolution rules.
// Usage: cli_tests <path-to-shuttlesim>

#include <sys/wait.h>
#include <unistd.h>

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "shuttlesim/analysis.hpp"
#include "shuttlesim/io.hpp"
#include "shuttlesim/manifest.hpp"
#include "shuttlesim/units.hpp"

namespace fs = std::filesystem;
using namespace shuttlesim;

namespace {

int g_failures = 0;

void check(bool ok, const std::string& what) {
    if (ok) {
        std::cout << "  ok: " << what << "\n";
    } else {
        ++g_failures;
        std::cout << "  FAILED: " << what << "\n";
    }
}

struct RunResult {
    int exit_code = -1;
    std::string output; // stdout + stderr
};

RunResult run(const std::string& cli, const std::string& args, const fs::path& capture) {
    const std::string cmd = "\"" + cli + "\" " + args + " > \"" + capture.string() +
                            "\" 2>&1";
    const int status = std::system(cmd.c_str());
    RunResult r;
    if (status != -1 && WIFEXITED(status)) r.exit_code = WEXITSTATUS(status);
    r.output = read_text_file(capture);
    return r;
}

ExperimentManifest small_manifest(const fs::path& out_dir) {
    ExperimentManifest m;
    m.master_seed = 11;
    m.landscape.extent_x_nm = 80.0;
    m.landscape.extent_y_nm = 12.0;
    m.landscape.seed = 11;
    m.sweep.n_samples = 100;
    m.sweep.n_points = 20;
    m.output_dir = out_dir.string();
    return m;
}

} // namespace

int main(int argc, char** argv) {
    if (argc < 2) {
        std::cerr << "usage: cli_tests <path-to-shuttlesim>\n";
        return 1;
    }
    const std::string cli = argv[1];
    const fs::path root = fs::temp_directory_path() /
                          ("shuttlesim_cli_" + std::to_string(::getpid()));
    fs::remove_all(root);
    fs::create_directories(root);
    const fs::path cap = root / "capture.txt";

    // --- argument and error handling ---------------------------------------
    check(run(cli, "", cap).exit_code == 2, "no subcommand exits 2");
    check(run(cli, "--help", cap).exit_code == 0, "--help exits 0");
    check(run(cli, "bogus", cap).exit_code == 2, "unknown subcommand exits 2");
    check(run(cli, "landscape generate", cap).exit_code == 2,
          "missing --manifest exits 2");
    {
        auto r = run(cli, "--manifest " + (root / "absent.json").string() +
                              " landscape generate",
                     cap);
        check(r.exit_code == 3, "unreadable manifest exits 3");
    }

    // --- a valid manifest and the landscape pipeline -----------------------
    const fs::path out1 = root / "out1";
    const fs::path mpath = root / "manifest.json";
    ExperimentManifest m = small_manifest(out1);
    m.save(mpath);

    {
        auto r = run(cli, "--manifest " + mpath.string() + " --quiet landscape generate", cap);
        check(r.exit_code == 0, "landscape generate exits 0");
        check(fs::exists(out1 / "bundle.json"), "bundle.json written");
        const ResultBundle b = ResultBundle::load(out1);
        const auto* ref = b.find("landscape");
        check(ref != nullptr, "bundle lists the landscape file");
        if (ref) {
            check(fs::exists(out1 / ref->path), "landscape csv exists");
            check(checksum_file(out1 / ref->path) == ref->checksum,
                  "recorded checksum matches the file");
        }
    }

    // determinism of a re-run, and the --seed override
    {
        const std::string base = checksum_file(out1 / "landscape.csv");
        run(cli, "--manifest " + mpath.string() + " --quiet landscape generate", cap);
        check(checksum_file(out1 / "landscape.csv") == base, "re-run is byte-identical");
        run(cli, "--manifest " + mpath.string() + " --seed 999 --quiet landscape generate",
            cap);
        check(checksum_file(out1 / "landscape.csv") != base, "--seed changes the output");
    }

    // --out beats the manifest's output_dir
    {
        const fs::path out2 = root / "out2";
        auto r = run(cli, "--manifest " + mpath.string() + " --out " + out2.string() +
                              " --quiet landscape stats",
                     cap);
        check(r.exit_code == 0, "landscape stats exits 0");
        check(fs::exists(out2 / "bundle.json"), "--out redirects the bundle");
        const ResultBundle b = ResultBundle::load(out2);
        check(b.find("acf") != nullptr && b.find("evs-hist") != nullptr,
              "stats registers acf and histogram files");
        check(b.summary.contains("rice") && b.summary["rice"].contains("sigma_ueV"),
              "stats summary carries the Rice fit");

        // figure emission off this bundle
        auto rf = run(cli, "--manifest " + mpath.string() + " --out " + out2.string() +
                               " --quiet figures 2b 2c",
                      cap);
        check(rf.exit_code == 0, "figures 2b 2c exits 0");
        check(fs::exists(out2 / "figures"), "figure data directory written");
        check(run(cli, "--manifest " + mpath.string() + " --out " + out2.string() +
                           " --quiet figures zz",
                  cap)
                      .exit_code == 2,
              "unknown figure id exits 2");
    }

    // --- manifest strictness ------------------------------------------------
    {
        nlohmann::json j = m.to_json();
        j["extra_key"] = 1;
        write_text_file(root / "extra.json", j.dump(2) + "\n");
        check(run(cli, "--manifest " + (root / "extra.json").string() + " landscape generate",
                  cap)
                      .exit_code == 2,
              "unknown manifest key exits 2");

        nlohmann::json v = m.to_json();
        v["version"] = "2";
        write_text_file(root / "version.json", v.dump(2) + "\n");
        check(run(cli, "--manifest " + (root / "version.json").string() +
                           " landscape generate",
                  cap)
                      .exit_code == 2,
              "wrong manifest version exits 2");
    }

    // --- time estimate ------------------------------------------------------
    {
        auto r = run(cli, "--manifest " + mpath.string() + " --quiet map time-estimate", cap);
        check(r.exit_code == 0, "map time-estimate exits 0");
        check(r.output == "2520\n", "quiet time estimate prints 2520, got: " + r.output);
    }

    // --- pipeline ordering guard --------------------------------------------
    {
        const fs::path out3 = root / "out3";
        auto r = run(cli, "--manifest " + mpath.string() + " --out " + out3.string() +
                              " --quiet map extract",
                     cap);
        check(r.exit_code == 2, "map extract without scans exits 2");
    }

    // --- fit subcommand on a stored trace ------------------------------------
    {
        SingletTrace t;
        t.axis = TraceAxis::accumulated_tau;
        t.B_T = 0.04;
        t.v_s_nm_per_ns = 2.8;
        t.d_nm = 140.0;
        t.n_samples_per_point = 400;
        t.path_id = "synthetic";
        const double T = 800.0;
        for (int k = 1; k <= 60; ++k) {
            const double tau = 60.0 * k;
            t.abscissa.push_back(tau);
            t.p_s.push_back(0.5 + 0.35 * std::cos(0.02 * tau + 0.3) * std::exp(-tau / T) +
                            0.01);
        }
        const fs::path tpath = root / "trace.csv";
        save_trace(tpath, t);

        const fs::path out4 = root / "out4";
        auto r = run(cli, "--manifest " + mpath.string() + " --out " + out4.string() +
                              " --quiet fit eq6 " + tpath.string(),
                     cap);
        check(r.exit_code == 0, "fit eq6 exits 0");
        const ResultBundle b = ResultBundle::load(out4);
        const double fitted = b.summary["eq6"]["decay_ns"].get<double>();
        check(std::abs(fitted - T) / T < 0.02,
              "eq6 fit recovers the decay time (got " + std::to_string(fitted) + ")");
        check(run(cli, "--manifest " + mpath.string() + " --out " + out4.string() +
                           " --quiet fit eq6 " + (root / "nope.csv").string(),
                  cap)
                      .exit_code == 2,
              "fit on a missing trace exits 2");
    }

    fs::remove_all(root);
    if (g_failures == 0) {
        std::cout << "cli_tests: all checks passed\n";
        return 0;
    }
    std::cout << "cli_tests: " << g_failures << " check(s) FAILED\n";
    return 1;
}
