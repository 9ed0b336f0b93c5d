#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "shuttlesim/analysis.hpp"
#include "shuttlesim/dynamics.hpp"
#include "shuttlesim/landscape.hpp"
#include "shuttlesim/mapping.hpp"

namespace shuttlesim {

struct PlannerWeights {
    double q_max = 0.023;          // valley-excitation probability cap
    double evs_midpoint_ueV = 5.0; // logistic midpoint of the excitation law
    double evs_width_ueV = 1.0;
    double t2_budget_ns = 1500.0;  // dephasing cost = edge time / budget
    double w_valley = 1.0;
    double w_resonance = 1.0;
    double w_dephasing = 1.0;
    bool narrowing_mode = false;   // dephasing from decay_time(gamma, dw) instead
    double narrowing_qv = 0.023;
    double narrowing_scale = 5.4e-4; // delta_omega_bar / (mu_B B)
    double lambda_nm = 280.0;
    int max_lateral_step = 1;
    void validate() const;
};

struct EdgeCosts {
    double valley = 0.0;
    double resonance = 0.0;
    double dephasing = 0.0;
    double total() const { return valley + resonance + dephasing; }
};

// x-ordered DAG on the map lattice; edge (x_i, y_j) -> (x_{i+1}, y_k) exists
// for |k - j| <= max_lateral_step and both endpoints resolved.
struct CostGraph {
    std::vector<double> x_nm;
    std::vector<double> y_nm;
    int max_lateral_step = 1;
    double B_T = 0.0;
    double v_s = 0.0;
    PlannerWeights weights;
    std::vector<EdgeCosts> edges;   // [(ix * ny + iy) * (2m+1) + (dk+m)]
    std::vector<uint8_t> feasible;  // same layout

    std::size_t nx() const { return x_nm.size(); }
    std::size_t ny() const { return y_nm.size(); }
    std::size_t edge_index(std::size_t ix, std::size_t iy, int dk) const;
    void validate() const;
};

struct TrajectoryPlan {
    std::vector<double> x_nm;
    std::vector<double> y_nm;
    std::vector<std::size_t> rows;
    double total_cost = 0.0;
    EdgeCosts breakdown;
    double predicted_fidelity = 1.0; // exp(-total_cost), per one-way pass
    double B_T = 0.0;
    double v_s = 0.0;
    Path as_path() const;
};

CostGraph build_cost_graph(const ValleyLandscape& landscape, double B_T, double v_s,
                           const CouplingParams& coupling, const PlannerWeights& weights,
                           const PhysicalConstants& constants = {});
CostGraph build_cost_graph(const EvsMap& map, double B_T, double v_s,
                           const CouplingParams& coupling, const PlannerWeights& weights,
                           const PhysicalConstants& constants = {});

// Exact minimum-cost path by dynamic programming; ties broken toward the
// smallest total |dy|, then the smallest total |y|, then the lowest row
// indices (fully deterministic).
TrajectoryPlan plan_trajectory(const CostGraph& graph, std::span<const std::size_t> start_rows,
                               std::span<const std::size_t> end_rows);

struct ScoreResult {
    double predicted_fidelity = 0.0; // exp(-passes * plan cost)
    double simulated_fidelity = 0.0; // event-free fraction x planner dephasing factor
    double sim_stderr = 0.0;
    double event_free_fraction = 0.0;
    std::size_t n_mc = 0;
    int passes = 0;
};

// Cross-checks the planner's prediction against the event-model simulator run
// along the planned path for schedule.n_rep repetitions (2 passes each).
ScoreResult score_trajectory(const TrajectoryPlan& plan, const ValleyLandscape& landscape,
                             const ShuttleSchedule& schedule, const CouplingParams& coupling,
                             const EventModelConfig& events, std::size_t n_mc, uint64_t seed);

// Dephasing-only model fidelity for a long straight corridor free of events.
double long_range_fidelity(double distance_nm, double v_s, double decay_ns, DecayModel model);

} // namespace shuttlesim
