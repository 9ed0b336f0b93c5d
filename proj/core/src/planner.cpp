#include "shuttlesim/planner.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>

#include "shuttlesim/errors.hpp"
#include "shuttlesim/parallel.hpp"
#include "shuttlesim/rng.hpp"

namespace shuttlesim {

namespace {

struct GridView {
    std::vector<double> x, y;
    std::function<double(std::size_t, std::size_t)> evs; // (ix, iy)
    std::function<bool(std::size_t, std::size_t)> valid;
};

CostGraph build_from_grid(const GridView& grid, double B_T, double v_s,
                          const CouplingParams& coupling, const PlannerWeights& weights,
                          const PhysicalConstants& constants) {
    weights.validate();
    coupling.validate();
    constants.validate();
    require(v_s > 0.0, Errc::invalid_params, "planner needs a positive shuttle velocity");
    require(B_T >= 0.0, Errc::invalid_params, "negative field");
    require(grid.x.size() >= 2 && !grid.y.empty(), Errc::invalid_params,
            "cost graph needs >= 2 columns");

    CostGraph g;
    g.x_nm = grid.x;
    g.y_nm = grid.y;
    g.max_lateral_step = weights.max_lateral_step;
    g.B_T = B_T;
    g.v_s = v_s;
    g.weights = weights;
    const std::size_t nx = g.nx(), ny = g.ny();
    const int m = weights.max_lateral_step;
    const auto span = static_cast<std::size_t>(2 * m + 1);
    g.edges.assign((nx - 1) * ny * span, EdgeCosts{});
    g.feasible.assign(g.edges.size(), 0);

    const double e_zeeman = constants.g0 * constants.mu_B * B_T;
    const double resonance_scale =
        2.0 * kPi * coupling.delta_sv_ueV * coupling.delta_sv_ueV / constants.hbar;
    double narrowing_rate = 0.0;
    if (weights.narrowing_mode) {
        const double gamma = weights.narrowing_qv * v_s / weights.lambda_nm;
        const double dw = weights.narrowing_scale * constants.mu_B * B_T / constants.hbar;
        narrowing_rate = 1.0 / decay_time(gamma, dw);
    }

    parallel_for(nx - 1, [&](std::size_t ix) {
        for (std::size_t iy = 0; iy < ny; ++iy) {
            if (!grid.valid(ix, iy)) continue;
            const double e0 = grid.evs(ix, iy);
            for (int dk = -m; dk <= m; ++dk) {
                const long long k = static_cast<long long>(iy) + dk;
                if (k < 0 || k >= static_cast<long long>(ny)) continue;
                const auto ik = static_cast<std::size_t>(k);
                if (!grid.valid(ix + 1, ik)) continue;
                const double e1 = grid.evs(ix + 1, ik);
                const double len =
                    std::hypot(g.x_nm[ix + 1] - g.x_nm[ix], g.y_nm[ik] - g.y_nm[iy]);
                EdgeCosts cost;
                const double min_e = std::min(e0, e1);
                const double q = weights.q_max /
                                 (1.0 + std::exp(-(weights.evs_midpoint_ueV - min_e) /
                                                 weights.evs_width_ueV));
                cost.valley = -std::log1p(-q) * weights.w_valley;
                if ((e0 - e_zeeman) * (e1 - e_zeeman) < 0.0) {
                    const double slope = std::abs(e1 - e0) / len;
                    cost.resonance = resonance_scale / (slope * v_s) * weights.w_resonance;
                }
                const double edge_time = len / v_s;
                cost.dephasing = weights.w_dephasing *
                                 (weights.narrowing_mode ? edge_time * narrowing_rate
                                                         : edge_time / weights.t2_budget_ns);
                const std::size_t e = g.edge_index(ix, iy, dk);
                g.edges[e] = cost;
                g.feasible[e] = 1;
            }
        }
    });
    return g;
}

} // namespace

void PlannerWeights::validate() const {
    require(q_max >= 0.0 && q_max < 1.0, Errc::invalid_config,
            "excitation cap must be in [0, 1)");
    require(evs_width_ueV > 0.0, Errc::invalid_config, "logistic width must be positive");
    require(t2_budget_ns > 0.0, Errc::invalid_config, "dephasing budget must be positive");
    require(w_valley >= 0.0 && w_resonance >= 0.0 && w_dephasing >= 0.0, Errc::negative_weight,
            "cost weights must be non-negative");
    require(narrowing_qv > 0.0 && narrowing_qv < 1.0, Errc::invalid_config,
            "narrowing q_v must be in (0, 1)");
    require(narrowing_scale > 0.0, Errc::invalid_config, "narrowing scale must be positive");
    require(lambda_nm > 0.0, Errc::invalid_config, "lambda must be positive");
    require(max_lateral_step >= 0, Errc::invalid_config, "lateral step must be >= 0");
}

std::size_t CostGraph::edge_index(std::size_t ix, std::size_t iy, int dk) const {
    const auto span = static_cast<std::size_t>(2 * max_lateral_step + 1);
    return (ix * ny() + iy) * span + static_cast<std::size_t>(dk + max_lateral_step);
}

void CostGraph::validate() const {
    require(x_nm.size() >= 2 && !y_nm.empty(), Errc::invalid_params, "empty cost graph");
    require(max_lateral_step >= 0, Errc::invalid_config, "lateral step must be >= 0");
    const auto span = static_cast<std::size_t>(2 * max_lateral_step + 1);
    require(edges.size() == (x_nm.size() - 1) * y_nm.size() * span &&
                feasible.size() == edges.size(),
            Errc::invalid_params, "cost graph storage inconsistent");
    for (std::size_t i = 1; i < x_nm.size(); ++i)
        require(x_nm[i] > x_nm[i - 1], Errc::invalid_params, "x axis must increase strictly");
    for (std::size_t e = 0; e < edges.size(); ++e)
        if (feasible[e])
            require(edges[e].valley >= 0.0 && edges[e].resonance >= 0.0 &&
                        edges[e].dephasing >= 0.0,
                    Errc::negative_weight, "edge costs must be non-negative");
}

Path TrajectoryPlan::as_path() const {
    std::vector<std::pair<double, double>> pts;
    pts.reserve(x_nm.size());
    for (std::size_t i = 0; i < x_nm.size(); ++i) pts.emplace_back(x_nm[i], y_nm[i]);
    return Path(std::move(pts));
}

CostGraph build_cost_graph(const ValleyLandscape& landscape, double B_T, double v_s,
                           const CouplingParams& coupling, const PlannerWeights& weights,
                           const PhysicalConstants& constants) {
    GridView grid;
    grid.x.resize(static_cast<std::size_t>(landscape.nx()));
    grid.y.resize(static_cast<std::size_t>(landscape.ny()));
    for (std::size_t i = 0; i < grid.x.size(); ++i)
        grid.x[i] = static_cast<double>(i) * landscape.spacing();
    for (std::size_t j = 0; j < grid.y.size(); ++j)
        grid.y[j] = landscape.y_min() + static_cast<double>(j) * landscape.spacing();
    grid.evs = [&landscape](std::size_t ix, std::size_t iy) {
        return landscape.evs_node(static_cast<int>(ix), static_cast<int>(iy));
    };
    grid.valid = [](std::size_t, std::size_t) { return true; };
    return build_from_grid(grid, B_T, v_s, coupling, weights, constants);
}

CostGraph build_cost_graph(const EvsMap& map, double B_T, double v_s,
                           const CouplingParams& coupling, const PlannerWeights& weights,
                           const PhysicalConstants& constants) {
    require(map.evs_ueV.size() == map.y_nm.size() && map.missing.size() == map.y_nm.size(),
            Errc::invalid_params, "malformed map");
    GridView grid;
    grid.x = map.d_nm;
    grid.y = map.y_nm;
    grid.evs = [&map](std::size_t ix, std::size_t iy) { return map.evs_ueV[iy][ix]; };
    grid.valid = [&map](std::size_t ix, std::size_t iy) { return map.missing[iy][ix] == 0; };
    return build_from_grid(grid, B_T, v_s, coupling, weights, constants);
}

TrajectoryPlan plan_trajectory(const CostGraph& graph, std::span<const std::size_t> start_rows,
                               std::span<const std::size_t> end_rows) {
    graph.validate();
    require(!start_rows.empty() && !end_rows.empty(), Errc::invalid_params,
            "need start and end rows");
    const std::size_t nx = graph.nx(), ny = graph.ny();
    for (std::size_t r : start_rows)
        require(r < ny, Errc::out_of_bounds, "start row outside the grid");
    for (std::size_t r : end_rows)
        require(r < ny, Errc::out_of_bounds, "end row outside the grid");

    struct NodeState {
        double cost = std::numeric_limits<double>::infinity();
        double sum_abs_dy = 0.0;
        double sum_abs_y = 0.0;
        std::size_t prev = SIZE_MAX;
        bool reached() const { return std::isfinite(cost); }
    };
    // Lexicographic (cost, total |dy|, total |y|, predecessor row) order; the
    // cost comparison treats near-equal doubles as ties.
    const auto better = [](const NodeState& a, const NodeState& b) {
        const double eps = 1e-12 * std::max({1.0, std::abs(a.cost), std::abs(b.cost)});
        if (a.cost < b.cost - eps) return true;
        if (a.cost > b.cost + eps) return false;
        if (a.sum_abs_dy != b.sum_abs_dy) return a.sum_abs_dy < b.sum_abs_dy;
        if (a.sum_abs_y != b.sum_abs_y) return a.sum_abs_y < b.sum_abs_y;
        return a.prev < b.prev;
    };

    std::vector<NodeState> cur(ny), next(ny);
    for (std::size_t r : start_rows) {
        NodeState s;
        s.cost = 0.0;
        s.sum_abs_y = std::abs(graph.y_nm[r]);
        s.prev = r;
        if (!cur[r].reached() || better(s, cur[r])) cur[r] = s;
    }

    std::vector<std::vector<std::size_t>> back(nx, std::vector<std::size_t>(ny, SIZE_MAX));
    for (std::size_t r : start_rows) back[0][r] = r;
    const int m = graph.max_lateral_step;
    for (std::size_t ix = 0; ix + 1 < nx; ++ix) {
        std::fill(next.begin(), next.end(), NodeState{});
        for (std::size_t iy = 0; iy < ny; ++iy) {
            if (!cur[iy].reached()) continue;
            for (int dk = -m; dk <= m; ++dk) {
                const long long k = static_cast<long long>(iy) + dk;
                if (k < 0 || k >= static_cast<long long>(ny)) continue;
                const auto ik = static_cast<std::size_t>(k);
                const std::size_t e = graph.edge_index(ix, iy, dk);
                if (!graph.feasible[e]) continue;
                NodeState cand;
                cand.cost = cur[iy].cost + graph.edges[e].total();
                cand.sum_abs_dy =
                    cur[iy].sum_abs_dy + std::abs(graph.y_nm[ik] - graph.y_nm[iy]);
                cand.sum_abs_y = cur[iy].sum_abs_y + std::abs(graph.y_nm[ik]);
                cand.prev = iy;
                if (!next[ik].reached() || better(cand, next[ik])) next[ik] = cand;
            }
        }
        cur.swap(next);
        for (std::size_t iy = 0; iy < ny; ++iy) back[ix + 1][iy] = cur[iy].prev;
    }

    std::size_t best_row = SIZE_MAX;
    for (std::size_t r : end_rows) {
        if (!cur[r].reached()) continue;
        if (best_row == SIZE_MAX || better(cur[r], cur[best_row]) ||
            (!better(cur[best_row], cur[r]) && r < best_row))
            best_row = r;
    }
    require(best_row != SIZE_MAX, Errc::no_path,
            "no feasible path under the lateral-step constraint");

    TrajectoryPlan plan;
    plan.rows.assign(nx, 0);
    std::size_t row = best_row;
    for (std::size_t ix = nx; ix-- > 0;) {
        plan.rows[ix] = row;
        row = back[ix][row];
    }
    plan.x_nm.resize(nx);
    plan.y_nm.resize(nx);
    for (std::size_t ix = 0; ix < nx; ++ix) {
        plan.x_nm[ix] = graph.x_nm[ix];
        plan.y_nm[ix] = graph.y_nm[plan.rows[ix]];
    }
    for (std::size_t ix = 0; ix + 1 < nx; ++ix) {
        const int dk = static_cast<int>(plan.rows[ix + 1]) - static_cast<int>(plan.rows[ix]);
        const EdgeCosts& e = graph.edges[graph.edge_index(ix, plan.rows[ix], dk)];
        plan.breakdown.valley += e.valley;
        plan.breakdown.resonance += e.resonance;
        plan.breakdown.dephasing += e.dephasing;
    }
    plan.total_cost = plan.breakdown.total();
    plan.predicted_fidelity = std::exp(-plan.total_cost);
    plan.B_T = graph.B_T;
    plan.v_s = graph.v_s;
    return plan;
}

ScoreResult score_trajectory(const TrajectoryPlan& plan, const ValleyLandscape& landscape,
                             const ShuttleSchedule& schedule, const CouplingParams& coupling,
                             const EventModelConfig& events, std::size_t n_mc, uint64_t seed) {
    require(!plan.x_nm.empty(), Errc::invalid_params, "empty plan");
    require(std::abs(plan.x_nm.front()) < 1e-9, Errc::invalid_params,
            "scored plans must start at x = 0");
    require(n_mc >= 2, Errc::invalid_params, "need at least two Monte-Carlo records");

    ShuttleSchedule run = schedule;
    run.d_nm = plan.x_nm.back();
    run.trajectory = plan.as_path();
    run.validate();
    coupling.validate();

    const std::size_t slots = chunk_count(n_mc);
    std::vector<std::size_t> clean(slots, 0);
    parallel_chunks(n_mc, [&](std::size_t begin, std::size_t end, std::size_t slot) {
        std::size_t n = 0;
        for (std::size_t i = begin; i < end; ++i) {
            RandomStream rng(derive_stream_seed(seed, i));
            const EventResult record =
                propagate_events(run, landscape, coupling, events, rng, Valley::minus);
            if (record.n_svf == 0 && record.n_valley_flips == 0) ++n;
        }
        clean[slot] = n;
    });
    std::size_t total_clean = 0;
    for (std::size_t c : clean) total_clean += c;

    ScoreResult out;
    out.n_mc = n_mc;
    out.passes = 2 * run.n_rep;
    out.event_free_fraction = static_cast<double>(total_clean) / static_cast<double>(n_mc);
    const double deph = std::exp(-static_cast<double>(out.passes) * plan.breakdown.dephasing);
    out.predicted_fidelity = std::exp(-static_cast<double>(out.passes) * plan.total_cost);
    out.simulated_fidelity = out.event_free_fraction * deph;
    const double p = out.event_free_fraction;
    out.sim_stderr = deph * std::sqrt(std::max(0.0, p * (1.0 - p) /
                                                        static_cast<double>(n_mc - 1)));
    return out;
}

double long_range_fidelity(double distance_nm, double v_s, double decay_ns, DecayModel model) {
    require(distance_nm > 0.0 && v_s > 0.0 && decay_ns > 0.0, Errc::invalid_params,
            "distance, velocity and decay time must be positive");
    const double t = distance_nm / v_s;
    const double u = t / decay_ns;
    return model == DecayModel::gaussian_two_tone ? std::exp(-u * u) : std::exp(-u);
}

} // namespace shuttlesim
