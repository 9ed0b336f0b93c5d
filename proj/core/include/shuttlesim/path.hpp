#pragma once

#include <utility>
#include <vector>

#include "shuttlesim/errors.hpp"

namespace shuttlesim {

// Piecewise-linear lateral steering profile y(x) for a shuttling channel.
// x is the conveyor coordinate; vertices must be strictly increasing in x.
class Path {
public:
    Path() = default;

    explicit Path(std::vector<std::pair<double, double>> vertices)
        : vertices_(std::move(vertices)) {
        require(!vertices_.empty(), Errc::invalid_params, "Path: no vertices");
        for (std::size_t i = 1; i < vertices_.size(); ++i)
            require(vertices_[i].first > vertices_[i - 1].first, Errc::invalid_params,
                    "Path: x must be strictly increasing");
    }

    static Path straight(double y) { return Path({{0.0, y}, {1.0, y}}); }

    double y_at(double x) const {
        if (vertices_.size() == 1) return vertices_.front().second;
        if (x <= vertices_.front().first) return vertices_.front().second;
        if (x >= vertices_.back().first) return vertices_.back().second;
        // Linear scan is fine: planner paths have few hundred vertices and the
        // propagators walk x monotonically with a cached hint.
        std::size_t i = hint_;
        if (i + 1 >= vertices_.size() || vertices_[i].first > x) i = 0;
        while (i + 2 < vertices_.size() && vertices_[i + 1].first <= x) ++i;
        hint_ = i;
        const auto& [x0, y0] = vertices_[i];
        const auto& [x1, y1] = vertices_[i + 1];
        const double t = (x - x0) / (x1 - x0);
        return y0 + t * (y1 - y0);
    }

    const std::vector<std::pair<double, double>>& vertices() const { return vertices_; }
    bool empty() const { return vertices_.empty(); }

private:
    std::vector<std::pair<double, double>> vertices_;
    mutable std::size_t hint_ = 0;
};

} // namespace shuttlesim
