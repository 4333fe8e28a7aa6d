#pragma once

#include <optional>
#include <vector>

#include "rational.hpp"

namespace isoslope {

// Root valuations of a_0 + a_1 X + ... + a_s X^s from the lower convex hull
// of the points (i, v(a_i)); nullopt marks a vanishing coefficient. A hull
// segment of slope -m of horizontal length w contributes w roots of
// valuation m. Vertex ties resolve to the leftmost point (determinism).
inline std::vector<Rational> newton_root_valuations(
    const std::vector<std::optional<Rational>>& vals) {
    std::vector<std::pair<std::int64_t, Rational>> pts;
    for (std::size_t i = 0; i < vals.size(); i++)
        if (vals[i]) pts.emplace_back(std::int64_t(i), *vals[i]);
    if (pts.size() < 2) return {};
    // monotone lower hull
    std::vector<std::pair<std::int64_t, Rational>> hull;
    for (const auto& pt : pts) {
        while (hull.size() >= 2) {
            const auto& a = hull[hull.size() - 2];
            const auto& b = hull[hull.size() - 1];
            // keep b only if it lies strictly below segment a->pt
            Rational lhs = (b.second - a.second) * Rational(pt.first - a.first);
            Rational rhs = (pt.second - a.second) * Rational(b.first - a.first);
            if (lhs < rhs) break;
            hull.pop_back();
        }
        hull.push_back(pt);
    }
    std::vector<Rational> out;
    for (std::size_t k = 0; k + 1 < hull.size(); k++) {
        Rational slope = (hull[k + 1].second - hull[k].second) /
                         Rational(hull[k + 1].first - hull[k].first);
        std::int64_t width = hull[k + 1].first - hull[k].first;
        for (std::int64_t i = 0; i < width; i++) out.push_back(-slope);
    }
    std::sort(out.begin(), out.end(),
              [](const Rational& a, const Rational& b) { return a < b; });
    return out;
}

} // namespace isoslope
