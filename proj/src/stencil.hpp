#pragma once

#include "pacontrol/model.hpp"

#include <algorithm>
#include <array>
#include <cmath>

namespace pacontrol::detail {

/// Neighbour differences V(nbr) - V(x). Pairs are (P,xi), (P,theta), (xi,theta).
struct NodeDiffs {
    std::array<double, 3> up{};
    std::array<double, 3> down{};
    std::array<double, 3> pp{};
    std::array<double, 3> mm{};
    std::array<double, 3> pm{};
    std::array<double, 3> mp{};
    double max_abs = 0.0;
};

struct GeneratorValue {
    double value = 0.0;
    double rate = 0.0;
    double inflation = 0.0;
};

inline constexpr int kPairA[3] = {0, 0, 1};
inline constexpr int kPairB[3] = {1, 2, 2};

/// Upwind drift, axis second differences and diagonal cross differences chosen by the
/// sign of a_ij. Axis diffusion is raised where needed so every neighbour weight is
/// non-negative; rate is the total outflow weight.
inline GeneratorValue discrete_generator(const Vec3& f, const Vec3& sigma, double eps2,
                                         const std::array<double, 3>& h, const NodeDiffs& d) {
    double a_diag[3];
    for (int i = 0; i < 3; ++i) a_diag[i] = sigma[i] * sigma[i] + eps2;
    double a_off[3];
    double w_off[3];
    for (int p = 0; p < 3; ++p) {
        const int i = kPairA[p];
        const int j = kPairB[p];
        a_off[p] = sigma[i] * sigma[j];
        w_off[p] = std::abs(a_off[p]) / (2.0 * h[i] * h[j]);
    }
    // Off-diagonal weight touching each axis.
    const double cross[3] = {w_off[0] + w_off[1], w_off[0] + w_off[2], w_off[1] + w_off[2]};

    GeneratorValue out;
    for (int i = 0; i < 3; ++i) {
        const double need = 2.0 * h[i] * h[i] * cross[i];
        const double extra = std::max(0.0, need - a_diag[i]);
        out.inflation = std::max(out.inflation, extra);
        const double c_axis = (a_diag[i] + extra) / (2.0 * h[i] * h[i]) - cross[i];
        out.value += c_axis * (d.up[i] + d.down[i]);
        out.rate += 2.0 * c_axis;
        const double fh = std::abs(f[i]) / h[i];
        out.value += fh * (f[i] > 0.0 ? d.up[i] : d.down[i]);
        out.rate += fh;
    }
    for (int p = 0; p < 3; ++p) {
        if (w_off[p] == 0.0) continue;
        const double diag = a_off[p] > 0.0 ? d.pp[p] + d.mm[p] : d.pm[p] + d.mp[p];
        out.value += w_off[p] * diag;
        out.rate += 2.0 * w_off[p];
    }
    return out;
}

/// Values within rounding of each other count as ties.
inline bool strictly_better(double candidate, double best, double scale) {
    return candidate < best - 1e-12 * scale;
}

}  // namespace pacontrol::detail
