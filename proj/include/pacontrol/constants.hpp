#pragma once

#include <algorithm>

namespace pacontrol {

// Second-moment constant for the payoff process.
//
// With dP = b dt + sigma dw and |b|^2 + |sigma|^2 <= L2^2 (1 + P^2), Ito's formula
// for P^2 stopped at any stopping time gives
//
//   E P(t)^2 <= P_s^2 + E int (2 P b + sigma^2) dr
//            <= P_s^2 + E int (P^2 + b^2 + sigma^2) dr
//            <= P_s^2 + L2^2 T + (1 + L2^2) int E P(r)^2 dr,
//
// so by Gronwall  E P(t)^2 <= (P_s^2 + L2^2 T) exp((1 + L2^2) T).
// Any K with K >= 1 + L2^2 and K >= L2^2 T turns this into K (1 + P_s^2) exp(K T).
inline double gronwall_constant(double L2, double T) {
    const double L2sq = L2 * L2;
    return std::max(1.0 + L2sq, L2sq * T);
}

// Slack on every Monte Carlo comparison, in standard errors.
inline constexpr double kMonteCarloSigmas = 4.0;

// Viscosity residual tolerance is kViscosityC1 * (dx + dt).
inline constexpr double kViscosityC1 = 5.0;

}  // namespace pacontrol
