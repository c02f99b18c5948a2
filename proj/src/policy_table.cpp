#include "pacontrol/policy_table.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace pacontrol {

PolicyTable::PolicyTable(double t_start, double t_end, std::size_t n_slabs, std::array<double, 3> lo,
                         std::array<double, 3> hi, std::array<std::size_t, 3> divisions,
                         Control default_control)
    : t_start_(t_start),
      t_end_(t_end),
      n_slabs_(n_slabs),
      lo_(lo),
      hi_(hi),
      divisions_(divisions),
      default_(default_control) {
    if (n_slabs == 0) throw std::invalid_argument("policy table needs at least one time slab");
    if (!(t_end > t_start)) throw std::invalid_argument("policy table time range is empty");
    for (int d = 0; d < 3; ++d) {
        if (divisions[d] == 0 || !(hi[d] > lo[d])) {
            throw std::invalid_argument("policy table box partition is degenerate");
        }
    }
    cells_.assign(n_slabs_ * n_cells(), Cell{default_control, 0.0, false});
}

double PolicyTable::slab_start(std::size_t slab) const {
    return t_start_ + (t_end_ - t_start_) * double(slab) / double(n_slabs_);
}

double PolicyTable::slab_end(std::size_t slab) const {
    return slab + 1 == n_slabs_ ? t_end_ : slab_start(slab + 1);
}

std::array<double, 3> PolicyTable::cell_lower(std::size_t cell) const {
    const std::size_t i2 = cell % divisions_[2];
    const std::size_t i1 = (cell / divisions_[2]) % divisions_[1];
    const std::size_t i0 = cell / (divisions_[1] * divisions_[2]);
    const std::array<std::size_t, 3> idx{i0, i1, i2};
    std::array<double, 3> out{};
    for (int d = 0; d < 3; ++d) out[d] = lo_[d] + (hi_[d] - lo_[d]) * double(idx[d]) / double(divisions_[d]);
    return out;
}

std::array<double, 3> PolicyTable::cell_upper(std::size_t cell) const {
    const std::size_t i2 = cell % divisions_[2];
    const std::size_t i1 = (cell / divisions_[2]) % divisions_[1];
    const std::size_t i0 = cell / (divisions_[1] * divisions_[2]);
    const std::array<std::size_t, 3> idx{i0, i1, i2};
    std::array<double, 3> out{};
    for (int d = 0; d < 3; ++d) {
        out[d] = idx[d] + 1 == divisions_[d]
                     ? hi_[d]
                     : lo_[d] + (hi_[d] - lo_[d]) * double(idx[d] + 1) / double(divisions_[d]);
    }
    return out;
}

State PolicyTable::cell_center(std::size_t cell) const {
    const auto lo = cell_lower(cell);
    const auto hi = cell_upper(cell);
    return {0.5 * (lo[0] + hi[0]), 0.5 * (lo[1] + hi[1]), 0.5 * (lo[2] + hi[2])};
}

std::optional<std::size_t> PolicyTable::slab_of(double t) const {
    if (t < t_start_ || t >= t_end_) return std::nullopt;
    const auto slab = static_cast<std::size_t>((t - t_start_) / (t_end_ - t_start_) * double(n_slabs_));
    return std::min(slab, n_slabs_ - 1);
}

std::optional<std::size_t> PolicyTable::cell_of(const State& x) const {
    const std::array<double, 3> v{x.P, x.xi, x.theta};
    std::array<std::size_t, 3> idx{};
    for (int d = 0; d < 3; ++d) {
        if (v[d] < lo_[d] || v[d] > hi_[d]) return std::nullopt;
        const auto i = static_cast<std::size_t>((v[d] - lo_[d]) / (hi_[d] - lo_[d]) * double(divisions_[d]));
        idx[d] = std::min(i, divisions_[d] - 1);
    }
    return (idx[0] * divisions_[1] + idx[1]) * divisions_[2] + idx[2];
}

Control PolicyTable::lookup(std::size_t slab, const State& x) const {
    const auto cell = cell_of(x);
    if (!cell || slab >= n_slabs_) return default_;
    return at(slab, *cell).u;
}

std::size_t PolicyTable::n_fallback() const {
    return static_cast<std::size_t>(std::count_if(cells_.begin(), cells_.end(), [](const Cell& c) { return c.fallback; }));
}

std::array<std::size_t, 3> box_divisions(std::size_t K0) {
    if (K0 == 0) throw std::invalid_argument("cell budget must be positive");
    std::array<std::size_t, 3> best{K0, 1, 1};
    double best_spread = std::numeric_limits<double>::infinity();
    for (std::size_t a = 1; a <= K0; ++a) {
        if (K0 % a) continue;
        for (std::size_t b = 1; b <= K0 / a; ++b) {
            if ((K0 / a) % b) continue;
            const std::size_t c = K0 / a / b;
            const double spread = double(std::max({a, b, c})) / double(std::min({a, b, c}));
            if (spread < best_spread) {
                best_spread = spread;
                best = {a, b, c};
            }
        }
    }
    return best;
}

}  // namespace pacontrol
