#pragma once

#include "pacontrol/model.hpp"

#include <array>
#include <cstddef>
#include <optional>
#include <vector>

namespace pacontrol {

/// Piecewise-constant Markov policy: M equal time slabs on [s, T - delta] times a
/// regular box partition of the shrunken region [R, rho-delta] x [1/(rho-delta), rho-delta] x [-H, H].
/// Outside the slabs or the boxes the default control applies.
class PolicyTable {
public:
    struct Cell {
        Control u;
        double residual = 0.0;
        bool fallback = false;
    };

    PolicyTable() = default;
    PolicyTable(double t_start, double t_end, std::size_t n_slabs, std::array<double, 3> lo,
                std::array<double, 3> hi, std::array<std::size_t, 3> divisions, Control default_control);

    std::size_t n_slabs() const { return n_slabs_; }
    std::size_t n_cells() const { return divisions_[0] * divisions_[1] * divisions_[2]; }
    std::array<std::size_t, 3> divisions() const { return divisions_; }
    double t_start() const { return t_start_; }
    double t_end() const { return t_end_; }
    std::array<double, 3> lower() const { return lo_; }
    std::array<double, 3> upper() const { return hi_; }
    Control default_control() const { return default_; }

    double slab_start(std::size_t slab) const;
    double slab_end(std::size_t slab) const;
    /// Lower and upper corners of a cell.
    std::array<double, 3> cell_lower(std::size_t cell) const;
    std::array<double, 3> cell_upper(std::size_t cell) const;
    State cell_center(std::size_t cell) const;

    std::optional<std::size_t> slab_of(double t) const;
    std::optional<std::size_t> cell_of(const State& x) const;

    Cell& at(std::size_t slab, std::size_t cell) { return cells_[slab * n_cells() + cell]; }
    const Cell& at(std::size_t slab, std::size_t cell) const { return cells_[slab * n_cells() + cell]; }

    /// Control for a state observed at the start of a slab.
    Control lookup(std::size_t slab, const State& x) const;

    std::size_t n_fallback() const;

private:
    double t_start_ = 0.0;
    double t_end_ = 0.0;
    std::size_t n_slabs_ = 0;
    std::array<double, 3> lo_{};
    std::array<double, 3> hi_{};
    std::array<std::size_t, 3> divisions_{1, 1, 1};
    Control default_;
    std::vector<Cell> cells_;
};

/// Splits a cell budget into three near-equal axis divisions whose product is exactly K0.
std::array<std::size_t, 3> box_divisions(std::size_t K0);

}  // namespace pacontrol
