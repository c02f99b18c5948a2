#pragma once

#include "pacontrol/hjb.hpp"

#include <cstddef>
#include <optional>
#include <vector>

namespace pacontrol {

/// Grid node (time, P, xi, theta indices).
struct Site {
    std::size_t k = 0;
    std::size_t i = 0;
    std::size_t j = 0;
    std::size_t l = 0;
};

struct SemiJet {
    enum class Kind { super, sub };

    double q = 0.0;
    Vec3 p = Vec3::Zero();
    Mat3 A = Mat3::Zero();
    double t = 0.0;
    State x;
    Kind kind = Kind::super;
};

struct JetPair {
    SemiJet super;
    SemiJet sub;
};

/// Least-squares quadratic in (t, P, xi, theta) over the (2r+1)^4 stencil around the site.
/// Returns nothing when the stencil does not fit inside the grid.
std::optional<JetPair> probe_jets(const ValueGrid& grid, const Site& site, std::size_t stencil_radius = 1);

/// Nodes whose spatial indices keep `margin` cells from every face and whose time index
/// leaves room for a stencil of the given radius.
std::vector<Site> interior_sites(const ValueGrid& grid, std::size_t margin, std::size_t stencil_radius = 1);

/// Every node on a lateral face or the terminal slice.
std::vector<Site> boundary_sites(const ValueGrid& grid);

struct SiteResidual {
    Site site;
    double residual = 0.0;
    bool boundary = false;
    bool violation = false;
};

struct ViscosityReport {
    std::size_t n_sites = 0;
    std::size_t n_skipped = 0;
    std::size_t n_violations_sub = 0;
    std::size_t n_violations_super = 0;
    /// Largest residual in the direction being checked (positive for sub, negative for super).
    double worst_residual = 0.0;
    double tolerance = 0.0;
    std::vector<SiteResidual> residuals;

    double pass_fraction() const;
};

/// -q + H(t,x,p,A) at an interior site, with the grid's epsilon.
double jet_residual(const ModelParams& params, const ValueGrid& grid, const ControlGrid& controls,
                    const SemiJet& jet);

/// Interior sites: violation when the residual exceeds tolerance. Boundary sites: when
/// v > -P xi + tolerance.
ViscosityReport check_subsolution(const ModelParams& params, const ValueGrid& grid, const ControlGrid& controls,
                                  double tolerance, const std::vector<Site>& sample, std::size_t stencil_radius = 1);

/// Mirror image: violation when the residual is below -tolerance, or v < -P xi - tolerance.
ViscosityReport check_supersolution(const ModelParams& params, const ValueGrid& grid, const ControlGrid& controls,
                                    double tolerance, const std::vector<Site>& sample,
                                    std::size_t stencil_radius = 1);

struct ComparisonReport {
    /// max over nodes of W - V.
    double max_difference = 0.0;
    Site worst;
    double tolerance = 0.0;
    bool pass = true;
};

/// Node-wise W <= V + tolerance. Throws std::invalid_argument when the specs differ.
ComparisonReport check_comparison(const ValueGrid& W, const ValueGrid& V, double tolerance);

/// c1 (dx + dt), dx the largest spatial spacing.
double viscosity_tolerance(const ValueGrid& grid, double c1);

}  // namespace pacontrol
