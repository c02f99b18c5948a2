#include "pacontrol/viscosity.hpp"

#include "pacontrol/parallel.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace pacontrol {

namespace {

constexpr int kTerms = 15;

/// Least-squares solve operator for the full quadratic on the integer stencil [-r, r]^4.
struct QuadraticFit {
    int r = 1;
    Eigen::MatrixXd solve;  // kTerms x stencil size
    bool full_rank = false;

    explicit QuadraticFit(int radius) : r(radius) {
        const int w = 2 * r + 1;
        const int n = w * w * w * w;
        Eigen::MatrixXd X(n, kTerms);
        int row = 0;
        for (int a = -r; a <= r; ++a)
            for (int b = -r; b <= r; ++b)
                for (int c = -r; c <= r; ++c)
                    for (int d = -r; d <= r; ++d) {
                        const double z[4] = {double(a), double(b), double(c), double(d)};
                        int col = 0;
                        X(row, col++) = 1.0;
                        for (int m = 0; m < 4; ++m) X(row, col++) = z[m];
                        for (int m = 0; m < 4; ++m)
                            for (int q = m; q < 4; ++q) X(row, col++) = z[m] * z[q];
                        ++row;
                    }
        Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> cod(X);
        full_rank = cod.rank() == kTerms;
        if (full_rank) solve = cod.pseudoInverse();
    }
};

std::optional<JetPair> fit_jets(const ValueGrid& grid, const Site& site, const QuadraticFit& fit) {
    const auto& sp = grid.spec();
    const auto& prm = grid.params();
    const std::size_t r = std::size_t(fit.r);
    if (!fit.full_rank) return std::nullopt;
    if (site.k < r || site.i < r || site.j < r || site.l < r || site.k + r >= sp.nT || site.i + r >= sp.nP ||
        site.j + r >= sp.nXi || site.l + r >= sp.nTheta)
        return std::nullopt;

    const int w = 2 * fit.r + 1;
    Eigen::VectorXd v(w * w * w * w);
    int row = 0;
    for (int a = -fit.r; a <= fit.r; ++a)
        for (int b = -fit.r; b <= fit.r; ++b)
            for (int c = -fit.r; c <= fit.r; ++c)
                for (int d = -fit.r; d <= fit.r; ++d)
                    v[row++] = grid.at(std::size_t(long(site.k) + a), std::size_t(long(site.i) + b),
                                       std::size_t(long(site.j) + c), std::size_t(long(site.l) + d));
    const Eigen::VectorXd coef = fit.solve * v;

    const double h[4] = {sp.dt(prm), sp.dP(prm), sp.dXi(), sp.dTheta(prm)};
    double grad[4];
    double hess[4][4];
    for (int m = 0; m < 4; ++m) grad[m] = coef[1 + m] / h[m];
    int col = 5;
    for (int m = 0; m < 4; ++m)
        for (int q = m; q < 4; ++q) {
            const double c = coef[col++];
            hess[m][q] = hess[q][m] = (m == q ? 2.0 * c : c) / (h[m] * h[q]);
        }

    SemiJet jet;
    jet.q = grad[0];
    jet.p = Vec3(grad[1], grad[2], grad[3]);
    for (int m = 0; m < 3; ++m)
        for (int q = 0; q < 3; ++q) jet.A(m, q) = hess[m + 1][q + 1];
    jet.t = sp.t(prm, site.k);
    jet.x = grid.node(site.i, site.j, site.l);
    JetPair out{jet, jet};
    out.super.kind = SemiJet::Kind::super;
    out.sub.kind = SemiJet::Kind::sub;
    return out;
}

enum class Direction { sub, super };

ViscosityReport run_check(const ModelParams& params, const ValueGrid& grid, const ControlGrid& controls,
                          double tolerance, const std::vector<Site>& sample, std::size_t radius, Direction dir) {
    if (!(tolerance >= 0.0)) throw std::invalid_argument("viscosity tolerance must be >= 0");
    if (radius < 1) throw std::invalid_argument("stencil radius must be at least 1");
    controls.validate(params);
    const QuadraticFit fit(static_cast<int>(radius));
    const auto& sp = grid.spec();

    std::vector<SiteResidual> rows(sample.size());
    std::vector<char> skipped(sample.size(), 0);
    parallel_for(sample.size(), [&](std::size_t n) {
        const Site& s = sample[n];
        SiteResidual& row = rows[n];
        row.site = s;
        const bool on_boundary = s.k + 1 == sp.nT || grid.is_boundary(s.i, s.j, s.l);
        if (on_boundary) {
            row.boundary = true;
            row.residual = grid.at(s.k, s.i, s.j, s.l) - terminal_boundary_value(grid.node(s.i, s.j, s.l));
        } else {
            const auto jets = fit_jets(grid, s, fit);
            if (!jets) {
                skipped[n] = 1;
                return;
            }
            row.residual = jet_residual(params, grid, controls, dir == Direction::sub ? jets->super : jets->sub);
        }
        row.violation = dir == Direction::sub ? row.residual > tolerance : row.residual < -tolerance;
    });

    ViscosityReport rep;
    rep.tolerance = tolerance;
    for (std::size_t n = 0; n < rows.size(); ++n) {
        if (skipped[n]) {
            ++rep.n_skipped;
            continue;
        }
        const SiteResidual& row = rows[n];
        ++rep.n_sites;
        if (dir == Direction::sub) {
            rep.worst_residual = rep.n_sites == 1 ? row.residual : std::max(rep.worst_residual, row.residual);
            rep.n_violations_sub += row.violation;
        } else {
            rep.worst_residual = rep.n_sites == 1 ? row.residual : std::min(rep.worst_residual, row.residual);
            rep.n_violations_super += row.violation;
        }
        rep.residuals.push_back(row);
    }
    return rep;
}

}  // namespace

std::optional<JetPair> probe_jets(const ValueGrid& grid, const Site& site, std::size_t stencil_radius) {
    if (stencil_radius < 1) throw std::invalid_argument("stencil radius must be at least 1");
    return fit_jets(grid, site, QuadraticFit(int(stencil_radius)));
}

std::vector<Site> interior_sites(const ValueGrid& grid, std::size_t margin, std::size_t stencil_radius) {
    const auto& sp = grid.spec();
    const std::size_t m = std::max(margin, std::max<std::size_t>(stencil_radius, 1));
    std::vector<Site> out;
    if (sp.nT < 2 * stencil_radius + 1) return out;
    for (std::size_t k = stencil_radius; k + stencil_radius < sp.nT; ++k)
        for (std::size_t i = m; i + m < sp.nP; ++i)
            for (std::size_t j = m; j + m < sp.nXi; ++j)
                for (std::size_t l = m; l + m < sp.nTheta; ++l) out.push_back({k, i, j, l});
    return out;
}

std::vector<Site> boundary_sites(const ValueGrid& grid) {
    const auto& sp = grid.spec();
    std::vector<Site> out;
    for (std::size_t k = 0; k < sp.nT; ++k)
        for (std::size_t i = 0; i < sp.nP; ++i)
            for (std::size_t j = 0; j < sp.nXi; ++j)
                for (std::size_t l = 0; l < sp.nTheta; ++l)
                    if (k + 1 == sp.nT || grid.is_boundary(i, j, l)) out.push_back({k, i, j, l});
    return out;
}

double ViscosityReport::pass_fraction() const {
    if (n_sites == 0) return 1.0;
    return 1.0 - double(n_violations_sub + n_violations_super) / double(n_sites);
}

double jet_residual(const ModelParams& params, const ValueGrid& grid, const ControlGrid& controls,
                    const SemiJet& jet) {
    const Mat3 A = 0.5 * (jet.A + jet.A.transpose());
    return -jet.q + hamiltonian(params, controls, jet.t, jet.x, jet.p, A, grid.spec().epsilon).value;
}

ViscosityReport check_subsolution(const ModelParams& params, const ValueGrid& grid, const ControlGrid& controls,
                                  double tolerance, const std::vector<Site>& sample, std::size_t stencil_radius) {
    return run_check(params, grid, controls, tolerance, sample, stencil_radius, Direction::sub);
}

ViscosityReport check_supersolution(const ModelParams& params, const ValueGrid& grid, const ControlGrid& controls,
                                    double tolerance, const std::vector<Site>& sample,
                                    std::size_t stencil_radius) {
    return run_check(params, grid, controls, tolerance, sample, stencil_radius, Direction::super);
}

ComparisonReport check_comparison(const ValueGrid& W, const ValueGrid& V, double tolerance) {
    if (!(W.spec() == V.spec())) throw std::invalid_argument("comparison needs identical grid specs");
    const auto& sp = W.spec();
    ComparisonReport rep;
    rep.tolerance = tolerance;
    rep.max_difference = -std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < sp.nT; ++k)
        for (std::size_t i = 0; i < sp.nP; ++i)
            for (std::size_t j = 0; j < sp.nXi; ++j)
                for (std::size_t l = 0; l < sp.nTheta; ++l) {
                    const double d = W.at(k, i, j, l) - V.at(k, i, j, l);
                    if (d > rep.max_difference) {
                        rep.max_difference = d;
                        rep.worst = {k, i, j, l};
                    }
                }
    rep.pass = rep.max_difference <= tolerance;
    return rep;
}

double viscosity_tolerance(const ValueGrid& grid, double c1) {
    return c1 * (grid.spec().max_spacing(grid.params()) + grid.spec().dt(grid.params()));
}

}  // namespace pacontrol
