#include "pacontrol/constants.hpp"
#include "pacontrol/parallel.hpp"
#include "pacontrol/sde.hpp"

#include <doctest.h>

#include <cmath>
#include <numbers>

using namespace pacontrol;

namespace {

// No payoff dynamics, no Theta dynamics, no effort cost, ell = 0.
ModelParams still_model() {
    ModelParams p;
    p.k = 0.0;
    p.payoff_drift = {true, 0.0, 0.0, 0.0};
    p.payoff_vol = {true, 0.0, 0.0};
    p.theta_drift = TimeFunction::constant(0.0);
    p.theta_vol = TimeFunction::constant(0.0);
    p.ell = TimeFunction::constant(0.0);
    return p;
}

SimConfig small_config(std::size_t n_paths) {
    SimConfig c;
    c.n_paths = n_paths;
    c.dt = 1e-3;
    return c;
}

}  // namespace

TEST_CASE("step_euler examples") {
    auto p = still_model();
    const Control zero(p, 0.0, 0.0);
    const State x{2.0, 1.5, 0.0};
    for (double dw : {-0.3, 0.0, 0.7}) {
        const State y = step_euler(p, 0.2, x, zero, dw, Vec3::Zero(), 0.0, 0.01, false);
        CHECK(y.P == x.P);
        CHECK(y.xi == x.xi);
        CHECK(y.theta == x.theta);
        // Exact update with zero exposure keeps xi.
        CHECK(step_euler(p, 0.2, x, zero, dw, Vec3::Zero(), 0.0, 0.01, true).xi == x.xi);
    }
    p.payoff_drift = {false, 1.0, 0.0, 0.0};
    const State y = step_euler(p, 0.0, x, zero, 0.5, Vec3::Zero(), 0.0, 0.25, true);
    CHECK(y.P == doctest::Approx(2.25));
    CHECK(y.xi == x.xi);
    CHECK(y.theta == x.theta);
}

TEST_CASE("step_euler exact xi update matches the exposure") {
    ModelParams p = still_model();
    p.varrho = 2.0;
    p.A = 1.0;
    p.alpha = 1.0;
    p.beta = 1.0;
    p.ell = TimeFunction::constant(0.5);
    const Control u(p, 1.0, 1.0);
    const State x{2.0, 1.0, 1.0};
    // h = (1 + 1 - 0.5) / 2 = 0.75; d xi = -xi h dw, exact factor exp(-h dw - h^2 dt / 2).
    const double dw = 0.1;
    const double dt = 0.01;
    const State y = step_euler(p, 0.0, x, u, dw, Vec3::Zero(), 0.0, dt, true);
    CHECK(y.xi == doctest::Approx(std::exp(-0.75 * dw - 0.5 * 0.75 * 0.75 * dt)).epsilon(1e-14));
    // The Euler form carries the vol component -0.75 exactly.
    const State e = step_euler(p, 0.0, x, u, dw, Vec3::Zero(), 0.0, dt, false);
    CHECK((e.xi - x.xi) / dw == doctest::Approx(-0.75).epsilon(1e-14));
    // Small-step derivative of the exact update agrees with the Euler slope.
    const double tiny = 1e-7;
    const State z = step_euler(p, 0.0, x, u, tiny, Vec3::Zero(), 0.0, 1e-14, true);
    CHECK((z.xi - x.xi) / tiny == doctest::Approx(-0.75).epsilon(1e-6));
}

TEST_CASE("epsilon noise adds the independent increment") {
    auto p = still_model();
    const State x{2.0, 1.5, 0.0};
    const State y = step_euler(p, 0.0, x, Control(p, 0.0, 0.0), 0.0, Vec3(1.0, -2.0, 3.0), 0.1, 0.01, true);
    CHECK(y.P == doctest::Approx(2.1));
    CHECK(y.xi == doctest::Approx(1.3));
    CHECK(y.theta == doctest::Approx(0.3));
}

TEST_CASE("linear decay exits through the payoff floor") {
    auto p = still_model();
    p.payoff_drift = {false, -1.0, 0.0, 0.0};
    SimConfig cfg = small_config(1);
    Philox rng(cfg.seed, 0);
    const auto r = simulate_path(p, cfg, 0.0, {p.R + 0.5, 1.0, 0.0}, Control(p, 0.0, 0.0), 0.0, rng);
    CHECK(r.exit_face == ExitFace::payoff_floor);
    CHECK(std::abs(r.exit_time - 0.5) <= cfg.dt + 1e-12);
}

TEST_CASE("frozen dynamics cost") {
    auto p = still_model();
    const State y{2.5, 1.2, 0.0};
    auto cfg = small_config(16);
    Philox rng(cfg.seed, 3);
    const auto r = simulate_path(p, cfg, 0.0, y, Control(p, 0.0, 0.0), 0.0, rng);
    CHECK(r.exit_face == ExitFace::horizon);
    CHECK(r.cost == doctest::Approx(-y.P * y.xi).epsilon(1e-14));
    const auto est = estimate_cost(p, cfg, 0.0, y, Control(p, 0.0, 0.0), 0.0);
    CHECK(est.mean == doctest::Approx(-y.P * y.xi).epsilon(1e-14));
    CHECK(est.std_error == 0.0);
}

TEST_CASE("constant integrand quadrature") {
    auto p = still_model();
    p.k = 1.0;
    p.gamma = 1.0;
    // c = 0 gives zero output, so xi has no exposure and stays at 1.
    const State y{2.0, 1.0, 0.0};
    auto cfg = small_config(1);
    Philox rng(cfg.seed, 0);
    const auto r = simulate_path(p, cfg, 0.0, y, Control(p, 1.0, 0.0), 0.0, rng);
    CHECK(r.exit_face == ExitFace::horizon);
    CHECK(r.running == doctest::Approx(1.0).epsilon(1e-9));
    CHECK(r.cost == doctest::Approx(1.0 - 2.0).epsilon(1e-9));
}

TEST_CASE("driven density is a martingale under optional stopping") {
    auto p = still_model();
    p.ell = TimeFunction::constant(0.0);
    const State y{2.0, 1.0, 1.0};
    auto cfg = small_config(4000);
    cfg.dt = 5e-3;
    const auto est = estimate_cost(p, cfg, 0.0, y, Control(p, 1.0, 1.0), 0.0);
    CHECK(est.std_error > 0.0);
    CHECK(std::abs(est.mean + y.P * y.xi) <= 3.0 * est.std_error);
}

TEST_CASE("estimate is bounded by the a-priori bound") {
    ModelParams p;
    p.k = 1.0;
    p.gamma = 2.0;
    const State y{2.0, 1.0, 1.0};
    auto cfg = small_config(2000);
    cfg.dt = 5e-3;
    const auto est = estimate_cost(p, cfg, 0.0, y, Control(p, p.N, 0.5), 0.0);
    const double K = gronwall_constant(growth_constant(p), p.T);
    CHECK(std::abs(est.mean) <= lemma41_bound(p, y, K));
}

TEST_CASE("simulation is deterministic and thread-count invariant") {
    ModelParams p;
    const State y{2.0, 1.0, 1.0};
    auto cfg = small_config(64);
    cfg.dt = 1e-2;
    set_thread_count(1);
    const auto a = simulate_paths(p, cfg, 0.0, y, Control(p, 0.5, 0.5), 0.05);
    set_thread_count(3);
    const auto b = simulate_paths(p, cfg, 0.0, y, Control(p, 0.5, 0.5), 0.05);
    set_thread_count(1);
    REQUIRE(a.size() == b.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
        CHECK(a[i].cost == b[i].cost);
        CHECK(a[i].exit_time == b[i].exit_time);
        CHECK(a[i].exit_face == b[i].exit_face);
    }
    // Path i depends only on (seed, i).
    auto cfg2 = cfg;
    cfg2.n_paths = 8;
    const auto c = simulate_paths(p, cfg2, 0.0, y, Control(p, 0.5, 0.5), 0.05);
    for (std::size_t i = 0; i < c.size(); ++i) CHECK(c[i].cost == a[i].cost);
}

TEST_CASE("truncated simulation stays in the truncated box") {
    ModelParams p;
    auto cfg = small_config(200);
    cfg.dt = 1e-2;
    cfg.rho_trunc = 3.0;
    const auto paths = simulate_paths(p, cfg, 0.0, {2.0, 1.0, 1.0}, Control(p, 1.0, 1.0), 0.2);
    for (const auto& r : paths) {
        CHECK(r.exit_time <= p.T + 1e-12);
        if (r.exit_face == ExitFace::payoff_cap) CHECK(r.exit_state.P > 3.0);
    }
}

TEST_CASE("martingale check examples") {
    auto p = still_model();
    auto cfg = small_config(500);
    cfg.dt = 1e-2;
    auto rep = check_xi_martingale(p, cfg, 0.0, {2.0, 1.3, 0.0}, Control(p, 0.0, 0.0));
    CHECK(rep.pass);
    for (const auto& m : rep.means) CHECK(m.mean == doctest::Approx(1.3).epsilon(1e-14));

    rep = check_xi_martingale(p, cfg, 0.0, {2.0, 0.0, 0.0}, Control(p, 0.0, 0.0));
    for (const auto& m : rep.means) CHECK(m.mean == 0.0);

    cfg.n_paths = 5000;
    rep = check_xi_martingale(ModelParams{}, cfg, 0.0, {2.0, 1.0, 1.0}, Control(ModelParams{}, 0.5, 0.5));
    CHECK(rep.pass);
    CHECK(rep.all_positive);
    REQUIRE(rep.times.size() == 3);
    CHECK(rep.times[2] == 1.0);
}

TEST_CASE("tail bound formula and harness") {
    // Independent evaluation of (12/n) sqrt(kappa T / 2 pi) exp(-n^2 / (18 kappa T)).
    const double b5 = 2.4 * 0.3989422804014327 * std::exp(-25.0 / 18.0);
    CHECK(tail_bound(1.0, 1.0, 5.0) == doctest::Approx(b5).epsilon(1e-14));
    CHECK(tail_bound(1.0, 1.0, 5.0) == doctest::Approx(0.2387).epsilon(1e-3));
    CHECK(tail_bound(1.0, 1.0, 3.5) ==
          doctest::Approx(12.0 / 3.5 * 0.3989422804014327 * std::exp(-12.25 / 18.0)).epsilon(1e-14));

    SimConfig cfg;
    cfg.n_paths = 20000;
    cfg.dt = 0.01;
    const auto rep = check_tail_bound(1.0, 1.0, {3.5, 4.0, 5.0}, cfg);
    CHECK(rep.pass);
    REQUIRE(rep.levels.size() == 3);
    CHECK(rep.levels[2].empirical < 1e-3);
    CHECK(check_tail_bound(1.0, 1.0, {3.5}, cfg, true).pass);
    CHECK_THROWS_AS(check_tail_bound(1.0, 1.0, {2.0}, cfg), std::invalid_argument);
}

TEST_CASE("summarize") {
    const auto e = summarize({1.0, 2.0, 3.0, 4.0});
    CHECK(e.mean == 2.5);
    // sample sd sqrt(5/3), se = sd / 2.
    CHECK(e.std_error == doctest::Approx(std::sqrt(5.0 / 3.0) / 2.0));
    CHECK(e.n == 4);
}
