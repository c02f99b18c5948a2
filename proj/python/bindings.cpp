#include "pacontrol/cli.hpp"
#include "pacontrol/config.hpp"
#include "pacontrol/dpp.hpp"
#include "pacontrol/hjb.hpp"
#include "pacontrol/model.hpp"
#include "pacontrol/parallel.hpp"
#include "pacontrol/sde.hpp"
#include "pacontrol/viscosity.hpp"

#include <pybind11/eigen.h>
#include <pybind11/functional.h>
#include <pybind11/numpy.h>
#include <pybind11/operators.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <memory>
#include <sstream>

namespace py = pybind11;
using namespace pacontrol;

namespace {

using GridPtr = std::shared_ptr<ValueGrid>;

py::array_t<double> values_array(const ValueGrid& g) {
    const auto& s = g.spec();
    py::array_t<double> out({s.nT, s.nP, s.nXi, s.nTheta});
    std::copy(g.values().begin(), g.values().end(), out.mutable_data());
    return out;
}

py::array_t<std::uint16_t> policy_array(const ValueGrid& g) {
    const auto& s = g.spec();
    py::array_t<std::uint16_t> out({s.nT, s.nP, s.nXi, s.nTheta});
    std::copy(g.policy().begin(), g.policy().end(), out.mutable_data());
    return out;
}

ControlSource as_source(const py::object& policy) {
    if (py::isinstance<Control>(policy)) return policy.cast<Control>();
    if (py::isinstance<GreedyPolicy>(policy)) return MarkovPolicy(policy.cast<GreedyPolicy>());
    if (py::isinstance<PolicyTable>(policy)) return std::make_shared<const PolicyTable>(policy.cast<PolicyTable>());
    throw py::type_error("policy must be a Control, GreedyPolicy or PolicyTable");
}

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "Principal-agent stochastic control: model, simulation, HJB solver and verification.";

    py::class_<TimeFunction>(m, "TimeFunction")
        .def_static("constant", &TimeFunction::constant)
        .def_static("linear", &TimeFunction::linear)
        .def_static("sinusoidal", &TimeFunction::sinusoidal)
        .def("__call__", &TimeFunction::operator())
        .def_readonly("coeffs", &TimeFunction::coeffs);

    py::class_<PayoffDrift>(m, "PayoffDrift")
        .def(py::init<bool, double, double, double>(), py::arg("time_scaled") = true, py::arg("mu0") = 0.0,
             py::arg("mu1") = 0.0, py::arg("mu2") = 0.0)
        .def_readwrite("time_scaled", &PayoffDrift::time_scaled)
        .def_readwrite("mu0", &PayoffDrift::mu0)
        .def_readwrite("mu1", &PayoffDrift::mu1)
        .def_readwrite("mu2", &PayoffDrift::mu2);

    py::class_<PayoffVol>(m, "PayoffVol")
        .def(py::init<bool, double, double>(), py::arg("time_scaled") = true, py::arg("s0") = 0.0,
             py::arg("s1") = 0.0)
        .def_readwrite("time_scaled", &PayoffVol::time_scaled)
        .def_readwrite("s0", &PayoffVol::s0)
        .def_readwrite("s1", &PayoffVol::s1);

    py::class_<ModelParams>(m, "ModelParams")
        .def(py::init<>())
        .def_readwrite("A", &ModelParams::A)
        .def_readwrite("alpha", &ModelParams::alpha)
        .def_readwrite("beta", &ModelParams::beta)
        .def_readwrite("k", &ModelParams::k)
        .def_readwrite("gamma", &ModelParams::gamma)
        .def_readwrite("varrho", &ModelParams::varrho)
        .def_readwrite("N", &ModelParams::N)
        .def_readwrite("C", &ModelParams::C)
        .def_readwrite("H", &ModelParams::H)
        .def_readwrite("R", &ModelParams::R)
        .def_readwrite("T", &ModelParams::T)
        .def_readwrite("ell", &ModelParams::ell)
        .def_readwrite("theta_drift", &ModelParams::theta_drift)
        .def_readwrite("theta_vol", &ModelParams::theta_vol)
        .def_readwrite("payoff_drift", &ModelParams::payoff_drift)
        .def_readwrite("payoff_vol", &ModelParams::payoff_vol)
        .def("validate", &ModelParams::validate);
    m.def("desk_model", &desk_model);
    m.def("frozen_payoff_model", &frozen_payoff_model);

    py::class_<State>(m, "State")
        .def(py::init<double, double, double>(), py::arg("P"), py::arg("xi"), py::arg("theta"))
        .def_readwrite("P", &State::P)
        .def_readwrite("xi", &State::xi)
        .def_readwrite("theta", &State::theta)
        .def("__repr__", [](const State& x) {
            std::ostringstream os;
            os << "State(P=" << x.P << ", xi=" << x.xi << ", theta=" << x.theta << ")";
            return os.str();
        });

    py::class_<Control>(m, "Control")
        .def(py::init<const ModelParams&, double, double>(), py::arg("params"), py::arg("eta"), py::arg("c"))
        .def_property_readonly("eta", &Control::eta)
        .def_property_readonly("c", &Control::c)
        .def(py::self == py::self);

    py::class_<ControlGrid>(m, "ControlGrid")
        .def_static("uniform", &ControlGrid::uniform, py::arg("params"), py::arg("n_eta"), py::arg("n_c"))
        .def_readwrite("eta_levels", &ControlGrid::eta_levels)
        .def_readwrite("c_levels", &ControlGrid::c_levels)
        .def("__len__", &ControlGrid::size)
        .def("at", &ControlGrid::at);

    m.def("cobb_douglas", &cobb_douglas);
    m.def("cutoff_zeta", &cutoff_zeta);
    m.def("drift_vector", &drift_vector);
    m.def("vol_vector", &vol_vector);
    m.def("diffusion_matrix", &diffusion_matrix, py::arg("params"), py::arg("t"), py::arg("x"), py::arg("u"),
          py::arg("epsilon"));
    m.def("running_cost", &running_cost);
    m.def("terminal_boundary_value", &terminal_boundary_value);
    m.def(
        "hamiltonian",
        [](const ModelParams& p, const ControlGrid& g, double t, const State& x, const Vec3& z, const Mat3& M,
           double eps) {
            const auto h = hamiltonian(p, g, t, x, z, M, eps);
            return py::make_tuple(h.value, h.argmax);
        },
        py::arg("params"), py::arg("grid"), py::arg("t"), py::arg("x"), py::arg("z"), py::arg("M"),
        py::arg("epsilon"));
    m.def("lemma41_bound", &lemma41_bound);
    m.def("growth_constant", &growth_constant);
    m.def(
        "validate_conditions",
        [](const ModelParams& p, std::size_t budget, unsigned long long seed) {
            py::dict out;
            for (const auto& r : validate_conditions(p, budget, seed).results)
                out[py::str(r.name)] = py::dict(py::arg("pass") = r.pass, py::arg("constant") = r.constant);
            return out;
        },
        py::arg("params"), py::arg("sample_budget") = 20000, py::arg("seed") = 7);

    py::class_<SimConfig>(m, "SimConfig")
        .def(py::init<>())
        .def_readwrite("dt", &SimConfig::dt)
        .def_readwrite("n_paths", &SimConfig::n_paths)
        .def_readwrite("seed", &SimConfig::seed)
        .def_readwrite("rho_trunc", &SimConfig::rho_trunc)
        .def_readwrite("exact_xi_update", &SimConfig::exact_xi_update);

    py::class_<McEstimate>(m, "McEstimate")
        .def_readonly("mean", &McEstimate::mean)
        .def_readonly("std_error", &McEstimate::std_error)
        .def_readonly("n", &McEstimate::n);

    m.def(
        "estimate_cost",
        [](const ModelParams& p, const SimConfig& c, double s, const State& y, const py::object& policy,
           double eps) {
            const ControlSource src = as_source(policy);
            py::gil_scoped_release release;
            return estimate_cost(p, c, s, y, src, eps);
        },
        py::arg("params"), py::arg("config"), py::arg("s"), py::arg("y"), py::arg("policy"),
        py::arg("epsilon") = 0.0);
    m.def(
        "check_xi_martingale",
        [](const ModelParams& p, const SimConfig& c, double s, const State& y, const py::object& policy) {
            const auto rep = check_xi_martingale(p, c, s, y, as_source(policy));
            std::vector<double> means;
            for (const auto& e : rep.means) means.push_back(e.mean);
            return py::dict(py::arg("times") = rep.times, py::arg("means") = means,
                            py::arg("all_positive") = rep.all_positive, py::arg("pass") = rep.pass);
        });
    m.def("tail_bound", &tail_bound, py::arg("kappa"), py::arg("T"), py::arg("level"));
    m.def(
        "check_tail_bound",
        [](double kappa, double T, const std::vector<double>& levels, const SimConfig& c, bool with_drift) {
            const auto rep = check_tail_bound(kappa, T, levels, c, with_drift);
            py::list rows;
            for (const auto& lv : rep.levels)
                rows.append(py::dict(py::arg("level") = lv.level, py::arg("bound") = lv.bound,
                                     py::arg("empirical") = lv.empirical, py::arg("pass") = lv.pass));
            return py::dict(py::arg("levels") = rows, py::arg("pass") = rep.pass);
        },
        py::arg("kappa"), py::arg("T"), py::arg("levels"), py::arg("config"), py::arg("with_drift") = false);

    py::class_<GridSpec>(m, "GridSpec")
        .def(py::init<>())
        .def_readwrite("rho", &GridSpec::rho)
        .def_readwrite("nP", &GridSpec::nP)
        .def_readwrite("nXi", &GridSpec::nXi)
        .def_readwrite("nTheta", &GridSpec::nTheta)
        .def_readwrite("nT", &GridSpec::nT)
        .def_readwrite("epsilon", &GridSpec::epsilon)
        .def_readwrite("control_grid", &GridSpec::control_grid);

    py::class_<ValueGrid, GridPtr>(m, "ValueGrid")
        .def_property_readonly("spec", &ValueGrid::spec)
        .def_property_readonly("values", &values_array)
        .def_property_readonly("policy", &policy_array)
        .def("node", &ValueGrid::node)
        .def("at", py::overload_cast<std::size_t, std::size_t, std::size_t, std::size_t>(&ValueGrid::at, py::const_));

    m.def(
        "solve_regularized",
        [](const ModelParams& p, const GridSpec& s) {
            py::gil_scoped_release release;
            return std::make_shared<ValueGrid>(solve_regularized(p, s));
        },
        py::arg("params"), py::arg("spec"));
    m.def(
        "solve_ladder",
        [](const ModelParams& p, const GridSpec& s, double eps0, std::size_t n_max, const std::vector<double>& rhos,
           double tol) {
            LadderResult r;
            {
                py::gil_scoped_release release;
                r = solve_ladder(p, s, eps0, n_max, rhos, tol);
            }
            py::list rows;
            for (const auto& row : r.rows)
                rows.append(py::dict(py::arg("stage") = row.stage, py::arg("rho") = row.rho, py::arg("n") = row.n,
                                     py::arg("epsilon") = row.epsilon, py::arg("difference") = row.difference));
            return py::make_tuple(std::const_pointer_cast<ValueGrid>(r.grid), py::dict(py::arg("rows") = rows, py::arg("converged") = r.converged,
                                                   py::arg("scheme_tolerance") = r.scheme_tolerance));
        },
        py::arg("params"), py::arg("base_spec"), py::arg("epsilon0"), py::arg("n_max"), py::arg("rho_schedule"),
        py::arg("tol"));
    m.def(
        "interpolate_value",
        [](const ValueGrid& g, double t, const State& x) {
            const auto r = interpolate_value(g, t, x);
            return py::make_tuple(r.value, r.extrapolated);
        },
        py::arg("grid"), py::arg("t"), py::arg("x"));

    py::class_<GreedyPolicy>(m, "GreedyPolicy").def("__call__", &GreedyPolicy::operator());
    m.def(
        "extract_policy", [](const ModelParams& p, const GridPtr& g) { return extract_policy(p, g); },
        py::arg("params"), py::arg("grid"));

    py::class_<PolicyTable>(m, "PolicyTable")
        .def_property_readonly("n_slabs", &PolicyTable::n_slabs)
        .def_property_readonly("n_cells", &PolicyTable::n_cells)
        .def("n_fallback", &PolicyTable::n_fallback)
        .def("lookup", &PolicyTable::lookup);
    m.def("synthesize_discrete_policy", &synthesize_discrete_policy, py::arg("params"), py::arg("grid"),
          py::arg("M"), py::arg("K0"), py::arg("delta"), py::arg("eps_target"), py::arg("s") = 0.0);

    m.def(
        "probe_jet",
        [](const ValueGrid& g, std::size_t k, std::size_t i, std::size_t j, std::size_t l, std::size_t r)
            -> py::object {
            const auto jets = probe_jets(g, {k, i, j, l}, r);
            if (!jets) return py::none();
            return py::make_tuple(jets->super.q, jets->super.p, jets->super.A);
        },
        py::arg("grid"), py::arg("k"), py::arg("i"), py::arg("j"), py::arg("l"), py::arg("stencil_radius") = 1);
    m.def(
        "check_viscosity",
        [](const ModelParams& p, const ValueGrid& g, double tol, std::size_t margin) {
            const auto sites = interior_sites(g, margin);
            const auto& cg = g.spec().control_grid;
            const auto sub = check_subsolution(p, g, cg, tol, sites);
            const auto sup = check_supersolution(p, g, cg, tol, sites);
            return py::dict(py::arg("n_sites") = sub.n_sites, py::arg("sub_pass_fraction") = sub.pass_fraction(),
                            py::arg("super_pass_fraction") = sup.pass_fraction(),
                            py::arg("worst_sub") = sub.worst_residual, py::arg("worst_super") = sup.worst_residual);
        },
        py::arg("params"), py::arg("grid"), py::arg("tolerance"), py::arg("margin") = 2);
    m.def("viscosity_tolerance", &viscosity_tolerance, py::arg("grid"), py::arg("c1"));

    py::class_<StoppingRule>(m, "StoppingRule")
        .def_static("fixed_time", &StoppingRule::fixed_time)
        .def_static("first_exit", &StoppingRule::first_exit)
        .def_static("horizon", &StoppingRule::horizon)
        .def("__repr__", [](const StoppingRule& r) { return to_string(r); });
    m.def(
        "dpp_gap",
        [](const ModelParams& p, const ValueGrid& g, double s, const State& y, const StoppingRule& rule,
           const py::object& policy, const SimConfig& mc) {
            const Candidate cand{"policy", as_source(policy)};
            const auto rep = verify_dp_upper(p, g, s, y, rule, cand, mc, 0.0);
            return py::dict(py::arg("v_at_start") = rep.v_at_start, py::arg("rhs") = rep.best_rhs,
                            py::arg("gap") = rep.gap, py::arg("std_error") = rep.rows.front().rhs.std_error);
        },
        py::arg("params"), py::arg("grid"), py::arg("s"), py::arg("y"), py::arg("rule"), py::arg("policy"),
        py::arg("mc"));

    m.def(
        "run_cli",
        [](const std::vector<std::string>& args) {
            std::ostringstream out;
            std::ostringstream err;
            const int status = run_cli(args, out, err);
            return py::make_tuple(status, out.str(), err.str());
        },
        py::arg("args"));
    m.def("set_thread_count", &set_thread_count);
}
