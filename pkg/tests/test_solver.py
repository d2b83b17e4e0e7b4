import dataclasses

import numpy as np
import pytest

from conftest import small_scenario
from oracles import gauss_seidel, lindistflow_loops, scalar_law
from voltvar.control import ControlConfig, Scheme
from voltvar.feeder import CaseKind, FeederConfig, FeederModel, Scenario, build_feeder, sample_scenario
from voltvar.solver import (ConvergenceError, PowerFlowError, SingularJacobianError, SolverOptions,
                            admittance, build_admittance, fixed_point_reference, power_mismatch,
                            solve_ac, solve_fixed_q, solve_lindistflow)

ALL_CONTROLS = [ControlConfig(), ControlConfig(Scheme.SIGMOID_V),
                ControlConfig(Scheme.SIGMOID_V, limit_scale=0.5)]
ALL_CONTROLS += [ControlConfig(s, k) for s in (Scheme.LOCAL_FLOW_K, Scheme.HYBRID_KV)
                 for k in (0.0, 0.5, 1.0)]


def cid(c):
    return f"{c.scheme.value}-k{c.k}-s{c.limit_scale}"


def two_node(r_pu=0.01, x_pu=0.01):
    zb = 7200.0**2 / 1e5
    return FeederModel(n_nodes=1, segment_length=1.0, r_per_km=r_pu * zb, x_per_km=x_pu * zb, v0=7200.0)


def single_load(p_w, q_w=0.0, case=CaseKind.UNDER):
    one = np.array
    return Scenario(case, one([p_w]), one([q_w]), one([0.0]), one([0.0]), one([False]), 0)


def empty_scenario(model):
    n = model.n_nodes
    z = np.zeros(n)
    return Scenario(CaseKind.UNDER, z, z.copy(), z.copy(), z.copy(), np.zeros(n, bool), 0)


# -- admittance ------------------------------------------------------------------

def test_admittance_single_segment():
    y = admittance(two_node()).toarray()
    np.testing.assert_allclose(y, [[50 - 50j, -50 + 50j], [-50 + 50j, 50 - 50j]], rtol=1e-12)


@pytest.mark.parametrize("n", [1, 2, 7, 250])
def test_admittance_structure(n):
    model = build_feeder(FeederConfig(n_nodes=n))
    y = admittance(model).toarray()
    np.testing.assert_allclose(y.sum(axis=1), 0, atol=1e-9)
    assert np.all(np.triu(y, 2) == 0) and np.all(np.tril(y, -2) == 0)
    g, b = build_admittance(model)
    np.testing.assert_array_equal(g.toarray() + 1j * b.toarray(), y)


def test_admittance_zero_impedance():
    with pytest.raises(ValueError):
        admittance(FeederModel(n_nodes=3, segment_length=1.0, r_per_km=0.0, x_per_km=0.0, v0=7200.0))


# -- LinDistFlow -------------------------------------------------------------------

def test_lindistflow_unloaded(feeder_250):
    st = solve_lindistflow(feeder_250, empty_scenario(feeder_250))
    assert np.all(st.p_flow == 0) and np.all(st.q_flow == 0) and np.all(st.v == 1)


def test_lindistflow_two_node():
    st = solve_lindistflow(two_node(), single_load(1e5))
    assert st.p_flow[0] == pytest.approx(1.0)
    assert st.v[1] == pytest.approx(0.99)
    assert st.v[0] == 1.0


def test_lindistflow_matches_forward_recursion(feeder_250):
    scen = sample_scenario(feeder_250, CaseKind.OVER, 0.5, 9)
    q_g = np.linspace(-0.01, 0.01, feeder_250.n_buses)
    st = solve_lindistflow(feeder_250, scen, q_g)
    p, q, v = lindistflow_loops(feeder_250, scen, q_g)
    np.testing.assert_allclose(st.p_flow, p, atol=1e-12)
    np.testing.assert_allclose(st.q_flow, q, atol=1e-12)
    np.testing.assert_allclose(st.v, v, atol=1e-12)


def test_lindistflow_mean_load_closed_form(feeder_250, mean_under):
    # sum_j (r + 0.25 x) * 1250 W * j over j = 1..250, in per unit
    r, x = feeder_250.r_pu[0], feeder_250.x_pu[0]
    closed = (r + 0.25 * x) * 0.0125 * 250 * 251 / 2
    assert closed == pytest.approx(0.064306, abs=1e-6)
    st = solve_lindistflow(feeder_250, mean_under)
    assert 1 - st.v[-1] == pytest.approx(closed, abs=1e-12)


def test_lindistflow_rejects_bad_qg(feeder_250, mean_under):
    with pytest.raises(ValueError):
        solve_lindistflow(feeder_250, mean_under, np.zeros(3))


# -- AC Newton ---------------------------------------------------------------------

def test_ac_unloaded_converges_immediately(feeder_250):
    st = solve_ac(feeder_250, empty_scenario(feeder_250))
    assert st.iterations == 1
    assert np.all(st.v_mag == 1) and np.all(st.v_ang == 0)


def test_ac_two_node_against_lindistflow_and_gauss_seidel():
    model, scen = two_node(), single_load(1e5)
    ac = solve_ac(model, scen)
    assert abs(ac.v_mag[1] - 0.99) <= 1e-3
    gs = gauss_seidel(model, scen)
    assert abs(ac.v_mag[1] - abs(gs[1])) <= 1e-10


@pytest.mark.parametrize("case", list(CaseKind))
@pytest.mark.parametrize("control", ALL_CONTROLS, ids=cid)
def test_ac_state_invariants(feeder_250, case, control):
    scen = sample_scenario(feeder_250, case, 0.5, 5)
    st = solve_ac(feeder_250, scen, control)
    opts = SolverOptions()
    # slack
    assert st.v_mag[0] == 1.0 and st.v_ang[0] == 0.0
    assert st.max_mismatch <= opts.tolerance
    # residual recomputed outside the solver
    dp, dq = power_mismatch(feeder_250, scen, st.v_mag, st.v_ang, st.q_g)
    assert max(np.max(np.abs(dp)), np.max(np.abs(dq))) <= opts.tolerance
    # power balance against the branch I^2 R sum
    net = float(np.sum(scen.p_c - scen.p_g)) / feeder_250.s_base
    assert st.loss >= 0
    assert abs(st.p_slack - net - st.loss) <= 1e-8
    # control consistency and limits
    sb = feeder_250.s_base
    alpha = feeder_250.alpha
    for i in range(1, feeder_250.n_buses, 17):
        j = i - 1
        qm = control.limit_scale * np.sqrt(scen.s_inv[j] ** 2 - scen.p_g[j] ** 2) / sb
        want = scalar_law(control.scheme.value, scen.p_c[j] / sb, scen.q_c[j] / sb, scen.p_g[j] / sb,
                          qm, st.v_mag[i], control.k, alpha, control.delta)
        assert st.q_g[i] == pytest.approx(want, abs=opts.tolerance)
    assert np.all(np.abs(st.q_g) <= st.q_max + 1e-15)


def test_lindistflow_ac_agreement_scales_quadratically(feeder_250, mean_under):
    errs = []
    for lam in (1.0, 0.1):
        scen = mean_under.scaled(lam)
        ac = solve_ac(feeder_250, scen)
        lin = solve_lindistflow(feeder_250, scen)
        errs.append(np.max(np.abs(ac.v_mag - lin.v)))
    ratio = errs[1] / errs[0]
    assert 0.005 <= ratio <= 0.02


@pytest.mark.parametrize("n_buses", [2, 3, 10])
@pytest.mark.parametrize("case", list(CaseKind))
@pytest.mark.parametrize("control", ALL_CONTROLS, ids=cid)
def test_small_feeders_agree_with_gauss_seidel(n_buses, case, control):
    model, scen = small_scenario(n_buses, case)
    ac = solve_ac(model, scen, control)
    gs = gauss_seidel(model, scen, control.scheme.value, control.k, control.delta, control.limit_scale)
    assert np.max(np.abs(ac.v_mag - np.abs(gs))) <= 1e-6


@pytest.mark.parametrize("n_buses", [2, 3, 10])
@pytest.mark.parametrize("case", list(CaseKind))
@pytest.mark.parametrize("control", ALL_CONTROLS, ids=cid)
def test_small_feeders_agree_with_fixed_point(n_buses, case, control):
    model, scen = small_scenario(n_buses, case)
    ac = solve_ac(model, scen, control)
    fp = fixed_point_reference(model, scen, control)
    assert np.max(np.abs(ac.v_mag - fp.v_mag)) <= 1e-6


def test_small_feeders_exercise_the_controls():
    # the heavy small-feeder loads must move the voltage and drive the sigmoid into its knee
    model, scen = small_scenario(10, CaseKind.UNDER)
    st = solve_ac(model, scen)
    assert 1 - st.v_mag.min() > 0.02
    st = solve_ac(model, scen, ControlConfig(Scheme.SIGMOID_V))
    assert np.any(np.abs(st.q_g) > 0.9 * st.q_max)


def test_fixed_point_no_control_identical(feeder_250, mean_under):
    a = solve_ac(feeder_250, mean_under)
    b = fixed_point_reference(feeder_250, mean_under)
    assert np.max(np.abs(a.v_mag - b.v_mag)) <= 1e-8


@pytest.mark.parametrize("case", ["mean_under", "mean_over"])
def test_fixed_point_sigmoid_mean_load(feeder_250, request, case):
    scen = request.getfixturevalue(case)
    control = ControlConfig(Scheme.SIGMOID_V)
    a = solve_ac(feeder_250, scen, control)
    b = fixed_point_reference(feeder_250, scen, control)
    assert np.max(np.abs(a.v_mag - b.v_mag)) <= 1e-6


@pytest.mark.parametrize("k", [0.0, 0.3, 1.0])
def test_fixed_point_flow_control_single_pass(feeder_250, mean_over, k):
    st = fixed_point_reference(feeder_250, mean_over, ControlConfig(Scheme.LOCAL_FLOW_K, k))
    assert st.iterations == 1


def test_fixed_q_matches_flow_control(feeder_250, mean_over):
    control = ControlConfig(Scheme.LOCAL_FLOW_K, 0.4)
    a = solve_ac(feeder_250, mean_over, control)
    b = solve_fixed_q(feeder_250, mean_over, a.q_g)
    np.testing.assert_allclose(a.v_mag, b.v_mag, atol=1e-12)


def test_augmented_jacobian_needed_for_fast_convergence(feeder_250, mean_under):
    # quadratic convergence: the sigmoid solve should not need damping
    st = solve_ac(feeder_250, mean_under, ControlConfig(Scheme.SIGMOID_V))
    assert st.iterations <= 10


def test_convergence_error_carries_mismatch(feeder_250, mean_under):
    with pytest.raises(ConvergenceError) as info:
        solve_ac(feeder_250, mean_under, options=SolverOptions(max_iter=1))
    assert info.value.mismatch > 1e-8
    assert info.value.iterations == 1
    assert isinstance(info.value, PowerFlowError)


def test_divergent_loading_reports_error():
    model = two_node(0.5, 0.5)
    with pytest.raises(PowerFlowError):
        solve_ac(model, single_load(5e5), options=SolverOptions(max_iter=30))


def test_singular_jacobian_error_type():
    assert issubclass(SingularJacobianError, PowerFlowError)


def test_solver_options_validation():
    for bad in (dict(tolerance=0), dict(max_iter=0), dict(damping=0), dict(damping=1.5)):
        with pytest.raises(ValueError):
            SolverOptions(**bad)


def test_solve_is_deterministic(feeder_250):
    scen = sample_scenario(feeder_250, CaseKind.OVER, 0.5, 77)
    control = ControlConfig(Scheme.HYBRID_KV, 0.6)
    a = solve_ac(feeder_250, scen, control)
    b = solve_ac(feeder_250, scen, dataclasses.replace(control))
    assert np.array_equal(a.v_mag, b.v_mag) and a.iterations == b.iterations
