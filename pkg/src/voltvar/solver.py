"""Steady-state solvers for the radial feeder.

Two models are provided:

* :func:`solve_lindistflow` -- the linearized branch-flow recursion, exact and
  non-iterative for fixed reactive injections.
* :func:`solve_ac` -- full AC power flow by Newton-Raphson in polar
  coordinates.  Inverter reactive injections may depend on the local voltage
  magnitude; their analytic slope enters the ``dQ/d|V|`` diagonal of the
  Jacobian so the control law is solved simultaneously with the network.

:func:`fixed_point_reference` solves the same problem by alternating plain
PQ power flows with control updates.  It exists to cross-check the augmented
Newton iteration.

All solver arithmetic is per-unit on ``(model.v_base, model.s_base)``; bus 0
is the slack at ``1.0 /_ 0``.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import splu

from .control import ControlConfig, LocalMeasurements, control_dq_dv, evaluate, q_max
from .feeder import FeederModel, Scenario

log = logging.getLogger(__name__)


class PowerFlowError(RuntimeError):
    """Base class for solver failures."""


class ConvergenceError(PowerFlowError):
    def __init__(self, message: str, mismatch: float, iterations: int):
        super().__init__(f"{message} (max mismatch {mismatch:.3e} pu after {iterations} iterations)")
        self.mismatch = mismatch
        self.iterations = iterations


class SingularJacobianError(PowerFlowError):
    pass


@dataclass(frozen=True)
class SolverOptions:
    """Newton-Raphson settings.

    Steps taken after iteration ``damping_start`` are multiplied by ``damping``
    to stop iterates chattering across the saturation corner of a clamp.
    Once the mismatch is inside ``tolerance`` one further step is taken unless
    it is already below ``tolerance * polish_below``.
    """

    tolerance: float = 1e-8
    max_iter: int = 50
    damping: float = 0.5
    damping_start: int = 10
    polish_below: float = 1e-4

    def __post_init__(self) -> None:
        if not self.tolerance > 0:
            raise ValueError("tolerance must be positive")
        if self.max_iter < 1:
            raise ValueError("max_iter must be at least 1")
        if not 0 < self.damping <= 1:
            raise ValueError("damping must lie in (0, 1]")


@dataclass(frozen=True)
class Injections:
    """Per-bus per-unit quantities, index 0 being the slack (all zero there)."""

    p_c: np.ndarray
    q_c: np.ndarray
    p_g: np.ndarray
    s_inv: np.ndarray

    @classmethod
    def from_scenario(cls, model: FeederModel, scenario: Scenario) -> "Injections":
        if scenario.n_nodes != model.n_nodes:
            raise ValueError(f"scenario has {scenario.n_nodes} nodes, feeder has {model.n_nodes}")

        def pad(arr):
            return np.concatenate(([0.0], np.asarray(arr, dtype=float) / model.s_base))

        return cls(pad(scenario.p_c), pad(scenario.q_c), pad(scenario.p_g), pad(scenario.s_inv))

    def measurements(self, v, limit_scale: float = 1.0) -> LocalMeasurements:
        return LocalMeasurements(self.p_c, self.q_c, self.p_g, v,
                                 q_max(self.s_inv, self.p_g, limit_scale))


# --------------------------------------------------------------------------
# LinDistFlow

@dataclass(frozen=True)
class BranchFlowState:
    """Solution of the linearized branch-flow model.

    ``p_flow[j]``/``q_flow[j]`` flow from node ``j`` to ``j + 1``; ``v`` holds
    one magnitude per bus with ``v[0] == 1``.
    """

    p_flow: np.ndarray
    q_flow: np.ndarray
    v: np.ndarray
    segment_loss: np.ndarray
    s_base: float

    @property
    def v_mag(self) -> np.ndarray:
        return self.v

    @property
    def loss(self) -> float:
        return float(self.segment_loss.sum())

    @property
    def loss_w(self) -> float:
        return self.loss * self.s_base


def solve_lindistflow(model: FeederModel, scenario: Scenario, q_g=None) -> BranchFlowState:
    """Evaluate the LinDistFlow recursion for fixed inverter injections.

    Args:
        q_g: Inverter reactive output per bus [pu], length ``n_nodes + 1``
            (entry 0 ignored).  ``None`` means no reactive support.
    """
    inj = Injections.from_scenario(model, scenario)
    n = model.n_nodes
    q_g = np.zeros(n + 1) if q_g is None else np.asarray(q_g, dtype=float)
    if q_g.shape != (n + 1,):
        raise ValueError(f"q_g must have length {n + 1}")
    p_net = (inj.p_c - inj.p_g)[1:]
    q_net = (inj.q_c - q_g)[1:]
    # backward sweep from the leaf, P_n = Q_n = 0
    p_flow = np.cumsum(p_net[::-1])[::-1]
    q_flow = np.cumsum(q_net[::-1])[::-1]
    r, x = model.r_pu, model.x_pu
    v = np.empty(n + 1)
    v[0] = 1.0
    v[1:] = 1.0 - np.cumsum(r * p_flow + x * q_flow)
    segment_loss = r * (p_flow**2 + q_flow**2)
    return BranchFlowState(p_flow, q_flow, v, segment_loss, model.s_base)


# --------------------------------------------------------------------------
# AC power flow

def admittance(model: FeederModel) -> sp.csr_matrix:
    """Complex bus admittance matrix of the line, in per-unit."""
    z = model.z_segment_pu
    if z == 0:
        raise ValueError("zero-impedance segment")
    n = model.n_buses
    y = np.full(model.n_nodes, 1.0 / z)
    diag = np.zeros(n, dtype=complex)
    diag[:-1] += y
    diag[1:] += y
    return sp.diags([-y, diag, -y], [-1, 0, 1], shape=(n, n), format="csr")


def build_admittance(model: FeederModel) -> tuple[sp.csr_matrix, sp.csr_matrix]:
    """Return ``(G, B)``, the real and imaginary parts of the bus admittance matrix."""
    y = admittance(model)
    return y.real.tocsr(), y.imag.tocsr()


@dataclass(frozen=True)
class AcState:
    """Converged AC operating point.

    ``q_g`` is the inverter dispatch consistent with ``v_mag`` under the
    chosen control; ``q_max`` the (scaled) limits it was held to.
    """

    v_mag: np.ndarray
    v_ang: np.ndarray
    g_matrix: sp.csr_matrix
    b_matrix: sp.csr_matrix
    q_g: np.ndarray
    q_max: np.ndarray
    iterations: int
    max_mismatch: float
    s_base: float
    segment_loss: np.ndarray = field(repr=False)
    p_slack: float = 0.0
    q_slack: float = 0.0

    @property
    def voltage(self) -> np.ndarray:
        return self.v_mag * np.exp(1j * self.v_ang)

    @property
    def loss(self) -> float:
        """Total I^2 R loss [pu]."""
        return float(self.segment_loss.sum())

    @property
    def loss_w(self) -> float:
        return self.loss * self.s_base


def branch_currents(model: FeederModel, voltage: np.ndarray) -> np.ndarray:
    return (voltage[:-1] - voltage[1:]) / model.z_segment_pu


def power_mismatch(model: FeederModel, scenario: Scenario, v_mag, v_ang, q_g) -> tuple[np.ndarray, np.ndarray]:
    """Real and reactive mismatch at every non-slack bus.

    Evaluated term by term from ``G cos(theta) + B sin(theta)`` sums, separate
    from the vectorized path used inside the Newton iteration.
    """
    g, b = (m.toarray() for m in build_admittance(model))
    inj = Injections.from_scenario(model, scenario)
    v_mag = np.asarray(v_mag, dtype=float)
    theta = np.subtract.outer(v_ang, v_ang)
    vv = np.outer(v_mag, v_mag)
    p_calc = np.sum(vv * (g * np.cos(theta) + b * np.sin(theta)), axis=1)
    q_calc = np.sum(vv * (g * np.sin(theta) - b * np.cos(theta)), axis=1)
    dp = p_calc - (inj.p_g - inj.p_c)
    dq = q_calc - (np.asarray(q_g) - inj.q_c)
    return dp[1:], dq[1:]


def _newton(model: FeederModel, inj: Injections, q_law, options: SolverOptions, start=None):
    """Polar Newton-Raphson from a flat start (or ``start``); ``q_law(v_mag) -> (q_g, dq_g/dv)``."""
    y = admittance(model)
    n = model.n_buses
    pq = np.arange(1, n)
    m = len(pq)
    voltage = np.ones(n, dtype=complex) if start is None else np.array(start, dtype=complex)
    max_mis = np.inf
    polished = False
    for it in range(1, options.max_iter + 1):
        v_mag = np.abs(voltage)
        q_g, dq_dv = q_law(v_mag)
        s_spec = (inj.p_g - inj.p_c) + 1j * (q_g - inj.q_c)
        current = y @ voltage
        mis = voltage * np.conj(current) - s_spec
        f = np.concatenate((mis.real[pq], mis.imag[pq]))
        max_mis = float(np.max(np.abs(f)))
        if not np.isfinite(max_mis):
            raise ConvergenceError("mismatch diverged", max_mis, it)
        if max_mis <= options.tolerance:
            # one extra step once inside tolerance keeps summed residuals at round-off
            if polished or max_mis <= options.tolerance * options.polish_below:
                return voltage, q_g, it, max_mis
            polished = True

        diag_v = sp.diags(voltage)
        ds_dvm = diag_v @ np.conj(y @ sp.diags(voltage / v_mag)) + sp.diags(np.conj(current) * voltage / v_mag)
        ds_dva = 1j * diag_v @ np.conj(sp.diags(current) - y @ diag_v)
        # q_g(|V|) enters s_spec, so d(mismatch)/d|V| loses j*dq_g/d|V|
        ds_dvm = ds_dvm - sp.diags(1j * dq_dv)
        ds_dva = ds_dva.tocsr()[pq][:, pq]
        ds_dvm = ds_dvm.tocsr()[pq][:, pq]
        jac = sp.bmat([[ds_dva.real, ds_dvm.real],
                       [ds_dva.imag, ds_dvm.imag]], format="csc")
        try:
            step = splu(jac).solve(-f)
        except RuntimeError as exc:
            raise SingularJacobianError(f"singular Jacobian at iteration {it}: {exc}") from exc
        if not np.all(np.isfinite(step)):
            raise SingularJacobianError(f"non-finite Newton step at iteration {it}")
        if it > options.damping_start:
            step *= options.damping
        v_ang = np.angle(voltage)
        v_ang[pq] += step[:m]
        v_mag[pq] += step[m:]
        voltage = v_mag * np.exp(1j * v_ang)
    raise ConvergenceError("Newton-Raphson did not converge", max_mis, options.max_iter)


def _finish(model, inj, voltage, q_g, q_lim, iterations, max_mis) -> AcState:
    g, b = build_admittance(model)
    voltage = voltage.copy()
    voltage[0] = 1.0
    s0 = voltage[0] * np.conj((admittance(model) @ voltage)[0])
    current = branch_currents(model, voltage)
    seg_loss = model.z_segment_pu.real * np.abs(current) ** 2
    return AcState(
        v_mag=np.abs(voltage), v_ang=np.angle(voltage), g_matrix=g, b_matrix=b,
        q_g=np.asarray(q_g, dtype=float).copy(), q_max=q_lim, iterations=iterations,
        max_mismatch=max_mis, s_base=model.s_base, segment_loss=seg_loss,
        p_slack=float(s0.real), q_slack=float(s0.imag))


def solve_ac(model: FeederModel, scenario: Scenario, control: ControlConfig | None = None,
             options: SolverOptions | None = None) -> AcState:
    """Solve the AC power flow with inverters following ``control``.

    Raises:
        ConvergenceError: no convergence within ``options.max_iter``.
        SingularJacobianError: the Newton step could not be computed.
    """
    control = control or ControlConfig()
    options = options or SolverOptions()
    inj = Injections.from_scenario(model, scenario)
    q_lim = q_max(inj.s_inv, inj.p_g, control.limit_scale)
    alpha = model.alpha

    def q_law(v_mag):
        m = inj.measurements(v_mag, control.limit_scale)
        return evaluate(m, control, alpha), control_dq_dv(m, control, alpha)

    voltage, q_g, it, max_mis = _newton(model, inj, q_law, options)
    return _finish(model, inj, voltage, q_g, q_lim, it, max_mis)


def solve_fixed_q(model: FeederModel, scenario: Scenario, q_g, options: SolverOptions | None = None) -> AcState:
    """Standard PQ power flow with inverter reactive output frozen at ``q_g`` (per bus, pu)."""
    options = options or SolverOptions()
    inj = Injections.from_scenario(model, scenario)
    q_g = np.asarray(q_g, dtype=float)
    zeros = np.zeros_like(q_g)
    voltage, q_g, it, max_mis = _newton(model, inj, lambda v: (q_g, zeros), options)
    return _finish(model, inj, voltage, q_g, q_max(inj.s_inv, inj.p_g), it, max_mis)


def fixed_point_reference(model: FeederModel, scenario: Scenario, control: ControlConfig | None = None,
                          options: SolverOptions | None = None, max_outer: int = 2000) -> AcState:
    """Solve the controlled power flow by successive substitution.

    Each outer pass freezes ``q_g``, runs a plain PQ power flow and updates
    ``q_g`` from the control law at the new voltages.  Updates are
    under-relaxed, halving the relaxation whenever the correction reverses, so
    stiff volt/VAR loops still settle.  ``iterations`` on the result counts
    outer passes.  Each inner power flow starts from the previous voltages.

    Raises:
        ConvergenceError: the outer loop failed to settle within ``max_outer`` passes.
    """
    control = control or ControlConfig()
    options = options or SolverOptions()
    inj = Injections.from_scenario(model, scenario)
    q_lim = q_max(inj.s_inv, inj.p_g, control.limit_scale)
    alpha = model.alpha

    def law(v_mag):
        return np.asarray(evaluate(inj.measurements(v_mag, control.limit_scale), control, alpha), dtype=float)

    q = law(np.ones(model.n_buses))
    relax, last, previous = 1.0, np.inf, None
    zeros = np.zeros(model.n_buses)
    voltage = None
    for outer in range(1, max_outer + 1):
        voltage, _, _, max_mis = _newton(model, inj, lambda v: (q, zeros), options, start=voltage)
        update = law(np.abs(voltage)) - q
        change = float(np.max(np.abs(update)))
        if change <= options.tolerance:
            return _finish(model, inj, voltage, q, q_lim, outer, max_mis)
        # overshoot shows up as a correction reversing direction
        if previous is not None and float(np.dot(update, previous)) < 0:
            relax = max(relax / 2, 1.0 / 1024)
        last, previous = change, update
        q = q + relax * update
    raise ConvergenceError("fixed-point control iteration did not settle", last, max_outer)
