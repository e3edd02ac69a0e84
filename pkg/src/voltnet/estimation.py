"""Weighted-least-squares state estimation over received telemetry.

The estimator sees the grid only through (possibly stale, possibly
forged) measurements. Two staleness policies: ``default`` keeps the last
value per point forever, ``decay`` drops points older than a timeout.
Gauss-Newton on the polar state vector with step halving; islands whose
measurement set cannot pin the state are flagged unobservable instead of
being extrapolated.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .grid import GridModel
from .powerflow import S_BASE_MVA, build_admittance

MAX_ITERATIONS = 50
STATE_TOLERANCE = 1e-6
MAX_STEP_HALVINGS = 4
ZERO_INJECTION_SIGMA = 1e-4

KIND_VM = "vm"
KIND_P_INJ = "p_inj"
KIND_Q_INJ = "q_inj"
KIND_P_FLOW = "p_flow"
KIND_Q_FLOW = "q_flow"


@dataclass(frozen=True)
class Measurement:
    kind: str        # vm | p_inj | q_inj | p_flow | q_flow
    element: str     # bus id (vm, injections) or branch id (flows)
    value: float     # pu for vm; MW/Mvar otherwise (== pu on the 1 MVA base)
    sigma: float
    side: str = "from"   # flows only
    received_ns: int = 0
    source: tuple[int, int] | None = None  # (coa, ioa) when from telemetry

    def __post_init__(self):
        if self.sigma <= 0:
            raise ValueError("sigma must be > 0")


@dataclass
class SePolicy:
    mode: str = "default"  # default | decay
    decay_timeout_s: float = 6.0

    def __post_init__(self):
        if self.mode not in ("default", "decay"):
            raise ValueError(f"unknown SE policy mode {self.mode!r}")
        if self.mode == "decay" and self.decay_timeout_s <= 0:
            raise ValueError("decay requires decay_timeout_s > 0")


def filter_by_policy(measurements: list[Measurement], t_ns: int,
                     policy: SePolicy) -> list[Measurement]:
    """Default keeps everything; decay drops measurements past the timeout."""
    if policy.mode == "default":
        return list(measurements)
    horizon = t_ns - int(policy.decay_timeout_s * 1e9)
    return [m for m in measurements if m.received_ns >= horizon]


def zero_injection_pseudos(model: GridModel) -> list[Measurement]:
    """Exact zero P/Q pseudo-measurements for buses without injections."""
    occupied = {inj.bus for inj in model.injections.values() if inj.in_service}
    out = []
    for bus in model.buses.values():
        if bus.in_service and bus.id not in occupied:
            out.append(Measurement(KIND_P_INJ, bus.id, 0.0, ZERO_INJECTION_SIGMA))
            out.append(Measurement(KIND_Q_INJ, bus.id, 0.0, ZERO_INJECTION_SIGMA))
    return out


def forecast_pseudos(model: GridModel, sigma: float = 0.5) -> list[Measurement]:
    """Weak planning-value priors so thinned-out sets stay solvable.

    Uses the unscaled scheduled injection per bus with a large sigma;
    fresh real measurements dominate these whenever present.
    """
    per_bus_p: dict[str, float] = {}
    per_bus_q: dict[str, float] = {}
    for inj in model.injections.values():
        if not inj.in_service or inj.kind == "ext_grid":
            continue
        sign = -1.0 if inj.kind == "load" else 1.0
        per_bus_p[inj.bus] = per_bus_p.get(inj.bus, 0.0) + sign * inj.p_mw
        per_bus_q[inj.bus] = per_bus_q.get(inj.bus, 0.0) + sign * inj.q_mvar
    out = []
    for bus in sorted(per_bus_p):
        out.append(Measurement(KIND_P_INJ, bus, per_bus_p[bus], sigma))
        out.append(Measurement(KIND_Q_INJ, bus, per_bus_q[bus], sigma))
    return out


@dataclass
class IslandEstimate:
    buses: frozenset[str]
    observable: bool
    converged: bool
    iterations: int
    objective: float


@dataclass
class EstimatedState:
    vm_pu: dict[str, float]
    va_deg: dict[str, float]
    islands: list[IslandEstimate]
    residuals: list[tuple[Measurement, float]] = field(default_factory=list)

    @property
    def objective(self) -> float:
        return sum(i.objective for i in self.islands if i.observable)

    @property
    def all_observable(self) -> bool:
        live = [i for i in self.islands]
        return all(i.observable for i in live)


def estimate(model: GridModel, measurements: list[Measurement]) -> EstimatedState:
    """WLS estimate of bus voltages from the measurement set.

    Dead islands and islands with insufficient redundancy come back
    flagged with NaN voltages.
    """
    adm = build_admittance(model)
    vm_out: dict[str, float] = {b: math.nan for b in model.buses}
    va_out: dict[str, float] = {b: math.nan for b in model.buses}
    islands_out: list[IslandEstimate] = []
    residuals: list[tuple[Measurement, float]] = []

    for island in model.islands():
        nodes = sorted({adm.node_of_bus[b] for b in island.buses})
        if island.dead:
            islands_out.append(IslandEstimate(island.buses, False, False, 0, 0.0))
            continue
        node_set = set(nodes)
        local = {n: i for i, n in enumerate(nodes)}
        slack_node = adm.node_of_bus[island.slack_buses[0]]
        ms = _island_measurements(model, adm, measurements, node_set)
        est = _estimate_island(model, adm, nodes, local, slack_node, ms)
        islands_out.append(IslandEstimate(
            island.buses, est["observable"], est["converged"],
            est["iterations"], est["objective"]))
        if est["observable"]:
            for bus in island.buses:
                li = local[adm.node_of_bus[bus]]
                vm_out[bus] = float(est["vm"][li])
                va_out[bus] = float(math.degrees(est["va"][li]))
            residuals.extend(zip(ms, est["residuals"]))

    return EstimatedState(vm_out, va_out, islands_out, residuals)


def _island_measurements(model, adm, measurements, node_set):
    out = []
    for m in measurements:
        if m.kind in (KIND_VM, KIND_P_INJ, KIND_Q_INJ):
            node = adm.node_of_bus.get(m.element)
            if node in node_set:
                out.append(m)
        else:
            ba = adm.branch_adm.get(m.element)
            if ba is not None and ba.from_node in node_set:
                out.append(m)
    return out


def _estimate_island(model, adm, nodes, local, slack_node, measurements):
    n = len(nodes)
    n_state = 2 * n - 1  # va for all but slack, vm for all
    fail = {"observable": False, "converged": False, "iterations": 0,
            "objective": 0.0, "vm": None, "va": None, "residuals": []}
    if len(measurements) < n_state:
        return fail

    idx = np.asarray(nodes)
    y = adm.ybus[np.ix_(idx, idx)].toarray()
    slack_local = local[slack_node]
    va_pick = np.array([i for i in range(n) if i != slack_local], dtype=int)

    z = np.array([m.value for m in measurements])
    weights = np.array([1.0 / (m.sigma ** 2) for m in measurements])
    m_count = len(measurements)

    # group measurement rows by kind once; assembly is then pure slicing
    vm_rows, vm_locals = [], []
    p_rows, p_locals = [], []
    q_rows, q_locals = [], []
    flow_rows = []  # (row, yss, yst, ls, lo, take_real)
    for row, m in enumerate(measurements):
        if m.kind == KIND_VM:
            vm_rows.append(row)
            vm_locals.append(local[adm.node_of_bus[m.element]])
        elif m.kind == KIND_P_INJ:
            p_rows.append(row)
            p_locals.append(local[adm.node_of_bus[m.element]])
        elif m.kind == KIND_Q_INJ:
            q_rows.append(row)
            q_locals.append(local[adm.node_of_bus[m.element]])
        else:
            ba = adm.branch_adm[m.element]
            lf, lt = local[ba.from_node], local[ba.to_node]
            if m.side == "from":
                flow_rows.append((row, ba.yff, ba.yft, lf, lt,
                                  m.kind == KIND_P_FLOW))
            else:
                flow_rows.append((row, ba.ytt, ba.ytf, lt, lf,
                                  m.kind == KIND_P_FLOW))
    vm_rows = np.array(vm_rows, dtype=int)
    vm_locals = np.array(vm_locals, dtype=int)
    p_rows = np.array(p_rows, dtype=int)
    p_locals = np.array(p_locals, dtype=int)
    q_rows = np.array(q_rows, dtype=int)
    q_locals = np.array(q_locals, dtype=int)

    vm = np.ones(n)
    va = np.zeros(n)

    def h_only(vm, va):
        v = vm * np.exp(1j * va)
        s = v * np.conj(y @ v)
        h = np.zeros(m_count)
        h[vm_rows] = vm[vm_locals]
        h[p_rows] = s[p_locals].real * S_BASE_MVA
        h[q_rows] = s[q_locals].imag * S_BASE_MVA
        for row, yss, yst, ls, lo, take_real in flow_rows:
            s_flow = v[ls] * np.conj(yss * v[ls] + yst * v[lo])
            h[row] = (s_flow.real if take_real else s_flow.imag) * S_BASE_MVA
        return h

    def h_and_jac(vm, va):
        v = vm * np.exp(1j * va)
        i_bus = y @ v
        s = v * np.conj(i_bus)
        vnorm = v / vm
        d_sva = 1j * (v[:, None] * np.conj(
            np.diag(i_bus) - y * v[None, :]))
        d_svm = v[:, None] * np.conj(y * vnorm[None, :]) \
            + np.diag(np.conj(i_bus) * vnorm)
        h = np.zeros(m_count)
        jac = np.zeros((m_count, 2 * n - 1))
        h[vm_rows] = vm[vm_locals]
        jac[vm_rows, (n - 1) + vm_locals] = 1.0
        if len(p_rows):
            h[p_rows] = s[p_locals].real * S_BASE_MVA
            jac[np.ix_(p_rows, np.arange(n - 1))] = \
                d_sva[np.ix_(p_locals, va_pick)].real
            jac[np.ix_(p_rows, (n - 1) + np.arange(n))] = \
                d_svm[p_locals].real
        if len(q_rows):
            h[q_rows] = s[q_locals].imag * S_BASE_MVA
            jac[np.ix_(q_rows, np.arange(n - 1))] = \
                d_sva[np.ix_(q_locals, va_pick)].imag
            jac[np.ix_(q_rows, (n - 1) + np.arange(n))] = \
                d_svm[q_locals].imag
        va_col_of = np.full(n, -1, dtype=int)
        va_col_of[va_pick] = np.arange(n - 1)
        for row, yss, yst, ls, lo, take_real in flow_rows:
            v_s, v_o = v[ls], v[lo]
            i_s = yss * v_s + yst * v_o
            s_flow = v_s * np.conj(i_s)
            h[row] = (s_flow.real if take_real else s_flow.imag) * S_BASE_MVA
            cross = v_s * np.conj(yst * v_o)
            dva_s, dva_o = 1j * cross, -1j * cross
            dvm_s = (v_s / vm[ls]) * np.conj(i_s) \
                + v_s * np.conj(yss * v_s / vm[ls])
            dvm_o = v_s * np.conj(yst * v_o / vm[lo])
            pick = (lambda c: c.real) if take_real else (lambda c: c.imag)
            if ls != slack_local:
                jac[row, va_col_of[ls]] = pick(dva_s)
            if lo != slack_local:
                jac[row, va_col_of[lo]] = pick(dva_o)
            jac[row, (n - 1) + ls] = pick(dvm_s)
            jac[row, (n - 1) + lo] = pick(dvm_o)
        return h, jac

    def objective(vm, va):
        r = z - h_only(vm, va)
        return float(r @ (weights * r)), r

    # observability: weighted Jacobian full rank at flat start
    _, jac0 = h_and_jac(vm, va)
    wj = jac0 * np.sqrt(weights)[:, None]
    if np.linalg.matrix_rank(wj) < n_state:
        return fail

    obj, r = objective(vm, va)
    converged = False
    iterations = 0
    for iterations in range(1, MAX_ITERATIONS + 1):
        h, jac = h_and_jac(vm, va)
        r = z - h
        wjac = jac * weights[:, None]
        gain = jac.T @ wjac
        rhs = wjac.T @ r
        try:
            dx = np.linalg.solve(gain, rhs)
        except np.linalg.LinAlgError:
            break
        # step halving keeps the objective non-increasing
        step = 1.0
        for _ in range(MAX_STEP_HALVINGS + 1):
            va_try = va.copy()
            va_try[va_pick] += step * dx[:n - 1]
            vm_try = vm + step * dx[n - 1:]
            obj_try, _ = objective(vm_try, va_try)
            if obj_try <= obj or step <= 1.0 / (2 ** MAX_STEP_HALVINGS):
                break
            step /= 2.0
        vm, va, obj = vm_try, va_try, obj_try
        if np.max(np.abs(dx)) * step < STATE_TOLERANCE:
            converged = True
            break

    _, r = objective(vm, va)
    return {"observable": True, "converged": converged,
            "iterations": iterations, "objective": obj,
            "vm": vm, "va": va, "residuals": list(r)}


def estimated_injections(model: GridModel,
                         state: EstimatedState) -> dict[str, tuple[float, float]]:
    """Per-bus P/Q injection implied by the estimated voltages (MW, Mvar).

    Buses merged by closed couplers share one electrical node; the node's
    injection is reported on every member bus.
    """
    adm = build_admittance(model)
    n = adm.n_nodes
    vm = np.zeros(n)
    va = np.zeros(n)
    valid = np.zeros(n, dtype=bool)
    for bus, node in adm.node_of_bus.items():
        if not math.isnan(state.vm_pu.get(bus, math.nan)):
            vm[node] = state.vm_pu[bus]
            va[node] = math.radians(state.va_deg[bus])
            valid[node] = True
    v = vm * np.exp(1j * va)
    s = v * np.conj(adm.ybus @ v) * S_BASE_MVA
    out: dict[str, tuple[float, float]] = {}
    for bus, node in adm.node_of_bus.items():
        if valid[node]:
            out[bus] = (float(s[node].real), float(s[node].imag))
    return out
