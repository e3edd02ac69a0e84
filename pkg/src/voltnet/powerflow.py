"""Steady-state symmetric AC power flow.

Admittance construction (pi-model lines, short-circuit-voltage transformer
model, tap on the HV side) and a per-island Newton-Raphson solve in polar
coordinates. Flat start, mismatch tolerance 1e-8 pu on the 1 MVA system
base, at most 30 iterations. Dead islands (no slack-attached bus) are
zeroed, never errored; non-convergence is flagged on the result so the
caller can keep the previous state visible.
"""

from __future__ import annotations

import cmath
import math
import time
from dataclasses import dataclass

import numpy as np
from scipy.sparse import csr_matrix

from .grid import GridModel, Injection, Line, Transformer

S_BASE_MVA = 1.0
FREQUENCY_HZ = 50.0
TOLERANCE_PU = 1e-8
MAX_ITERATIONS = 30


class DegenerateBranchError(ValueError):
    pass


@dataclass
class BranchAdmittance:
    """Two-port admittance of one branch over merged electrical nodes."""

    branch_id: str
    from_node: int
    to_node: int
    yff: complex
    yft: complex
    ytf: complex
    ytt: complex


@dataclass
class AdmittanceMatrix:
    """Sparse nodal admittance over the live, coupler-merged buses."""

    node_of_bus: dict[str, int]  # live bus id -> electrical node index
    node_buses: list[list[str]]  # node index -> merged bus ids
    ybus: csr_matrix
    branch_adm: dict[str, BranchAdmittance]

    @property
    def n_nodes(self) -> int:
        return len(self.node_buses)


def _series_admittance_pu(branch: Line | Transformer, vn_kv: float) -> complex:
    if isinstance(branch, Line):
        z_base = vn_kv * vn_kv / S_BASE_MVA
        z_ohm = complex(branch.r_ohm_per_km, branch.x_ohm_per_km) * branch.length_km
        if z_ohm == 0:
            raise DegenerateBranchError(f"line {branch.id}: zero impedance")
        return z_base / z_ohm
    # Transformer: impedance from the short-circuit voltage on the rated
    # power base, converted to the 1 MVA system base.
    z_pu = branch.vk_percent / 100.0 * S_BASE_MVA / branch.sn_mva
    r_pu = branch.vkr_percent / 100.0 * S_BASE_MVA / branch.sn_mva
    x_pu = math.sqrt(max(z_pu * z_pu - r_pu * r_pu, 0.0))
    z = complex(r_pu, x_pu)
    if z == 0:
        raise DegenerateBranchError(f"transformer {branch.id}: zero impedance")
    return 1.0 / z


def _line_shunt_b_pu(line: Line, vn_kv: float) -> float:
    z_base = vn_kv * vn_kv / S_BASE_MVA
    b_siemens = 2.0 * math.pi * FREQUENCY_HZ * line.c_nf_per_km * 1e-9 * line.length_km
    return b_siemens * z_base


def _merge_nodes(model: GridModel) -> tuple[dict[str, int], list[list[str]]]:
    """Union live buses tied by closed couplers into electrical nodes."""
    parent: dict[str, str] = {
        b.id: b.id for b in model.buses.values() if b.in_service
    }

    def find(x: str) -> str:
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    for sw in model.closed_couplers():
        a, b = find(sw.element[0]), find(sw.element[1])
        if a != b:
            # deterministic representative: lexicographically smaller id
            lo, hi = sorted((a, b))
            parent[hi] = lo
    groups: dict[str, list[str]] = {}
    for bus in sorted(parent):
        groups.setdefault(find(bus), []).append(bus)
    node_buses = [groups[rep] for rep in sorted(groups)]
    node_of_bus = {
        bus: idx for idx, buses in enumerate(node_buses) for bus in buses
    }
    return node_of_bus, node_buses


def build_admittance(model: GridModel) -> AdmittanceMatrix:
    """Assemble the nodal admittance matrix in per-unit at 50 Hz."""
    node_of_bus, node_buses = _merge_nodes(model)
    n = len(node_buses)
    rows: list[int] = []
    cols: list[int] = []
    vals: list[complex] = []
    branch_adm: dict[str, BranchAdmittance] = {}

    for bid in sorted(model.active_branches()):
        br = model.active_branches()[bid]
        a, b = model.branch_buses(br)
        na, nb = node_of_bus[a], node_of_bus[b]
        if na == nb:
            continue  # branch shorted by a closed coupler ring
        if isinstance(br, Line):
            vn = model.buses[a].vn_kv
            y = _series_admittance_pu(br, vn)
            b_half = 0.5j * _line_shunt_b_pu(br, vn)
            yff = y + b_half
            yft = -y
            ytf = -y
            ytt = y + b_half
        else:
            y = _series_admittance_pu(br, model.buses[br.lv_bus].vn_kv)
            tap = 1.0 + br.tap_pos * br.tap_step_percent / 100.0
            if tap == 0:
                raise DegenerateBranchError(f"transformer {br.id}: zero tap ratio")
            yff = y / (tap * tap)
            yft = -y / tap
            ytf = -y / tap
            ytt = y
        branch_adm[bid] = BranchAdmittance(bid, na, nb, yff, yft, ytf, ytt)
        rows += [na, na, nb, nb]
        cols += [na, nb, na, nb]
        vals += [yff, yft, ytf, ytt]

    ybus = csr_matrix((vals, (rows, cols)), shape=(n, n), dtype=complex)
    return AdmittanceMatrix(node_of_bus, node_buses, ybus, branch_adm)


@dataclass
class BranchFlow:
    p_from_mw: float = 0.0
    q_from_mvar: float = 0.0
    p_to_mw: float = 0.0
    q_to_mvar: float = 0.0
    i_from_ka: float = 0.0
    i_to_ka: float = 0.0
    i_ka: float = 0.0
    loading_percent: float = 0.0

    @property
    def losses_mw(self) -> float:
        return self.p_from_mw + self.p_to_mw


@dataclass
class IslandResult:
    buses: frozenset[str]
    converged: bool
    dead: bool
    iterations: int


@dataclass
class PowerFlowResult:
    vm_pu: dict[str, float]
    va_deg: dict[str, float]
    flows: dict[str, BranchFlow]
    p_mw: dict[str, float]  # realized injection per injection id (sign per kind)
    q_mvar: dict[str, float]
    islands: list[IslandResult]
    iterations: int
    solve_time_s: float
    revision: int

    @property
    def converged(self) -> bool:
        return all(i.converged for i in self.islands if not i.dead)

    def electrical_state(self) -> dict:
        """Everything except wall time, for determinism comparisons."""
        return {
            "vm_pu": self.vm_pu,
            "va_deg": self.va_deg,
            "flows": {k: vars(v) for k, v in self.flows.items()},
            "p_mw": self.p_mw,
            "q_mvar": self.q_mvar,
        }

    def island_balance_mw(self) -> list[float]:
        """Net injection minus losses, per live island (MW); ~0 when solved."""
        bus_island = {
            bus: idx for idx, isl in enumerate(self.islands) for bus in isl.buses
        }
        net = [0.0] * len(self.islands)
        for inj_id, p in self.p_mw.items():
            idx = bus_island[self._inj_bus[inj_id]]
            net[idx] += self._inj_sign[inj_id] * p
        for bid, flow in self.flows.items():
            idx = self._branch_island.get(bid)
            if idx is not None:
                net[idx] -= flow.losses_mw
        return [net[i] for i, isl in enumerate(self.islands) if not isl.dead]

    # wired up by the solver
    _inj_bus: dict[str, str] = None  # type: ignore[assignment]
    _inj_sign: dict[str, float] = None  # type: ignore[assignment]
    _branch_island: dict[str, int] = None  # type: ignore[assignment]


def solve_power_flow(
    model: GridModel,
    injection_overrides: dict[str, tuple[float, float]] | None = None,
) -> PowerFlowResult:
    """Newton-Raphson solve of the full model, one island at a time.

    ``injection_overrides`` maps injection id to (p_mw, q_mvar) effective
    values (the coordinator uses this for pre-solve noise); everything else
    comes from the model setpoints.
    """
    t0 = time.perf_counter()
    adm = build_admittance(model)
    overrides = injection_overrides or {}

    n = adm.n_nodes
    vm = np.zeros(n)
    va = np.zeros(n)
    p_node = np.zeros(n)
    q_node = np.zeros(n)
    slack_vm = np.ones(n)
    is_slack = np.zeros(n, dtype=bool)
    is_pv = np.zeros(n, dtype=bool)
    pv_vm = np.ones(n)

    live_injections: list[Injection] = []
    for inj in model.injections.values():
        if not inj.in_service or inj.bus not in adm.node_of_bus:
            continue
        live_injections.append(inj)
        node = adm.node_of_bus[inj.bus]
        if inj.kind == "ext_grid":
            is_slack[node] = True
            slack_vm[node] = inj.vm_pu
            continue
        if inj.id in overrides:
            p, q = overrides[inj.id]
        else:
            p, q = inj.effective_p_mw(), inj.effective_q_mvar()
        sign = -1.0 if inj.kind == "load" else 1.0
        p_node[node] += sign * p / S_BASE_MVA
        q_node[node] += sign * q / S_BASE_MVA
        if inj.kind == "sgen" and model.buses[inj.bus].kind == "PV":
            is_pv[node] = True
            pv_vm[node] = inj.vm_pu

    # Islands over electrical nodes.
    islands = model.islands()
    island_results: list[IslandResult] = []
    total_iter = 0
    for isl in islands:
        nodes = sorted({adm.node_of_bus[b] for b in isl.buses})
        if isl.dead:
            island_results.append(IslandResult(isl.buses, False, True, 0))
            continue
        if len(isl.slack_buses) != 1:
            raise ValueError(
                f"island {sorted(isl.buses)[:3]}...: expected exactly one "
                f"slack-attached bus, got {list(isl.slack_buses)}")
        converged, iters = _solve_island(
            adm, nodes, p_node, q_node, is_slack, slack_vm, is_pv, pv_vm, vm, va)
        total_iter = max(total_iter, iters)
        island_results.append(IslandResult(isl.buses, converged, False, iters))

    return _assemble_result(
        model, adm, island_results, live_injections, overrides,
        vm, va, total_iter, time.perf_counter() - t0)


def _solve_island(adm, nodes, p_node, q_node, is_slack, slack_vm,
                  is_pv, pv_vm, vm_out, va_out) -> tuple[bool, int]:
    idx = np.asarray(nodes, dtype=int)
    y = adm.ybus[np.ix_(idx, idx)].tocsr()
    n = len(idx)
    local_slack = np.flatnonzero(is_slack[idx])
    local_pv = np.flatnonzero(is_pv[idx] & ~is_slack[idx])
    local_pq = np.flatnonzero(~is_pv[idx] & ~is_slack[idx])
    pvpq = np.concatenate([local_pv, local_pq])

    v = np.ones(n, dtype=complex)
    v[local_slack] = slack_vm[idx[local_slack]]
    v[local_pv] = pv_vm[idx[local_pv]]
    s_sched = p_node[idx] + 1j * q_node[idx]

    def mismatch(voltage):
        mis = voltage * np.conj(y @ voltage) - s_sched
        return np.concatenate([mis[pvpq].real, mis[local_pq].imag])

    converged = False
    iterations = 0
    while True:
        f = mismatch(v)
        if len(f) == 0 or np.max(np.abs(f)) < TOLERANCE_PU:
            converged = True
            break
        if iterations >= MAX_ITERATIONS:
            break
        iterations += 1
        d_sva, d_svm = _power_derivatives(y, v, y @ v)
        j11 = d_sva[np.ix_(pvpq, pvpq)].real
        j12 = d_svm[np.ix_(pvpq, local_pq)].real
        j21 = d_sva[np.ix_(local_pq, pvpq)].imag
        j22 = d_svm[np.ix_(local_pq, local_pq)].imag
        jac = np.block([[j11, j12], [j21, j22]])
        try:
            dx = np.linalg.solve(jac, -f)
        except np.linalg.LinAlgError:
            break
        npvpq = len(pvpq)
        va = np.angle(v)
        vm = np.abs(v)
        va[pvpq] += dx[:npvpq]
        vm[local_pq] += dx[npvpq:]
        v = vm * np.exp(1j * va)

    vm_out[idx] = np.abs(v)
    va_out[idx] = np.angle(v)
    return converged, iterations


def _power_derivatives(y, v, i_bus):
    """dS/dVa and dS/dVm (the latter w.r.t. |V| directly)."""
    diag_v = np.diag(v)
    diag_i = np.diag(i_bus)
    diag_vnorm = np.diag(v / np.abs(v))
    y_dense = y.toarray()
    d_sva = 1j * diag_v @ np.conj(diag_i - y_dense @ diag_v)
    d_svm = diag_v @ np.conj(y_dense @ diag_vnorm) + np.conj(diag_i) @ diag_vnorm
    return d_sva, d_svm


def _assemble_result(model, adm, island_results, live_injections, overrides,
                     vm, va, iterations, elapsed) -> PowerFlowResult:
    dead_buses: set[str] = set()
    bus_island_idx: dict[str, int] = {}
    for i, isl in enumerate(island_results):
        for bus in isl.buses:
            bus_island_idx[bus] = i
        if isl.dead:
            dead_buses |= set(isl.buses)

    vm_pu: dict[str, float] = {}
    va_deg: dict[str, float] = {}
    for bus in model.buses.values():
        if not bus.in_service or bus.id in dead_buses:
            vm_pu[bus.id] = 0.0
            va_deg[bus.id] = 0.0
        else:
            node = adm.node_of_bus[bus.id]
            vm_pu[bus.id] = float(vm[node])
            va_deg[bus.id] = float(math.degrees(va[node]))

    flows: dict[str, BranchFlow] = {}
    branch_island: dict[str, int] = {}
    for bid, br in model.branches().items():
        flows[bid] = BranchFlow()
        active = bid in adm.branch_adm
        if not active:
            continue
        a, b = model.branch_buses(br)
        if a in dead_buses or b in dead_buses:
            continue
        branch_island[bid] = bus_island_idx[a]
        ba = adm.branch_adm[bid]
        v_f = vm[ba.from_node] * cmath.exp(1j * va[ba.from_node])
        v_t = vm[ba.to_node] * cmath.exp(1j * va[ba.to_node])
        s_f = v_f * (ba.yff * v_f + ba.yft * v_t).conjugate() * S_BASE_MVA
        s_t = v_t * (ba.ytf * v_f + ba.ytt * v_t).conjugate() * S_BASE_MVA
        vn_f = model.buses[a].vn_kv
        vn_t = model.buses[b].vn_kv
        i_f = abs(s_f) / (math.sqrt(3.0) * abs(v_f) * vn_f) if abs(v_f) > 0 else 0.0
        i_t = abs(s_t) / (math.sqrt(3.0) * abs(v_t) * vn_t) if abs(v_t) > 0 else 0.0
        flow = flows[bid]
        flow.p_from_mw = s_f.real
        flow.q_from_mvar = s_f.imag
        flow.p_to_mw = s_t.real
        flow.q_to_mvar = s_t.imag
        flow.i_from_ka = i_f
        flow.i_to_ka = i_t
        flow.i_ka = max(i_f, i_t)
        rating = _branch_rating_ka(br, vn_f, vn_t)
        if rating > 0:
            flow.loading_percent = flow.i_ka / rating * 100.0

    p_mw: dict[str, float] = {}
    q_mvar: dict[str, float] = {}
    inj_bus: dict[str, str] = {}
    inj_sign: dict[str, float] = {}
    slack_injections: dict[int, list[Injection]] = {}
    node_balance = _node_power(adm, vm, va)
    for inj in live_injections:
        inj_bus[inj.id] = inj.bus
        inj_sign[inj.id] = -1.0 if inj.kind == "load" else 1.0
        if inj.bus in dead_buses:
            p_mw[inj.id] = 0.0
            q_mvar[inj.id] = 0.0
            continue
        if inj.kind == "ext_grid":
            slack_injections.setdefault(adm.node_of_bus[inj.bus], []).append(inj)
            continue
        if inj.id in overrides:
            p, q = overrides[inj.id]
        else:
            p, q = inj.effective_p_mw(), inj.effective_q_mvar()
        p_mw[inj.id] = p
        q_mvar[inj.id] = q
    # Slack absorbs the residual power of its island.
    for node, injs in slack_injections.items():
        s_node = node_balance[node] * S_BASE_MVA
        others_p = others_q = 0.0
        for inj in live_injections:
            if inj.kind == "ext_grid" or adm.node_of_bus.get(inj.bus) != node:
                continue
            if inj.bus in dead_buses:
                continue
            others_p += inj_sign[inj.id] * p_mw[inj.id]
            others_q += inj_sign[inj.id] * q_mvar[inj.id]
        share = 1.0 / len(injs)
        for inj in injs:
            p_mw[inj.id] = (s_node.real - others_p) * share
            q_mvar[inj.id] = (s_node.imag - others_q) * share

    result = PowerFlowResult(
        vm_pu=vm_pu, va_deg=va_deg, flows=flows, p_mw=p_mw, q_mvar=q_mvar,
        islands=island_results, iterations=iterations,
        solve_time_s=elapsed, revision=model.revision)
    result._inj_bus = inj_bus
    result._inj_sign = inj_sign
    result._branch_island = branch_island
    return result


def _node_power(adm, vm, va):
    v = vm * np.exp(1j * va)
    return v * np.conj(adm.ybus @ v)


def _branch_rating_ka(br, vn_f: float, vn_t: float) -> float:
    if isinstance(br, Line):
        return br.max_i_ka
    if br.max_i_ka > 0:
        return br.max_i_ka
    return br.sn_mva / (math.sqrt(3.0) * min(vn_f, vn_t))
