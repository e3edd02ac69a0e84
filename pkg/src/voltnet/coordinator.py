"""Simulation coordinator: owns the grid model, the solve pipeline and the
event log; serves the out-of-band management interface every host uses to
read and write grid values.

The management path is zero-latency by design (it models the dedicated
coordination network, which is not an experiment subject); its wall-clock
service time is still recorded as coordination overhead. Writes mark the
model dirty; all writes within one event timestamp batch into a single
solve, and any read forces the pending solve first so a write is never
observable stale.
"""

from __future__ import annotations

import json
import math
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

from .grid import Change, GridModel, Injection, Switch, UnknownTargetError
from .netsim.core import NS_PER_S, Scheduler
from .powerflow import PowerFlowResult, solve_power_flow
from .process import (
    LoadProfile, NoiseSpec, RelayBank, RngStreams, apply_profiles, perturb,
)

CASCADE_DEPTH = 10

MEASUREMENT_ATTRS = {
    "vm_pu", "va_deg", "p_mw", "q_mvar", "p_from_mw", "q_from_mvar",
    "p_to_mw", "q_to_mvar", "i_ka", "loading_percent",
}
WRITABLE_ATTRS = {"p_mw", "q_mvar", "scaling", "closed", "in_service", "vm_pu"}


@dataclass(frozen=True)
class GridRef:
    """Reference to one element attribute, e.g. ('load7', 'p_mw')."""

    element: str
    attr: str


class EventLog:
    """Append-only structured event records with non-decreasing timestamps."""

    def __init__(self) -> None:
        self.entries: list[dict] = []
        self._seq = 0

    def append(self, t_ns: int, kind: str, **fields) -> None:
        self._seq += 1
        entry = {"t_ns": t_ns, "seq": self._seq, "kind": kind}
        entry.update(fields)
        self.entries.append(entry)

    def of_kind(self, *kinds: str) -> list[dict]:
        return [e for e in self.entries if e["kind"] in kinds]

    def write_jsonl(self, path: str | Path) -> None:
        with open(path, "w") as fh:
            for entry in self.entries:
                fh.write(json.dumps(entry, sort_keys=True,
                                    separators=(",", ":")) + "\n")

    @staticmethod
    def read_jsonl(path: str | Path) -> list[dict]:
        return [json.loads(line)
                for line in Path(path).read_text().splitlines() if line]


@dataclass
class Metrics:
    solve_time_s: list[float] = field(default_factory=list)
    coordination_overhead_s: list[float] = field(default_factory=list)

    @staticmethod
    def mean_ci98(samples: list[float]) -> tuple[float, float, float]:
        """(mean, ci_low, ci_high) with a 98% confidence interval."""
        n = len(samples)
        if n == 0:
            return (math.nan, math.nan, math.nan)
        mean = sum(samples) / n
        if n == 1:
            return (mean, mean, mean)
        var = sum((x - mean) ** 2 for x in samples) / (n - 1)
        from scipy.stats import t as student_t
        half = student_t.ppf(0.99, n - 1) * math.sqrt(var / n)
        return (mean, mean - half, mean + half)


class Coordinator:
    """Single writer of the grid model; serializes solves with mutations."""

    def __init__(self, model: GridModel, sched: Scheduler, rng: RngStreams,
                 *, noise: NoiseSpec | None = None,
                 profiles: list[LoadProfile] | None = None,
                 relays: RelayBank | None = None,
                 events: EventLog | None = None,
                 on_solve: Callable[[PowerFlowResult], None] | None = None):
        self.model = model
        self.sched = sched
        self.rng = rng
        self.noise = noise
        self.profiles = profiles or []
        self.relays = relays or RelayBank([])
        self.events = events or EventLog()
        self.metrics = Metrics()
        self.result: PowerFlowResult | None = None
        self.dirty = True
        self._solve_scheduled = False
        self._relay_recheck = None
        self._on_solve = on_solve
        self._schedule_profiles()
        self.sched.call_at(0, self._solve_event)

    # -- scheduling --------------------------------------------------------

    def _schedule_profiles(self) -> None:
        for profile in self.profiles:
            for offset_s in profile.breakpoints_s():
                self.sched.call_at(
                    round(offset_s * NS_PER_S),
                    lambda p=profile: self._apply_profile(p))

    def _apply_profile(self, profile: LoadProfile) -> None:
        t_ns = self.sched.now_ns
        changed = apply_profiles(self.model, [profile], t_ns / NS_PER_S, t_ns)
        for target in changed:
            self.events.append(t_ns, "grid.change", target=target,
                               attr="scaling",
                               value=self.model.injections[target].scaling,
                               origin="profile")
        if changed:
            self.mark_dirty()

    def mark_dirty(self) -> None:
        self.dirty = True
        if not self._solve_scheduled:
            self._solve_scheduled = True
            self.sched.call_at(self.sched.now_ns, self._solve_event)

    def _solve_event(self) -> None:
        self._solve_scheduled = False
        if self.dirty:
            self.solve_now()

    # -- solve pipeline ------------------------------------------------------

    def solve_now(self) -> None:
        depth = 0
        while self.dirty:
            if depth > CASCADE_DEPTH:
                self.events.append(self.sched.now_ns, "coordinator.cascade-limit",
                                   depth=depth)
                self.dirty = False
                break
            depth += 1
            self.dirty = False
            overrides = self._pre_noise_overrides()
            result = solve_power_flow(self.model, overrides)
            self.metrics.solve_time_s.append(result.solve_time_s)
            if not result.converged:
                self.events.append(self.sched.now_ns, "grid.solve-failed",
                                   revision=self.model.revision)
                break  # previous grid state stays visible
            self.result = result
            self.events.append(self.sched.now_ns, "grid.solve",
                               revision=result.revision,
                               iterations=result.iterations)
            if self._on_solve is not None:
                self._on_solve(result)
            self._run_relays(result)

    def _pre_noise_overrides(self):
        if self.noise is None or self.noise.pre_sigma_rel == 0:
            return None
        stream = self.rng.get(self.noise.stream + ".pre")
        overrides = {}
        for inj_id in sorted(self.model.injections):
            inj = self.model.injections[inj_id]
            if inj.kind == "ext_grid" or not inj.in_service:
                continue
            overrides[inj_id] = (
                perturb(inj.effective_p_mw(), self.noise.pre_sigma_rel, stream),
                perturb(inj.effective_q_mvar(), self.noise.pre_sigma_rel, stream),
            )
        return overrides

    def _run_relays(self, result: PowerFlowResult) -> None:
        trips, next_check = self.relays.evaluate(
            self.model, result, self.sched.now_ns)
        for trip in trips:
            self.events.append(trip.t_ns, "relay.trip", breaker=trip.breaker,
                               reason=trip.reason)
            self._apply(Change(trip.breaker, "closed", False), origin="relay")
        if next_check is not None and self._relay_recheck is None:
            self._relay_recheck = self.sched.call_at(
                next_check, self._relay_recheck_event)

    def _relay_recheck_event(self) -> None:
        self._relay_recheck = None
        if self.result is not None:
            self._run_relays(self.result)
            if self.dirty:
                self.solve_now()

    # -- management interface ----------------------------------------------------

    def read(self, ref: GridRef, *, exact: bool = False) -> float | bool:
        """Latest solved value; measurement reads carry post-solve noise."""
        t0 = time.perf_counter()
        try:
            if self.dirty:
                self.solve_now()
            value = self._lookup(ref)
            if (not exact and self.noise is not None
                    and self.noise.post_sigma_rel > 0
                    and ref.attr in MEASUREMENT_ATTRS
                    and isinstance(value, float)):
                value = perturb(value, self.noise.post_sigma_rel,
                                self.rng.get(self.noise.stream + ".post"))
            return value
        finally:
            self.metrics.coordination_overhead_s.append(
                time.perf_counter() - t0)

    def write(self, ref: GridRef, value, origin: str = "management") -> None:
        t0 = time.perf_counter()
        try:
            if ref.attr not in WRITABLE_ATTRS:
                raise UnknownTargetError(f"{ref.element}.{ref.attr} not writable")
            self._apply(Change(ref.element, ref.attr, value), origin=origin)
        finally:
            self.metrics.coordination_overhead_s.append(
                time.perf_counter() - t0)

    def _apply(self, change: Change, origin: str) -> None:
        t_ns = self.sched.now_ns
        self.model.apply_change(change, t_ns)
        entry = self.model.audit_log[-1]
        self.events.append(t_ns, "grid.change", target=change.target,
                           attr=change.attr, value=entry.new, origin=origin,
                           **({"flags": list(entry.flags)} if entry.flags else {}))
        self.mark_dirty()

    def _lookup(self, ref: GridRef):
        element = self.model.get(ref.element)
        if isinstance(element, Switch) and ref.attr == "closed":
            return element.closed
        if ref.attr == "in_service":
            return element.in_service
        if self.result is None:
            raise RuntimeError("no power flow result available yet")
        if ref.attr in ("vm_pu", "va_deg"):
            table = self.result.vm_pu if ref.attr == "vm_pu" else self.result.va_deg
            if ref.element in table:
                return table[ref.element]
            if isinstance(element, Injection):
                return table[element.bus]
            raise UnknownTargetError(f"{ref.element}.{ref.attr}")
        if isinstance(element, Injection):
            if ref.attr == "p_mw":
                return self.result.p_mw.get(ref.element, 0.0)
            if ref.attr == "q_mvar":
                return self.result.q_mvar.get(ref.element, 0.0)
            if ref.attr == "scaling":
                return element.scaling
        flow = self.result.flows.get(ref.element)
        if flow is not None and hasattr(flow, ref.attr):
            return getattr(flow, ref.attr)
        raise UnknownTargetError(f"{ref.element}.{ref.attr}")

    # -- replay -------------------------------------------------------------------

    @staticmethod
    def replay(initial: GridModel, events: list[dict]) -> GridModel:
        """Re-apply all grid.change events onto a copy of the initial model."""
        model = initial.snapshot()
        for entry in events:
            if entry["kind"] != "grid.change":
                continue
            model.apply_change(
                Change(entry["target"], entry["attr"], entry["value"]),
                entry["t_ns"])
        return model
