"""Run artifacts: grid/SE/telemetry time series, metrics, event log.

The grid-state export is one wide row per solve (source=actual); SE runs
append rows tagged estimated, and the reported view of the same quantities
is rebuilt from telemetry at each SE snapshot. All values are virtual-time
deterministic, so two runs with one seed produce byte-identical files.
"""

from __future__ import annotations

import math
from pathlib import Path

from .coordinator import Metrics
from .estimation import EstimatedState, estimated_injections
from .grid import GridModel
from .powerflow import PowerFlowResult

NS_PER_S = 1_000_000_000


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return "1" if value else "0"
    if isinstance(value, float):
        if math.isnan(value):
            return ""
        return format(value, ".10g")
    return str(value)


class StateCsv:
    """Wide time-series of the full electrical state, tagged by source."""

    def __init__(self, path: str | Path, model: GridModel):
        self.path = Path(path)
        self.buses = sorted(model.buses)
        self.branches = sorted(model.branches())
        self.injections = sorted(model.injections)
        self.switches = sorted(model.switches)
        self._fh = open(self.path, "w")
        header = ["time_s", "source"]
        header += [f"vm_pu:{b}" for b in self.buses]
        header += [f"va_deg:{b}" for b in self.buses]
        header += [f"bus_p_mw:{b}" for b in self.buses]
        header += [f"bus_q_mvar:{b}" for b in self.buses]
        header += [f"p_from_mw:{b}" for b in self.branches]
        header += [f"q_from_mvar:{b}" for b in self.branches]
        header += [f"p_to_mw:{b}" for b in self.branches]
        header += [f"q_to_mvar:{b}" for b in self.branches]
        header += [f"i_ka:{b}" for b in self.branches]
        header += [f"loading_percent:{b}" for b in self.branches]
        header += [f"p_mw:{i}" for i in self.injections]
        header += [f"q_mvar:{i}" for i in self.injections]
        header += [f"closed:{s}" for s in self.switches]
        self._fh.write(",".join(header) + "\n")

    def actual_row(self, t_ns: int, model: GridModel,
                   result: PowerFlowResult) -> None:
        bus_p: dict[str, float] = {}
        bus_q: dict[str, float] = {}
        for inj_id, p in result.p_mw.items():
            bus = result._inj_bus[inj_id]
            sign = result._inj_sign[inj_id]
            bus_p[bus] = bus_p.get(bus, 0.0) + sign * p
            bus_q[bus] = bus_q.get(bus, 0.0) + sign * result.q_mvar[inj_id]
        row = [_fmt(t_ns / NS_PER_S), "actual"]
        row += [_fmt(result.vm_pu.get(b)) for b in self.buses]
        row += [_fmt(result.va_deg.get(b)) for b in self.buses]
        row += [_fmt(bus_p.get(b, 0.0)) for b in self.buses]
        row += [_fmt(bus_q.get(b, 0.0)) for b in self.buses]
        flows = result.flows
        row += [_fmt(flows[b].p_from_mw if b in flows else None)
                for b in self.branches]
        row += [_fmt(flows[b].q_from_mvar if b in flows else None)
                for b in self.branches]
        row += [_fmt(flows[b].p_to_mw if b in flows else None)
                for b in self.branches]
        row += [_fmt(flows[b].q_to_mvar if b in flows else None)
                for b in self.branches]
        row += [_fmt(flows[b].i_ka if b in flows else None)
                for b in self.branches]
        row += [_fmt(flows[b].loading_percent if b in flows else None)
                for b in self.branches]
        row += [_fmt(result.p_mw.get(i)) for i in self.injections]
        row += [_fmt(result.q_mvar.get(i)) for i in self.injections]
        row += [_fmt(model.switches[s].closed) for s in self.switches]
        self._fh.write(",".join(row) + "\n")

    def estimated_row(self, t_ns: int, model: GridModel,
                      state: EstimatedState) -> None:
        inj = estimated_injections(model, state)
        row = [_fmt(t_ns / NS_PER_S), "estimated"]
        row += [_fmt(state.vm_pu.get(b, math.nan)) for b in self.buses]
        row += [_fmt(state.va_deg.get(b, math.nan)) for b in self.buses]
        row += [_fmt(inj[b][0] if b in inj else math.nan) for b in self.buses]
        row += [_fmt(inj[b][1] if b in inj else math.nan) for b in self.buses]
        row += [""] * (6 * len(self.branches))
        row += [""] * (2 * len(self.injections))
        row += [""] * len(self.switches)
        self._fh.write(",".join(row) + "\n")

    def reported_row(self, t_ns: int, reported: dict[str, dict]) -> None:
        """Reported view: dicts keyed vm/bus_p/bus_q/switch by element id."""
        row = [_fmt(t_ns / NS_PER_S), "reported"]
        row += [_fmt(reported.get("vm", {}).get(b, math.nan))
                for b in self.buses]
        row += [""] * len(self.buses)  # angles are not telemetered
        row += [_fmt(reported.get("bus_p", {}).get(b, math.nan))
                for b in self.buses]
        row += [_fmt(reported.get("bus_q", {}).get(b, math.nan))
                for b in self.buses]
        flows_p = reported.get("p_from", {})
        flows_q = reported.get("q_from", {})
        row += [_fmt(flows_p.get(b, math.nan)) for b in self.branches]
        row += [_fmt(flows_q.get(b, math.nan)) for b in self.branches]
        row += [""] * (4 * len(self.branches))
        inj_p = reported.get("inj_p", {})
        inj_q = reported.get("inj_q", {})
        row += [_fmt(inj_p.get(i, math.nan)) for i in self.injections]
        row += [_fmt(inj_q.get(i, math.nan)) for i in self.injections]
        switches = reported.get("switch", {})
        row += [_fmt(switches.get(s)) if s in switches else ""
                for s in self.switches]
        self._fh.write(",".join(row) + "\n")

    def close(self) -> None:
        if not self._fh.closed:
            self._fh.close()


class TelemetryCsv:
    """Long-format log of every measurement ASDU the MTU received."""

    def __init__(self, path: str | Path):
        self._fh = open(path, "w")
        self._fh.write("time_s,coa,ioa,value\n")

    def row(self, t_ns: int, coa: int, ioa: int, value) -> None:
        self._fh.write(f"{_fmt(t_ns / NS_PER_S)},{coa},{ioa},{_fmt(value)}\n")

    def close(self) -> None:
        if not self._fh.closed:
            self._fh.close()


def write_metrics_csv(path: str | Path, metrics: Metrics,
                      hop_delays_ns: list[int] | None = None,
                      hop_delays_wall_ns: list[int] | None = None) -> None:
    rows = [("solve_time_ms", [s * 1e3 for s in metrics.solve_time_s]),
            ("coordination_overhead_ms",
             [s * 1e3 for s in metrics.coordination_overhead_s])]
    if hop_delays_ns is not None:
        rows.append(("hop_delay_ms", [ns / 1e6 for ns in hop_delays_ns]))
    if hop_delays_wall_ns is not None:
        rows.append(("hop_delay_wall_ms",
                     [ns / 1e6 for ns in hop_delays_wall_ns]))
    with open(path, "w") as fh:
        fh.write("metric,n,mean,ci98_lo,ci98_hi\n")
        for name, samples in rows:
            mean, lo, hi = Metrics.mean_ci98(samples)
            fh.write(f"{name},{len(samples)},{_fmt(mean)},{_fmt(lo)},"
                     f"{_fmt(hi)}\n")


def read_state_csv(path: str | Path) -> list[dict]:
    """Parse a state CSV back into row dicts (floats where possible)."""
    lines = Path(path).read_text().splitlines()
    header = lines[0].split(",")
    rows = []
    for line in lines[1:]:
        values = line.split(",")
        row: dict = {}
        for key, raw in zip(header, values):
            if raw == "":
                row[key] = None
            elif key == "source":
                row[key] = raw
            else:
                row[key] = float(raw)
        rows.append(row)
    return rows
