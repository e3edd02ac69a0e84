"""Typed power grid model: assets, topology, switch states.

The grid model is the single source of truth for the plant. Only the
coordinator mutates it (single-writer); everybody else works on snapshots.
All mutations go through :meth:`GridModel.apply_change`, bump the revision
counter and land in the audit log with a virtual timestamp.

Conventions: S_base = 1 MVA system wide, V_base = bus nominal voltage.
Loads are consumption-positive, generators infeed-positive.
"""

from __future__ import annotations

import copy
from dataclasses import dataclass


BUS_PQ = "PQ"
BUS_PV = "PV"
BUS_SLACK = "slack"

SWITCH_BREAKER = "circuit-breaker"
SWITCH_DISCONNECTOR = "disconnector"


@dataclass
class Bus:
    id: str
    vn_kv: float
    kind: str = BUS_PQ  # PQ | PV | slack (slack-attached via ExternalGrid)
    in_service: bool = True


@dataclass
class Line:
    id: str
    from_bus: str
    to_bus: str
    length_km: float
    r_ohm_per_km: float
    x_ohm_per_km: float
    c_nf_per_km: float = 0.0
    max_i_ka: float = 1.0
    in_service: bool = True


@dataclass
class Transformer:
    id: str
    hv_bus: str
    lv_bus: str
    sn_mva: float
    vk_percent: float
    vkr_percent: float
    tap_pos: int = 0
    tap_step_percent: float = 0.0
    max_i_ka: float = 0.0  # 0 = derive thermal rating from sn_mva
    in_service: bool = True


@dataclass
class Injection:
    """Load, static generator or external grid attached to a bus.

    ``kind`` selects the sign convention: loads consume p_mw, generators
    inject p_mw. The external grid carries a voltage setpoint instead and
    marks its bus slack-attached.
    """

    id: str
    bus: str
    kind: str  # load | sgen | ext_grid
    p_mw: float = 0.0
    q_mvar: float = 0.0
    scaling: float = 1.0
    max_p_mw: float | None = None
    min_p_mw: float | None = None
    vm_pu: float = 1.0  # ext_grid only
    in_service: bool = True

    def effective_p_mw(self) -> float:
        return self.p_mw * self.scaling

    def effective_q_mvar(self) -> float:
        return self.q_mvar * self.scaling


@dataclass
class Switch:
    """Breaker or disconnector on a branch or between two buses.

    Branch switches (element = line/trafo id) remove the branch from the
    admittance graph when open. Bus couplers (element = (bus_a, bus_b)) tie
    the two buses electrically when closed.
    """

    id: str
    element: str | tuple[str, str]
    closed: bool = True
    kind: str = SWITCH_BREAKER

    @property
    def is_coupler(self) -> bool:
        return isinstance(self.element, tuple)


@dataclass
class Violation:
    code: str
    element: str
    message: str

    def __str__(self) -> str:  # pragma: no cover - repr convenience
        return f"[{self.code}] {self.element}: {self.message}"


@dataclass
class AuditEntry:
    t_ns: int
    revision: int
    target: str
    attr: str
    old: object
    new: object
    flags: tuple[str, ...] = ()


@dataclass
class Change:
    """A single mutation request: switch state, setpoint or service flag."""

    target: str
    attr: str  # closed | p_mw | q_mvar | scaling | vm_pu | in_service
    value: object


class UnknownTargetError(KeyError):
    pass


@dataclass
class Island:
    buses: frozenset[str]
    slack_buses: tuple[str, ...]

    @property
    def dead(self) -> bool:
        return not self.slack_buses


class GridModel:
    """Collections of grid assets plus revision counter and audit log."""

    def __init__(self) -> None:
        self.buses: dict[str, Bus] = {}
        self.lines: dict[str, Line] = {}
        self.transformers: dict[str, Transformer] = {}
        self.injections: dict[str, Injection] = {}
        self.switches: dict[str, Switch] = {}
        self.revision = 0
        self.audit_log: list[AuditEntry] = []

    # -- construction -----------------------------------------------------

    def add(self, element: Bus | Line | Transformer | Injection | Switch) -> None:
        table = self._table_for(element)
        if element.id in self._all_ids():
            raise ValueError(f"duplicate element id {element.id!r}")
        table[element.id] = element

    def _table_for(self, element) -> dict:
        if isinstance(element, Bus):
            return self.buses
        if isinstance(element, Line):
            return self.lines
        if isinstance(element, Transformer):
            return self.transformers
        if isinstance(element, Injection):
            return self.injections
        if isinstance(element, Switch):
            return self.switches
        raise TypeError(f"not a grid element: {element!r}")

    def _all_ids(self) -> set[str]:
        ids: set[str] = set()
        for table in (self.buses, self.lines, self.transformers,
                      self.injections, self.switches):
            ids.update(table)
        return ids

    def branches(self) -> dict[str, Line | Transformer]:
        out: dict[str, Line | Transformer] = dict(self.lines)
        out.update(self.transformers)
        return out

    def branch_buses(self, branch: Line | Transformer) -> tuple[str, str]:
        if isinstance(branch, Line):
            return branch.from_bus, branch.to_bus
        return branch.hv_bus, branch.lv_bus

    def slack_buses(self) -> set[str]:
        return {
            inj.bus
            for inj in self.injections.values()
            if inj.kind == "ext_grid" and inj.in_service
            and inj.bus in self.buses and self.buses[inj.bus].in_service
        }

    def snapshot(self) -> "GridModel":
        """Immutable-by-convention deep copy safe to hand across threads."""
        return copy.deepcopy(self)

    # -- validation --------------------------------------------------------

    def validate(self) -> list[Violation]:
        """Check every model invariant; violations are data, not faults."""
        out: list[Violation] = []
        for bus in self.buses.values():
            if bus.vn_kv <= 0:
                out.append(Violation("bad-vn", bus.id, f"vn_kv={bus.vn_kv} must be > 0"))
        for line in self.lines.values():
            if line.from_bus == line.to_bus:
                out.append(Violation("self-loop", line.id, "from_bus == to_bus"))
            if line.length_km <= 0:
                out.append(Violation("bad-length", line.id, f"length_km={line.length_km} must be > 0"))
            if line.x_ohm_per_km < 0:
                out.append(Violation("bad-x", line.id, "x_ohm_per_km must be >= 0"))
            for bus in (line.from_bus, line.to_bus):
                if bus not in self.buses:
                    out.append(Violation("dangling-ref", line.id, f"unknown bus {bus!r}"))
        for tr in self.transformers.values():
            if tr.sn_mva <= 0:
                out.append(Violation("bad-sn", tr.id, f"sn_mva={tr.sn_mva} must be > 0"))
            if not (0 < tr.vkr_percent <= tr.vk_percent):
                out.append(Violation(
                    "bad-vk", tr.id,
                    f"need 0 < vkr ({tr.vkr_percent}) <= vk ({tr.vk_percent})"))
            for bus in (tr.hv_bus, tr.lv_bus):
                if bus not in self.buses:
                    out.append(Violation("dangling-ref", tr.id, f"unknown bus {bus!r}"))
        for inj in self.injections.values():
            if inj.bus not in self.buses:
                out.append(Violation("dangling-ref", inj.id, f"unknown bus {inj.bus!r}"))
            if inj.scaling < 0:
                out.append(Violation("bad-scaling", inj.id, "scaling must be >= 0"))
            if (inj.min_p_mw is not None and inj.max_p_mw is not None
                    and inj.min_p_mw > inj.max_p_mw):
                out.append(Violation("bad-limits", inj.id, "min_p_mw > max_p_mw"))
            elif inj.min_p_mw is not None and inj.p_mw < inj.min_p_mw:
                out.append(Violation("setpoint-low", inj.id,
                                     f"p_mw={inj.p_mw} below min_p_mw={inj.min_p_mw}"))
            elif inj.max_p_mw is not None and inj.p_mw > inj.max_p_mw:
                out.append(Violation("setpoint-high", inj.id,
                                     f"p_mw={inj.p_mw} above max_p_mw={inj.max_p_mw}"))
        branches = self.branches()
        for sw in self.switches.values():
            if sw.is_coupler:
                for bus in sw.element:
                    if bus not in self.buses:
                        out.append(Violation("dangling-ref", sw.id, f"unknown bus {bus!r}"))
            elif sw.element not in branches:
                out.append(Violation("dangling-ref", sw.id, f"unknown branch {sw.element!r}"))
        # Slack-attachment rules are per-island.
        for island in self.islands():
            if island.dead:
                out.append(Violation(
                    "unsolvable-island", ",".join(sorted(island.buses)[:4]),
                    f"island of {len(island.buses)} buses has no slack-attached bus"))
            elif len(island.slack_buses) > 1:
                out.append(Violation(
                    "multi-slack-island", ",".join(island.slack_buses),
                    "more than one slack-attached bus in one island"))
        return out

    # -- topology ----------------------------------------------------------

    def open_branch_switches(self) -> set[str]:
        """Branch ids disabled by at least one open switch."""
        return {
            sw.element for sw in self.switches.values()
            if not sw.is_coupler and not sw.closed
        }

    def active_branches(self) -> dict[str, Line | Transformer]:
        """In-service branches with live end buses and no open switch."""
        disabled = self.open_branch_switches()
        out: dict[str, Line | Transformer] = {}
        for bid, br in self.branches().items():
            if not br.in_service or bid in disabled:
                continue
            a, b = self.branch_buses(br)
            bus_a, bus_b = self.buses.get(a), self.buses.get(b)
            if bus_a is not None and bus_a.in_service \
                    and bus_b is not None and bus_b.in_service:
                out[bid] = br
        return out

    def closed_couplers(self) -> list[Switch]:
        out = []
        for sw in self.switches.values():
            if not sw.is_coupler or not sw.closed:
                continue
            bus_a = self.buses.get(sw.element[0])
            bus_b = self.buses.get(sw.element[1])
            if bus_a is not None and bus_a.in_service \
                    and bus_b is not None and bus_b.in_service:
                out.append(sw)
        return out

    def islands(self) -> list[Island]:
        """Partition in-service buses into electrically connected components."""
        adjacency: dict[str, list[str]] = {
            b.id: [] for b in self.buses.values() if b.in_service
        }
        for br in self.active_branches().values():
            a, b = self.branch_buses(br)
            adjacency[a].append(b)
            adjacency[b].append(a)
        for sw in self.closed_couplers():
            a, b = sw.element
            adjacency[a].append(b)
            adjacency[b].append(a)
        slack = self.slack_buses()
        islands: list[Island] = []
        seen: set[str] = set()
        for start in sorted(adjacency):
            if start in seen:
                continue
            component: set[str] = set()
            stack = [start]
            while stack:
                node = stack.pop()
                if node in component:
                    continue
                component.add(node)
                stack.extend(n for n in adjacency[node] if n not in component)
            seen |= component
            islands.append(Island(
                buses=frozenset(component),
                slack_buses=tuple(sorted(component & slack)),
            ))
        return islands

    # -- mutation ----------------------------------------------------------

    def apply_change(self, change: Change, t_ns: int = 0) -> int:
        """Apply one mutation, clamping setpoints to limits; returns new revision.

        Out-of-range p_mw setpoints are clamped to the nearest limit and the
        audit entry is flagged ``clamped`` (real actuators enforce their
        limits rather than rejecting commands).
        """
        element = self._find(change.target)
        if element is None:
            raise UnknownTargetError(change.target)
        if not hasattr(element, change.attr):
            raise UnknownTargetError(f"{change.target}.{change.attr}")
        old = getattr(element, change.attr)
        value = change.value
        flags: tuple[str, ...] = ()
        if change.attr == "p_mw" and isinstance(element, Injection):
            clamped = value
            if element.min_p_mw is not None:
                clamped = max(clamped, element.min_p_mw)
            if element.max_p_mw is not None:
                clamped = min(clamped, element.max_p_mw)
            if clamped != value:
                flags = ("clamped",)
                value = clamped
        setattr(element, change.attr, value)
        self.revision += 1
        self.audit_log.append(AuditEntry(
            t_ns=t_ns, revision=self.revision, target=change.target,
            attr=change.attr, old=old, new=value, flags=flags))
        return self.revision

    def _find(self, element_id: str):
        for table in (self.buses, self.lines, self.transformers,
                      self.injections, self.switches):
            if element_id in table:
                return table[element_id]
        return None

    def get(self, element_id: str):
        element = self._find(element_id)
        if element is None:
            raise UnknownTargetError(element_id)
        return element

    def find(self, element_id: str):
        return self._find(element_id)
