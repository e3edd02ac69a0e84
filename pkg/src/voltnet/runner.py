"""Scenario assembly and execution: wires grid, network, devices, attacks
and exporters together and drives the event loop in virtual or real time.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

from .attacks import (
    ArpSpoofAttack, ArpSpoofPlan, FdiAttack, FdiPlan, IndustroyerAttack,
    IndustroyerPlan, PhysicalAttack, PhysicalPlan, SynFloodAttack,
    SynFloodPlan,
)
from .coordinator import Coordinator, EventLog
from .devices import MtuApp, RtuApp
from .estimation import (
    EstimatedState, estimate, filter_by_policy, forecast_pseudos,
    zero_injection_pseudos,
)
from .exports import StateCsv, TelemetryCsv, write_metrics_csv
from .grid import GridModel
from .netsim.core import NS_PER_S, Network, Scheduler, run_realtime, s_to_ns
from .netsim.stack import Host, Router
from .process import RelayBank, RngStreams
from .scenario import ScenarioConfig, write_resolved


@dataclass
class Simulation:
    config: ScenarioConfig
    sched: Scheduler
    rng: RngStreams
    events: EventLog
    net: Network
    model: GridModel
    coordinator: Coordinator
    mtu: MtuApp | None
    rtus: dict[str, RtuApp]
    attacks: list = field(default_factory=list)
    export_dir: Path | None = None
    estimates: list[tuple[int, EstimatedState]] = field(default_factory=list)
    actual_history: list = field(default_factory=list)  # (t_ns, vm, p) per solve
    _state_csv: StateCsv | None = None
    _telemetry_csv: TelemetryCsv | None = None
    realtime_stats: dict = field(default_factory=dict)

    @property
    def now_s(self) -> float:
        return self.sched.now_ns / NS_PER_S

    def host(self, name: str) -> Host:
        return self.net.nodes[name]

    def finalize(self) -> None:
        cfg = self.config.exports
        if self.export_dir is not None:
            if cfg.events:
                self.events.write_jsonl(self.export_dir / "events.jsonl")
            if cfg.metrics:
                hop = self.net.all_hop_delays_ns() if cfg.record_hops else None
                write_metrics_csv(self.export_dir / "metrics.csv",
                                  self.coordinator.metrics, hop)
            write_resolved(self.config, self.export_dir / "resolved.json")
        if self._state_csv is not None:
            self._state_csv.close()
        if self._telemetry_csv is not None:
            self._telemetry_csv.close()
        self.net.close_captures()


def build_simulation(config: ScenarioConfig,
                     export_dir: str | Path | None = None) -> Simulation:
    sched = Scheduler()
    rng = RngStreams(config.seed)
    events = EventLog()
    net = Network(sched, rng,
                  log=lambda kind, **f: events.append(sched.now_ns, kind, **f))
    net.record_hops = config.exports.record_hops

    _build_ict(config, net)
    model = config.grid.snapshot()

    export_path = Path(export_dir) if export_dir is not None else None
    if export_path is not None:
        export_path.mkdir(parents=True, exist_ok=True)

    state_csv = None
    if export_path is not None and config.exports.grid_csv:
        state_csv = StateCsv(export_path / "state.csv", model)
    telemetry_csv = None
    if export_path is not None and config.exports.telemetry_csv:
        telemetry_csv = TelemetryCsv(export_path / "telemetry.csv")

    def on_solve(result):
        if state_csv is not None:
            state_csv.actual_row(sched.now_ns, model, result)
        sim.actual_history.append(
            (sched.now_ns, dict(result.vm_pu), dict(result.p_mw)))

    coordinator = Coordinator(
        model, sched, rng, noise=config.noise, profiles=config.profiles,
        relays=RelayBank(config.relays), events=events, on_solve=on_solve)

    sim = Simulation(config=config, sched=sched, rng=rng, events=events,
                     net=net, model=model, coordinator=coordinator,
                     mtu=None, rtus={}, export_dir=export_path)
    sim._state_csv = state_csv
    sim._telemetry_csv = telemetry_csv

    for rtu_cfg in config.rtus:
        app = RtuApp(rtu_cfg, coordinator, rng)
        host = net.nodes[rtu_cfg.host]
        host.app = app
        app.start(host)
        sim.rtus[rtu_cfg.host] = app

    if config.mtu is not None:
        mtu = MtuApp(config.mtu, rng)
        host = net.nodes[config.mtu.host]
        host.app = mtu
        if telemetry_csv is not None:
            mtu.on_telemetry = (lambda t_ns, coa, ioa, value:
                                telemetry_csv.row(t_ns, coa, ioa, value))
        mtu.start(host)
        sim.mtu = mtu
        if config.se.enabled:
            _schedule_se(sim)

    for plan in config.attacks:
        sim.attacks.append(_build_attack(plan, sim))

    for capture in config.exports.pcap:
        if export_path is not None:
            net.add_capture(capture, export_path / f"capture-{capture}.pcap")

    return sim


def _build_ict(config: ScenarioConfig, net: Network) -> None:
    host_index = 0
    for node_cfg in config.ict_nodes:
        if node_cfg.kind == "switch":
            net.add_switch(node_cfg.name)
        elif node_cfg.kind == "router":
            router = Router(node_cfg.name, net)
            for iface in node_cfg.interfaces:
                router.add_interface(iface["mac"], iface["ip"],
                                     iface.get("prefix_len", 24))
            for route in node_cfg.routes:
                router.add_route(route["prefix"], route["prefix_len"],
                                 route["next_hop"])
            net.add_node(router)
        else:
            host_index += 1
            mac = node_cfg.mac or _auto_mac(host_index)
            net.add_node(Host(node_cfg.name, net, mac, node_cfg.ip,
                              node_cfg.prefix_len, node_cfg.gateway))
    for link_cfg in config.ict_links:
        net.connect(link_cfg.a, link_cfg.b, delay_ms=link_cfg.delay_ms,
                    jitter_ms=link_cfg.jitter_ms,
                    bandwidth_mbps=link_cfg.bandwidth_mbps,
                    queue_frames=link_cfg.queue_frames)


def _auto_mac(index: int) -> str:
    return f"02:00:00:00:{index >> 8:02x}:{index & 0xFF:02x}"


def _build_attack(plan, sim: Simulation):
    if isinstance(plan, PhysicalPlan):
        attack = PhysicalAttack(plan, sim.net, sim.coordinator)
    elif isinstance(plan, SynFloodPlan):
        attack = SynFloodAttack(plan, sim.host(plan.attacker), sim.rng)
    elif isinstance(plan, ArpSpoofPlan):
        attack = ArpSpoofAttack(plan, sim.host(plan.attacker))
    elif isinstance(plan, IndustroyerPlan):
        attack = IndustroyerAttack(plan, sim.host(plan.attacker))
    elif isinstance(plan, FdiPlan):
        attack = FdiAttack(plan, sim.host(plan.attacker))
    else:
        raise TypeError(f"unknown attack plan {type(plan).__name__}")
    attack.schedule()
    return attack


def _schedule_se(sim: Simulation) -> None:
    policy = sim.config.se.policy()
    interval_ns = s_to_ns(sim.config.se.interval_s)

    def tick():
        t_ns = sim.sched.now_ns
        snapshot = sim.model.snapshot()
        measurements = sim.mtu.measurements(snapshot)
        measurements = filter_by_policy(measurements, t_ns, policy)
        measurements += zero_injection_pseudos(snapshot)
        if sim.config.se.forecast_pseudos:
            measurements += forecast_pseudos(snapshot)
        est = estimate(snapshot, measurements)
        sim.estimates.append((t_ns, est))
        sim.events.append(t_ns, "se.result",
                          observable=est.all_observable,
                          measurements=len(measurements))
        if sim._state_csv is not None:
            sim._state_csv.estimated_row(t_ns, snapshot, est)
            sim._state_csv.reported_row(t_ns, _reported_view(sim, snapshot))
        sim.sched.call_in(interval_ns, tick)

    sim.sched.call_at(interval_ns, tick)


def _reported_view(sim: Simulation, model: GridModel) -> dict[str, dict]:
    """Operator-visible values rebuilt from raw telemetry."""
    from .devices import MONITORING
    from .grid import Injection
    from . import iec104

    view: dict[str, dict] = {"vm": {}, "bus_p": {}, "bus_q": {},
                             "inj_p": {}, "inj_q": {}, "p_from": {},
                             "q_from": {}, "switch": {}}
    if sim.mtu is None:
        return view
    for rtu in sim.mtu.config.rtus:
        for point in rtu.points:
            if point.direction != MONITORING:
                continue
            tp = sim.mtu.telemetry.get((point.coa, point.ioa))
            if tp is None:
                continue
            element = model.find(point.element)
            if point.type_id == iec104.M_SP_NA_1:
                if point.attr == "closed":
                    view["switch"][point.element] = bool(tp.value)
                continue
            value = point.engineering(float(tp.value))
            if point.attr == "vm_pu":
                bus = element.bus if isinstance(element, Injection) \
                    else point.element
                view["vm"][bus] = value
            elif point.attr in ("p_mw", "q_mvar") and isinstance(
                    element, Injection):
                sign = -1.0 if element.kind == "load" else 1.0
                key = "inj_p" if point.attr == "p_mw" else "inj_q"
                view[key][point.element] = value
                bus_key = "bus_p" if point.attr == "p_mw" else "bus_q"
                bucket = view[bus_key]
                bucket[element.bus] = bucket.get(element.bus, 0.0) \
                    + sign * value
            elif point.attr == "p_from_mw":
                view["p_from"][point.element] = value
            elif point.attr == "q_from_mvar":
                view["q_from"][point.element] = value
    return view


def run_simulation(sim: Simulation, duration_s: float | None = None,
                   poll=None) -> Simulation:
    duration = duration_s if duration_s is not None else sim.config.duration_s
    until = s_to_ns(duration)
    if sim.config.clock == "realtime":
        sim.realtime_stats = run_realtime(sim.sched, until, poll=poll)
    else:
        sim.sched.run_until(until)
        if poll is not None:
            poll()
    sim.finalize()
    return sim


def run_scenario(config: ScenarioConfig,
                 export_dir: str | Path | None = None,
                 duration_s: float | None = None, poll=None) -> Simulation:
    sim = build_simulation(config, export_dir)
    return run_simulation(sim, duration_s, poll)
