"""Scenario files: strict JSON schema, validation, resolved-config export.

Unknown keys are rejected with their JSON path (and a suggestion when a
close match exists); dangling references name both endpoints. A resolved
config echoes every default so the exact experiment definition can be
archived and reloaded bit-identically.
"""

from __future__ import annotations

import difflib
import json
from dataclasses import dataclass, field
from pathlib import Path

from .attacks import (
    ArpSpoofPlan, AttackPlan, FdiInjection, FdiPlan, IndustroyerPlan,
    IndustroyerTarget, PhysicalPlan, SynFloodPlan,
)
from .devices import DataPoint, MtuConfig, RtuConfig, RtuLink
from .estimation import SePolicy
from .grid import Bus, GridModel, Injection, Line, Switch, Transformer
from .process import LoadProfile, NoiseSpec, ProtectionRelay, RealizationDelay

_REQUIRED = object()


class ConfigError(ValueError):
    def __init__(self, path: str, message: str):
        self.path = path
        super().__init__(f"{path}: {message}")


class _Section:
    """One JSON object with strict key checking."""

    def __init__(self, data: dict, path: str):
        if not isinstance(data, dict):
            raise ConfigError(path, f"expected an object, got {type(data).__name__}")
        self.data = data
        self.path = path
        self.known: set[str] = set()

    def take(self, key: str, default=_REQUIRED, kind=None):
        self.known.add(key)
        if key not in self.data:
            if default is _REQUIRED:
                raise ConfigError(self.path, f"missing required key {key!r}")
            return default
        value = self.data[key]
        if kind is not None and value is not None and not isinstance(value, kind):
            raise ConfigError(f"{self.path}.{key}",
                              f"expected {getattr(kind, '__name__', kind)}, "
                              f"got {type(value).__name__}")
        if kind is float and isinstance(value, int):
            return float(value)
        return value

    def number(self, key: str, default=_REQUIRED) -> float:
        self.known.add(key)
        if key not in self.data:
            if default is _REQUIRED:
                raise ConfigError(self.path, f"missing required key {key!r}")
            return default
        value = self.data[key]
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{self.path}.{key}", "expected a number")
        return float(value)

    def subsection(self, key: str, required=True) -> "_Section | None":
        self.known.add(key)
        if key not in self.data or self.data[key] is None:
            if required:
                raise ConfigError(self.path, f"missing required section {key!r}")
            return None
        return _Section(self.data[key], f"{self.path}.{key}")

    def items(self, key: str, default=_REQUIRED) -> list["_Section"]:
        raw = self.take(key, default=None if default is not _REQUIRED else _REQUIRED)
        if raw is None:
            return []
        if not isinstance(raw, list):
            raise ConfigError(f"{self.path}.{key}", "expected a list")
        return [_Section(entry, f"{self.path}.{key}[{i}]")
                for i, entry in enumerate(raw)]

    def finish(self) -> None:
        unknown = set(self.data) - self.known
        if unknown:
            key = sorted(unknown)[0]
            hint = difflib.get_close_matches(key, self.known, n=1)
            suffix = f" (did you mean {hint[0]!r}?)" if hint else ""
            raise ConfigError(self.path, f"unknown key {key!r}{suffix}")


@dataclass
class IctNodeConfig:
    name: str
    kind: str  # host | switch | router
    mac: str = ""
    ip: str = ""
    prefix_len: int = 24
    gateway: str | None = None
    app: str = "idle"  # rtu | mtu | attacker | idle
    interfaces: list[dict] = field(default_factory=list)  # routers
    routes: list[dict] = field(default_factory=list)


@dataclass
class IctLinkConfig:
    a: str
    b: str
    delay_ms: float = 2.0
    jitter_ms: float = 0.0
    bandwidth_mbps: float = 100.0
    queue_frames: int = 100


@dataclass
class SeSettings:
    enabled: bool = True
    mode: str = "default"
    decay_timeout_s: float = 6.0
    interval_s: float = 2.0
    forecast_pseudos: bool = False

    def policy(self) -> SePolicy:
        return SePolicy(self.mode, self.decay_timeout_s)


@dataclass
class ExportSettings:
    pcap: list[str] = field(default_factory=list)  # capture-point node names
    grid_csv: bool = True
    telemetry_csv: bool = True
    se_csv: bool = True
    events: bool = True
    metrics: bool = True
    record_hops: bool = False


@dataclass
class ScenarioConfig:
    name: str
    duration_s: float
    seed: int
    clock: str  # virtual | realtime
    grid: GridModel
    ict_nodes: list[IctNodeConfig]
    ict_links: list[IctLinkConfig]
    rtus: list[RtuConfig]
    mtu: MtuConfig | None
    noise: NoiseSpec | None
    profiles: list[LoadProfile]
    relays: list[ProtectionRelay]
    attacks: list[AttackPlan]
    se: SeSettings
    exports: ExportSettings

    def node(self, name: str) -> IctNodeConfig:
        for node in self.ict_nodes:
            if node.name == name:
                return node
        raise KeyError(name)


# ---------------------------------------------------------------------------
# parsing


def load_scenario(source: str | Path | dict) -> ScenarioConfig:
    """Load and validate a scenario from a file path, builtin name or dict."""
    if isinstance(source, dict):
        return parse_config(source)
    text = str(source)
    if not Path(text).exists():
        from . import builtin
        if text in builtin.REGISTRY:
            return builtin.REGISTRY[text]()
        raise ConfigError("scenario", f"no such file or builtin scenario {text!r} "
                          f"(builtins: {', '.join(sorted(builtin.REGISTRY))})")
    try:
        data = json.loads(Path(text).read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{text}:{exc.lineno}:{exc.colno}", exc.msg) from exc
    return parse_config(data)


def parse_config(data: dict) -> ScenarioConfig:
    root = _Section(data, "scenario")
    name = root.take("name", kind=str)
    duration_s = root.number("duration_s")
    seed = root.take("seed", 0, kind=int)
    clock = root.take("clock", "virtual", kind=str)
    if clock not in ("virtual", "realtime"):
        raise ConfigError("scenario.clock", f"must be virtual|realtime, got {clock!r}")

    grid = _parse_grid(root.subsection("grid"))
    ict_nodes, ict_links = _parse_ict(root.subsection("ict"))
    rtus, mtu = _parse_devices(root.subsection("devices", required=False),
                               ict_nodes)
    noise, profiles, relays = _parse_process(
        root.subsection("process", required=False))
    attacks = _parse_attacks(root.items("attacks", default=None))
    se = _parse_se(root.subsection("se", required=False))
    exports = _parse_exports(root.subsection("exports", required=False))
    root.finish()

    config = ScenarioConfig(
        name=name, duration_s=duration_s, seed=seed, clock=clock, grid=grid,
        ict_nodes=ict_nodes, ict_links=ict_links, rtus=rtus, mtu=mtu,
        noise=noise, profiles=profiles, relays=relays, attacks=attacks,
        se=se, exports=exports)
    errors = validate_config(config)
    if errors:
        raise ConfigError("scenario", "; ".join(errors[:5]))
    return config


def _parse_grid(section: _Section) -> GridModel:
    model = GridModel()
    for s in section.items("buses"):
        model.add(Bus(s.take("id", kind=str), s.number("vn_kv"),
                      s.take("kind", "PQ", kind=str),
                      s.take("in_service", True, kind=bool)))
        s.finish()
    for s in section.items("lines", default=None):
        model.add(Line(
            s.take("id", kind=str), s.take("from_bus", kind=str),
            s.take("to_bus", kind=str), s.number("length_km"),
            s.number("r_ohm_per_km"), s.number("x_ohm_per_km"),
            s.number("c_nf_per_km", 0.0), s.number("max_i_ka", 1.0),
            s.take("in_service", True, kind=bool)))
        s.finish()
    for s in section.items("transformers", default=None):
        model.add(Transformer(
            s.take("id", kind=str), s.take("hv_bus", kind=str),
            s.take("lv_bus", kind=str), s.number("sn_mva"),
            s.number("vk_percent"), s.number("vkr_percent"),
            s.take("tap_pos", 0, kind=int), s.number("tap_step_percent", 0.0),
            s.number("max_i_ka", 0.0), s.take("in_service", True, kind=bool)))
        s.finish()
    for s in section.items("injections"):
        kind = s.take("kind", kind=str)
        if kind not in ("load", "sgen", "ext_grid"):
            raise ConfigError(s.path, f"injection kind {kind!r} not one of "
                              "load|sgen|ext_grid")
        model.add(Injection(
            s.take("id", kind=str), s.take("bus", kind=str), kind,
            s.number("p_mw", 0.0), s.number("q_mvar", 0.0),
            s.number("scaling", 1.0), s.number("max_p_mw", None),
            s.number("min_p_mw", None), s.number("vm_pu", 1.0),
            s.take("in_service", True, kind=bool)))
        s.finish()
    for s in section.items("switches", default=None):
        element = s.take("element")
        if isinstance(element, list):
            if len(element) != 2:
                raise ConfigError(s.path, "coupler element needs two bus ids")
            element = (element[0], element[1])
        elif not isinstance(element, str):
            raise ConfigError(s.path, "element must be a branch id or [bus, bus]")
        model.add(Switch(s.take("id", kind=str), element,
                         s.take("closed", True, kind=bool),
                         s.take("kind", "circuit-breaker", kind=str)))
        s.finish()
    section.finish()
    return model


def _parse_ict(section: _Section) -> tuple[list[IctNodeConfig], list[IctLinkConfig]]:
    nodes = []
    for s in section.items("nodes"):
        kind = s.take("kind", "host", kind=str)
        if kind not in ("host", "switch", "router"):
            raise ConfigError(s.path, f"node kind {kind!r} not host|switch|router")
        node = IctNodeConfig(
            name=s.take("name", kind=str), kind=kind,
            mac=s.take("mac", "", kind=str), ip=s.take("ip", "", kind=str),
            prefix_len=s.take("prefix_len", 24, kind=int),
            gateway=s.take("gateway", None, kind=str),
            app=s.take("app", "idle", kind=str),
            interfaces=s.take("interfaces", [], kind=list),
            routes=s.take("routes", [], kind=list))
        if node.kind == "host" and not node.ip:
            raise ConfigError(s.path, f"host {node.name!r} needs an ip")
        nodes.append(node)
        s.finish()
    links = []
    for s in section.items("links"):
        links.append(IctLinkConfig(
            s.take("a", kind=str), s.take("b", kind=str),
            s.number("delay_ms", 2.0), s.number("jitter_ms", 0.0),
            s.number("bandwidth_mbps", 100.0),
            s.take("queue_frames", 100, kind=int)))
        s.finish()
    section.finish()
    return nodes, links


def _parse_point(s: _Section, coa: int) -> DataPoint:
    direction = s.take("direction", kind=str)
    if direction not in ("monitoring", "control"):
        raise ConfigError(s.path, f"direction {direction!r} not monitoring|control")
    point = DataPoint(
        coa=coa, ioa=s.take("ioa", kind=int), direction=direction,
        element=s.take("element", kind=str), attr=s.take("attr", kind=str),
        type_id=s.take("type_id", kind=int),
        report_interval_s=s.number("report_interval_s", 2.0),
        scale=s.number("scale", 1.0), offset=s.number("offset", 0.0))
    s.finish()
    return point


def _parse_devices(section: _Section | None, ict_nodes) -> tuple[list, MtuConfig | None]:
    if section is None:
        return [], None
    rtus = []
    for s in section.items("rtus", default=None):
        delay = RealizationDelay()
        ds = s.subsection("delay", required=False)
        if ds is not None:
            delay = RealizationDelay(ds.number("min_s", 0.5),
                                     ds.number("max_s", 1.5))
            ds.finish()
        coa = s.take("coa", kind=int)
        rtus.append(RtuConfig(
            host=s.take("host", kind=str), coa=coa,
            points=[_parse_point(p, coa) for p in s.items("points")],
            delay=delay,
            whitelist=s.take("whitelist", [], kind=list),
            port=s.take("port", 2404, kind=int)))
        s.finish()
    mtu = None
    ms = section.subsection("mtu", required=False)
    if ms is not None:
        host = ms.take("host", kind=str)
        rtu_names = ms.take("rtus", [r.host for r in rtus], kind=list)
        ms.finish()
        node_ips = {n.name: n.ip for n in ict_nodes}
        links = []
        for rtu in rtus:
            if rtu.host in rtu_names:
                links.append(RtuLink(rtu.host, node_ips.get(rtu.host, ""),
                                     rtu.coa, rtu.points, rtu.port))
        mtu = MtuConfig(host=host, rtus=links)
    section.finish()
    return rtus, mtu


def _parse_process(section: _Section | None):
    if section is None:
        return NoiseSpec(), [], []
    noise = NoiseSpec()
    ns = section.subsection("noise", required=False)
    if ns is not None:
        enabled = ns.take("enabled", True, kind=bool)
        pre = ns.number("pre_sigma_rel", 0.01)
        post = ns.number("post_sigma_rel", 0.005)
        ns.finish()
        noise = NoiseSpec(pre, post) if enabled else None
    profiles = []
    for s in section.items("profiles", default=None):
        raw_points = s.take("points", kind=list)
        points = [(float(p[0]), float(p[1])) for p in raw_points]
        profiles.append(LoadProfile(s.take("target", kind=str), points))
        s.finish()
    relays = []
    for s in section.items("relays", default=None):
        relays.append(ProtectionRelay(
            s.take("breaker", kind=str), s.number("v_min_pu", 0.9),
            s.number("v_max_pu", 1.1), s.number("i_max_ka", 1.0),
            s.number("dwell_s", 0.2)))
        s.finish()
    section.finish()
    return noise, profiles, relays


def _parse_attacks(sections: list[_Section]) -> list[AttackPlan]:
    out: list[AttackPlan] = []
    for s in sections:
        kind = s.take("kind", kind=str)
        if kind == "physical":
            out.append(PhysicalPlan(
                s.take("attacker", "", kind=str), s.number("start_s"),
                s.take("ict_nodes", [], kind=list),
                s.take("grid_elements", [], kind=list)))
        elif kind == "syn-flood":
            out.append(SynFloodPlan(
                s.take("attacker", kind=str), s.number("start_s"),
                s.number("duration_s"), s.take("targets", kind=list),
                s.take("target_port", 2404, kind=int),
                s.take("payload_bytes", 1400, kind=int),
                s.take("streams_per_target", 3, kind=int),
                s.take("source_net", "198.18.0.0", kind=str),
                s.take("source_prefix", 15, kind=int)))
        elif kind == "arp-spoof":
            mode = s.take("mode", "blackhole", kind=str)
            if mode not in ("blackhole", "forward"):
                raise ConfigError(s.path, f"mode {mode!r} not blackhole|forward")
            out.append(ArpSpoofPlan(
                s.take("attacker", kind=str), s.number("start_s"),
                s.number("duration_s"), s.take("victim_a", kind=str),
                s.take("victim_b", kind=str), mode,
                s.number("period_s", 1.0)))
        elif kind == "industroyer":
            targets = []
            for t in s.items("targets"):
                targets.append(IndustroyerTarget(
                    t.take("ip", kind=str), t.take("coa", kind=int),
                    t.take("ioas", kind=list), t.take("port", 2404, kind=int),
                    t.take("open_value", False, kind=bool)))
                t.finish()
            out.append(IndustroyerPlan(
                s.take("attacker", kind=str), s.number("start_s"),
                s.number("duration_s", 120.0), s.number("interval_s", 3.0),
                targets))
        elif kind == "fdi":
            injections = []
            for i in s.items("injections", default=None):
                at = i.number("at_s", -1.0)
                injections.append(FdiInjection(
                    i.take("coa", kind=int), i.take("ioa", kind=int),
                    i.number("value"), None if at < 0 else at))
                i.finish()
            out.append(FdiPlan(
                s.take("attacker", kind=str), s.number("start_s"),
                s.number("duration_s"), s.take("gateway_ip", kind=str),
                s.take("victim_ips", kind=list),
                s.number("record_s", 60.0), injections,
                [tuple(x) for x in s.take("freeze", [], kind=list)],
                s.take("suppress_coas", [], kind=list),
                s.take("freeze_mode", "replay", kind=str),
                s.number("period_s", 1.0)))
        else:
            raise ConfigError(s.path, f"unknown attack kind {kind!r}")
        s.finish()
    return out


def _parse_se(section: _Section | None) -> SeSettings:
    if section is None:
        return SeSettings()
    se = SeSettings(
        enabled=section.take("enabled", True, kind=bool),
        mode=section.take("mode", "default", kind=str),
        decay_timeout_s=section.number("decay_timeout_s", 6.0),
        interval_s=section.number("interval_s", 2.0),
        forecast_pseudos=section.take("forecast_pseudos", False, kind=bool))
    if se.mode not in ("default", "decay"):
        raise ConfigError(f"{section.path}.mode",
                          f"must be default|decay, got {se.mode!r}")
    section.finish()
    return se


def _parse_exports(section: _Section | None) -> ExportSettings:
    if section is None:
        return ExportSettings()
    exports = ExportSettings(
        pcap=section.take("pcap", [], kind=list),
        grid_csv=section.take("grid_csv", True, kind=bool),
        telemetry_csv=section.take("telemetry_csv", True, kind=bool),
        se_csv=section.take("se_csv", True, kind=bool),
        events=section.take("events", True, kind=bool),
        metrics=section.take("metrics", True, kind=bool),
        record_hops=section.take("record_hops", False, kind=bool))
    section.finish()
    return exports


# ---------------------------------------------------------------------------
# cross-reference validation


def validate_config(config: ScenarioConfig) -> list[str]:
    errors = [str(v) for v in config.grid.validate()]
    node_names = {n.name for n in config.ict_nodes}
    host_names = {n.name for n in config.ict_nodes if n.kind == "host"}
    ips = {}
    for node in config.ict_nodes:
        if node.kind == "host":
            if node.ip in ips:
                errors.append(f"duplicate IP {node.ip} on {ips[node.ip]} "
                              f"and {node.name}")
            ips[node.ip] = node.name
    for link in config.ict_links:
        for end in (link.a, link.b):
            if end not in node_names:
                errors.append(f"link {link.a}--{link.b}: unknown node {end!r}")
    element_ids = config.grid._all_ids()
    coas = set()
    for rtu in config.rtus:
        if rtu.host not in host_names:
            errors.append(f"rtu on unknown host {rtu.host!r}")
        if rtu.coa in coas:
            errors.append(f"duplicate COA {rtu.coa}")
        coas.add(rtu.coa)
        seen_ioa = set()
        for point in rtu.points:
            if point.ioa in seen_ioa:
                errors.append(f"rtu {rtu.host}: duplicate IOA {point.ioa}")
            seen_ioa.add(point.ioa)
            if point.element not in element_ids:
                errors.append(f"rtu {rtu.host} point {point.ioa}: unknown "
                              f"grid element {point.element!r}")
    if config.mtu is not None and config.mtu.host not in host_names:
        errors.append(f"mtu on unknown host {config.mtu.host!r}")
    for profile in config.profiles:
        if profile.target not in config.grid.injections:
            errors.append(f"profile targets unknown injection "
                          f"{profile.target!r}")
    for relay in config.relays:
        if relay.breaker not in config.grid.switches:
            errors.append(f"relay monitors unknown breaker {relay.breaker!r}")
    for plan in config.attacks:
        attacker = getattr(plan, "attacker", "")
        if attacker and attacker not in host_names:
            errors.append(f"attack {plan.kind}: unknown attacker host "
                          f"{attacker!r}")
        if isinstance(plan, PhysicalPlan):
            for node in plan.ict_nodes:
                if node not in node_names:
                    errors.append(f"physical attack: unknown node {node!r}")
            for element in plan.grid_elements:
                if element not in element_ids:
                    errors.append(f"physical attack: unknown grid element "
                                  f"{element!r}")
    for capture in config.exports.pcap:
        if capture not in node_names:
            errors.append(f"pcap capture point {capture!r} is not a node")
    return errors


# ---------------------------------------------------------------------------
# resolved-config export (every default made explicit)


def resolve_to_dict(config: ScenarioConfig) -> dict:
    grid = config.grid
    return {
        "name": config.name,
        "duration_s": config.duration_s,
        "seed": config.seed,
        "clock": config.clock,
        "grid": {
            "buses": [{"id": b.id, "vn_kv": b.vn_kv, "kind": b.kind,
                       "in_service": b.in_service}
                      for b in grid.buses.values()],
            "lines": [{"id": l.id, "from_bus": l.from_bus, "to_bus": l.to_bus,
                       "length_km": l.length_km,
                       "r_ohm_per_km": l.r_ohm_per_km,
                       "x_ohm_per_km": l.x_ohm_per_km,
                       "c_nf_per_km": l.c_nf_per_km, "max_i_ka": l.max_i_ka,
                       "in_service": l.in_service}
                      for l in grid.lines.values()],
            "transformers": [{"id": t.id, "hv_bus": t.hv_bus,
                              "lv_bus": t.lv_bus, "sn_mva": t.sn_mva,
                              "vk_percent": t.vk_percent,
                              "vkr_percent": t.vkr_percent,
                              "tap_pos": t.tap_pos,
                              "tap_step_percent": t.tap_step_percent,
                              "max_i_ka": t.max_i_ka,
                              "in_service": t.in_service}
                             for t in grid.transformers.values()],
            "injections": [_inj_dict(i) for i in grid.injections.values()],
            "switches": [{"id": s.id,
                          "element": list(s.element) if s.is_coupler
                          else s.element,
                          "closed": s.closed, "kind": s.kind}
                         for s in grid.switches.values()],
        },
        "ict": {
            "nodes": [{"name": n.name, "kind": n.kind, "mac": n.mac,
                       "ip": n.ip, "prefix_len": n.prefix_len,
                       "gateway": n.gateway, "app": n.app,
                       "interfaces": n.interfaces, "routes": n.routes}
                      for n in config.ict_nodes],
            "links": [{"a": l.a, "b": l.b, "delay_ms": l.delay_ms,
                       "jitter_ms": l.jitter_ms,
                       "bandwidth_mbps": l.bandwidth_mbps,
                       "queue_frames": l.queue_frames}
                      for l in config.ict_links],
        },
        "devices": {
            "rtus": [{"host": r.host, "coa": r.coa, "port": r.port,
                      "whitelist": r.whitelist,
                      "delay": {"min_s": r.delay.min_s,
                                "max_s": r.delay.max_s},
                      "points": [_point_dict(p) for p in r.points]}
                     for r in config.rtus],
            "mtu": None if config.mtu is None else {
                "host": config.mtu.host,
                "rtus": [r.name for r in config.mtu.rtus]},
        },
        "process": {
            "noise": ({"enabled": True,
                       "pre_sigma_rel": config.noise.pre_sigma_rel,
                       "post_sigma_rel": config.noise.post_sigma_rel}
                      if config.noise is not None else {"enabled": False}),
            "profiles": [{"target": p.target,
                          "points": [[t, s] for t, s in p.points]}
                         for p in config.profiles],
            "relays": [{"breaker": r.breaker, "v_min_pu": r.v_min_pu,
                        "v_max_pu": r.v_max_pu, "i_max_ka": r.i_max_ka,
                        "dwell_s": r.dwell_s} for r in config.relays],
        },
        "attacks": [_plan_dict(p) for p in config.attacks],
        "se": {"enabled": config.se.enabled, "mode": config.se.mode,
               "decay_timeout_s": config.se.decay_timeout_s,
               "interval_s": config.se.interval_s,
               "forecast_pseudos": config.se.forecast_pseudos},
        "exports": {"pcap": config.exports.pcap,
                    "grid_csv": config.exports.grid_csv,
                    "telemetry_csv": config.exports.telemetry_csv,
                    "se_csv": config.exports.se_csv,
                    "events": config.exports.events,
                    "metrics": config.exports.metrics,
                    "record_hops": config.exports.record_hops},
    }


def _inj_dict(inj: Injection) -> dict:
    out = {"id": inj.id, "bus": inj.bus, "kind": inj.kind, "p_mw": inj.p_mw,
           "q_mvar": inj.q_mvar, "scaling": inj.scaling,
           "vm_pu": inj.vm_pu, "in_service": inj.in_service}
    if inj.max_p_mw is not None:
        out["max_p_mw"] = inj.max_p_mw
    if inj.min_p_mw is not None:
        out["min_p_mw"] = inj.min_p_mw
    return out


def _point_dict(p: DataPoint) -> dict:
    return {"ioa": p.ioa, "direction": p.direction, "element": p.element,
            "attr": p.attr, "type_id": p.type_id,
            "report_interval_s": p.report_interval_s, "scale": p.scale,
            "offset": p.offset}


def _plan_dict(plan: AttackPlan) -> dict:
    if isinstance(plan, PhysicalPlan):
        return {"kind": "physical", "attacker": plan.attacker,
                "start_s": plan.start_s, "ict_nodes": plan.ict_nodes,
                "grid_elements": plan.grid_elements}
    if isinstance(plan, SynFloodPlan):
        return {"kind": "syn-flood", "attacker": plan.attacker,
                "start_s": plan.start_s, "duration_s": plan.duration_s,
                "targets": plan.targets, "target_port": plan.target_port,
                "payload_bytes": plan.payload_bytes,
                "streams_per_target": plan.streams_per_target,
                "source_net": plan.source_net,
                "source_prefix": plan.source_prefix}
    if isinstance(plan, ArpSpoofPlan):
        return {"kind": "arp-spoof", "attacker": plan.attacker,
                "start_s": plan.start_s, "duration_s": plan.duration_s,
                "victim_a": plan.victim_a, "victim_b": plan.victim_b,
                "mode": plan.mode, "period_s": plan.period_s}
    if isinstance(plan, IndustroyerPlan):
        return {"kind": "industroyer", "attacker": plan.attacker,
                "start_s": plan.start_s, "duration_s": plan.duration_s,
                "interval_s": plan.interval_s,
                "targets": [{"ip": t.ip, "coa": t.coa, "ioas": t.ioas,
                             "port": t.port, "open_value": t.open_value}
                            for t in plan.targets]}
    if isinstance(plan, FdiPlan):
        return {"kind": "fdi", "attacker": plan.attacker,
                "start_s": plan.start_s, "duration_s": plan.duration_s,
                "gateway_ip": plan.gateway_ip,
                "victim_ips": plan.victim_ips, "record_s": plan.record_s,
                "injections": [
                    {"coa": i.coa, "ioa": i.ioa, "value": i.value,
                     **({"at_s": i.at_s} if i.at_s is not None else {})}
                    for i in plan.injections],
                "freeze": [list(f) for f in plan.freeze],
                "suppress_coas": plan.suppress_coas,
                "freeze_mode": plan.freeze_mode, "period_s": plan.period_s}
    raise TypeError(f"unknown plan type {type(plan).__name__}")


def write_resolved(config: ScenarioConfig, path: str | Path) -> None:
    Path(path).write_text(
        json.dumps(resolve_to_dict(config), indent=1, sort_keys=True) + "\n")
