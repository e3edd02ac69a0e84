"""Bundled scenarios and generators.

``benchmark(n)`` builds the linear scaling grid: one MV bus plus n
branches, each a transformer feeding four chained LV buses with four
loads, one generator and five RTUs behind one branch switch.

``reference()`` builds a suburban MV distribution grid structurally
matching the published experiment scale: 119 RTUs, 239 ICT nodes, 475
power assets (scenario size 714). Nine feeders hang off a central
substation fed by two 110/20 kV transformers. Line and transformer
electrical parameters are typical cable/transformer values (the scale is
what matters, not a specific utility dataset):

    20 kV feeder cable  0.5 km/section, r=0.161, x=0.117 ohm/km, 362 A
    HV transformer      25 MVA, vk 12%, vkr 0.41%
    LV loads            0.2 MW at cos-phi 0.97
    renewables          0.6 MW default; two larger plants on feeder 5

Attack variants of the reference scenario reproduce the published
experiments: physical substation destruction, SYN flooding of two remote
RTUs, ARP-spoof blackholing, the breaker-opening malware replica, and
transparent false data injection against the feeder-5 plants.
"""

from __future__ import annotations

import math

from .attacks import (
    ArpSpoofPlan, FdiInjection, FdiPlan, IndustroyerPlan, IndustroyerTarget,
    PhysicalPlan, SynFloodPlan,
)
from .devices import CONTROL, MONITORING, DataPoint, MtuConfig, RtuConfig, RtuLink
from . import iec104
from .grid import Bus, GridModel, Injection, Line, Switch, Transformer
from .process import LoadProfile, NoiseSpec, ProtectionRelay, RealizationDelay
from .scenario import (
    ExportSettings, IctLinkConfig, IctNodeConfig, ScenarioConfig, SeSettings,
)

PF_Q = math.tan(math.acos(0.95))  # reactive share at power factor 0.95


def _mon(coa, ioa, element, attr, type_id=iec104.M_ME_NC_1, interval=2.0):
    return DataPoint(coa, ioa, MONITORING, element, attr, type_id,
                     report_interval_s=interval)


def _ctl(coa, ioa, element, attr, type_id):
    return DataPoint(coa, ioa, CONTROL, element, attr, type_id)


def _mtu_config(host: str, rtus: list[RtuConfig],
                nodes: list[IctNodeConfig]) -> MtuConfig:
    ips = {n.name: n.ip for n in nodes}
    return MtuConfig(host, [
        RtuLink(r.host, ips[r.host], r.coa, r.points, r.port) for r in rtus])


# ---------------------------------------------------------------------------
# benchmark grids (n branches)


def benchmark(n: int, seed: int = 1, duration_s: float = 60.0) -> ScenarioConfig:
    """Linearly scalable grid: S = 19 n + 5 (13n+2 power, 6n+3 ICT)."""
    if n < 1:
        raise ValueError("n must be >= 1")
    grid = GridModel()
    grid.add(Bus("mv", vn_kv=20.0))
    grid.add(Injection("ext", "mv", kind="ext_grid", vm_pu=1.02))

    nodes = [
        IctNodeConfig("mtu", "host", ip="10.1.0.10", gateway="10.1.0.1",
                      app="mtu"),
        IctNodeConfig("core", "switch"),
        IctNodeConfig(
            "router", "router",
            interfaces=[
                {"mac": "02:aa:00:00:00:01", "ip": "10.0.255.254",
                 "prefix_len": 16},
                {"mac": "02:aa:00:00:00:02", "ip": "10.1.0.1",
                 "prefix_len": 24},
            ]),
    ]
    links = [
        IctLinkConfig("router", "core"),
        IctLinkConfig("router", "mtu"),
    ]
    rtus = []

    for b in range(1, n + 1):
        grid.add(Transformer(f"tr{b}", "mv", f"b{b}_1", sn_mva=0.63,
                             vk_percent=6.0, vkr_percent=1.2))
        sw = f"sw{b}"
        nodes.append(IctNodeConfig(sw, "switch"))
        links.append(IctLinkConfig(sw, "core"))
        for k in range(1, 5):
            bus = f"b{b}_{k}"
            grid.add(Bus(bus, vn_kv=0.4))
            if k > 1:
                grid.add(Line(f"ln{b}_{k}", f"b{b}_{k - 1}", bus,
                              length_km=0.3, r_ohm_per_km=0.208,
                              x_ohm_per_km=0.08, c_nf_per_km=261.0,
                              max_i_ka=0.27))
            load = f"load{b}_{k}"
            grid.add(Injection(load, bus, kind="load", p_mw=0.02,
                               q_mvar=0.02 * PF_Q))
            coa = b * 10 + k
            host = f"rtu{b}_{k}"
            nodes.append(IctNodeConfig(host, "host", ip=f"10.0.{b}.{k}",
                                       prefix_len=16,
                                       gateway="10.0.255.254", app="rtu"))
            links.append(IctLinkConfig(host, sw))
            points = [
                _mon(coa, 1, bus, "vm_pu"),
                _mon(coa, 2, load, "p_mw"),
                _mon(coa, 3, load, "q_mvar"),
            ]
            if k == 4:
                gen = f"gen{b}"
                grid.add(Injection(gen, bus, kind="sgen", p_mw=0.05,
                                   q_mvar=0.05 * PF_Q, max_p_mw=0.1,
                                   min_p_mw=0.0))
                points.append(_mon(coa, 4, gen, "p_mw"))
                points.append(_ctl(coa, 10, gen, "p_mw", iec104.C_SE_NC_1))
            rtus.append(RtuConfig(host, coa, points,
                                  delay=RealizationDelay(0.2, 0.6)))
        # transformer RTU
        coa = b * 10 + 5
        host = f"rtu{b}_t"
        nodes.append(IctNodeConfig(host, "host", ip=f"10.0.{b}.5", prefix_len=16,
                                   gateway="10.0.255.254", app="rtu"))
        links.append(IctLinkConfig(host, sw))
        rtus.append(RtuConfig(host, coa, [
            _mon(coa, 1, "mv", "vm_pu"),
            _mon(coa, 2, f"tr{b}", "p_from_mw"),
            _mon(coa, 3, f"tr{b}", "q_from_mvar"),
        ], delay=RealizationDelay(0.2, 0.6)))

    return ScenarioConfig(
        name=f"benchmark-{n}", duration_s=duration_s, seed=seed,
        clock="virtual", grid=grid, ict_nodes=nodes, ict_links=links,
        rtus=rtus, mtu=_mtu_config("mtu", rtus, nodes), noise=None,
        profiles=[], relays=[], attacks=[], se=SeSettings(enabled=False),
        exports=ExportSettings(telemetry_csv=False, record_hops=True))


def benchmark_counts(n: int) -> dict:
    """Asset arithmetic for the generator (kept next to its definition)."""
    power = (4 * n + 1) + n + 3 * n + 4 * n + n + 1  # buses+trafo+lines+loads+gens+ext
    ict = 5 * n + n + 3  # RTUs + branch switches + mtu/core/router
    return {"power_assets": power, "ict_nodes": ict, "S": power + ict}


# ---------------------------------------------------------------------------
# lab replica (inverter testbed)


LAB_INJECT_TIMES_S = (123.0, 173.0)
LAB_PV_B_MIN_MW = 0.002


def lab_replica(seed: int = 1) -> ScenarioConfig:
    grid = GridModel()
    grid.add(Bus("mv", vn_kv=20.0))
    grid.add(Bus("lv", vn_kv=0.4))
    grid.add(Injection("ext", "mv", kind="ext_grid", vm_pu=1.0))
    grid.add(Transformer("tr1", "mv", "lv", sn_mva=0.63, vk_percent=6.0,
                         vkr_percent=1.2))
    for i, name in enumerate(("load1", "load2", "load3"), start=1):
        grid.add(Injection(name, "lv", kind="load", p_mw=0.02,
                           q_mvar=0.02 * PF_Q))
    # two PV inverters and one battery inverter, power factor 0.95
    grid.add(Injection("pv_a", "lv", kind="sgen", p_mw=0.018,
                       q_mvar=0.018 * PF_Q, max_p_mw=0.025,
                       min_p_mw=LAB_PV_B_MIN_MW))
    grid.add(Injection("pv_b", "lv", kind="sgen", p_mw=0.02,
                       q_mvar=0.02 * PF_Q, max_p_mw=0.025,
                       min_p_mw=LAB_PV_B_MIN_MW))
    grid.add(Injection("bat", "lv", kind="sgen", p_mw=0.01,
                       q_mvar=0.01 * PF_Q, max_p_mw=0.02, min_p_mw=0.0))
    grid.add(Switch("brk_tr", element="tr1"))

    nodes = [
        IctNodeConfig("mtu", "host", ip="10.0.0.10", app="mtu"),
        IctNodeConfig("sw1", "switch"),
        IctNodeConfig("sw2", "switch"),
        IctNodeConfig("sw3", "switch"),
        IctNodeConfig("rtu_a", "host", ip="10.0.0.21", app="rtu"),
        IctNodeConfig("rtu_bat", "host", ip="10.0.0.22", app="rtu"),
        IctNodeConfig("rtu_b", "host", ip="10.0.0.23", app="rtu"),
        IctNodeConfig("attacker", "host", ip="10.0.0.66", app="attacker"),
    ]
    links = [
        IctLinkConfig("mtu", "sw1"),
        IctLinkConfig("sw1", "sw2"),
        IctLinkConfig("sw2", "sw3"),
        IctLinkConfig("rtu_a", "sw1"),
        IctLinkConfig("rtu_bat", "sw2"),
        IctLinkConfig("rtu_b", "sw3"),
        IctLinkConfig("attacker", "sw3"),
    ]
    delay = RealizationDelay(2.0, 6.0)  # observed inverter realization window
    rtus = [
        RtuConfig("rtu_a", 11, [
            _mon(11, 1, "lv", "vm_pu"),
            _mon(11, 2, "pv_a", "p_mw"),
            _mon(11, 3, "pv_a", "q_mvar"),
            _ctl(11, 10, "pv_a", "p_mw", iec104.C_SE_NC_1),
        ], delay=delay),
        RtuConfig("rtu_bat", 12, [
            _mon(12, 1, "lv", "vm_pu"),
            _mon(12, 2, "bat", "p_mw"),
            _mon(12, 3, "bat", "q_mvar"),
            _ctl(12, 10, "bat", "p_mw", iec104.C_SE_NC_1),
        ], delay=delay),
        RtuConfig("rtu_b", 13, [
            _mon(13, 1, "lv", "vm_pu"),
            _mon(13, 2, "pv_b", "p_mw"),
            _mon(13, 3, "pv_b", "q_mvar"),
            _mon(13, 4, "tr1", "p_from_mw"),
            _mon(13, 5, "tr1", "q_from_mvar"),
            _ctl(13, 10, "pv_b", "p_mw", iec104.C_SE_NC_1),
        ], delay=delay),
    ]
    profiles = [
        LoadProfile("load1", [(0.0, 0.5), (30.0, 1.0), (90.0, 0.6),
                              (150.0, 0.9), (210.0, 0.4)]),
        LoadProfile("load2", [(0.0, 0.8), (60.0, 0.5), (120.0, 1.0),
                              (200.0, 0.7)]),
        LoadProfile("load3", [(0.0, 0.3), (45.0, 0.9), (140.0, 0.5)]),
    ]
    # intercept until scenario end: an interception that shifted the byte
    # streams cannot withdraw without desynchronizing the connection
    attacks = [FdiPlan(
        attacker="attacker", start_s=20.0, duration_s=220.0,
        gateway_ip="10.0.0.10", victim_ips=["10.0.0.23"], record_s=0.0,
        injections=[
            FdiInjection(13, 10, LAB_PV_B_MIN_MW, at_s=t)
            for t in LAB_INJECT_TIMES_S
        ])]
    return ScenarioConfig(
        name="lab-replica", duration_s=240.0, seed=seed, clock="virtual",
        grid=grid, ict_nodes=nodes, ict_links=links, rtus=rtus,
        mtu=_mtu_config("mtu", rtus, nodes), noise=NoiseSpec(),
        profiles=profiles, relays=[], attacks=attacks, se=SeSettings(),
        exports=ExportSettings(pcap=["mtu"]))


# ---------------------------------------------------------------------------
# reference grid (suburban MV distribution, experiment scale)


FEEDER_SUBS = (13, 13, 13, 12, 13, 13, 13, 13, 14)  # 117 substations
SEGMENT_A_FEEDERS = (1, 2, 3, 4)  # behind the f1s1 aggregation switch, 51 RTUs
FLOOD_TARGETS = ("10.0.5.7", "10.0.9.7")  # T1, T2
ARP_VICTIM = "10.0.5.7"  # T1
ROUTER_FIELD_IP = "10.0.255.254"
MTU_IP = "10.1.0.10"
ATTACKER_IP = "10.0.200.1"
FDI_VICTIM_SUBS = ((5, 10), (5, 11), (5, 12), (5, 13))
FDI_TARGETS = ((5, 12), (5, 13))  # D2, D3: the feeder-5 plants
D2_P_MW = 0.691
D3_P_MW = 1.47


def _sub_kind(feeder: int, sub: int) -> str:
    """head (unreported load) | bare | load | sgen per substation position."""
    count = FEEDER_SUBS[feeder - 1]
    if sub == 1:
        return "head"
    if sub == 2:
        return "bare"
    if sub >= count - 1:
        return "sgen"
    return "load"


def reference(seed: int = 1, duration_s: float = 120.0) -> ScenarioConfig:
    grid = GridModel()
    grid.add(Bus("hv", vn_kv=110.0))
    grid.add(Bus("mv", vn_kv=20.0))
    grid.add(Injection("ext", "hv", kind="ext_grid", vm_pu=1.02))
    for t in (1, 2):
        grid.add(Transformer(f"tr{t}", "hv", "mv", sn_mva=25.0,
                             vk_percent=12.0, vkr_percent=0.41))
        grid.add(Switch(f"brk_tr{t}", element=f"tr{t}"))

    nodes = [
        IctNodeConfig("mtu", "host", ip=MTU_IP, gateway="10.1.0.1",
                      app="mtu"),
        IctNodeConfig(
            "router", "router",
            interfaces=[
                {"mac": "02:aa:00:00:00:01", "ip": ROUTER_FIELD_IP,
                 "prefix_len": 16},
                {"mac": "02:aa:00:00:00:02", "ip": "10.1.0.1",
                 "prefix_len": 24},
            ]),
        IctNodeConfig("sw_central", "switch"),
        IctNodeConfig("rtu_c1", "host", ip="10.0.100.1", prefix_len=16,
                      gateway=ROUTER_FIELD_IP, app="rtu"),
        IctNodeConfig("rtu_c2", "host", ip="10.0.100.2", prefix_len=16,
                      gateway=ROUTER_FIELD_IP, app="rtu"),
    ]
    links = [
        IctLinkConfig("router", "sw_central"),
        IctLinkConfig("router", "mtu"),
        IctLinkConfig("rtu_c1", "sw_central"),
        IctLinkConfig("rtu_c2", "sw_central"),
    ]
    rtus = []

    for feeder, count in enumerate(FEEDER_SUBS, start=1):
        prev_bus = "mv"
        for sub in range(1, count + 1):
            bus = f"f{feeder}s{sub}"
            line = f"ln_f{feeder}_{sub}"
            grid.add(Bus(bus, vn_kv=20.0))
            grid.add(Line(line, prev_bus, bus, length_km=0.5,
                          r_ohm_per_km=0.161, x_ohm_per_km=0.117,
                          c_nf_per_km=273.0, max_i_ka=0.362))
            grid.add(Switch(f"brk_{bus}", element=line))
            kind = _sub_kind(feeder, sub)
            inj = None
            if kind in ("head", "load"):
                inj = f"load_{bus}"
                grid.add(Injection(inj, bus, kind="load", p_mw=0.2,
                                   q_mvar=0.05))
            elif kind == "sgen":
                inj = f"gen_{bus}"
                p = {(5, 12): D2_P_MW, (5, 13): D3_P_MW}.get(
                    (feeder, sub), 0.6)
                grid.add(Injection(inj, bus, kind="sgen", p_mw=p,
                                   q_mvar=round(p * PF_Q, 6),
                                   max_p_mw=round(p * 1.25, 6), min_p_mw=0.0))
            prev_bus = bus

            # ICT: one switch and one RTU per substation
            sw = f"sw_{bus}"
            host = f"rtu_{bus}"
            coa = feeder * 100 + sub
            nodes.append(IctNodeConfig(sw, "switch"))
            nodes.append(IctNodeConfig(host, "host",
                                       ip=f"10.0.{feeder}.{sub}",
                                       prefix_len=16,
                                       gateway=ROUTER_FIELD_IP, app="rtu"))
            links.append(IctLinkConfig(host, sw))
            # interior stations telemeter their local bus and asset only;
            # power flow measurements exist at feeder heads and at the
            # central substation, as in typical distribution SCADA
            points = [
                _mon(coa, 1, bus, "vm_pu"),
                DataPoint(coa, 4, MONITORING, f"brk_{bus}", "closed",
                          iec104.M_SP_NA_1),
                _ctl(coa, 11, f"brk_{bus}", "closed", iec104.C_SC_NA_1),
            ]
            if kind == "head":
                points.append(_mon(coa, 5, line, "p_from_mw"))
                points.append(_mon(coa, 6, line, "q_from_mvar"))
            elif kind in ("load", "sgen"):
                points.append(_mon(coa, 2, inj, "p_mw"))
                points.append(_mon(coa, 3, inj, "q_mvar"))
                if kind == "sgen":
                    points.append(_ctl(coa, 10, inj, "p_mw",
                                       iec104.C_SE_NC_1))
            rtus.append(RtuConfig(host, coa, points,
                                  delay=RealizationDelay(0.5, 1.5)))

    # feeder breakers at the central substation, controlled by C1/C2
    for feeder in range(1, 10):
        grid.add(Switch(f"brk_feeder{feeder}", element=f"ln_f{feeder}_1"))

    def central_rtu(host: str, coa: int, trafo: int,
                    feeders: tuple) -> RtuConfig:
        points = [
            _mon(coa, 1, "hv", "vm_pu"),
            _mon(coa, 2, "mv", "vm_pu"),
            _mon(coa, 3, f"tr{trafo}", "p_from_mw"),
            _mon(coa, 4, f"tr{trafo}", "q_from_mvar"),
        ]
        breakers = [f"brk_tr{trafo}"] + [f"brk_feeder{f}" for f in feeders]
        for i, breaker in enumerate(breakers):
            points.append(DataPoint(coa, 20 + i, MONITORING, breaker,
                                    "closed", iec104.M_SP_NA_1))
            points.append(_ctl(coa, 30 + i, breaker, "closed",
                              iec104.C_SC_NA_1))
        return RtuConfig(host, coa, points, delay=RealizationDelay(0.0, 0.0))

    rtus.append(central_rtu("rtu_c1", 1001, 1, (1, 2, 3, 4)))
    rtus.append(central_rtu("rtu_c2", 1002, 2, (5, 6, 7, 8, 9)))

    # feeder 1's head switch is the aggregation point for feeders 1-4
    agg = "sw_f1s1"
    links.append(IctLinkConfig(agg, "sw_central"))
    for feeder in (2, 3, 4):
        links.append(IctLinkConfig(f"sw_f{feeder}s1", agg))
    for feeder in (5, 6, 7, 8, 9):
        links.append(IctLinkConfig(f"sw_f{feeder}s1", "sw_central"))
    for feeder, count in enumerate(FEEDER_SUBS, start=1):
        for sub in range(2, count + 1):
            links.append(IctLinkConfig(f"sw_f{feeder}s{sub}",
                                       f"sw_f{feeder}s{sub - 1}"))

    return ScenarioConfig(
        name="reference", duration_s=duration_s, seed=seed, clock="virtual",
        grid=grid, ict_nodes=nodes, ict_links=links, rtus=rtus,
        mtu=_mtu_config("mtu", rtus, nodes), noise=NoiseSpec(),
        profiles=[], relays=[], attacks=[], se=SeSettings(),
        exports=ExportSettings())


def _with_attacker(config: ScenarioConfig, attach_to: str = "sw_f1s1",
                   bandwidth_mbps: float = 1000.0) -> ScenarioConfig:
    config.ict_nodes.append(IctNodeConfig(
        "attacker", "host", ip=ATTACKER_IP, prefix_len=16,
        gateway=ROUTER_FIELD_IP, app="attacker"))
    config.ict_links.append(IctLinkConfig(
        "attacker", attach_to, bandwidth_mbps=bandwidth_mbps))
    return config


def reference_physical(seed: int = 1) -> ScenarioConfig:
    """Destroy substation f2s9: its RTU, bus bar and incident lines.

    Cutting here strands the two feeder-2 plants behind the break, so the
    severed line was carrying most of their infeed beforehand. The
    adjacent substation f2s8 is instrumented with flow telemetry on the
    line into the doomed neighbor, so the control center observes the
    current collapse directly.
    """
    config = reference(seed, duration_s=120.0)
    config.name = "reference-physical"
    for rtu in config.rtus:
        if rtu.host == "rtu_f2s8":
            rtu.points.append(_mon(rtu.coa, 7, "ln_f2_9", "p_from_mw"))
            rtu.points.append(_mon(rtu.coa, 8, "ln_f2_9", "q_from_mvar"))
    config.attacks = [PhysicalPlan(
        attacker="", start_s=50.0,
        ict_nodes=["rtu_f2s9"],
        grid_elements=["f2s9", "ln_f2_9", "ln_f2_10"])]
    config.exports.pcap = ["mtu"]
    return config


def reference_flood(seed: int = 1) -> ScenarioConfig:
    """SYN-flood T1/T2 from the feeder-1 aggregation switch."""
    config = reference(seed, duration_s=110.0)
    config.name = "reference-flood"
    _with_attacker(config)
    # long enough that every starved connection runs out its ack timeout
    # while the bottleneck is still saturated
    config.attacks = [SynFloodPlan(
        attacker="attacker", start_s=30.0, duration_s=35.0,
        targets=list(FLOOD_TARGETS))]
    # demand drifts during the attack so stale telemetry becomes wrong
    for feeder in SEGMENT_A_FEEDERS:
        for sub in range(1, FEEDER_SUBS[feeder - 1] + 1):
            if _sub_kind(feeder, sub) in ("head", "load"):
                config.profiles.append(LoadProfile(
                    f"load_f{feeder}s{sub}",
                    [(0.0, 1.0), (35.0, 1.1), (40.0, 1.2), (45.0, 1.3),
                     (50.0, 1.4)]))
    return config


def reference_arpspoof(seed: int = 1) -> ScenarioConfig:
    """Blackhole MITM between the router and RTU T1."""
    config = reference(seed, duration_s=150.0)
    config.name = "reference-arpspoof"
    _with_attacker(config, attach_to="sw_f5s7")
    config.attacks = [ArpSpoofPlan(
        attacker="attacker", start_s=30.0, duration_s=40.0,
        victim_a=ROUTER_FIELD_IP, victim_b=ARP_VICTIM, mode="blackhole")]
    return config


def reference_industroyer(seed: int = 1, whitelist: bool = False) -> ScenarioConfig:
    config = reference(seed, duration_s=150.0)
    config.name = "reference-industroyer" + ("-whitelist" if whitelist else "")
    _with_attacker(config, attach_to="sw_central")
    config.attacks = [IndustroyerPlan(
        attacker="attacker", start_s=20.0, duration_s=120.0, interval_s=3.0,
        targets=[
            IndustroyerTarget("10.0.100.1", 1001, [30, 31, 32, 33, 34]),
            IndustroyerTarget("10.0.100.2", 1002, [30, 31, 32, 33, 34, 35]),
        ])]
    if whitelist:
        for rtu in config.rtus:
            if rtu.host in ("rtu_c1", "rtu_c2"):
                rtu.whitelist = [MTU_IP]
    return config


FDI_START_S = 90.0
FDI_INJECT_S = 150.0


def reference_fdi(seed: int = 1) -> ScenarioConfig:
    config = reference(seed, duration_s=300.0)
    config.name = "reference-fdi"
    _with_attacker(config, attach_to="sw_f5s9")
    freeze = []
    for feeder, sub in FDI_TARGETS:
        coa = feeder * 100 + sub
        freeze += [(coa, 1), (coa, 2), (coa, 3)]  # vm and plant P/Q
    config.attacks = [FdiPlan(
        attacker="attacker", start_s=FDI_START_S,
        duration_s=300.0 - FDI_START_S,
        gateway_ip=ROUTER_FIELD_IP,
        victim_ips=[f"10.0.{f}.{s}" for f, s in FDI_VICTIM_SUBS],
        record_s=FDI_INJECT_S - FDI_START_S,
        injections=[
            FdiInjection(512, 10, 0.0),  # D2 plant to zero infeed
            FdiInjection(513, 10, 0.0),  # D3 plant to zero infeed
        ],
        freeze=freeze,
        suppress_coas=[512, 513])]
    # a safety device at every circuit breaker, limits set generously so
    # nothing trips during the recording phase
    config.relays = [
        ProtectionRelay(breaker, v_min_pu=0.5, v_max_pu=1.3,
                        i_max_ka=0.7, dwell_s=0.5)
        for breaker in sorted(config.grid.switches)
    ]
    return config


REGISTRY = {
    "lab-replica": lab_replica,
    "reference": reference,
    "reference-physical": reference_physical,
    "reference-flood": reference_flood,
    "reference-arpspoof": reference_arpspoof,
    "reference-industroyer": reference_industroyer,
    "reference-industroyer-whitelist": lambda seed=1: reference_industroyer(
        seed, whitelist=True),
    "reference-fdi": reference_fdi,
    "benchmark-2": lambda seed=1: benchmark(2, seed),
    "benchmark-4": lambda seed=1: benchmark(4, seed),
}
