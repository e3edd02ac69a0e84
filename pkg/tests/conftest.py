"""Shared grid fixtures and measurement-set helpers."""

from voltnet.estimation import (
    KIND_P_FLOW, KIND_P_INJ, KIND_Q_FLOW, KIND_Q_INJ, KIND_VM, Measurement,
)
from voltnet.grid import Bus, GridModel, Injection, Line


def five_bus_model() -> GridModel:
    """Slack feeding a small meshed 20 kV system with loads and one generator."""
    m = GridModel()
    for i in range(1, 6):
        m.add(Bus(f"b{i}", vn_kv=20.0))
    lines = [
        ("l12", "b1", "b2"), ("l23", "b2", "b3"), ("l34", "b3", "b4"),
        ("l45", "b4", "b5"), ("l25", "b2", "b5"),
    ]
    for lid, a, b in lines:
        m.add(Line(lid, a, b, length_km=0.8, r_ohm_per_km=0.4,
                   x_ohm_per_km=0.35, c_nf_per_km=200.0, max_i_ka=0.3))
    m.add(Injection("grid", "b1", kind="ext_grid", vm_pu=1.02))
    m.add(Injection("ld2", "b2", kind="load", p_mw=0.8, q_mvar=0.25))
    m.add(Injection("ld3", "b3", kind="load", p_mw=0.5, q_mvar=0.15))
    m.add(Injection("ld4", "b4", kind="load", p_mw=0.6, q_mvar=0.20))
    m.add(Injection("gen5", "b5", kind="sgen", p_mw=0.9, q_mvar=0.30,
                    max_p_mw=1.2, min_p_mw=0.0))
    return m


def full_measurement_set(model, result, sigma_vm=0.005, sigma_pq=0.01,
                         with_flows=False, t_ns=0):
    """Complete measurement set read off a power-flow solution."""
    out = []
    for bus in model.buses.values():
        if not bus.in_service or result.vm_pu[bus.id] == 0.0:
            continue
        out.append(Measurement(KIND_VM, bus.id, result.vm_pu[bus.id],
                               sigma_vm, received_ns=t_ns))
    per_bus_p: dict[str, float] = {}
    per_bus_q: dict[str, float] = {}
    for inj_id, p in result.p_mw.items():
        bus = result._inj_bus[inj_id]
        sign = result._inj_sign[inj_id]
        per_bus_p[bus] = per_bus_p.get(bus, 0.0) + sign * p
        per_bus_q[bus] = per_bus_q.get(bus, 0.0) + sign * result.q_mvar[inj_id]
    for bus in sorted(per_bus_p):
        if result.vm_pu[bus] == 0.0:
            continue
        out.append(Measurement(KIND_P_INJ, bus, per_bus_p[bus], sigma_pq,
                               received_ns=t_ns))
        out.append(Measurement(KIND_Q_INJ, bus, per_bus_q[bus], sigma_pq,
                               received_ns=t_ns))
    if with_flows:
        for bid, flow in result.flows.items():
            if flow.i_ka == 0.0:
                continue
            out.append(Measurement(KIND_P_FLOW, bid, flow.p_from_mw, sigma_pq,
                                   received_ns=t_ns))
            out.append(Measurement(KIND_Q_FLOW, bid, flow.q_from_mvar, sigma_pq,
                                   received_ns=t_ns))
    return out
