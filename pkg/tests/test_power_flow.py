"""Power flow: admittance construction and Newton-Raphson solve.

The two-bus case is checked against the closed-form voltage equation
(independent oracle, derived by hand): with V1 = 1 pu and a purely
reactive line Z = jX feeding a constant load P + jQ,

    vm2^2 = (1 - 2QX + sqrt((1 - 2QX)^2 - 4X^2(P^2+Q^2))) / 2
    sin(theta2) = -P X / vm2
"""

import math

import pytest

from voltnet.grid import Bus, Change, GridModel, Injection, Line, Switch, Transformer
from voltnet.powerflow import (
    DegenerateBranchError, S_BASE_MVA, build_admittance, solve_power_flow,
)


def two_bus_oracle(x_pu: float, p_pu: float, q_pu: float):
    """Closed-form two-bus solution for a slack at 1.0 pu and Z = jX."""
    disc = (1.0 - 2.0 * q_pu * x_pu) ** 2 - 4.0 * x_pu ** 2 * (p_pu ** 2 + q_pu ** 2)
    vm2 = math.sqrt((1.0 - 2.0 * q_pu * x_pu + math.sqrt(disc)) / 2.0)
    theta = math.asin(-p_pu * x_pu / vm2)
    return vm2, theta


def make_two_bus(x_pu=0.1, p_mw=0.5, q_mvar=0.0, r_pu=0.0) -> GridModel:
    vn = 20.0
    z_base = vn * vn / S_BASE_MVA
    m = GridModel()
    m.add(Bus("b1", vn_kv=vn))
    m.add(Bus("b2", vn_kv=vn))
    m.add(Line("l1", "b1", "b2", length_km=1.0,
               r_ohm_per_km=r_pu * z_base, x_ohm_per_km=x_pu * z_base,
               max_i_ka=0.5))
    m.add(Injection("grid", "b1", kind="ext_grid", vm_pu=1.0))
    m.add(Injection("load", "b2", kind="load", p_mw=p_mw, q_mvar=q_mvar))
    return m


class TestAdmittance:
    def test_single_line_series_admittance(self):
        # R=0, X=0.1 pu, no shunt: off-diagonal must be -1/(j 0.1)
        m = make_two_bus()
        adm = build_admittance(m)
        y = adm.ybus.toarray()
        expected = -1.0 / 0.1j
        assert y[0, 1] == pytest.approx(expected, abs=1e-12)
        assert y[1, 0] == pytest.approx(expected, abs=1e-12)
        assert y[0, 0] == pytest.approx(-expected, abs=1e-12)

    def test_open_branch_switch_removes_branch(self):
        m = make_two_bus()
        m.add(Switch("sw", element="l1", closed=False))
        adm = build_admittance(m)
        assert "l1" not in adm.branch_adm
        assert adm.ybus.nnz == 0

    def test_transformer_short_circuit_formula(self):
        # Hand calculation from the vk/vkr definitions, on the 1 MVA base:
        #   z = vk%/100 * 1/sn,  r = vkr%/100 * 1/sn,  x = sqrt(z^2 - r^2)
        sn, vk, vkr = 0.63, 6.0, 0.5
        z = vk / 100.0 / sn          # 0.0952380952...
        r = vkr / 100.0 / sn         # 0.0079365079...
        x = math.sqrt(z * z - r * r)
        y_hand = 1.0 / complex(r, x)

        m = GridModel()
        m.add(Bus("hv", vn_kv=20.0))
        m.add(Bus("lv", vn_kv=0.4))
        m.add(Transformer("t1", "hv", "lv", sn_mva=sn, vk_percent=vk,
                          vkr_percent=vkr))
        m.add(Injection("grid", "hv", kind="ext_grid"))
        adm = build_admittance(m)
        ba = adm.branch_adm["t1"]
        assert ba.ytt == pytest.approx(y_hand, rel=1e-12)
        assert ba.yft == pytest.approx(-y_hand, rel=1e-12)
        assert ba.yff == pytest.approx(y_hand, rel=1e-12)  # tap_pos = 0

    def test_transformer_tap_on_hv_side(self):
        m = GridModel()
        m.add(Bus("hv", vn_kv=20.0))
        m.add(Bus("lv", vn_kv=0.4))
        m.add(Transformer("t1", "hv", "lv", sn_mva=0.63, vk_percent=6.0,
                          vkr_percent=0.5, tap_pos=2, tap_step_percent=2.5))
        m.add(Injection("grid", "hv", kind="ext_grid"))
        ba = build_admittance(m).branch_adm["t1"]
        tap = 1.05
        assert ba.yff == pytest.approx(ba.ytt / tap ** 2, rel=1e-12)
        assert ba.yft == pytest.approx(-ba.ytt / tap, rel=1e-12)

    def test_zero_impedance_branch_is_degenerate(self):
        m = GridModel()
        m.add(Bus("b1", vn_kv=20.0))
        m.add(Bus("b2", vn_kv=20.0))
        m.add(Line("l1", "b1", "b2", length_km=1.0, r_ohm_per_km=0.0,
                   x_ohm_per_km=0.0))
        m.add(Injection("grid", "b1", kind="ext_grid"))
        with pytest.raises(DegenerateBranchError):
            build_admittance(m)

    def test_line_shunt_charging(self):
        m = make_two_bus()
        m.lines["l1"].c_nf_per_km = 250.0
        adm = build_admittance(m)
        b_half = adm.branch_adm["l1"].yff + adm.branch_adm["l1"].yft
        z_base = 400.0
        expected = 0.5 * 2 * math.pi * 50.0 * 250e-9 * z_base
        assert b_half.imag == pytest.approx(expected, rel=1e-12)
        assert b_half.real == pytest.approx(0.0, abs=1e-15)


class TestSolve:
    def test_slack_only_flat(self):
        m = GridModel()
        m.add(Bus("b1", vn_kv=20.0))
        m.add(Injection("grid", "b1", kind="ext_grid", vm_pu=1.0))
        res = solve_power_flow(m)
        assert res.converged
        assert res.vm_pu["b1"] == 1.0
        assert res.va_deg["b1"] == 0.0

    def test_no_load_network_is_flat_with_zero_flows(self):
        m = make_two_bus(p_mw=0.0)
        res = solve_power_flow(m)
        assert res.converged
        assert res.vm_pu["b2"] == pytest.approx(1.0, abs=1e-9)
        assert res.flows["l1"].p_from_mw == pytest.approx(0.0, abs=1e-9)
        assert res.flows["l1"].loading_percent == pytest.approx(0.0, abs=1e-6)

    def test_two_bus_matches_analytic_oracle(self):
        x_pu, p_mw = 0.1, 0.5
        m = make_two_bus(x_pu=x_pu, p_mw=p_mw)
        res = solve_power_flow(m)
        vm2, theta = two_bus_oracle(x_pu, p_mw / S_BASE_MVA, 0.0)
        assert res.converged
        assert res.vm_pu["b2"] == pytest.approx(vm2, abs=1e-8)
        assert res.va_deg["b2"] == pytest.approx(math.degrees(theta), abs=1e-8)

    def test_two_bus_with_reactive_load(self):
        x_pu, p_mw, q_mvar = 0.08, 0.6, 0.2
        m = make_two_bus(x_pu=x_pu, p_mw=p_mw, q_mvar=q_mvar)
        res = solve_power_flow(m)
        vm2, theta = two_bus_oracle(x_pu, p_mw, q_mvar)
        assert res.vm_pu["b2"] == pytest.approx(vm2, abs=1e-8)
        assert res.va_deg["b2"] == pytest.approx(math.degrees(theta), abs=1e-8)

    def test_two_bus_branch_current_matches_oracle(self):
        x_pu, p_mw = 0.1, 0.5
        m = make_two_bus(x_pu=x_pu, p_mw=p_mw)
        res = solve_power_flow(m)
        vm2, _ = two_bus_oracle(x_pu, p_mw, 0.0)
        i_ka = (p_mw / vm2) / (math.sqrt(3.0) * vm2 * 20.0) * vm2
        # |S_to| = P at the load end; I = |S| / (sqrt(3) * vm * vn)
        assert res.flows["l1"].i_to_ka == pytest.approx(i_ka, abs=1e-9)
        assert res.flows["l1"].loading_percent == pytest.approx(
            i_ka / 0.5 * 100.0, abs=1e-6)

    def test_power_balance_within_tolerance(self):
        m = make_two_bus(x_pu=0.1, p_mw=0.5, r_pu=0.05)
        res = solve_power_flow(m)
        # generation - load - losses per island
        slack_p = res.p_mw["grid"]
        losses = res.flows["l1"].losses_mw
        assert slack_p - 0.5 - losses == pytest.approx(0.0, abs=1e-6)
        assert all(abs(b) <= 1e-6 for b in res.island_balance_mw())

    def test_zero_resistance_means_zero_losses(self):
        m = make_two_bus(x_pu=0.1, p_mw=0.5, r_pu=0.0)
        res = solve_power_flow(m)
        assert res.flows["l1"].losses_mw == pytest.approx(0.0, abs=1e-9)

    def test_losses_nonnegative_with_resistance(self):
        m = make_two_bus(x_pu=0.1, p_mw=0.5, r_pu=0.08)
        res = solve_power_flow(m)
        assert res.flows["l1"].losses_mw >= 0.0

    def test_resolve_is_bitwise_identical(self):
        m = make_two_bus(x_pu=0.07, p_mw=0.45, q_mvar=0.11, r_pu=0.03)
        a = solve_power_flow(m).electrical_state()
        b = solve_power_flow(m).electrical_state()
        assert a == b  # exact equality, not approx

    def test_bus_order_invariance(self):
        def build(order):
            m = GridModel()
            for bid in order:
                m.add(Bus(bid, vn_kv=20.0))
            m.add(Line("l1", "b1", "b2", 1.0, 8.0, 40.0, max_i_ka=0.4))
            m.add(Line("l2", "b2", "b3", 1.0, 8.0, 40.0, max_i_ka=0.4))
            m.add(Injection("grid", "b1", kind="ext_grid", vm_pu=1.02))
            m.add(Injection("ld2", "b2", kind="load", p_mw=0.3, q_mvar=0.1))
            m.add(Injection("ld3", "b3", kind="load", p_mw=0.2))
            return solve_power_flow(m)
        r1 = build(["b1", "b2", "b3"])
        r2 = build(["b3", "b1", "b2"])
        for bus in ("b1", "b2", "b3"):
            assert r1.vm_pu[bus] == pytest.approx(r2.vm_pu[bus], abs=1e-12)
            assert r1.va_deg[bus] == pytest.approx(r2.va_deg[bus], abs=1e-12)

    def test_dead_island_zeroed_not_errored(self):
        m = make_two_bus()
        m.add(Switch("sw", element="l1", closed=False))
        res = solve_power_flow(m)
        assert res.vm_pu["b2"] == 0.0
        assert res.flows["l1"].i_ka == 0.0
        assert res.p_mw["load"] == 0.0
        dead = [i for i in res.islands if i.dead]
        assert len(dead) == 1

    def test_disconnected_line_current_is_exactly_zero(self):
        m = make_two_bus()
        m.apply_change(Change("l1", "in_service", False))
        res = solve_power_flow(m)
        assert res.flows["l1"].i_ka == 0.0

    def test_nonconvergence_flagged(self):
        # impossible load far beyond the maximum power transfer
        m = make_two_bus(x_pu=0.5, p_mw=50.0)
        res = solve_power_flow(m)
        assert not res.converged
        assert any(not i.converged for i in res.islands)

    def test_transformer_feeder_solves(self):
        m = GridModel()
        m.add(Bus("hv", vn_kv=20.0))
        m.add(Bus("lv", vn_kv=0.4))
        m.add(Transformer("t1", "hv", "lv", sn_mva=0.63, vk_percent=6.0,
                          vkr_percent=1.0))
        m.add(Injection("grid", "hv", kind="ext_grid", vm_pu=1.0))
        m.add(Injection("ld", "lv", kind="load", p_mw=0.3, q_mvar=0.1))
        res = solve_power_flow(m)
        assert res.converged
        assert 0.9 < res.vm_pu["lv"] < 1.0
        assert res.flows["t1"].p_from_mw == pytest.approx(
            0.3 + res.flows["t1"].losses_mw, abs=1e-9)

    def test_closed_coupler_merges_buses_electrically(self):
        m = make_two_bus()
        m.add(Bus("b2b", vn_kv=20.0))
        m.add(Switch("cpl", element=("b2", "b2b")))
        m.add(Injection("load_b", "b2b", kind="load", p_mw=0.2))
        res = solve_power_flow(m)
        assert res.converged
        # tied buses share one electrical node
        assert res.vm_pu["b2"] == res.vm_pu["b2b"]
        vm_joint, _ = two_bus_oracle(0.1, 0.7, 0.0)  # combined load
        assert res.vm_pu["b2"] == pytest.approx(vm_joint, abs=1e-8)
        # opening the coupler strands the second load
        m.apply_change(Change("cpl", "closed", False))
        res2 = solve_power_flow(m)
        assert res2.vm_pu["b2b"] == 0.0
        vm_single, _ = two_bus_oracle(0.1, 0.5, 0.0)
        assert res2.vm_pu["b2"] == pytest.approx(vm_single, abs=1e-8)

    def test_pv_bus_holds_voltage(self):
        m = GridModel()
        m.add(Bus("b1", vn_kv=20.0))
        m.add(Bus("b2", vn_kv=20.0, kind="PV"))
        m.add(Line("l1", "b1", "b2", 1.0, 4.0, 40.0, max_i_ka=0.4))
        m.add(Injection("grid", "b1", kind="ext_grid", vm_pu=1.0))
        m.add(Injection("gen", "b2", kind="sgen", p_mw=0.4, vm_pu=1.01))
        res = solve_power_flow(m)
        assert res.converged
        assert res.vm_pu["b2"] == pytest.approx(1.01, abs=1e-8)

    def test_injection_override_used_for_solve(self):
        m = make_two_bus(p_mw=0.5)
        res = solve_power_flow(m, injection_overrides={"load": (0.25, 0.0)})
        vm2, _ = two_bus_oracle(0.1, 0.25, 0.0)
        assert res.vm_pu["b2"] == pytest.approx(vm2, abs=1e-8)
        assert res.p_mw["load"] == 0.25
