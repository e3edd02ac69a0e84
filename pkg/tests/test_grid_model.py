"""Grid model: validation, islanding, mutation semantics."""

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from voltnet.grid import (
    Bus, Change, GridModel, Injection, Line, Switch, UnknownTargetError,
)


def two_bus_model() -> GridModel:
    m = GridModel()
    m.add(Bus("b1", vn_kv=20.0))
    m.add(Bus("b2", vn_kv=20.0))
    m.add(Line("l1", "b1", "b2", length_km=1.0, r_ohm_per_km=0.1,
               x_ohm_per_km=0.4, max_i_ka=0.4))
    m.add(Injection("grid", "b1", kind="ext_grid", vm_pu=1.0))
    m.add(Injection("load1", "b2", kind="load", p_mw=0.5))
    return m


def radial_model(n_feeders=2, per_feeder=3) -> GridModel:
    m = GridModel()
    m.add(Bus("mv", vn_kv=20.0))
    m.add(Injection("grid", "mv", kind="ext_grid", vm_pu=1.0))
    for f in range(n_feeders):
        prev = "mv"
        for k in range(per_feeder):
            bus = f"b{f}_{k}"
            m.add(Bus(bus, vn_kv=20.0))
            line = f"l{f}_{k}"
            m.add(Line(line, prev, bus, length_km=0.3, r_ohm_per_km=0.2,
                       x_ohm_per_km=0.1, max_i_ka=0.4))
            m.add(Switch(f"sw_{line}", element=line))
            m.add(Injection(f"load{f}_{k}", bus, kind="load", p_mw=0.1))
            prev = bus
    return m


class TestValidate:
    def test_well_formed_model_has_no_violations(self):
        assert two_bus_model().validate() == []

    def test_self_loop_line(self):
        m = two_bus_model()
        m.add(Line("bad", "b2", "b2", length_km=1.0, r_ohm_per_km=0.1,
                   x_ohm_per_km=0.1))
        codes = {v.code for v in m.validate()}
        assert "self-loop" in codes

    def test_island_without_slack_flagged(self):
        m = two_bus_model()
        m.add(Bus("b3", vn_kv=20.0))  # disconnected, no slack
        codes = {v.code for v in m.validate()}
        assert "unsolvable-island" in codes

    def test_dangling_switch_reference(self):
        m = two_bus_model()
        m.add(Switch("sw", element="no-such-line"))
        assert any(v.code == "dangling-ref" for v in m.validate())

    def test_setpoint_outside_limits(self):
        m = two_bus_model()
        m.add(Injection("gen", "b2", kind="sgen", p_mw=2.0, max_p_mw=1.0,
                        min_p_mw=0.0))
        assert any(v.code == "setpoint-high" for v in m.validate())


class TestIslands:
    def test_connected_radial_grid_is_one_island(self):
        m = radial_model()
        islands = m.islands()
        assert len(islands) == 1
        assert not islands[0].dead

    def test_open_switch_cuts_dead_island(self):
        m = radial_model(n_feeders=1, per_feeder=4)
        m.apply_change(Change("sw_l0_0", "closed", False))
        islands = m.islands()
        assert len(islands) == 2
        dead = [i for i in islands if i.dead]
        assert len(dead) == 1
        assert dead[0].buses == frozenset({"b0_0", "b0_1", "b0_2", "b0_3"})

    def test_breaker_sweep_leaves_feeders_dead(self):
        # all feeder-head breakers opened: every feeder becomes a dead island
        m = radial_model(n_feeders=3, per_feeder=2)
        for f in range(3):
            m.apply_change(Change(f"sw_l{f}_0", "closed", False))
        islands = m.islands()
        assert sum(1 for i in islands if i.dead) == 3
        live = [i for i in islands if not i.dead]
        assert len(live) == 1 and live[0].buses == frozenset({"mv"})

    def test_coupler_merges_buses(self):
        m = two_bus_model()
        m.add(Bus("b3", vn_kv=20.0))
        m.add(Switch("cpl", element=("b2", "b3")))
        assert len(m.islands()) == 1
        m.apply_change(Change("cpl", "closed", False))
        assert len(m.islands()) == 2

    def test_partition_covers_all_in_service_buses(self):
        m = radial_model()
        m.apply_change(Change("sw_l1_1", "closed", False))
        islands = m.islands()
        covered = set()
        for isl in islands:
            assert not (covered & isl.buses)
            covered |= isl.buses
        assert covered == {b.id for b in m.buses.values() if b.in_service}


class TestApplyChange:
    def test_revision_increments_and_audits(self):
        m = two_bus_model()
        rev0 = m.revision
        rev = m.apply_change(Change("load1", "p_mw", 0.4), t_ns=1000)
        assert rev == rev0 + 1
        entry = m.audit_log[-1]
        assert (entry.target, entry.attr, entry.new) == ("load1", "p_mw", 0.4)
        assert entry.t_ns == 1000

    def test_revision_strictly_monotonic(self):
        m = radial_model()
        seen = []
        for f in range(2):
            seen.append(m.apply_change(Change(f"sw_l{f}_0", "closed", False)))
            seen.append(m.apply_change(Change(f"sw_l{f}_0", "closed", True)))
        assert seen == sorted(set(seen))

    def test_setpoint_clamped_and_flagged(self):
        m = two_bus_model()
        m.add(Injection("gen", "b2", kind="sgen", p_mw=0.5, max_p_mw=1.0,
                        min_p_mw=0.1))
        m.apply_change(Change("gen", "p_mw", 5.0))
        assert m.injections["gen"].p_mw == 1.0
        assert m.audit_log[-1].flags == ("clamped",)
        m.apply_change(Change("gen", "p_mw", -2.0))
        assert m.injections["gen"].p_mw == 0.1

    def test_unknown_target_raises(self):
        m = two_bus_model()
        with pytest.raises(UnknownTargetError):
            m.apply_change(Change("nope", "p_mw", 1.0))

    def test_inverse_change_restores_model(self):
        m = radial_model()
        before = {sid: sw.closed for sid, sw in m.switches.items()}
        p_before = m.injections["load0_1"].p_mw
        m.apply_change(Change("sw_l0_1", "closed", False))
        m.apply_change(Change("load0_1", "p_mw", 0.7))
        m.apply_change(Change("load0_1", "p_mw", p_before))
        m.apply_change(Change("sw_l0_1", "closed", True))
        assert {sid: sw.closed for sid, sw in m.switches.items()} == before
        assert m.injections["load0_1"].p_mw == p_before

    def test_snapshot_is_independent(self):
        m = two_bus_model()
        snap = m.snapshot()
        m.apply_change(Change("load1", "p_mw", 0.9))
        assert snap.injections["load1"].p_mw == 0.5


@settings(max_examples=60, deadline=None)
@given(
    edges=st.lists(
        st.tuples(st.integers(0, 9), st.integers(0, 9)), max_size=16),
    open_switches=st.sets(st.integers(0, 15)),
)
def test_islands_partition_property(edges, open_switches):
    """islands() is a disjoint cover of in-service buses, any topology."""
    m = GridModel()
    for i in range(10):
        m.add(Bus(f"b{i}", vn_kv=10.0))
    m.add(Injection("grid", "b0", kind="ext_grid"))
    for k, (a, b) in enumerate(edges):
        if a == b:
            continue
        m.add(Line(f"l{k}", f"b{a}", f"b{b}", length_km=1.0,
                   r_ohm_per_km=0.1, x_ohm_per_km=0.1))
        m.add(Switch(f"sw{k}", element=f"l{k}", closed=k not in open_switches))
    islands = m.islands()
    covered: set[str] = set()
    for isl in islands:
        assert not (covered & isl.buses), "islands must be disjoint"
        covered |= isl.buses
    assert covered == set(m.buses)
