"""State estimation: exactness, noise behavior, policies, observability."""

import math
import random

import pytest

from conftest import five_bus_model, full_measurement_set
from voltnet.estimation import (
    KIND_VM, Measurement, SePolicy, estimate, estimated_injections,
    filter_by_policy, zero_injection_pseudos,
)
from voltnet.grid import Bus, GridModel, Injection, Line
from voltnet.powerflow import solve_power_flow

NS = 1_000_000_000


def weighted_ssr(measurements, values):
    """Independent objective computation: sum(((z - h)/sigma)^2)."""
    return sum(((m.value - values[i]) / m.sigma) ** 2
               for i, m in enumerate(measurements))


class TestExactRecovery:
    def test_noiseless_complete_set_reproduces_state(self):
        model = five_bus_model()
        result = solve_power_flow(model)
        assert result.converged
        ms = full_measurement_set(model, result, with_flows=True)
        est = estimate(model, ms)
        assert est.all_observable
        for bus in model.buses:
            assert est.vm_pu[bus] == pytest.approx(result.vm_pu[bus], abs=1e-6)
            assert est.va_deg[bus] == pytest.approx(result.va_deg[bus], abs=1e-6)

    def test_estimated_injections_match_solution(self):
        model = five_bus_model()
        result = solve_power_flow(model)
        est = estimate(model, full_measurement_set(model, result))
        inj = estimated_injections(model, est)
        # bus 3 carries only ld3: estimated net injection = -0.5 MW
        assert inj["b3"][0] == pytest.approx(-0.5, abs=1e-4)
        assert inj["b5"][0] == pytest.approx(0.9, abs=1e-4)

    def test_objective_not_above_flat_start(self):
        model = five_bus_model()
        result = solve_power_flow(model)
        rng = random.Random(11)
        ms = [
            Measurement(m.kind, m.element, m.value * (1 + rng.gauss(0, 0.005)),
                        m.sigma, side=m.side)
            for m in full_measurement_set(model, result)
        ]
        est = estimate(model, ms)
        flat_values = []
        for m in ms:
            flat_values.append(1.0 if m.kind == KIND_VM else 0.0)
        flat_obj = weighted_ssr(ms, flat_values)
        assert est.objective <= flat_obj

    def test_returned_objective_matches_residuals(self):
        model = five_bus_model()
        result = solve_power_flow(model)
        rng = random.Random(5)
        ms = [
            Measurement(m.kind, m.element, m.value + rng.gauss(0, m.sigma),
                        m.sigma, side=m.side)
            for m in full_measurement_set(model, result, with_flows=True)
        ]
        est = estimate(model, ms)
        recomputed = sum((r / m.sigma) ** 2 for m, r in est.residuals)
        assert est.objective == pytest.approx(recomputed, rel=1e-9)


class TestNoise:
    def test_monte_carlo_three_sigma(self):
        # 0.5% relative noise, 100 seeds: estimates stay within 3 sigma of
        # the true state (WLS averages, so the margin is wide)
        model = five_bus_model()
        result = solve_power_flow(model)
        base = full_measurement_set(model, result, with_flows=True)
        outliers = 0
        for seed in range(100):
            rng = random.Random(1000 + seed)
            noisy = [
                Measurement(m.kind, m.element,
                            m.value * (1 + rng.gauss(0, 0.005)),
                            m.sigma, side=m.side)
                for m in base
            ]
            est = estimate(model, noisy)
            assert est.all_observable
            for bus in model.buses:
                err = abs(est.vm_pu[bus] - result.vm_pu[bus])
                if err > 3 * 0.005 * result.vm_pu[bus]:
                    outliers += 1
        assert outliers == 0

    def test_permutation_invariance(self):
        model = five_bus_model()
        result = solve_power_flow(model)
        rng = random.Random(2)
        ms = [
            Measurement(m.kind, m.element, m.value + rng.gauss(0, m.sigma),
                        m.sigma, side=m.side)
            for m in full_measurement_set(model, result, with_flows=True)
        ]
        est1 = estimate(model, ms)
        shuffled = ms[:]
        random.Random(9).shuffle(shuffled)
        est2 = estimate(model, shuffled)
        for bus in model.buses:
            assert est1.vm_pu[bus] == pytest.approx(est2.vm_pu[bus], abs=1e-9)

    def test_removing_measurement_relaxes_fit(self):
        model = five_bus_model()
        result = solve_power_flow(model)
        rng = random.Random(3)
        ms = [
            Measurement(m.kind, m.element, m.value + rng.gauss(0, m.sigma),
                        m.sigma, side=m.side)
            for m in full_measurement_set(model, result, with_flows=True)
        ]
        est_full = estimate(model, ms)
        res_by_m = {id(m): r for m, r in est_full.residuals}
        removed = ms[-1]
        remaining = ms[:-1]
        old_obj_on_remaining = sum(
            (res_by_m[id(m)] / m.sigma) ** 2 for m in remaining)
        est_rem = estimate(model, remaining)
        assert est_rem.objective <= old_obj_on_remaining + 1e-9


class TestPolicies:
    def fresh_and_stale(self):
        fresh = Measurement(KIND_VM, "b1", 1.0, 0.01, received_ns=100 * NS)
        stale = Measurement(KIND_VM, "b2", 1.0, 0.01, received_ns=0)
        return [fresh, stale]

    def test_all_fresh_identical_under_both(self):
        ms = [Measurement(KIND_VM, "b1", 1.0, 0.01, received_ns=99 * NS)]
        t = 100 * NS
        assert filter_by_policy(ms, t, SePolicy("default")) == ms
        assert filter_by_policy(ms, t, SePolicy("decay", 6.0)) == ms

    def test_stale_point_dropped_only_by_decay(self):
        ms = self.fresh_and_stale()
        t = 100 * NS
        kept_default = filter_by_policy(ms, t, SePolicy("default"))
        kept_decay = filter_by_policy(ms, t, SePolicy("decay", 6.0))
        assert len(kept_default) == 2
        assert [m.element for m in kept_decay] == ["b1"]

    def test_decay_boundary(self):
        m = Measurement(KIND_VM, "b1", 1.0, 0.01, received_ns=94 * NS)
        assert filter_by_policy([m], 100 * NS, SePolicy("decay", 6.0)) == [m]
        assert filter_by_policy([m], 100 * NS + 1, SePolicy("decay", 6.0)) == []


class TestObservability:
    def test_too_few_measurements_flagged(self):
        model = five_bus_model()
        result = solve_power_flow(model)
        ms = full_measurement_set(model, result)[:3]
        est = estimate(model, ms)
        assert not est.all_observable
        assert math.isnan(est.vm_pu["b3"])

    def test_dead_island_flagged_not_extrapolated(self):
        model = five_bus_model()
        model.add(Bus("b9", vn_kv=20.0))
        model.add(Injection("ld9", "b9", kind="load", p_mw=0.1))
        result = solve_power_flow(model)
        ms = full_measurement_set(model, result)
        est = estimate(model, ms)
        flags = {tuple(sorted(i.buses)): i.observable for i in est.islands}
        assert flags[("b9",)] is False
        assert math.isnan(est.vm_pu["b9"])

    def test_zero_injection_pseudos_restore_observability(self):
        m = GridModel()
        for i in range(1, 4):
            m.add(Bus(f"b{i}", vn_kv=20.0))
        m.add(Line("l12", "b1", "b2", 0.5, 0.3, 0.3, max_i_ka=0.4))
        m.add(Line("l23", "b2", "b3", 0.5, 0.3, 0.3, max_i_ka=0.4))
        m.add(Injection("grid", "b1", kind="ext_grid", vm_pu=1.0))
        m.add(Injection("ld3", "b3", kind="load", p_mw=0.2, q_mvar=0.05))
        result = solve_power_flow(m)
        # measurements: everything at b1, just the magnitude at b3; the b2
        # zero-injection constraint is what makes the chain solvable
        ms = [x for x in full_measurement_set(m, result)
              if x.element == "b1"
              or (x.element == "b3" and x.kind == KIND_VM)]
        assert not estimate(m, ms).all_observable
        pseudos = zero_injection_pseudos(m)
        assert {p.element for p in pseudos} == {"b2"}
        est = estimate(m, ms + pseudos)
        assert est.all_observable
        assert est.vm_pu["b2"] == pytest.approx(result.vm_pu["b2"], abs=1e-5)
