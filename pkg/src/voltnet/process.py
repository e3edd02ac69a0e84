"""Between-step grid behaviors: load profiles, Gaussian noise, relays.

Everything here is driven synchronously by the coordinator between
simulation steps and is deterministic given the scenario seed: every
consumer of randomness pulls from a named stream derived from the root
seed, so identical runs draw identical sequences.
"""

from __future__ import annotations

import hashlib
import random
from dataclasses import dataclass
from pathlib import Path

from .grid import Change, GridModel
from .powerflow import PowerFlowResult

NS_PER_S = 1_000_000_000


class RngStreams:
    """Named, independently seeded random streams from one root seed."""

    def __init__(self, root_seed: int):
        self.root_seed = int(root_seed)
        self._streams: dict[str, random.Random] = {}

    def get(self, name: str) -> random.Random:
        if name not in self._streams:
            digest = hashlib.sha256(
                f"{self.root_seed}:{name}".encode()).digest()
            self._streams[name] = random.Random(int.from_bytes(digest[:8], "big"))
        return self._streams[name]


def perturb(value: float, sigma_rel: float, rng: random.Random) -> float:
    """Multiplicative Gaussian noise: value * (1 + N(0, sigma_rel))."""
    if sigma_rel < 0:
        raise ValueError("sigma_rel must be >= 0")
    if sigma_rel == 0:
        return value
    return value * (1.0 + rng.gauss(0.0, sigma_rel))


@dataclass
class NoiseSpec:
    """Relative noise applied before (control) and after (measurement) solves."""

    pre_sigma_rel: float = 0.01
    post_sigma_rel: float = 0.005
    stream: str = "noise"

    def __post_init__(self):
        if self.pre_sigma_rel < 0 or self.post_sigma_rel < 0:
            raise ValueError("noise sigmas must be >= 0")


@dataclass
class LoadProfile:
    """Step-interpolated scaling schedule for one injection."""

    target: str
    points: list[tuple[float, float]]  # (offset_s, scaling), strictly increasing

    def __post_init__(self):
        offsets = [p[0] for p in self.points]
        if offsets != sorted(offsets) or len(set(offsets)) != len(offsets):
            raise ValueError(f"profile {self.target}: offsets must be strictly increasing")
        if any(p[1] < 0 for p in self.points):
            raise ValueError(f"profile {self.target}: scaling must be >= 0")

    def scaling_at(self, t_s: float) -> float | None:
        """Scaling in effect at t, or None before the first breakpoint."""
        current = None
        for offset, scaling in self.points:
            if offset > t_s:
                break
            current = scaling
        return current

    def breakpoints_s(self) -> list[float]:
        return [p[0] for p in self.points]


def load_profile_file(path: str | Path, target: str) -> LoadProfile:
    """Read a delimited profile file: two columns, offset_s and scaling."""
    points = []
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.replace(",", " ").split()
        if len(parts) != 2:
            raise ValueError(f"{path}:{lineno}: expected 'offset_s scaling', got {raw!r}")
        points.append((float(parts[0]), float(parts[1])))
    return LoadProfile(target=target, points=points)


def apply_profiles(model: GridModel, profiles: list[LoadProfile],
                   t_s: float, t_ns: int = 0) -> list[str]:
    """Apply step-interpolated scalings; returns ids whose power changed.

    Idempotent at fixed t: re-applying writes nothing new.
    """
    changed = []
    for profile in profiles:
        scaling = profile.scaling_at(t_s)
        if scaling is None:
            continue
        inj = model.injections.get(profile.target)
        if inj is None:
            raise KeyError(f"profile targets unknown injection {profile.target!r}")
        if inj.scaling != scaling:
            model.apply_change(Change(profile.target, "scaling", scaling), t_ns)
            changed.append(profile.target)
    return changed


@dataclass
class RealizationDelay:
    """Uniform random delay between command receipt and setpoint application."""

    min_s: float = 0.5
    max_s: float = 1.5

    def __post_init__(self):
        if not (0 <= self.min_s <= self.max_s):
            raise ValueError("need 0 <= min_s <= max_s")

    def draw_s(self, rng: random.Random) -> float:
        if self.min_s == self.max_s:
            return self.min_s
        return rng.uniform(self.min_s, self.max_s)


@dataclass
class ProtectionRelay:
    """Voltage/current limit monitor tripping one breaker after a dwell."""

    breaker: str  # switch id
    v_min_pu: float = 0.9
    v_max_pu: float = 1.1
    i_max_ka: float = 1.0
    dwell_s: float = 0.2

    def __post_init__(self):
        if self.v_min_pu >= self.v_max_pu:
            raise ValueError(f"relay {self.breaker}: v_min_pu must be < v_max_pu")
        if self.i_max_ka <= 0:
            raise ValueError(f"relay {self.breaker}: i_max_ka must be > 0")


@dataclass
class RelayTrip:
    breaker: str
    reason: str
    t_ns: int


class RelayBank:
    """Dwell bookkeeping across solves for a set of protection relays.

    A relay whose limit has been exceeded continuously for dwell_s emits an
    open command for its breaker. Trips are monotone: the bank never closes
    a breaker; re-arming happens only after an explicit close command.
    """

    def __init__(self, relays: list[ProtectionRelay]):
        self.relays = relays
        self._since: dict[str, int] = {}  # breaker -> first violation t_ns

    def evaluate(self, model: GridModel, result: PowerFlowResult,
                 t_ns: int) -> tuple[list[RelayTrip], int | None]:
        """Returns (trips due now, earliest t_ns to re-check or None)."""
        trips: list[RelayTrip] = []
        next_check: int | None = None
        for relay in self.relays:
            switch = model.switches[relay.breaker]
            if not switch.closed:
                self._since.pop(relay.breaker, None)
                continue
            reason = self._violation(relay, model, result)
            if reason is None:
                self._since.pop(relay.breaker, None)
                continue
            since = self._since.setdefault(relay.breaker, t_ns)
            due = since + int(relay.dwell_s * NS_PER_S)
            if t_ns >= due:
                trips.append(RelayTrip(relay.breaker, reason, t_ns))
                self._since.pop(relay.breaker, None)
            else:
                next_check = due if next_check is None else min(next_check, due)
        return trips, next_check

    def _violation(self, relay: ProtectionRelay, model: GridModel,
                   result: PowerFlowResult) -> str | None:
        switch = model.switches[relay.breaker]
        if switch.is_coupler:
            buses = list(switch.element)
        else:
            branch = model.branches()[switch.element]
            flow = result.flows.get(switch.element)
            if flow is not None and flow.i_ka > relay.i_max_ka:
                return f"overcurrent {flow.i_ka:.4f} kA > {relay.i_max_ka} kA"
            buses = list(model.branch_buses(branch))
        for bus in buses:
            vm = result.vm_pu.get(bus, 0.0)
            if vm <= 0.0:
                continue  # de-energized side, undervoltage check blocked
            if vm < relay.v_min_pu:
                return f"undervoltage {vm:.4f} pu at {bus}"
            if vm > relay.v_max_pu:
                return f"overvoltage {vm:.4f} pu at {bus}"
        return None
