"""Slot-level simulation of systems S, S-hat and fixed assignment.

Each slot, in order: the SU band assignment is drawn; backlogged primaries
transmit; each assigned SU senses its band (perfectly) and, if the band is
idle and its own queue is backlogged, transmits; successful packets leave
(ACK), failed ones stay at the head of the queue (NACK); finally Bernoulli
arrivals join the queues and are first eligible in the next slot.

Outage is drawn as a Bernoulli trial with the analytic non-outage
probability.  Random numbers come from numpy's PCG64 generator and are
drawn in fixed-size blocks, so a (config, variant, horizon, seed) tuple
always produces the same trace.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Optional, Union

import numpy as np

from .baselines import FixedAssignment, SelectionPolicy
from .birkhoff import PermutationSchedule
from .model import (
    SystemConfig,
    primary_arrival_rate,
    primary_success_prob,
    secondary_success_prob,
)

log = logging.getLogger(__name__)

RNG_ALGORITHM = "numpy.random.PCG64"
BLOCK = 65536
NEAR_CRITICAL_LOAD = 0.99
MIN_VERDICT_HORIZON = 10_000

STABLE = "stable"
UNSTABLE = "unstable"
INDETERMINATE = "indeterminate"


@dataclass(frozen=True)
class ScheduleVariant:
    """System S driven by a Birkhoff schedule."""

    schedule: PermutationSchedule
    name: str = "S"


@dataclass(frozen=True)
class RandomSelectionVariant:
    """System S-hat: independent band choices, collisions destroy packets."""

    policy: SelectionPolicy
    name: str = "Shat"


@dataclass(frozen=True)
class FixedVariant:
    assignment: FixedAssignment
    name: str = "fixed"


Variant = Union[ScheduleVariant, RandomSelectionVariant, FixedVariant]


@dataclass
class SimulationTrace:
    horizon: int
    stride: int
    queue_ids: list[str]
    num_primaries: int
    sample_slots: np.ndarray
    queue_samples: np.ndarray  # (samples, queues) lengths at slot start
    arrivals: np.ndarray
    departures: np.ndarray
    initial_queues: np.ndarray
    final_queues: np.ndarray
    empty_slot_counts: np.ndarray  # per primary
    backlogged_slot_counts: np.ndarray  # per SU
    collisions: int = 0
    primary_load: list[float] = field(default_factory=list)
    flags: dict = field(default_factory=dict)
    seed: Optional[int] = None
    variant: str = ""
    rng_algorithm: str = RNG_ALGORITHM
    events: Optional[dict] = None

    @classmethod
    def from_series(cls, series, stride: int = 1, queue_ids=None) -> "SimulationTrace":
        """Wrap externally generated queue-length series (rows are samples)."""
        q = np.asarray(series)
        if q.ndim == 1:
            q = q[:, None]
        n = q.shape[1]
        horizon = q.shape[0] * stride
        zeros = np.zeros(n, dtype=np.int64)
        return cls(
            horizon=horizon,
            stride=stride,
            queue_ids=list(queue_ids or [f"q{i + 1}" for i in range(n)]),
            num_primaries=0,
            sample_slots=np.arange(q.shape[0]) * stride,
            queue_samples=q,
            arrivals=zeros,
            departures=zeros,
            initial_queues=zeros,
            final_queues=q[-1].astype(np.int64),
            empty_slot_counts=np.zeros(0, dtype=np.int64),
            backlogged_slot_counts=np.zeros(n, dtype=np.int64),
        )

    @property
    def num_sus(self) -> int:
        return len(self.queue_ids) - self.num_primaries

    def empirical_service_rates(self) -> np.ndarray:
        """Departures per backlogged slot for each SU."""
        dep = self.departures[self.num_primaries:]
        busy = self.backlogged_slot_counts
        return np.divide(dep, busy, out=np.full(len(dep), np.nan), where=busy > 0)

    def conservation_holds(self) -> bool:
        return bool(np.all(self.departures + self.final_queues == self.arrivals + self.initial_queues))

    def to_rows(self):
        """(slot, queue_id, kind, length) rows at the sampling stride."""
        kinds = ["primary"] * self.num_primaries + ["secondary"] * self.num_sus
        for t, lengths in zip(self.sample_slots.tolist(), self.queue_samples.tolist()):
            for qid, kind, length in zip(self.queue_ids, kinds, lengths):
                yield t, qid, kind, length


def _assignment_tables(variant: Variant, config: SystemConfig):
    """Return a function mapping a block of uniforms to band-per-SU arrays (-1 = none)."""
    ns = config.num_sus
    if isinstance(variant, ScheduleVariant):
        sched = variant.schedule
        if sched.pad_info.num_sus != ns or sched.pad_info.num_bands != config.num_bands:
            raise ValueError("schedule dimensions do not match the config")
        table = np.array(
            [[b - 1 for b in sched.assignment(i)] for i in range(len(sched.terms))], dtype=np.int64
        )
        cum = np.cumsum(sched.weights)
        cum /= cum[-1]

        def draw(u):
            idx = np.searchsorted(cum, u[:, 0], side="right")
            return table[np.minimum(idx, len(table) - 1)]

        return 1, draw
    if isinstance(variant, RandomSelectionVariant):
        g = variant.policy.gamma
        if g.shape != (config.num_bands, ns):
            raise ValueError("gamma dimensions do not match the config")
        cum = np.cumsum(g, axis=0)  # (bands, SUs)

        def draw(u):
            out = np.empty(u.shape, dtype=np.int64)
            for k in range(ns):
                idx = np.searchsorted(cum[:, k], u[:, k], side="right")
                out[:, k] = np.where(idx < config.num_bands, idx, -1)
            return out

        return ns, draw
    if isinstance(variant, FixedVariant):
        bands = np.array(variant.assignment.band_of_su, dtype=np.int64)
        if len(bands) != ns or np.any(bands >= config.num_bands):
            raise ValueError("fixed assignment does not match the config")

        def draw(u):
            return np.broadcast_to(bands, (u.shape[0], ns))

        return 0, draw
    raise TypeError(f"unknown variant {variant!r}")


def run_slots(
    config: SystemConfig,
    variant: Variant,
    horizon: int,
    seed: int,
    stride: int = 10,
    record_events: bool = False,
) -> SimulationTrace:
    if horizon < 1:
        raise ValueError("horizon must be at least 1")
    if stride < 1:
        raise ValueError("stride must be at least 1")
    mp, ns = config.num_bands, config.num_sus
    mu_p = np.array([0.0 if b.is_virtual else primary_success_prob(config, j) for j, b in enumerate(config.bands)])
    lam_p = np.array([primary_arrival_rate(config, j) for j in range(mp)])
    lam_s = config.su_arrival_rates
    sec = np.array([[secondary_success_prob(config, j, k) for k in range(ns)] for j in range(mp)])

    load = [float(l / m) if m > 0 else (0.0 if l == 0 else float("inf")) for l, m in zip(lam_p, mu_p)]
    flags = {
        "primary_unstable": [x >= 1.0 for x in load],
        "near_critical": [NEAR_CRITICAL_LOAD <= x < 1.0 for x in load],
    }
    if any(flags["primary_unstable"]):
        log.warning("primary queues %s are unstable", [j + 1 for j, f in enumerate(flags["primary_unstable"]) if f])

    n_assign, draw_bands = _assignment_tables(variant, config)
    rng = np.random.Generator(np.random.PCG64(seed))

    qp = [0] * mp
    qs = [0] * ns
    arr = [0] * (mp + ns)
    dep = [0] * (mp + ns)
    empty = [0] * mp
    backlogged = [0] * ns
    collisions = 0
    n_samples = (horizon + stride - 1) // stride
    samples = np.zeros((n_samples, mp + ns), dtype=np.int64)
    ev = None
    if record_events:
        ev = {
            "band": np.full((horizon, ns), -1, dtype=np.int64),
            "transmitted": np.zeros((horizon, ns), dtype=bool),
            "primary_busy": np.zeros((horizon, mp), dtype=bool),
        }
    su_range = range(ns)
    band_range = range(mp)
    collide_possible = isinstance(variant, RandomSelectionVariant)

    t = 0
    while t < horizon:
        n = min(BLOCK, horizon - t)
        u_assign = rng.random((n, max(n_assign, 1)))
        bands_blk = draw_bands(u_assign)
        p_ok_blk = (rng.random((n, mp)) < mu_p).tolist()
        u_sec = rng.random((n, ns))
        safe = np.where(bands_blk >= 0, bands_blk, 0)
        s_ok_blk = ((u_sec < sec[safe, np.arange(ns)]) & (bands_blk >= 0)).tolist()
        pa_blk = (rng.random((n, mp)) < lam_p).tolist()
        sa_blk = (rng.random((n, ns)) < lam_s).tolist()
        bands_list = bands_blk.tolist()
        for i in range(n):
            slot = t + i
            if slot % stride == 0:
                samples[slot // stride, :mp] = qp
                samples[slot // stride, mp:] = qs
            busy = [q > 0 for q in qp]
            p_ok = p_ok_blk[i]
            for j in band_range:
                if busy[j]:
                    if p_ok[j]:
                        qp[j] -= 1
                        dep[j] += 1
                else:
                    empty[j] += 1
            band = bands_list[i]
            tx = [k for k in su_range if qs[k] > 0 and band[k] >= 0 and not busy[band[k]]]
            for k in su_range:
                if qs[k] > 0:
                    backlogged[k] += 1
            if tx:
                if collide_possible and len(tx) > 1:
                    counts = {}
                    for k in tx:
                        counts[band[k]] = counts.get(band[k], 0) + 1
                    collisions += sum(1 for c in counts.values() if c > 1)
                    clear = [k for k in tx if counts[band[k]] == 1]
                else:
                    clear = tx
                s_ok = s_ok_blk[i]
                for k in clear:
                    if s_ok[k]:
                        qs[k] -= 1
                        dep[mp + k] += 1
            if ev is not None:
                ev["band"][slot] = band
                ev["primary_busy"][slot] = busy
                ev["transmitted"][slot, tx] = True
            pa = pa_blk[i]
            for j in band_range:
                if pa[j]:
                    qp[j] += 1
                    arr[j] += 1
            sa = sa_blk[i]
            for k in su_range:
                if sa[k]:
                    qs[k] += 1
                    arr[mp + k] += 1
        t += n

    ids = [f"p{j + 1}" for j in range(mp)] + [config.su_name(k) for k in range(ns)]
    return SimulationTrace(
        horizon=horizon,
        stride=stride,
        queue_ids=ids,
        num_primaries=mp,
        sample_slots=np.arange(n_samples) * stride,
        queue_samples=samples,
        arrivals=np.array(arr, dtype=np.int64),
        departures=np.array(dep, dtype=np.int64),
        initial_queues=np.zeros(mp + ns, dtype=np.int64),
        final_queues=np.array(qp + qs, dtype=np.int64),
        empty_slot_counts=np.array(empty, dtype=np.int64),
        backlogged_slot_counts=np.array(backlogged, dtype=np.int64),
        collisions=collisions,
        primary_load=load,
        flags=flags,
        seed=seed,
        variant=variant.name,
        events=ev,
    )


@dataclass
class StabilityVerdict:
    per_queue: list[str]
    drift_estimate: np.ndarray
    queue_ids: list[str] = field(default_factory=list)

    def secondary(self, num_primaries: int) -> list[str]:
        return self.per_queue[num_primaries:]


def stability_verdict(
    trace: SimulationTrace,
    drift_threshold: float = 5e-4,
    window_fraction: float = 0.5,
) -> StabilityVerdict:
    """Classify each queue from the trailing part of its length series.

    A queue is stable when its least-squares drift is below
    ``drift_threshold`` and its peak length stays under horizon**(2/3);
    unstable when the drift exceeds twice the threshold; otherwise
    indeterminate.
    """
    if trace.horizon < MIN_VERDICT_HORIZON:
        raise ValueError(f"horizon {trace.horizon} too short for a verdict (need >= {MIN_VERDICT_HORIZON})")
    if not 0.0 < window_fraction <= 1.0:
        raise ValueError("window_fraction must lie in (0, 1]")
    start = trace.horizon * (1.0 - window_fraction)
    mask = trace.sample_slots >= start
    x = trace.sample_slots[mask].astype(float)
    y = trace.queue_samples[mask].astype(float)
    if x.size < 2:
        raise ValueError("not enough samples in the trailing window")
    xc = x - x.mean()
    slopes = (xc @ (y - y.mean(axis=0))) / (xc @ xc)
    cap = trace.horizon ** (2.0 / 3.0)
    peaks = y.max(axis=0)
    verdicts = []
    for s, peak in zip(slopes, peaks):
        if s < drift_threshold and peak < cap:
            verdicts.append(STABLE)
        elif s > 2 * drift_threshold:
            verdicts.append(UNSTABLE)
        else:
            verdicts.append(INDETERMINATE)
    return StabilityVerdict(verdicts, slopes, list(trace.queue_ids))


def empirical_availability(trace: SimulationTrace, band: int) -> float:
    return float(trace.empty_slot_counts[band] / trace.horizon)
