"""Stability-region envelopes of system S.

The maximum stable rate of one SU, with the others held at fixed rates,
is the optimum of a linear program over the assignment matrix Omega
(:func:`max_rate_lp`).  The equivalent program over the per-slot
configuration probabilities q (:func:`max_rate_lp_over_q`) is kept as an
independent cross-check, and the two-band/two-user case also has a
closed form (:func:`closed_form_2x2`).
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Mapping, Optional

import numpy as np

from .model import SuccessMatrix, assignment_count
from .simplex import linprog_max

ENUMERATION_LIMIT = 10**6
SLACK_TOL = 1e-9


class DimensionError(ValueError):
    pass


class EnumerationLimitError(ValueError):
    pass


@dataclass(frozen=True)
class AssignmentMatrix:
    """Omega: entry (j, k) is the probability that SU k is assigned band j."""

    omega: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "omega", np.asarray(self.omega, dtype=float))

    @property
    def shape(self):
        return self.omega.shape

    def violations(self, tol: float = SLACK_TOL) -> list[str]:
        w = self.omega
        mp, ms = w.shape
        out = []
        if np.any(w < -tol) or np.any(w > 1 + tol):
            out.append("entries outside [0, 1]")
        rows, cols = w.sum(axis=1), w.sum(axis=0)
        if np.any(rows > 1 + tol):
            out.append("a band is assigned more than once")
        if np.any(cols > 1 + tol):
            out.append("an SU is assigned more than one band")
        if mp >= ms and np.any(np.abs(cols - 1) > tol):
            out.append("column sums must equal 1 when bands >= SUs")
        if ms >= mp and np.any(np.abs(rows - 1) > tol):
            out.append("row sums must equal 1 when SUs >= bands")
        return out

    def service_rates(self, P: SuccessMatrix) -> np.ndarray:
        return (self.omega * P.values).sum(axis=0)


@dataclass(frozen=True)
class RegionQuery:
    """Maximise SU ``target`` (0-based) with ``fixed_rates`` for the others."""

    target: int
    fixed_rates: Mapping[int, float] = field(default_factory=dict)

    def __post_init__(self):
        if self.target in self.fixed_rates:
            raise ValueError("the target SU cannot also have a fixed rate")
        if any(r < 0 for r in self.fixed_rates.values()):
            raise ValueError("fixed rates must be non-negative")


@dataclass
class EnvelopePoint:
    rates: np.ndarray
    omega_star: Optional[AssignmentMatrix]
    feasible: bool

    def target_rate(self, target: int) -> float:
        return float(self.rates[target]) if self.feasible else float("nan")


def _validate(P: SuccessMatrix, query: RegionQuery) -> tuple[int, int]:
    if not isinstance(P, SuccessMatrix):
        P = SuccessMatrix(P)
    mp, ms = P.shape
    if not 0 <= query.target < ms:
        raise DimensionError(f"target SU {query.target} out of range for {ms} SUs")
    for ell in query.fixed_rates:
        if not 0 <= ell < ms:
            raise DimensionError(f"fixed SU {ell} out of range for {ms} SUs")
    return mp, ms


def _rate_vector(ms: int, query: RegionQuery, target_value: float) -> np.ndarray:
    rates = np.zeros(ms)
    for ell, r in query.fixed_rates.items():
        rates[ell] = r
    rates[query.target] = target_value
    return rates


def max_rate_lp(P: SuccessMatrix, query: RegionQuery) -> EnvelopePoint:
    """Largest stable rate of the target SU, solved over Omega.

    Sums that the model forces to one (columns when bands >= SUs, rows when
    SUs >= bands) are imposed as equalities; this never changes the optimum
    because success probabilities are non-negative.
    """
    if not isinstance(P, SuccessMatrix):
        P = SuccessMatrix(P)
    mp, ms = _validate(P, query)
    pv = P.values
    nvar = mp * ms

    def idx(j, k):
        return j * ms + k

    c = np.zeros(nvar)
    for j in range(mp):
        c[idx(j, query.target)] = pv[j, query.target]

    A_ub, b_ub, A_eq, b_eq = [], [], [], []
    for j in range(mp):
        row = np.zeros(nvar)
        row[[idx(j, k) for k in range(ms)]] = 1.0
        (A_eq if ms >= mp else A_ub).append(row)
        (b_eq if ms >= mp else b_ub).append(1.0)
    for k in range(ms):
        row = np.zeros(nvar)
        row[[idx(j, k) for j in range(mp)]] = 1.0
        (A_eq if mp >= ms else A_ub).append(row)
        (b_eq if mp >= ms else b_ub).append(1.0)
    for ell, lam in sorted(query.fixed_rates.items()):
        row = np.zeros(nvar)
        for j in range(mp):
            row[idx(j, ell)] = -pv[j, ell]
        A_ub.append(row)
        b_ub.append(-lam)

    res = linprog_max(c, A_ub or None, b_ub or None, A_eq or None, b_eq or None)
    if not res.success:
        return EnvelopePoint(_rate_vector(ms, query, np.nan), None, False)
    omega = np.clip(res.x.reshape(mp, ms), 0.0, 1.0)
    return EnvelopePoint(_rate_vector(ms, query, res.objective), AssignmentMatrix(omega), True)


def enumerate_assignments(num_bands: int, num_sus: int) -> list[tuple[int, ...]]:
    """All one-to-one configurations as a band index per SU (-1 = virtual band)."""
    if num_bands >= num_sus:
        return list(itertools.permutations(range(num_bands), num_sus))
    out = []
    # each real band goes to a distinct SU; remaining SUs sit on virtual bands
    for owners in itertools.permutations(range(num_sus), num_bands):
        m = [-1] * num_sus
        for j, k in enumerate(owners):
            m[k] = j
        out.append(tuple(m))
    return out


def max_rate_lp_over_q(P: SuccessMatrix, query: RegionQuery) -> EnvelopePoint:
    """Same optimum as :func:`max_rate_lp`, with one variable per configuration."""
    if not isinstance(P, SuccessMatrix):
        P = SuccessMatrix(P)
    mp, ms = _validate(P, query)
    count, _ = assignment_count(mp, ms)
    if count > ENUMERATION_LIMIT:
        raise EnumerationLimitError(
            f"{count} configurations exceed the enumeration limit; use max_rate_lp"
        )
    configs = enumerate_assignments(mp, ms)
    pv = P.values
    # gains[i, k]: success probability of SU k under configuration i
    gains = np.array(
        [[pv[m[k], k] if m[k] >= 0 else 0.0 for k in range(ms)] for m in configs]
    )
    c = gains[:, query.target]
    A_ub = [-gains[:, ell] for ell, _ in sorted(query.fixed_rates.items())]
    b_ub = [-lam for _, lam in sorted(query.fixed_rates.items())]
    res = linprog_max(c, A_ub or None, b_ub or None, np.ones((1, len(configs))), [1.0])
    if not res.success:
        return EnvelopePoint(_rate_vector(ms, query, np.nan), None, False)
    omega = np.zeros((mp, ms))
    for qi, m in zip(res.x, configs):
        for k, j in enumerate(m):
            if j >= 0:
                omega[j, k] += qi
    return EnvelopePoint(_rate_vector(ms, query, res.objective), AssignmentMatrix(omega), True)


@dataclass(frozen=True)
class ClosedForm2x2:
    epsilon: float
    lambda_s2_max: float
    feasible: bool


def closed_form_2x2(P: SuccessMatrix, lambda_s1: float) -> ClosedForm2x2:
    """Two bands, two SUs: maximise SU 2's rate for a given SU 1 rate.

    ``epsilon`` is the probability of the swapped configuration (SU 1 on
    band 2, SU 2 on band 1).  When both bands serve SU 2 equally well the
    problem is only a feasibility question and the smallest feasible
    epsilon is returned.
    """
    pv = np.asarray(P.values if isinstance(P, SuccessMatrix) else P, dtype=float)
    if pv.shape != (2, 2):
        raise DimensionError(f"closed form needs a 2x2 matrix, got {pv.shape}")
    p11, p12 = pv[0]
    p21, p22 = pv[1]
    lam = float(lambda_s1)
    infeasible = ClosedForm2x2(float("nan"), float("nan"), False)

    if (p21 < p11 and lam > p11) or (p21 > p11 and lam > p21) or (p21 == p11 and lam > p11):
        return infeasible

    ratio = (lam - p11) / (p21 - p11) if p21 != p11 else 0.0
    if p12 > p22:
        if p21 >= p11:
            eps = 1.0
        else:
            eps = min(ratio, 1.0)
    elif p12 < p22:
        if p21 > p11:
            eps = max(ratio, 0.0)
        else:
            eps = 0.0
    else:
        eps = max(ratio, 0.0) if p21 > p11 else 0.0
    return ClosedForm2x2(float(eps), float(eps * p12 + (1.0 - eps) * p22), True)


def envelope_sweep(
    P: SuccessMatrix,
    target: int,
    sweep: int,
    other_rates: Optional[Mapping[int, float]] = None,
    grid_size: int = 101,
    sweep_max: Optional[float] = None,
) -> list[EnvelopePoint]:
    """Trace the (sweep, target) boundary slice with every other SU fixed.

    The swept rate runs from 0 to its own maximum (computed with the target
    at rate zero) unless ``sweep_max`` is given.
    """
    if grid_size < 2:
        raise ValueError("grid_size must be at least 2")
    if target == sweep:
        raise ValueError("target and sweep SU must differ")
    if not isinstance(P, SuccessMatrix):
        P = SuccessMatrix(P)
    others = dict(other_rates or {})
    others.pop(target, None)
    others.pop(sweep, None)
    if sweep_max is None:
        solo = max_rate_lp(P, RegionQuery(sweep, {**others, target: 0.0}))
        if not solo.feasible:
            return [
                EnvelopePoint(_rate_vector(P.num_sus, RegionQuery(target, others), np.nan), None, False)
                for _ in range(grid_size)
            ]
        sweep_max = float(solo.rates[sweep])
    points = []
    for lam in np.linspace(0.0, sweep_max, grid_size):
        points.append(max_rate_lp(P, RegionQuery(target, {**others, sweep: float(lam)})))
    return points
