"""Comparison systems: random band selection (S-hat) and fixed assignment.

In S-hat every SU independently picks band i with probability
``gamma[i, k]`` (or idles with the leftover probability), so two SUs may
collide.  Region results for S-hat are computed under saturation (every
competitor backlogged) and the optimiser is a local search, so its output
is a lower bound on the S-hat envelope.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .model import SuccessMatrix, assignment_count
from .region import ENUMERATION_LIMIT, EnumerationLimitError, RegionQuery, max_rate_lp

FEAS_TOL = 1e-12


@dataclass(frozen=True)
class SelectionPolicy:
    gamma: np.ndarray

    def __post_init__(self):
        g = np.asarray(self.gamma, dtype=float)
        if g.ndim != 2:
            raise ValueError("gamma must be two-dimensional")
        if np.any(g < -1e-12) or np.any(g > 1 + 1e-12):
            raise ValueError("selection probabilities must lie in [0, 1]")
        if np.any(g.sum(axis=0) > 1 + 1e-9):
            raise ValueError("an SU cannot choose bands with total probability above one")
        object.__setattr__(self, "gamma", np.clip(g, 0.0, 1.0))


@dataclass(frozen=True)
class FixedAssignment:
    """``band_of_su[k]`` is the 0-based band SU k always uses."""

    band_of_su: tuple[int, ...]

    def __post_init__(self):
        bands = tuple(int(b) for b in self.band_of_su)
        if len(set(bands)) != len(bands):
            raise ValueError(f"fixed assignment {bands} is not injective")
        object.__setattr__(self, "band_of_su", bands)


def _matrix(P) -> np.ndarray:
    return P.values if isinstance(P, SuccessMatrix) else np.asarray(P, dtype=float)


def _gamma(g) -> np.ndarray:
    return g.gamma if isinstance(g, SelectionPolicy) else np.asarray(g, dtype=float)


def shat_service_rate_conditional(P, gamma, empty_probs: Sequence[float]) -> np.ndarray:
    """Service rates when competitor v is idle (empty queue) with probability ``empty_probs[v]``.

    Queue-empty events are treated as independent; a competitor on the
    same band only destroys the packet when it is backlogged.
    """
    pv, g = _matrix(P), _gamma(gamma)
    if pv.shape != g.shape:
        raise ValueError(f"success matrix {pv.shape} and gamma {g.shape} differ in shape")
    e = np.asarray(empty_probs, dtype=float)
    if e.shape != (pv.shape[1],):
        raise ValueError("one empty probability per SU required")
    if np.any(e < 0) or np.any(e > 1):
        raise ValueError("empty probabilities must lie in [0, 1]")
    clash = g * (1.0 - e)[None, :]  # prob. that SU v is on band j and backlogged
    free = 1.0 - clash
    ms = pv.shape[1]
    rates = np.empty(ms)
    for k in range(ms):
        others = np.prod(np.delete(free, k, axis=1), axis=1)
        rates[k] = np.sum(pv[:, k] * g[:, k] * others)
    return rates


def shat_service_rates_saturated(P, gamma) -> np.ndarray:
    pv = _matrix(P)
    return shat_service_rate_conditional(P, gamma, np.zeros(pv.shape[1]))


def fixed_assignment_rates(P, assignment: FixedAssignment) -> np.ndarray:
    pv = _matrix(P)
    bands = assignment.band_of_su
    if len(bands) != pv.shape[1]:
        raise ValueError("one band per SU required")
    if pv.shape[0] < pv.shape[1]:
        raise ValueError("fixed assignment needs at least as many bands as SUs")
    return np.array([pv[b, k] for k, b in enumerate(bands)])


def best_fixed_assignment(P, query: RegionQuery) -> tuple[Optional[FixedAssignment], Optional[float]]:
    """Best injective static map for the query, or (None, None) if none is feasible."""
    pv = _matrix(P)
    mp, ms = pv.shape
    if mp < ms:
        raise ValueError("fixed assignment needs at least as many bands as SUs")
    if assignment_count(mp, ms)[0] > ENUMERATION_LIMIT:
        raise EnumerationLimitError("too many fixed assignments to enumerate")
    best, best_val = None, None
    for bands in itertools.permutations(range(mp), ms):
        if all(pv[bands[ell], ell] >= lam for ell, lam in query.fixed_rates.items()):
            val = pv[bands[query.target], query.target]
            if best_val is None or val > best_val:
                best, best_val = bands, float(val)
    return (FixedAssignment(best) if best is not None else None), best_val


def best_fixed_envelope(P, query: RegionQuery) -> Optional[float]:
    return best_fixed_assignment(P, query)[1]


@dataclass
class ShatResult:
    gamma_star: Optional[np.ndarray]
    lambda_max: float
    feasible: bool


class _Objective:
    def __init__(self, pv: np.ndarray, query: RegionQuery):
        self.pv = pv
        self.target = query.target
        self.fixed = sorted(query.fixed_rates.items())

    def rates(self, g: np.ndarray) -> np.ndarray:
        free = 1.0 - g
        ones = np.ones((g.shape[0], 1))
        before = np.cumprod(np.hstack([ones, free[:, :-1]]), axis=1)
        after = np.cumprod(np.hstack([ones, free[:, :0:-1]]), axis=1)[:, ::-1]
        return np.einsum("jk,jk,jk,jk->k", self.pv, g, before, after)

    def violation(self, mu: np.ndarray) -> float:
        return sum(max(0.0, lam - mu[ell]) for ell, lam in self.fixed)


def _local_search(obj: _Objective, g: np.ndarray, iterations: int, step: float = 0.25):
    """Pairwise mass transfers inside each column (plus an idle slot).

    Moves keep every column on the capped simplex, so no projection error
    accumulates.  Minimises constraint violation until feasible, then
    maximises the target rate while staying feasible.
    """
    mp, ms = g.shape
    ext = np.vstack([g, 1.0 - g.sum(axis=0, keepdims=True)])
    ext[-1] = np.clip(ext[-1], 0.0, 1.0)

    def score(e):
        mu = obj.rates(e[:-1])
        v = obj.violation(mu)
        if v > FEAS_TOL:
            return (0, -v)
        return (1, mu[obj.target])

    cur = score(ext)
    moves = [(k, a, b) for k in range(ms) for a in range(mp + 1) for b in range(mp + 1) if a != b]
    for _ in range(iterations):
        improved = False
        for k, a, b in moves:
            amount = min(step, ext[a, k])
            if amount <= 0.0:
                continue
            trial = ext.copy()
            trial[a, k] -= amount
            trial[b, k] += amount
            s = score(trial)
            if s > cur:
                ext, cur, improved = trial, s, True
        if not improved:
            step *= 0.5
            if step < 1e-9:
                break
    return ext[:-1], cur


def shat_optimize(
    P,
    query: RegionQuery,
    restarts: int = 64,
    iterations: int = 200,
    seed: int = 0,
    warm_starts: Optional[Sequence[np.ndarray]] = None,
) -> ShatResult:
    """Best-effort maximisation of the target SU's saturated S-hat rate.

    Starts: the best fixed assignment, the columns of the system-S optimum,
    any caller-supplied ``warm_starts`` and ``restarts`` random points.
    """
    if restarts < 1:
        raise ValueError("restarts must be at least 1")
    pv = _matrix(P)
    mp, ms = pv.shape
    obj = _Objective(pv, query)
    rng = np.random.default_rng(seed)

    starts = [np.asarray(w, dtype=float) for w in (warm_starts or [])]
    if mp >= ms and assignment_count(mp, ms)[0] <= ENUMERATION_LIMIT:
        fixed, _ = best_fixed_assignment(pv, query)
        if fixed is not None:
            g = np.zeros((mp, ms))
            g[list(fixed.band_of_su), range(ms)] = 1.0
            starts.append(g)
    s_opt = max_rate_lp(SuccessMatrix(pv), query)
    if s_opt.feasible:
        starts.append(s_opt.omega_star.omega.copy())
    for _ in range(restarts):
        starts.append(rng.dirichlet(np.ones(mp + 1), size=ms).T[:mp])

    best = ShatResult(None, float("nan"), False)
    for g0 in starts:
        g, (feasible, value) = _local_search(obj, g0, iterations)
        if feasible and (not best.feasible or value > best.lambda_max):
            best = ShatResult(g, float(value), True)
    return best
