"""Turn an assignment matrix into a per-slot schedule of one-to-one configurations.

Omega is padded with virtual bands / virtual SUs to a square doubly
stochastic matrix, then peeled into weighted permutation matrices
(Birkhoff's greedy algorithm with augmenting-path matchings).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

SUPPORT_TOL = 1e-12
RESIDUAL_TOL = 1e-9
SUM_TOL = 1e-9


class ConstraintViolationError(ValueError):
    pass


class DecompositionError(RuntimeError):
    def __init__(self, message: str, residual: np.ndarray):
        super().__init__(message)
        self.residual = residual


@dataclass(frozen=True)
class PadInfo:
    """Rows ``>= num_bands`` are virtual bands, columns ``>= num_sus`` virtual SUs."""

    num_bands: int
    num_sus: int


@dataclass(frozen=True)
class DoublyStochasticMatrix:
    values: np.ndarray
    pad_info: PadInfo

    def __post_init__(self):
        v = np.array(self.values, dtype=float)
        if v.ndim != 2 or v.shape[0] != v.shape[1]:
            raise ValueError("doubly stochastic matrix must be square")
        if np.any(v < -SUPPORT_TOL):
            raise ValueError("negative entries")
        v[v < 0] = 0.0
        if np.any(np.abs(v.sum(axis=0) - 1) > SUM_TOL) or np.any(np.abs(v.sum(axis=1) - 1) > SUM_TOL):
            raise ValueError("rows and columns must sum to one")
        object.__setattr__(self, "values", v)

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @classmethod
    def square(cls, values) -> "DoublyStochasticMatrix":
        v = np.asarray(values, dtype=float)
        return cls(v, PadInfo(v.shape[0], v.shape[1]))


@dataclass(frozen=True)
class ScheduleTerm:
    # perm[k] is the (padded) band row serving padded SU column k
    perm: tuple[int, ...]
    weight: float


@dataclass
class PermutationSchedule:
    terms: list[ScheduleTerm]
    pad_info: PadInfo
    n: int = field(default=0)

    def __post_init__(self):
        if not self.n and self.terms:
            self.n = len(self.terms[0].perm)

    @property
    def weights(self) -> np.ndarray:
        return np.array([t.weight for t in self.terms])

    def assignment(self, i: int) -> tuple[int, ...]:
        """Band per real SU for term ``i``, 1-based; 0 means a virtual band."""
        nb = self.pad_info.num_bands
        perm = self.terms[i].perm
        return tuple(perm[k] + 1 if perm[k] < nb else 0 for k in range(self.pad_info.num_sus))

    def marginals(self) -> np.ndarray:
        """Probability that real SU k sits on real band j under the schedule."""
        out = np.zeros((self.pad_info.num_bands, self.pad_info.num_sus))
        for i, term in enumerate(self.terms):
            for k, band in enumerate(self.assignment(i)):
                if band:
                    out[band - 1, k] += term.weight
        return out

    def to_json(self) -> list[dict]:
        return [{"assignment": list(self.assignment(i)), "q": t.weight} for i, t in enumerate(self.terms)]

    @classmethod
    def from_json(cls, data: Sequence[dict], num_bands: int, num_sus: int) -> "PermutationSchedule":
        """Rebuild a schedule; virtual rows and columns are filled in canonically."""
        raw = []
        for entry in data:
            bands = [int(b) for b in entry["assignment"]]
            if len(bands) != num_sus:
                raise ValueError("assignment length must equal the number of SUs")
            if any(b < 0 or b > num_bands for b in bands):
                raise ValueError(f"assignment {bands} names an unknown band")
            real = [b for b in bands if b]
            if len(set(real)) != len(real):
                raise ValueError(f"assignment {bands} puts two SUs on one band")
            raw.append((bands, float(entry["q"])))
        zeros = max((b.count(0) for b, _ in raw), default=0)
        width = max(num_bands, num_sus, num_bands + zeros)
        terms = []
        for bands, q in raw:
            virtual = iter(range(num_bands, width))
            perm = [b - 1 if b else next(virtual) for b in bands]
            perm.extend(r for r in range(width) if r not in perm)
            terms.append(ScheduleTerm(tuple(perm), q))
        return cls(terms, PadInfo(num_bands, num_sus), width)


def pad_to_doubly_stochastic(omega, tol: float = SUM_TOL) -> DoublyStochasticMatrix:
    """Square up Omega with virtual rows/columns carrying the missing mass.

    Row slack goes to virtual SU columns, column slack to virtual band
    rows, and anything left over to a virtual-virtual block.  Real entries
    are copied unchanged.  The result is max(bands, SUs) wide whenever
    Omega already has the equality structure of an optimal assignment;
    otherwise extra virtual rows and columns are added.
    """
    w = np.array(getattr(omega, "omega", omega), dtype=float)
    if w.ndim != 2:
        raise ValueError("omega must be two-dimensional")
    mp, ms = w.shape
    if np.any(w < -tol) or np.any(w > 1 + tol):
        raise ConstraintViolationError("omega entries must lie in [0, 1]")
    w = np.clip(w, 0.0, None)
    rows, cols = w.sum(axis=1), w.sum(axis=0)
    if np.any(rows > 1 + tol) or np.any(cols > 1 + tol):
        raise ConstraintViolationError(
            f"omega row sums {rows.tolist()} / column sums {cols.tolist()} exceed one"
        )
    row_slack = np.clip(1.0 - rows, 0.0, None)
    col_slack = np.clip(1.0 - cols, 0.0, None)
    row_slack[row_slack < tol] = 0.0
    col_slack[col_slack < tol] = 0.0
    total_row, total_col = row_slack.sum(), col_slack.sum()

    size = mp + total_col
    size = int(round(size)) if abs(size - round(size)) <= mp * tol + tol else math.ceil(size)
    size = max(size, mp, ms)
    v_rows, v_cols = size - mp, size - ms
    vv_mass = v_rows - total_col  # == v_cols - total_row

    out = np.zeros((size, size))
    out[:mp, :ms] = w
    if v_cols:
        out[:mp, ms:] = row_slack[:, None] / v_cols
    if v_rows:
        out[mp:, :ms] = col_slack[None, :] / v_rows
    if v_rows and v_cols:
        out[mp:, ms:] = max(vv_mass, 0.0) / (v_rows * v_cols)
    return DoublyStochasticMatrix(out, PadInfo(mp, ms))


def _perfect_matching(support: np.ndarray) -> Optional[list[int]]:
    """Row matched to each column via augmenting paths, or None."""
    n = support.shape[0]
    row_of_col = [-1] * n
    adj = [np.flatnonzero(support[:, c]).tolist() for c in range(n)]
    col_of_row = [-1] * n

    def augment(c, seen):
        for r in adj[c]:
            if r in seen:
                continue
            seen.add(r)
            if col_of_row[r] < 0 or augment(col_of_row[r], seen):
                col_of_row[r] = c
                row_of_col[c] = r
                return True
        return False

    for c in range(n):
        if not augment(c, set()):
            return None
    return row_of_col


def decompose(ds: DoublyStochasticMatrix) -> PermutationSchedule:
    residual = ds.values.copy()
    n = ds.n
    terms: list[ScheduleTerm] = []
    cols = np.arange(n)
    while residual.sum() >= RESIDUAL_TOL:
        match = _perfect_matching(residual > SUPPORT_TOL)
        if match is None:
            raise DecompositionError("no perfect matching on the positive support", residual)
        rows = np.array(match)
        weight = float(residual[rows, cols].min())
        residual[rows, cols] -= weight
        residual[residual < SUPPORT_TOL] = 0.0
        terms.append(ScheduleTerm(tuple(int(r) for r in rows), weight))
    return PermutationSchedule(terms, ds.pad_info, n)


def reconstruct(schedule: PermutationSchedule) -> np.ndarray:
    n = schedule.n
    out = np.zeros((n, n))
    cols = np.arange(n)
    for term in schedule.terms:
        out[list(term.perm), cols] += term.weight
    return out


def sample_permutation(schedule: PermutationSchedule, rng: np.random.Generator) -> tuple[Optional[int], ...]:
    """Draw one configuration: 0-based band per real SU, None for a virtual band."""
    row = sample_assignments(schedule, rng, 1)[0]
    return tuple(int(b) if b >= 0 else None for b in row)


def sample_assignments(schedule: PermutationSchedule, rng: np.random.Generator, size: int) -> np.ndarray:
    """Draw ``size`` configurations at once as a (size, SUs) array; -1 marks a virtual band."""
    nb, ns = schedule.pad_info.num_bands, schedule.pad_info.num_sus
    table = np.array([t.perm[:ns] for t in schedule.terms], dtype=np.int64).reshape(len(schedule.terms), ns)
    table[table >= nb] = -1
    idx = rng.choice(len(schedule.terms), size=size, p=_normalised(schedule.weights))
    return table[idx]


def _normalised(w: np.ndarray) -> np.ndarray:
    return w / w.sum()
