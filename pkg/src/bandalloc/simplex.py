"""Dense two-phase primal simplex with Bland's rule.

Solves ``max c @ x`` subject to ``A_ub @ x <= b_ub``, ``A_eq @ x == b_eq``
and ``x >= 0``.  Intended for the small dense programs in this package
(a few hundred variables at most).
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

FEAS_TOL = 1e-9
OPT_TOL = 1e-10
PIVOT_TOL = 1e-12

OPTIMAL = "optimal"
INFEASIBLE = "infeasible"
UNBOUNDED = "unbounded"


@dataclass
class LPResult:
    status: str
    x: Optional[np.ndarray]
    objective: float
    iterations: int = 0

    @property
    def success(self) -> bool:
        return self.status == OPTIMAL


class SimplexError(RuntimeError):
    pass


def _pivot(tab: np.ndarray, basis: list, row: int, col: int) -> None:
    tab[row] /= tab[row, col]
    piv = tab[row]
    for i in range(tab.shape[0]):
        if i != row:
            f = tab[i, col]
            if f != 0.0:
                tab[i] -= f * piv
    basis[row] = col


def _run(tab: np.ndarray, basis: list, allowed: np.ndarray, max_iter: int) -> tuple[str, int]:
    """Maximise the objective in the last row of ``tab``.

    The last row holds reduced costs ``c_j - z_j``; a column may enter when
    its entry is positive.  Bland's rule: smallest entering index, and
    smallest basic index among tied ratios.
    """
    m = tab.shape[0] - 1
    for it in range(max_iter):
        obj = tab[-1, :-1]
        candidates = np.flatnonzero((obj > OPT_TOL) & allowed)
        if candidates.size == 0:
            return OPTIMAL, it
        col = int(candidates[0])
        column = tab[:m, col]
        rhs = tab[:m, -1]
        best_row, best_ratio = -1, np.inf
        for i in range(m):
            if column[i] > PIVOT_TOL:
                ratio = rhs[i] / column[i]
                if ratio < best_ratio - PIVOT_TOL or (
                    abs(ratio - best_ratio) <= PIVOT_TOL and basis[i] < basis[best_row]
                ):
                    best_row, best_ratio = i, ratio
        if best_row < 0:
            return UNBOUNDED, it
        _pivot(tab, basis, best_row, col)
    raise SimplexError(f"simplex did not terminate in {max_iter} iterations")


def linprog_max(
    c,
    A_ub=None,
    b_ub=None,
    A_eq=None,
    b_eq=None,
    max_iter: int = 50_000,
) -> LPResult:
    c = np.asarray(c, dtype=float)
    n = c.size
    A_ub = np.zeros((0, n)) if A_ub is None else np.asarray(A_ub, dtype=float).reshape(-1, n)
    b_ub = np.zeros(0) if b_ub is None else np.asarray(b_ub, dtype=float).ravel()
    A_eq = np.zeros((0, n)) if A_eq is None else np.asarray(A_eq, dtype=float).reshape(-1, n)
    b_eq = np.zeros(0) if b_eq is None else np.asarray(b_eq, dtype=float).ravel()
    if A_ub.shape[0] != b_ub.size or A_eq.shape[0] != b_eq.size:
        raise ValueError("constraint matrix and right-hand side sizes differ")

    m_ub, m_eq = A_ub.shape[0], A_eq.shape[0]
    m = m_ub + m_eq
    # columns: structural | slack (one per <= row) | artificial (one per row)
    n_slack = m_ub
    n_art = m
    width = n + n_slack + n_art
    tab = np.zeros((m + 1, width + 1))
    basis = [0] * m

    for i in range(m_ub):
        row = A_ub[i]
        rhs = b_ub[i]
        sign = 1.0 if rhs >= 0 else -1.0
        tab[i, :n] = sign * row
        tab[i, n + i] = sign
        tab[i, -1] = sign * rhs
    for i in range(m_eq):
        r = m_ub + i
        sign = 1.0 if b_eq[i] >= 0 else -1.0
        tab[r, :n] = sign * A_eq[i]
        tab[r, -1] = sign * b_eq[i]

    art_start = n + n_slack
    need_art = []
    for i in range(m):
        if i < m_ub and tab[i, n + i] > 0:
            basis[i] = n + i
        else:
            tab[i, art_start + i] = 1.0
            basis[i] = art_start + i
            need_art.append(i)

    iterations = 0
    allowed = np.ones(width, dtype=bool)
    if need_art:
        # phase 1: maximise -sum(artificials)
        tab[-1, :] = 0.0
        for i in need_art:
            tab[-1, :] += tab[i, :]
        for i in need_art:
            tab[-1, art_start + i] = 0.0
        status, it = _run(tab, basis, allowed, max_iter)
        iterations += it
        if tab[-1, -1] > FEAS_TOL * max(1.0, len(need_art)):
            return LPResult(INFEASIBLE, None, float("nan"), iterations)
        # drive remaining artificials out of the basis
        for i in range(m):
            if basis[i] >= art_start:
                row = tab[i, :art_start]
                nz = np.flatnonzero(np.abs(row) > 1e-9)
                if nz.size:
                    _pivot(tab, basis, i, int(nz[0]))
        keep = [i for i in range(m) if basis[i] < art_start]
        tab = np.vstack([tab[keep], tab[-1:]])
        basis = [basis[i] for i in keep]

    allowed = np.zeros(width, dtype=bool)
    allowed[:art_start] = True
    tab[:, art_start:-1] = 0.0
    # phase 2 reduced costs for the original objective
    tab[-1, :] = 0.0
    tab[-1, :n] = c
    for i, b in enumerate(basis):
        cb = c[b] if b < n else 0.0
        if cb != 0.0:
            tab[-1, :] -= cb * tab[i, :]
    status, it = _run(tab, basis, allowed, max_iter)
    iterations += it
    if status == UNBOUNDED:
        return LPResult(UNBOUNDED, None, float("inf"), iterations)

    x = np.zeros(width)
    for i, b in enumerate(basis):
        x[b] = tab[i, -1]
    x = np.maximum(x[:n], 0.0)
    return LPResult(OPTIMAL, x, float(c @ x), iterations)
