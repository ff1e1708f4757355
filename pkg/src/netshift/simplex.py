"""Dense two-phase primal simplex for small linear programs.

Solves min/max c @ x subject to A_eq x = b_eq, A_ub x <= b_ub, x >= 0.
Bland's rule is used for both pivot choices, which rules out cycling; the
programs solved here stay tiny (a few dozen variables), so the dense
tableau is preferred over sparse machinery for exactness and debuggability.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InfeasibleError, SolverError

_PIVOT_TOL = 1e-11
_FEAS_TOL = 1e-9


@dataclass
class LPSolution:
    x: np.ndarray
    value: float
    slack: np.ndarray
    iterations: int


def _pivot(tableau: np.ndarray, basis: np.ndarray, row: int, col: int) -> None:
    tableau[row] /= tableau[row, col]
    piv = tableau[row]
    for i in range(tableau.shape[0]):
        if i != row and abs(tableau[i, col]) > 0.0:
            tableau[i] -= tableau[i, col] * piv
    basis[row] = col


def _run_phase(tableau, basis, costs, allowed, max_iter):
    """Minimize costs over the current tableau; returns iteration count."""
    m = tableau.shape[0]
    iterations = 0
    while True:
        if iterations > max_iter:
            raise SolverError(f"simplex iteration cap {max_iter} exceeded")
        reduced = costs - costs[basis] @ tableau[:, :-1]
        entering = -1
        for j in np.flatnonzero(allowed):
            if reduced[j] < -_PIVOT_TOL:
                entering = int(j)
                break
        if entering < 0:
            return iterations
        col = tableau[:, entering]
        rows = np.flatnonzero(col > _PIVOT_TOL)
        if rows.size == 0:
            raise SolverError("linear program is unbounded")
        ratios = tableau[rows, -1] / col[rows]
        best = ratios.min()
        ties = rows[ratios <= best + _PIVOT_TOL]
        # Bland: among minimum-ratio rows, leave the smallest basic index.
        leaving = ties[np.argmin(basis[ties])]
        _pivot(tableau, basis, int(leaving), entering)
        iterations += 1


def solve_lp(c, a_eq=None, b_eq=None, a_ub=None, b_ub=None, maximize=False,
             max_iter=20000) -> LPSolution:
    """Solve the linear program and return an optimal basic feasible solution.

    Raises ``InfeasibleError`` when no feasible point exists and
    ``SolverError`` on unboundedness or iteration-cap failures.
    """
    c = np.asarray(c, dtype=np.float64)
    n = c.size
    obj = -c if maximize else c.copy()

    blocks, rhs = [], []
    if a_eq is not None:
        a_eq = np.atleast_2d(np.asarray(a_eq, dtype=np.float64))
        blocks.append(a_eq)
        rhs.append(np.atleast_1d(np.asarray(b_eq, dtype=np.float64)))
    n_eq = 0 if a_eq is None else a_eq.shape[0]
    if a_ub is not None:
        a_ub = np.atleast_2d(np.asarray(a_ub, dtype=np.float64))
        blocks.append(a_ub)
        rhs.append(np.atleast_1d(np.asarray(b_ub, dtype=np.float64)))
    n_ub = 0 if a_ub is None else a_ub.shape[0]
    m = n_eq + n_ub
    if m == 0:
        raise SolverError("no constraints supplied")

    a = np.vstack(blocks)
    b = np.concatenate(rhs)

    # Slack columns for the inequality rows.
    slack_cols = np.zeros((m, n_ub))
    for k in range(n_ub):
        slack_cols[n_eq + k, k] = 1.0
    a = np.hstack([a, slack_cols])

    # Standard form requires b >= 0; flipped inequality rows lose their
    # ready-made slack basis and get an artificial like the equality rows.
    flip = b < 0
    a[flip] *= -1.0
    b = np.where(flip, -b, b)

    need_art = np.ones(m, dtype=bool)
    basis = np.full(m, -1, dtype=np.int64)
    for k in range(n_ub):
        i = n_eq + k
        if not flip[i]:
            basis[i] = n + k
            need_art[i] = False

    art_rows = np.flatnonzero(need_art)
    n_art = art_rows.size
    art_cols = np.zeros((m, n_art))
    for k, i in enumerate(art_rows):
        art_cols[i, k] = 1.0
        basis[i] = n + n_ub + k
    a = np.hstack([a, art_cols])

    ncols = a.shape[1]
    tableau = np.hstack([a, b[:, None]])
    is_artificial = np.zeros(ncols, dtype=bool)
    is_artificial[n + n_ub:] = True

    iterations = 0
    if n_art:
        phase1 = np.zeros(ncols)
        phase1[is_artificial] = 1.0
        iterations += _run_phase(tableau, basis, phase1, np.ones(ncols, dtype=bool), max_iter)
        if float(phase1[basis] @ tableau[:, -1]) > _FEAS_TOL:
            raise InfeasibleError("linear program is infeasible")
        # Drive leftover artificials out of the basis; an all-zero row is a
        # redundant constraint and is dropped.
        keep = np.ones(tableau.shape[0], dtype=bool)
        for i in range(tableau.shape[0]):
            if is_artificial[basis[i]]:
                pivots = np.flatnonzero(np.abs(tableau[i, : n + n_ub]) > _PIVOT_TOL)
                if pivots.size:
                    _pivot(tableau, basis, i, int(pivots[0]))
                else:
                    keep[i] = False
        if not np.all(keep):
            tableau = tableau[keep]
            basis = basis[keep]

    phase2 = np.zeros(ncols)
    phase2[:n] = obj
    iterations += _run_phase(tableau, basis, phase2, ~is_artificial, max_iter)

    x_full = np.zeros(ncols)
    x_full[basis] = tableau[:, -1]
    x = x_full[:n]
    slack = x_full[n : n + n_ub]
    value = float(c @ x)
    return LPSolution(x=x, value=value, slack=slack, iterations=iterations)
