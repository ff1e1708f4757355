"""Sharp bounds on a weighted-average contrast over Wasserstein trust balls.

Each covariate cell contributes an independent small linear program over
couplings of the cell's reference degree distribution: the transport
polytope {Gamma >= 0, row sums fixed, transport cost <= radius^q}.  Bound
values are computed either by a dense simplex on that polytope or by exact
minimization of the piecewise-linear dual; vertices of the polytope are
enumerated explicitly to support inference on the optimal face.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .distributions import DiscreteDist, TransportPlan, _as_support
from .errors import (
    ConfigError,
    DataError,
    InfeasibleError,
    InfeasibleShapeError,
    SolverError,
)
from .simplex import solve_lp

_FEAS_TOL = 1e-12
_DEDUP_DECIMALS = 9
_TIE_TOL = 1e-9
_MAX_ENUM_DEGREES = 8
_ENUM_CHUNK = 200_000


@dataclass(frozen=True, eq=False)
class BallSpec:
    """A (radius, order) Wasserstein ball around a reference distribution."""

    center: DiscreteDist
    radius: float
    order: float
    monotone: bool = False

    def __post_init__(self):
        if not np.isfinite(self.radius) or self.radius < 0.0:
            raise ConfigError(f"ball radius must be nonnegative, got {self.radius!r}")
        if not np.isfinite(self.order) or self.order < 1.0:
            raise ConfigError(f"ball order must satisfy q >= 1, got {self.order!r}")


@dataclass(eq=False)
class ContrastVector:
    """Per-(degree, cell) contrast values m(g, x), in outcome units.

    ``values`` maps each covariate cell to a vector over ``degrees``; target
    proportions are already folded into the entries, so cells with zero
    target weight carry identically-zero vectors.
    """

    degrees: np.ndarray
    values: dict

    def __post_init__(self):
        self.degrees = _as_support(self.degrees)
        cleaned = {}
        for cell in sorted(self.values):
            vec = np.asarray(self.values[cell], dtype=np.float64)
            if vec.shape != self.degrees.shape:
                raise DataError(f"contrast for cell {cell!r} does not cover all degrees")
            if not np.all(np.isfinite(vec)):
                raise DataError(f"contrast for cell {cell!r} contains non-finite values")
            cleaned[tuple(cell)] = vec
        self.values = cleaned

    @property
    def cells(self):
        return tuple(self.values)

    def to_json(self) -> dict:
        return {
            "degrees": [int(g) for g in self.degrees],
            "cells": [
                {"x": list(cell), "m": [float(v) for v in vec]}
                for cell, vec in self.values.items()
            ],
        }


@dataclass(eq=False)
class TargetSpec:
    """Target-side inputs: cell proportions, reference distributions, and the ball grid."""

    degrees: np.ndarray
    p: dict
    pi_star: dict
    deltas: tuple
    q: float = 2.0
    monotone: bool = False

    def __post_init__(self):
        self.degrees = _as_support(self.degrees)
        self.p = {tuple(cell): float(v) for cell, v in sorted(self.p.items())}
        self.pi_star = {tuple(cell): dist for cell, dist in sorted(self.pi_star.items())}
        self.deltas = tuple(float(d) for d in self.deltas)
        total = sum(self.p.values())
        if abs(total - 1.0) > 1e-9:
            raise DataError(f"target cell proportions sum to {total!r}, not 1")
        if any(v < 0 for v in self.p.values()):
            raise DataError("target cell proportions must be nonnegative")
        for cell, weight in self.p.items():
            if weight > 0 and cell not in self.pi_star:
                raise ConfigError(f"cell {cell!r} has positive weight but no reference distribution")

    @property
    def cells(self):
        return tuple(self.p)

    def balls(self, delta: float) -> dict:
        """Ball specs for every positive-weight cell at a common radius."""
        return {
            cell: BallSpec(self.pi_star[cell], float(delta), self.q, self.monotone)
            for cell, weight in self.p.items()
            if weight > 0
        }


@dataclass(eq=False)
class FaceSet:
    """Vertices of the per-cell polytope whose objective is within ``threshold`` of the optimum."""

    plans: list
    objective: float
    threshold: float
    sense: str
    objectives: np.ndarray
    cost_active: np.ndarray

    def colsum_matrix(self) -> np.ndarray:
        """Column marginals of each retained plan, stacked (n_plans, n_degrees)."""
        return np.stack([plan.col_marginal for plan in self.plans])

    def __len__(self) -> int:
        return len(self.plans)

    def to_json(self) -> dict:
        return {
            "sense": self.sense,
            "objective": float(self.objective),
            "threshold": float(self.threshold),
            "degrees": [int(g) for g in self.plans[0].cols] if self.plans else [],
            "plans": [
                {
                    "gamma": [[float(v) for v in row] for row in plan.gamma],
                    "objective": float(obj),
                    "cost_active": bool(active),
                }
                for plan, obj, active in zip(self.plans, self.objectives, self.cost_active)
            ],
        }


def _cost_matrix(degrees: np.ndarray, q: float) -> np.ndarray:
    diff = np.abs(degrees[:, None] - degrees[None, :]).astype(np.float64)
    return diff**q


def _aligned_center(ball: BallSpec, degrees: np.ndarray) -> np.ndarray:
    idx = np.searchsorted(degrees, ball.center.support)
    if np.any(idx >= degrees.size) or np.any(degrees[np.minimum(idx, degrees.size - 1)] != ball.center.support):
        raise ConfigError("contrast degrees do not cover the reference support")
    mass = np.zeros(degrees.size)
    mass[idx] = ball.center.mass
    return mass


def _check_sense(sense: str) -> str:
    if sense not in ("max", "min"):
        raise ConfigError(f"sense must be 'max' or 'min', got {sense!r}")
    return sense


def _primal_cell_solve(m_x, center_mass, cost, delta_q, sense, monotone):
    """Simplex solve of one cell's program; returns (value, plan matrix)."""
    d = m_x.size
    nv = d * d
    c = np.tile(m_x, d)  # Gamma(u, v) vectorized as index u*d + v
    a_eq = np.zeros((d, nv))
    for u in range(d):
        a_eq[u, u * d : (u + 1) * d] = 1.0
    ub_rows = [cost.reshape(-1)]
    ub_vals = [delta_q]
    if monotone:
        # column masses nonincreasing in the degree value
        for k in range(d - 1):
            row = np.zeros(nv)
            row[np.arange(d) * d + k + 1] = 1.0
            row[np.arange(d) * d + k] = -1.0
            ub_rows.append(row)
            ub_vals.append(0.0)
    try:
        sol = solve_lp(
            c,
            a_eq=a_eq,
            b_eq=center_mass,
            a_ub=np.vstack(ub_rows),
            b_ub=np.asarray(ub_vals),
            maximize=(sense == "max"),
        )
    except InfeasibleError as exc:
        if monotone:
            raise InfeasibleShapeError(
                "no distribution in the ball satisfies the monotone shape restriction"
            ) from exc
        # The identity coupling is always feasible, so this cannot happen.
        raise SolverError("ball polytope unexpectedly infeasible") from exc
    return sol.value, sol.x.reshape(d, d)


def _dual_cell_max(m_x, center_mass, cost, delta_q):
    """Exact dual value of the per-cell maximum.

    The dual objective lam * delta^q + sum_u pi*(u) max_v {m(v) - lam c(u,v)}
    is convex piecewise linear in lam >= 0, so its minimum is attained at
    lam = 0 or at a crossing of two of the inner affine pieces; all such
    crossings are enumerated and evaluated.
    """
    if delta_q <= 0.0:
        # Degenerate ball: only the reference itself is feasible.
        return float(center_mass @ m_x), math.inf
    d = m_x.size
    dm = m_x[None, :, None] - m_x[None, None, :]
    dc = cost[:, :, None] - cost[:, None, :]
    with np.errstate(divide="ignore", invalid="ignore"):
        ratios = np.where(np.abs(dc) > 0, dm / dc, -1.0)
    candidates = ratios[ratios > 0.0]
    lambdas = np.concatenate([[0.0], np.unique(candidates)])
    inner = m_x[None, None, :] - lambdas[:, None, None] * cost[None, :, :]
    values = lambdas * delta_q + inner.max(axis=2) @ center_mass
    best = int(np.argmin(values))
    ties = np.flatnonzero(values <= values[best] + 1e-12)
    lam = float(lambdas[ties[0]])  # report the smallest optimal multiplier
    return float(values[best]), lam


def _cell_value(m_x, ball, degrees, sense, method):
    center_mass = _aligned_center(ball, degrees)
    cost = _cost_matrix(degrees, ball.order)
    delta_q = ball.radius**ball.order
    if method == "auto":
        method = "primal" if ball.monotone else "dual"
    if method == "dual":
        if ball.monotone:
            raise ConfigError("the dual path cannot encode shape restrictions")
        if sense == "max":
            value, _ = _dual_cell_max(m_x, center_mass, cost, delta_q)
        else:
            value, _ = _dual_cell_max(-m_x, center_mass, cost, delta_q)
            value = -value
        return value
    if method != "primal":
        raise ConfigError(f"unknown method {method!r}")
    value, _ = _primal_cell_solve(m_x, center_mass, cost, delta_q, sense, ball.monotone)
    return value


def _resolve_cells(m: ContrastVector, balls: dict) -> list:
    cells = []
    for cell in balls:
        if tuple(cell) not in m.values:
            raise ConfigError(f"ball supplied for unknown cell {cell!r}")
    for cell, vec in m.values.items():
        if cell in balls:
            cells.append(cell)
        elif np.any(vec != 0.0):
            raise ConfigError(f"cell {cell!r} has nonzero contrast but no ball spec")
    return cells


def bound_profile(m: ContrastVector, balls: dict, sense: str, method: str = "auto") -> dict:
    """Per-cell optimal values; the total bound is their sum.

    Parameters
    ----------
    m : ContrastVector
    balls : dict
        Mapping cell -> BallSpec for every cell with nonzero contrast.
    sense : str
        "max" for the upper bound, "min" for the lower.
    method : str
        "dual" (exact piecewise-linear dual, default for unrestricted balls),
        "primal" (dense simplex, required for shape restrictions), or "auto".
    """
    _check_sense(sense)
    profile = {}
    for cell in _resolve_cells(m, balls):
        profile[cell] = _cell_value(m.values[cell], balls[cell], m.degrees, sense, method)
    return profile


def upper_bound(m: ContrastVector, balls: dict, method: str = "auto") -> float:
    """Largest attainable weighted-average contrast over the trust balls."""
    return float(sum(bound_profile(m, balls, "max", method).values()))


def lower_bound(m: ContrastVector, balls: dict, method: str = "auto") -> float:
    """Smallest attainable weighted-average contrast over the trust balls."""
    return float(sum(bound_profile(m, balls, "min", method).values()))


def dual_upper_bound(m: ContrastVector, balls: dict) -> float:
    """Upper bound via the exact dual; equals ``upper_bound`` by strong duality."""
    return float(sum(bound_profile(m, balls, "max", "dual").values()))


def dual_cell_diagnostics(m_x, ball: BallSpec, degrees=None):
    """Dual value and the smallest optimal multiplier for one cell's maximum."""
    degrees = ball.center.support if degrees is None else _as_support(degrees)
    m_x = np.asarray(m_x, dtype=np.float64)
    center_mass = _aligned_center(ball, degrees)
    cost = _cost_matrix(degrees, ball.order)
    return _dual_cell_max(m_x, center_mass, cost, ball.radius**ball.order)


def bound_with_shape(m: ContrastVector, balls: dict, sense: str) -> float:
    """Bound under the monotone (nonincreasing mass) shape restriction.

    Every ball must carry the monotone flag; infeasible combinations raise
    ``InfeasibleShapeError`` naming the offending cell.
    """
    _check_sense(sense)
    for cell, ball in balls.items():
        if not ball.monotone:
            raise ConfigError(f"ball for cell {cell!r} does not request a shape restriction")
    total = 0.0
    for cell in _resolve_cells(m, balls):
        try:
            total += _cell_value(m.values[cell], balls[cell], m.degrees, sense, "primal")
        except InfeasibleShapeError as exc:
            raise InfeasibleShapeError(f"cell {cell!r}: {exc}") from exc
    return float(total)


def atte_point(m: ContrastVector, pi_target: dict, p_target: dict) -> float:
    """Plug-in average effect when the target degree distributions are known."""
    total_p = sum(float(v) for v in p_target.values())
    if abs(total_p - 1.0) > 1e-9:
        raise DataError(f"target proportions sum to {total_p!r}, not 1")
    if any(float(v) < 0 for v in p_target.values()):
        raise DataError("target proportions must be nonnegative")
    total = 0.0
    for cell, weight in p_target.items():
        cell = tuple(cell)
        if float(weight) == 0.0:
            continue
        if cell not in m.values:
            raise ConfigError(f"no contrast for cell {cell!r}")
        dist = pi_target[cell]
        idx = np.searchsorted(m.degrees, dist.support)
        if np.any(idx >= m.degrees.size) or np.any(
            m.degrees[np.minimum(idx, m.degrees.size - 1)] != dist.support
        ):
            raise DataError(f"target degrees for cell {cell!r} fall outside the contrast support")
        total += float(m.values[cell][idx] @ dist.mass)
    return total


# ---------------------------------------------------------------------------
# Vertex enumeration


def _assignment_block(start, stop, n_slots, n_choices):
    """Rows ``start:stop`` of the lexicographic enumeration of assignment vectors."""
    idx = np.arange(start, stop, dtype=np.int64)
    out = np.empty((idx.size, n_slots), dtype=np.int64)
    for k in range(n_slots - 1, -1, -1):
        out[:, k] = idx % n_choices
        idx = idx // n_choices
    return out


def _enumerate_vertices(center_mass, cost, delta_q):
    """All basic feasible solutions of {Gamma >= 0, row sums fixed, cost <= delta_q}.

    After augmenting the cost constraint with a slack, a basis is one column
    per positive-mass row plus either the slack or a second column in one
    row.  Provably singular bases (uncovered rows, equal-cost column pairs)
    are skipped analytically; everything else is solved in closed form.
    Returns deduplicated plans as a (k, d, d) stack plus their cost slacks.
    """
    d = center_mass.size
    pos = np.flatnonzero(center_mass > _FEAS_TOL)
    npos = pos.size
    if npos == 0:
        raise DataError("reference distribution has no mass")
    weights = center_mass[pos]
    cost_pos = cost[pos]

    gammas = []
    slacks = []

    def _emit(assign, row_ids, extra=None):
        """Materialize plans for a block of assignments (optionally with a split row)."""
        k = assign.shape[0]
        if k == 0:
            return
        gamma = np.zeros((k, d, d))
        for slot, u in enumerate(row_ids):
            gamma[np.arange(k), u, assign[:, slot]] = center_mass[u]
        if extra is not None:
            u0, v1, v2, g1, g2 = extra
            gamma[np.arange(k), u0, v1] = g1
            gamma[np.arange(k), u0, v2] = g2
        gammas.append(gamma)

    total = d**npos
    for start in range(0, total, _ENUM_CHUNK):
        assign = _assignment_block(start, min(start + _ENUM_CHUNK, total), npos, d)
        move_cost = np.zeros(assign.shape[0])
        for slot in range(npos):
            move_cost += cost_pos[slot, assign[:, slot]] * weights[slot]
        feas = move_cost <= delta_q + 1e-12
        _emit(assign[feas], pos)
        slacks.append(delta_q - move_cost[feas])

    # Cost constraint binding: one positive row splits its mass across two
    # destinations with distinct unit costs.
    for slot0 in range(npos):
        u0 = pos[slot0]
        others = np.delete(pos, slot0)
        w_others = center_mass[others]
        c_others = cost[others]
        p0 = center_mass[u0]
        n_rest = others.size
        total_rest = d**n_rest if n_rest else 1
        for v1 in range(d):
            for v2 in range(v1 + 1, d):
                c1, c2 = cost[u0, v1], cost[u0, v2]
                if abs(c1 - c2) <= _FEAS_TOL:
                    continue  # singular basis
                for start in range(0, total_rest, _ENUM_CHUNK):
                    assign = _assignment_block(start, min(start + _ENUM_CHUNK, total_rest), n_rest, d)
                    base_cost = np.zeros(assign.shape[0])
                    for slot in range(n_rest):
                        base_cost += c_others[slot, assign[:, slot]] * w_others[slot]
                    r = delta_q - base_cost
                    g2 = (r - c1 * p0) / (c2 - c1)
                    g1 = p0 - g2
                    feas = (g1 >= -_FEAS_TOL) & (g2 >= -_FEAS_TOL)
                    _emit(
                        assign[feas],
                        others,
                        extra=(u0, v1, v2, np.clip(g1[feas], 0.0, None), np.clip(g2[feas], 0.0, None)),
                    )
                    slacks.append(np.zeros(int(feas.sum())))

    stack = np.concatenate(gammas, axis=0)
    slack = np.concatenate(slacks)
    flat = stack.reshape(stack.shape[0], -1)
    _, first = np.unique(np.round(flat, _DEDUP_DECIMALS), axis=0, return_index=True)
    first = np.sort(first)
    return stack[first], slack[first]


def enumerate_face(m_x, ball: BallSpec, a: float, sense: str, degrees=None) -> FaceSet:
    """Vertices of the cell polytope whose objective is within ``a`` of the optimum.

    Parameters
    ----------
    m_x : array
        Contrast values over ``degrees`` for one cell.
    ball : BallSpec
    a : float
        Nonnegative inclusion slack; ``a = 0`` keeps exact optimizers (up to
        a 1e-9 tie tolerance), ``a = inf`` keeps every vertex.
    sense : str
        "max" or "min".
    degrees : array, optional
        Degree grid; defaults to the ball center's support.
    """
    _check_sense(sense)
    if not a >= 0.0:
        raise ConfigError(f"face threshold must be nonnegative, got {a!r}")
    degrees = ball.center.support if degrees is None else _as_support(degrees)
    if degrees.size > _MAX_ENUM_DEGREES:
        raise ConfigError(
            f"vertex enumeration is limited to {_MAX_ENUM_DEGREES} degree values, got {degrees.size}"
        )
    m_x = np.asarray(m_x, dtype=np.float64)
    if m_x.shape != degrees.shape:
        raise DataError("contrast vector does not match the degree grid")
    center_mass = _aligned_center(ball, degrees)
    cost = _cost_matrix(degrees, ball.order)
    stack, slack = _enumerate_vertices(center_mass, cost, ball.radius**ball.order)
    objectives = stack.sum(axis=1) @ m_x
    if sense == "max":
        opt = float(objectives.max())
        keep = objectives >= opt - a - _TIE_TOL
    else:
        opt = float(objectives.min())
        keep = objectives <= opt + a + _TIE_TOL
    keep = np.flatnonzero(keep)
    plans = [TransportPlan(degrees, degrees, stack[i]) for i in keep]
    return FaceSet(
        plans=plans,
        objective=opt,
        threshold=float(a),
        sense=sense,
        objectives=objectives[keep],
        cost_active=slack[keep] <= _TIE_TOL,
    )
