"""Finite discrete probability distributions and exact Wasserstein distances on the line."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DataError, EmptyCellError

#: Mass vectors whose sum deviates from one by more than this are rejected;
#: smaller deviations are renormalized exactly.
MASS_SUM_TOL = 1e-9

_TINY = 1e-15


def _as_support(values) -> np.ndarray:
    arr = np.asarray(values)
    if arr.ndim != 1 or arr.size == 0:
        raise DataError("support must be a nonempty 1-D sequence")
    if not np.all(np.equal(np.mod(arr, 1), 0)):
        raise DataError("support values must be integers")
    arr = arr.astype(np.int64)
    if np.any(arr < 0):
        raise DataError("support values must be nonnegative")
    if arr.size > 1 and np.any(np.diff(arr) <= 0):
        raise DataError("support must be strictly increasing")
    return arr


@dataclass(frozen=True, eq=False)
class DiscreteDist:
    """Probability mass function on a finite, strictly increasing integer support.

    Masses must be nonnegative and sum to one; sums within ``MASS_SUM_TOL``
    of one are renormalized exactly, anything farther off is rejected as a
    data error rather than silently repaired.
    """

    support: np.ndarray
    mass: np.ndarray

    def __post_init__(self):
        support = _as_support(self.support)
        mass = np.asarray(self.mass, dtype=np.float64).copy()
        if mass.shape != support.shape:
            raise DataError("support and mass must have equal length")
        if not np.all(np.isfinite(mass)):
            raise DataError("masses must be finite")
        if np.any(mass < -1e-12):
            raise DataError("masses must be nonnegative")
        np.clip(mass, 0.0, None, out=mass)
        total = float(mass.sum())
        if abs(total - 1.0) > MASS_SUM_TOL:
            raise DataError(f"masses sum to {total!r}, not 1")
        mass /= total
        support.setflags(write=False)
        mass.setflags(write=False)
        object.__setattr__(self, "support", support)
        object.__setattr__(self, "mass", mass)

    @classmethod
    def point_mass(cls, value: int) -> "DiscreteDist":
        return cls(np.array([value]), np.array([1.0]))

    @classmethod
    def uniform(cls, support) -> "DiscreteDist":
        support = _as_support(support)
        return cls(support, np.full(support.size, 1.0 / support.size))

    @classmethod
    def bernoulli(cls, alpha: float) -> "DiscreteDist":
        """Two-point distribution on {0, 1} with P(1) = alpha."""
        if not 0.0 <= alpha <= 1.0:
            raise DataError("alpha must lie in [0, 1]")
        return cls(np.array([0, 1]), np.array([1.0 - alpha, alpha]))

    @classmethod
    def from_samples(cls, values) -> "DiscreteDist":
        """Empirical distribution of a sample of nonnegative integers."""
        values = np.asarray(values)
        if values.size == 0:
            raise DataError("cannot build a distribution from an empty sample")
        support, counts = np.unique(values, return_counts=True)
        return cls(support, counts / counts.sum())

    def allclose(self, other: "DiscreteDist", atol: float = 1e-12) -> bool:
        if not np.array_equal(self.support, other.support):
            return False
        return bool(np.allclose(self.mass, other.mass, atol=atol, rtol=0.0))

    def to_json(self) -> dict:
        return {
            "support": [int(v) for v in self.support],
            "mass": [float(v) for v in self.mass],
        }

    @classmethod
    def from_json(cls, record: dict) -> "DiscreteDist":
        try:
            return cls(record["support"], record["mass"])
        except KeyError as exc:
            raise DataError(f"distribution record missing key {exc}") from exc


@dataclass(frozen=True, eq=False)
class TransportPlan:
    """Nonnegative coupling matrix; rows marginalize to the source mass, columns to the destination."""

    rows: np.ndarray
    cols: np.ndarray
    gamma: np.ndarray

    def __post_init__(self):
        rows = _as_support(self.rows)
        cols = _as_support(self.cols)
        gamma = np.asarray(self.gamma, dtype=np.float64)
        if gamma.shape != (rows.size, cols.size):
            raise DataError("gamma shape must match the row and column supports")
        if np.any(gamma < -1e-12):
            raise DataError("transport plan entries must be nonnegative")
        gamma = np.clip(gamma, 0.0, None)
        for arr in (rows, cols, gamma):
            arr.setflags(write=False)
        object.__setattr__(self, "rows", rows)
        object.__setattr__(self, "cols", cols)
        object.__setattr__(self, "gamma", gamma)

    @property
    def row_marginal(self) -> np.ndarray:
        return self.gamma.sum(axis=1)

    @property
    def col_marginal(self) -> np.ndarray:
        return self.gamma.sum(axis=0)

    def cost(self, q: float) -> float:
        """Total transport cost sum Gamma(u, v) |u - v|^q."""
        diff = np.abs(self.rows[:, None] - self.cols[None, :], dtype=np.float64)
        return float(np.sum(self.gamma * diff**q))

    def to_json(self) -> dict:
        return {
            "rows": [int(v) for v in self.rows],
            "cols": [int(v) for v in self.cols],
            "gamma": [[float(v) for v in row] for row in self.gamma],
        }


def align_supports(a: DiscreteDist, b: DiscreteDist):
    """Zero-pad both mass vectors onto the union of the two supports."""
    support = np.union1d(a.support, b.support)
    mass_a = np.zeros(support.size)
    mass_b = np.zeros(support.size)
    mass_a[np.searchsorted(support, a.support)] = a.mass
    mass_b[np.searchsorted(support, b.support)] = b.mass
    return support, mass_a, mass_b


def _monotone_moves(support_a, mass_a, support_b, mass_b, q: float):
    """Merge the two CDF breakpoint lists into coupled mass moves.

    Between consecutive breakpoints both quantile functions are constant, so
    each merged segment moves ``step`` mass from one atom to one atom; this
    coupling is exact for distributions on the real line.  Returns the moves
    as ``(i, j, step)`` triples and the total cost sum step * |a_i - b_j|^q.
    """
    moves = []
    cost = 0.0
    i = j = 0
    na, nb = len(mass_a), len(mass_b)
    rem_a = float(mass_a[0])
    rem_b = float(mass_b[0])
    while i < na and j < nb:
        step = min(rem_a, rem_b)
        if step > _TINY:
            moves.append((i, j, step))
            cost += step * float(np.abs(support_a[i] - support_b[j])) ** q
        rem_a -= step
        rem_b -= step
        if rem_a <= _TINY:
            i += 1
            if i < na:
                rem_a = float(mass_a[i])
        if rem_b <= _TINY:
            j += 1
            if j < nb:
                rem_b = float(mass_b[j])
    return moves, cost


def _check_order(q: float) -> float:
    q = float(q)
    if not np.isfinite(q) or q < 1.0:
        raise DataError(f"Wasserstein order must satisfy q >= 1, got {q!r}")
    return q


def wasserstein(pi: DiscreteDist, pi_star: DiscreteDist, q: float = 1.0) -> float:
    """Exact q-Wasserstein distance between two integer-supported distributions.

    Parameters
    ----------
    pi, pi_star : DiscreteDist
        The two distributions; supports need not overlap.
    q : float
        Order of the distance, q >= 1.

    Returns
    -------
    float
        (min over couplings of sum Gamma(u, v)|u - v|^q)^(1/q), computed by
        quantile coupling, which attains the optimum on the line.
    """
    q = _check_order(q)
    _, cost = _monotone_moves(pi_star.support, pi_star.mass, pi.support, pi.mass, q)
    return float(max(cost, 0.0) ** (1.0 / q))


def optimal_plan(pi: DiscreteDist, pi_star: DiscreteDist, q: float = 1.0) -> TransportPlan:
    """Monotone optimal coupling from ``pi_star`` (rows) to ``pi`` (columns).

    Both marginals are zero-padded onto the union of the supports, so the
    plan is returned as a square matrix.  For q > 1 the optimal plan is
    unique and equals this one; for q = 1 the monotone coupling is the
    canonical choice among the optima.
    """
    q = _check_order(q)
    support, mass_pi, mass_star = align_supports(pi, pi_star)
    gamma = np.zeros((support.size, support.size))
    moves, _ = _monotone_moves(support, mass_star, support, mass_pi, q)
    for i, j, step in moves:
        gamma[i, j] += step
    plan = TransportPlan(support, support, gamma)
    if not np.allclose(plan.row_marginal, mass_star, atol=1e-10, rtol=0.0):
        raise DataError("coupling failed to reproduce the source marginal")
    if not np.allclose(plan.col_marginal, mass_pi, atol=1e-10, rtol=0.0):
        raise DataError("coupling failed to reproduce the destination marginal")
    return plan


def degree_dist_conditional(data, x) -> DiscreteDist:
    """Empirical degree distribution among units whose covariate cell equals ``x``.

    ``data`` is any object exposing ``cell_mask(x)`` and ``degree`` (see
    ``SourceDataset``).  Raises ``EmptyCellError`` when no unit matches.
    """
    mask = data.cell_mask(x)
    if not np.any(mask):
        raise EmptyCellError(f"no units with covariate cell {tuple(x)!r}")
    return DiscreteDist.from_samples(data.degree[mask])
