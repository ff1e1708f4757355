"""Dependent wild bootstrap for the trust-ball bound estimators.

Residuals are resampled with Gaussian multipliers whose covariance is a
distance-kernel matrix, preserving cross-sectional dependence.  Each
replicate statistic is the maximum (minimum, for the lower side) over the
estimated optimal face of a linear functional of the refitted coefficients;
because the kernel regression is linear in the outcome, the refit reduces
to one matrix-vector product per cell.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.stats import norm

from .bounds import TargetSpec, bound_profile, enumerate_face
from .errors import ConfigError, DataError, IndefiniteKernelError, NumericalError
from .graphs import mahalanobis_distances, shortest_paths
from .regression import BasisSpec, VCFit, contrast_vector

_PSD_TOL = 1e-8


def truncated_quadratic(u):
    """Compactly supported kernel (1 - |u|)^2 on |u| <= 1, zero beyond."""
    u = np.abs(np.asarray(u, dtype=np.float64))
    return np.where(u <= 1.0, (1.0 - u) ** 2, 0.0)


@dataclass(eq=False)
class DistanceModel:
    """Pairwise proxy distances plus the kernel and bandwidth that map them to multiplier correlations."""

    distances: np.ndarray
    kernel: callable = truncated_quadratic
    bandwidth: float = None

    def __post_init__(self):
        dist = np.asarray(self.distances, dtype=np.float64)
        if dist.ndim != 2 or dist.shape[0] != dist.shape[1]:
            raise DataError("distance matrix must be square")
        if np.any(np.diagonal(dist) != 0.0):
            raise DataError("self-distances must be zero")
        if np.any(dist < 0):
            raise DataError("distances must be nonnegative")
        finite = np.isfinite(dist)
        if not np.array_equal(finite, finite.T) or not np.allclose(
            dist[finite & finite.T], dist.T[finite & finite.T], atol=1e-10, rtol=0.0
        ):
            raise DataError("distance matrix must be symmetric")
        self.distances = dist
        probe = float(np.asarray(self.kernel(0.0)))
        if abs(probe - 1.0) > 1e-12:
            raise DataError("kernel must satisfy K(0) = 1")
        left, right = self.kernel(np.array([-0.37, 0.37]))
        if abs(left - right) > 1e-12:
            raise DataError("kernel must be even")
        if self.bandwidth is not None:
            self.bandwidth = float(self.bandwidth)
            if not self.bandwidth > 0:
                raise ConfigError("distance bandwidth must be positive")

    @property
    def n(self) -> int:
        return self.distances.shape[0]

    def with_bandwidth(self, bandwidth: float) -> "DistanceModel":
        return DistanceModel(self.distances, self.kernel, bandwidth)


@dataclass(eq=False)
class BootKernel:
    """Eigen-decomposed multiplier covariance matrix with PSD clamping diagnostics."""

    matrix: np.ndarray
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray
    factor: np.ndarray
    n_clamped: int
    min_eigenvalue: float

    @property
    def n(self) -> int:
        return self.matrix.shape[0]

    def diagnostics(self) -> dict:
        return {
            "n_clamped": int(self.n_clamped),
            "min_eigenvalue": float(self.min_eigenvalue),
        }

    def covariance(self) -> np.ndarray:
        """Exact covariance of the multiplier draws (the truncated kernel matrix)."""
        return self.factor @ self.factor.T


def build_kernel(dist: DistanceModel, eps_psd: float = _PSD_TOL, policy: str = "strict") -> BootKernel:
    """Kernel matrix K(distance / bandwidth), eigen-decomposed with nonnegative spectrum.

    Infinite distances map to zero correlation.  Under the default
    ``strict`` policy, eigenvalues below ``-eps_psd * max_eigenvalue`` mean
    the kernel/bandwidth combination is materially indefinite and raise
    ``IndefiniteKernelError``, while roundoff-sized negatives are clamped to
    zero.  ``policy="truncate"`` instead zeroes every negative eigenvalue
    and records the discarded mass; this is the usual remedy for distance
    models that put adjacent units at distance zero, which are indefinite
    by construction (any induced two-path forces a negative eigenvalue).
    """
    if dist.bandwidth is None:
        raise ConfigError("distance model has no bandwidth; call with_bandwidth first")
    if policy not in ("strict", "truncate"):
        raise ConfigError(f"unknown PSD policy {policy!r}")
    scaled = dist.distances / dist.bandwidth
    finite = np.isfinite(scaled)
    matrix = np.zeros_like(dist.distances)
    matrix[finite] = dist.kernel(scaled[finite])
    matrix = 0.5 * (matrix + matrix.T)
    eigenvalues, eigenvectors = np.linalg.eigh(matrix)
    min_eig = float(eigenvalues.min())
    top = float(max(eigenvalues.max(), 1.0))
    if policy == "strict" and min_eig < -eps_psd * top:
        raise IndefiniteKernelError(
            f"multiplier kernel is indefinite (min eigenvalue {min_eig:.3e}); "
            "positive semidefiniteness depends on the kernel choice -- "
            "use a different kernel or bandwidth, or build with policy='truncate'"
        )
    n_clamped = int(np.sum(eigenvalues < 0.0))
    # snap round-off-sized eigenvalues (either sign) exactly to zero so that
    # rank-deficient kernels produce exactly degenerate draws
    clamped = np.where(eigenvalues < 1e-12 * top, 0.0, eigenvalues)
    factor = eigenvectors * np.sqrt(clamped)[None, :]
    return BootKernel(
        matrix=matrix,
        eigenvalues=clamped,
        eigenvectors=eigenvectors,
        factor=factor,
        n_clamped=n_clamped,
        min_eigenvalue=min_eig,
    )


def draw_eta(kern: BootKernel, rng) -> np.ndarray:
    """One mean-zero Gaussian multiplier vector with covariance equal to the kernel matrix."""
    return kern.factor @ rng.standard_normal(kern.n)


def path_weighted_distance(data, columns, use_blocks: bool = False) -> DistanceModel:
    """Mahalanobis distances on named columns, damped by network proximity.

    The damping weight is 0 for adjacent pairs, Phi(1 - 1/(path - 1)) in the
    shortest-path hop count otherwise (0.5 at two hops, approaching Phi(1)
    for remote pairs); pairs in different components get the remote weight.
    With ``use_blocks`` pairs in different blocks are set infinitely far
    apart, removing them from the kernel entirely.
    """
    try:
        mat = np.column_stack([data.columns[name] for name in columns])
    except KeyError as exc:
        raise ConfigError(f"dataset has no column {exc}") from exc
    proxy = mahalanobis_distances(mat)
    paths = shortest_paths(data.adjacency)
    damp = np.full_like(proxy, float(norm.cdf(1.0)))
    reachable = np.isfinite(paths)
    far = np.clip(paths, 2.0, None)  # placeholder to keep the cdf argument finite
    damp[reachable] = norm.cdf(1.0 - 1.0 / (far[reachable] - 1.0))
    damp[reachable & (paths <= 1.0)] = 0.0
    delta = damp * proxy
    np.fill_diagonal(delta, 0.0)
    if use_blocks:
        if data.blocks is None:
            raise ConfigError("block rule requested but the dataset has no block labels")
        cross = data.blocks[:, None] != data.blocks[None, :]
        delta[cross] = np.inf
    return DistanceModel(distances=delta)


def bandwidth_rule(dist: DistanceModel, degrees, c_d: float) -> float:
    """Empirical quantile bandwidth: the (c_d * max degree / n) quantile of finite off-diagonal distances."""
    if not c_d > 0:
        raise ConfigError(f"c_d must be positive, got {c_d!r}")
    degrees = np.asarray(degrees)
    n = dist.n
    level = min(1.0, float(c_d) * float(degrees.max()) / n)
    off = dist.distances[~np.eye(n, dtype=bool)]
    finite = off[np.isfinite(off)]
    if finite.size == 0:
        raise DataError("no finite off-diagonal distances to take a quantile of")
    return float(np.quantile(finite, level))


def _type1_quantile(sorted_vals: np.ndarray, p: float) -> float:
    """Order statistic at ceil(B p), clipped into [1, B]."""
    b = sorted_vals.size
    k = int(np.ceil(b * p))
    return float(sorted_vals[min(max(k, 1), b) - 1])


@dataclass(eq=False)
class BoundCIEntry:
    delta: float
    q: float
    side: str
    alpha: float
    point: float
    quantile_lo: float
    quantile_hi: float
    ci_lo: float
    ci_hi: float
    face_sizes: dict

    def covers(self, value: float) -> bool:
        return self.ci_lo <= value <= self.ci_hi


@dataclass(eq=False)
class BoundCI:
    """Bootstrap confidence intervals per (radius, side, level)."""

    entries: list
    n_units: int
    b_replicates: int
    seed: int
    failed_replicates: int
    kernel_diagnostics: dict
    face_audit: dict
    faces: dict  # {delta: {(cell, side): FaceSet}} as used for the statistics

    def lookup(self, delta: float, side: str, alpha: float) -> BoundCIEntry:
        for entry in self.entries:
            if entry.side == side and entry.delta == delta and entry.alpha == alpha:
                return entry
        raise KeyError((delta, side, alpha))

    def to_rows(self) -> list:
        seed = (
            self.seed
            if np.ndim(self.seed) == 0
            else "|".join(str(int(v)) for v in self.seed)
        )
        return [
            {
                "delta": entry.delta,
                "q": entry.q,
                "side": entry.side,
                "point": entry.point,
                "ci_lo": entry.ci_lo,
                "ci_hi": entry.ci_hi,
                "B": self.b_replicates,
                "alpha": entry.alpha,
                "seed": seed,
            }
            for entry in self.entries
        ]

    def audit_json(self) -> dict:
        return {
            "n_units": int(self.n_units),
            "B": int(self.b_replicates),
            "seed": self.seed,
            "failed_replicates": int(self.failed_replicates),
            "kernel": self.kernel_diagnostics,
            "faces": self.face_audit,
        }


def _seed_tuple(seed) -> tuple:
    if np.ndim(seed) == 0:
        return (int(seed),)
    return tuple(int(v) for v in seed)


def replicate_statistic(face_colsums: dict, shifts: dict, sense: str) -> float:
    """Extremal linear functional over the face plans, summed across cells.

    ``face_colsums[x]`` stacks each retained plan's column marginal;
    ``shifts[x]`` is the per-degree contrast perturbation for the replicate.
    Linear in the perturbation: scaling every shift scales the statistic.
    """
    total = 0.0
    for cell, colsums in face_colsums.items():
        values = colsums @ shifts[cell]
        total += float(values.max() if sense == "max" else values.min())
    return total


def bootstrap_bounds(
    fit: VCFit,
    basis: BasisSpec,
    target: TargetSpec,
    kern: BootKernel = None,
    B: int = 500,
    alpha=0.05,
    seed=0,
    faces: dict = None,
    face_threshold: float = None,
    sides=("lower", "upper"),
) -> BoundCI:
    """Wild-bootstrap confidence intervals for the bound estimates.

    Parameters
    ----------
    fit, basis : the fitted outcome regression and its basis.
    target : TargetSpec
        Cell weights, reference distributions, and the radius grid.
    kern : BootKernel, optional
        Multiplier covariance; ``None`` draws independent multipliers.
    B : int
        Number of bootstrap replicates.
    alpha : float or sequence of floats
        Two-sided levels; one set of CI entries is produced per level.
    seed : int or sequence of ints
        Replicate b uses the stream seeded by (*seed, b), so results are
        reproducible and order-independent.
    faces : dict, optional
        Precomputed ``{delta: {(cell, side): FaceSet}}`` (e.g. oracle faces);
        if omitted, faces are estimated with threshold
        ``face_threshold`` or the default rule |point_x| * n^(-2/5).
    sides : subset of ("lower", "upper").
    """
    if target.monotone:
        raise ConfigError("bootstrap inference is defined for unrestricted balls only")
    alphas = (float(alpha),) if np.ndim(alpha) == 0 else tuple(float(a) for a in alpha)
    for a in alphas:
        if not 0.0 < a < 1.0:
            raise ConfigError(f"alpha must lie in (0, 1), got {a!r}")
    sides = tuple(sides)
    for side in sides:
        if side not in ("lower", "upper"):
            raise ConfigError(f"unknown side {side!r}")
    if B < 1:
        raise ConfigError("need at least one bootstrap replicate")
    n = fit.n
    sqrt_n = np.sqrt(n)
    seed_base = _seed_tuple(seed)
    resid = fit.residuals
    if kern is not None and kern.n != n:
        raise DataError("kernel size does not match the sample")

    m_hat = contrast_vector(fit, basis, target.p, target.degrees)
    z_rows = basis.contrast_rows(target.degrees)
    active = [cell for cell, weight in target.p.items() if weight > 0]
    stat_map = {cell: target.p[cell] * (z_rows @ fit.coef_map[cell]) for cell in active}

    senses = {"upper": "max", "lower": "min"}
    points, face_colsums, face_audit, used_faces = {}, {}, {}, {}
    for delta in target.deltas:
        balls = target.balls(delta)
        used_faces.setdefault(delta, {})
        for side in sides:
            sense = senses[side]
            profile = bound_profile(m_hat, balls, sense, method="dual")
            points[(delta, side)] = float(sum(profile.values()))
            colsums = {}
            sizes = {}
            for cell in active:
                if faces is not None:
                    face = faces[delta][(cell, side)]
                else:
                    a_cell = (
                        face_threshold
                        if face_threshold is not None
                        else abs(profile[cell]) * n ** (-0.4)
                    )
                    face = enumerate_face(
                        m_hat.values[cell], balls[cell], a_cell, sense, degrees=target.degrees
                    )
                used_faces[delta][(cell, side)] = face
                colsums[cell] = face.colsum_matrix()
                sizes["|".join(map(str, cell))] = {
                    "size": len(face),
                    "cost_active": int(np.sum(face.cost_active)),
                }
            face_colsums[(delta, side)] = colsums
            face_audit[f"delta={delta:g}|side={side}"] = sizes

    stats = np.empty((B, len(target.deltas), len(sides)))
    for b in range(B):
        rng_b = np.random.default_rng(seed_base + (b,))
        z = rng_b.standard_normal(n)
        eta = kern.factor @ z if kern is not None else z
        pert = (eta - 1.0) * resid
        shifts = {cell: stat_map[cell] @ pert for cell in active}
        for di, delta in enumerate(target.deltas):
            for si, side in enumerate(sides):
                stats[b, di, si] = sqrt_n * replicate_statistic(
                    face_colsums[(delta, side)], shifts, senses[side]
                )

    ok = np.all(np.isfinite(stats.reshape(B, -1)), axis=1)
    failed = int(B - ok.sum())
    if failed > max(1, B // 100):
        raise NumericalError(
            f"{failed} of {B} bootstrap replicates produced non-finite statistics"
        )

    entries = []
    for di, delta in enumerate(target.deltas):
        for si, side in enumerate(sides):
            draws = np.sort(stats[ok, di, si])
            point = points[(delta, side)]
            sizes = {
                cell: face_colsums[(delta, side)][cell].shape[0] for cell in active
            }
            for a in alphas:
                q_lo = _type1_quantile(draws, a / 2.0)
                q_hi = _type1_quantile(draws, 1.0 - a / 2.0)
                entries.append(
                    BoundCIEntry(
                        delta=float(delta),
                        q=float(target.q),
                        side=side,
                        alpha=a,
                        point=point,
                        quantile_lo=q_lo,
                        quantile_hi=q_hi,
                        ci_lo=point - q_hi / sqrt_n,
                        ci_hi=point - q_lo / sqrt_n,
                        face_sizes=sizes,
                    )
                )

    return BoundCI(
        entries=entries,
        n_units=n,
        b_replicates=B,
        seed=seed if np.ndim(seed) == 0 else list(_seed_tuple(seed)),
        failed_replicates=failed,
        kernel_diagnostics=kern.diagnostics() if kern is not None else {"identity": True},
        face_audit=face_audit,
        faces=used_faces,
    )
