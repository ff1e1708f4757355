"""Monte Carlo harness for the coverage properties of the bound inference.

The data generating process draws degrees on a small grid, wires a directed
nearest-neighbor network from Mahalanobis distances on two covariates (one
of which is later observed only with error), and builds outcomes from the
six-term degree basis with cell-varying coefficients plus network
autoregressive noise.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import spsolve
from scipy.stats import norm

from .bootstrap import (
    bandwidth_rule,
    bootstrap_bounds,
    build_kernel,
    path_weighted_distance,
)
from .bounds import ContrastVector, TargetSpec, bound_profile, enumerate_face
from .distributions import DiscreteDist
from .errors import ConfigError
from .graphs import nearest_neighbor_graph
from .regression import (
    BasisSpec,
    SourceDataset,
    cross_validate_bandwidth,
    exposure,
    fit_vc,
)

_CELLS = tuple((x1, x2) for x1 in (0, 1) for x2 in (-1, 0, 1))


def coefficient_functions(x1, x2) -> np.ndarray:
    """True cell coefficients (b_1, ..., b_6) for the six-term basis."""
    cdf = norm.cdf
    b2 = 1.0 + 0.5 * cdf(x1 + x2)
    b34 = cdf(x1) + cdf(x2)
    b56 = 0.5 * np.exp(-0.5 * (x1 + x2))
    return np.array([1.0, b2, b34, b34, b56, b56])


@dataclass
class DGPConfig:
    """Knobs of the simulated experiment; defaults mirror the benchmark design."""

    n: int = 400
    rho: float = 0.3
    degree_support: tuple = (0, 1, 2, 3, 4)
    degree_probs: tuple = None
    measurement_error: float = 0.3
    basis_family: str = "default"
    exposure_family: str = "ratio"
    deltas: tuple = (0.05, 0.1, 0.2, 0.5)
    q: float = 2.0
    reference: DiscreteDist = None
    c_b: float = 1.0
    c_d: float = 4.0
    bandwidth: tuple = None
    cv_burn_ins: int = 20
    cv_grid_points: int = 11
    face_mode: str = "estimated"
    B: int = 500
    replications: int = 100
    seed: int = 0

    def __post_init__(self):
        if not abs(self.rho) < 1.0:
            raise ConfigError("autoregressive coefficient must satisfy |rho| < 1")
        if self.replications < 1:
            raise ConfigError("need at least one replication")
        if self.degree_probs is not None and len(self.degree_probs) != len(self.degree_support):
            raise ConfigError("degree_probs must match degree_support")
        if self.face_mode not in ("estimated", "true"):
            raise ConfigError(f"unknown face mode {self.face_mode!r}")
        d_w = self.basis().dim
        min_n = 5 * d_w * len(_CELLS)
        if self.n < min_n:
            raise ConfigError(f"n = {self.n} is below the estimability guard {min_n}")

    def basis(self) -> BasisSpec:
        return BasisSpec(family=self.basis_family, exposure_family=self.exposure_family)

    def reference_dist(self) -> DiscreteDist:
        if self.reference is not None:
            return self.reference
        return DiscreteDist.uniform(np.asarray(self.degree_support))

    def target(self) -> TargetSpec:
        ref = self.reference_dist()
        return TargetSpec(
            degrees=np.asarray(self.degree_support),
            p={cell: 1.0 / len(_CELLS) for cell in _CELLS},
            pi_star={cell: ref for cell in _CELLS},
            deltas=self.deltas,
            q=self.q,
        )


@dataclass
class TruthRecord:
    """Analytic contrast and the implied bound values per radius."""

    beta0: dict
    m_true: ContrastVector
    kappa_upper: dict
    kappa_lower: dict


def true_contrast(cfg: DGPConfig) -> ContrastVector:
    basis = cfg.basis()
    degrees = np.asarray(cfg.degree_support)
    z_rows = basis.contrast_rows(degrees)
    weight = 1.0 / len(_CELLS)
    values = {
        cell: weight * (z_rows @ coefficient_functions(*cell)) for cell in _CELLS
    }
    return ContrastVector(degrees=degrees, values=values)


def true_bounds(cfg: DGPConfig) -> TruthRecord:
    m_true = true_contrast(cfg)
    target = cfg.target()
    kappa_upper, kappa_lower = {}, {}
    for delta in cfg.deltas:
        balls = target.balls(delta)
        kappa_upper[delta] = float(sum(bound_profile(m_true, balls, "max").values()))
        kappa_lower[delta] = float(sum(bound_profile(m_true, balls, "min").values()))
    beta0 = {cell: coefficient_functions(*cell) for cell in _CELLS}
    return TruthRecord(beta0=beta0, m_true=m_true, kappa_upper=kappa_upper, kappa_lower=kappa_lower)


def _autoregressive_errors(adjacency, degrees, rho, innovations) -> np.ndarray:
    """Solve (I - rho * row_normalized(A)) eps = u directly."""
    n = innovations.size
    scale = np.where(degrees > 0, degrees, 1).astype(np.float64)
    row_norm = sp.diags(1.0 / scale) @ adjacency
    system = (sp.identity(n, format="csr") - rho * row_norm).tocsc()
    return spsolve(system, innovations)


def simulate_once(cfg: DGPConfig, rep_seed) -> tuple:
    """Draw one source dataset; returns (data, truth record).

    The draw order is fixed (treatment, covariates, measurement error,
    degrees, innovations), so a seed pins the dataset exactly.
    """
    rng = np.random.default_rng(rep_seed)
    n = cfg.n
    d = rng.integers(0, 2, size=n)
    x1 = rng.integers(0, 2, size=n)
    x2 = rng.integers(-1, 2, size=n)
    x3 = rng.standard_normal(n)
    noise = rng.uniform(-cfg.measurement_error, cfg.measurement_error, size=n)
    support = np.asarray(cfg.degree_support)
    probs = None if cfg.degree_probs is None else np.asarray(cfg.degree_probs, dtype=np.float64)
    g = rng.choice(support, size=n, p=probs)
    adjacency = nearest_neighbor_graph(np.column_stack([x2, x3]), g)
    u = rng.standard_normal(n)
    eps = _autoregressive_errors(adjacency, g, cfg.rho, u)

    basis = cfg.basis()
    s = np.asarray(adjacency @ d).ravel()
    e = exposure(s, g, cfg.exposure_family)
    w_design = basis.evaluate(d, e, g)
    beta0 = np.stack([coefficient_functions(a, b) for a, b in zip(x1, x2)])
    y = np.einsum("ij,ij->i", w_design, beta0) + eps

    data = SourceDataset(
        y=y,
        d=d,
        x_cat=x1,
        x_ord=x2,
        adjacency=adjacency,
        exposure_family=cfg.exposure_family,
        columns={"x2": x2.astype(np.float64), "x3_err": x3 + noise},
    )
    return data, true_bounds(cfg)


@dataclass(frozen=True)
class EstimatorVariant:
    """One (face source, multiplier kernel) combination evaluated per replicate."""

    face_mode: str = "estimated"
    c_d: float = 4.0  # None draws independent multipliers

    @property
    def kernel_label(self) -> str:
        return "independent" if self.c_d is None else f"c_d={self.c_d:g}"

    @property
    def label(self) -> str:
        return f"{self.face_mode}/{self.kernel_label}"


@dataclass
class CoverageReport:
    """Empirical coverage per (variant, radius) at the 95 and 99 percent levels."""

    n: int
    rho: float
    c_b: float
    deltas: tuple
    rows: list
    replications: int
    runtime: float
    bandwidth: tuple

    def coverage(self, variant_label: str, delta: float, level: float) -> float:
        for row in self.rows:
            if row["variant"] == variant_label and row["delta"] == delta and row["level"] == level:
                return row["coverage"]
        raise KeyError((variant_label, delta, level))

    def to_csv_text(self) -> str:
        header = ["n", "rho", "c_b", "face", "kernel"]
        header += [f"cov95_delta={d:g}" for d in self.deltas]
        header += [f"cov99_delta={d:g}" for d in self.deltas]
        header.append("reps")
        lines = [",".join(header)]
        variants = []
        for row in self.rows:
            key = (row["face"], row["kernel"])
            if key not in variants:
                variants.append(key)
        for face, kernel in variants:
            cells = [str(self.n), repr(float(self.rho)), repr(float(self.c_b)), face, kernel]
            for level in (0.95, 0.99):
                for delta in self.deltas:
                    value = self.coverage(f"{face}/{kernel}", delta, level)
                    cells.append(repr(float(value)))
            cells.append(str(self.replications))
            lines.append(",".join(cells))
        return "\n".join(lines) + "\n"


def select_bandwidth(cfg: DGPConfig) -> tuple:
    """Average leave-one-out bandwidths over fresh burn-in draws, scaled by c_b."""
    if cfg.bandwidth is not None:
        b_c, b_o = cfg.bandwidth
        return float(b_c), float(b_o)
    basis = cfg.basis()
    grid = np.linspace(0.0, 1.0, cfg.cv_grid_points)
    picks = []
    for k in range(cfg.cv_burn_ins):
        data, _ = simulate_once(cfg, (cfg.seed, 1, k))
        picks.append(cross_validate_bandwidth(data, basis, grid, grid))
    avg = np.mean(np.asarray(picks), axis=0)
    scaled = np.clip(cfg.c_b * avg, 0.0, 1.0)
    return float(scaled[0]), float(scaled[1])


def _true_faces(cfg: DGPConfig, truth: TruthRecord, sides) -> dict:
    target = cfg.target()
    senses = {"upper": "max", "lower": "min"}
    faces = {}
    for delta in cfg.deltas:
        balls = target.balls(delta)
        per_delta = {}
        for side in sides:
            for cell in target.cells:
                per_delta[(cell, side)] = enumerate_face(
                    truth.m_true.values[cell],
                    balls[cell],
                    0.0,
                    senses[side],
                    degrees=target.degrees,
                )
        faces[delta] = per_delta
    return faces


def coverage_experiment(cfg: DGPConfig, variants=None, sides=("upper",), progress=False) -> CoverageReport:
    """Replicate the draw/fit/bound/bootstrap pipeline and tally CI coverage.

    Each replicate is evaluated under every estimator variant with shared
    multiplier seed streams, so variant comparisons are paired.  Coverage is
    the fraction of replicates whose bootstrap CI contains the true bound.
    """
    start = time.monotonic()
    if variants is None:
        variants = [EstimatorVariant(cfg.face_mode, cfg.c_d)]
    basis = cfg.basis()
    target = cfg.target()
    truth = true_bounds(cfg)
    needs_true = any(v.face_mode == "true" for v in variants)
    true_faces = _true_faces(cfg, truth, sides) if needs_true else None
    bandwidth = select_bandwidth(cfg)

    levels = (0.95, 0.99)
    hits = {
        (variant.label, delta, side, level): 0
        for variant in variants
        for delta in cfg.deltas
        for side in sides
        for level in levels
    }
    for r in range(cfg.replications):
        data, _ = simulate_once(cfg, (cfg.seed, 0, r))
        fit = fit_vc(data, basis, bandwidth, cells=_CELLS)
        kernels = {}
        for variant in variants:
            if variant.c_d is None:
                kernels[variant.c_d] = None
            elif variant.c_d not in kernels:
                dist = path_weighted_distance(data, ("x2", "x3_err"))
                width = bandwidth_rule(dist, data.degree, variant.c_d)
                # Adjacent pairs sit at distance zero, so the kernel matrix is
                # indefinite by construction; truncate its negative spectrum.
                kernels[variant.c_d] = build_kernel(dist.with_bandwidth(width), policy="truncate")
        for variant in variants:
            ci = bootstrap_bounds(
                fit,
                basis,
                target,
                kern=kernels[variant.c_d],
                B=cfg.B,
                alpha=tuple(1.0 - lv for lv in levels),
                seed=(cfg.seed, 2, r),
                faces=true_faces if variant.face_mode == "true" else None,
                sides=sides,
            )
            for delta in cfg.deltas:
                for side in sides:
                    true_value = (
                        truth.kappa_upper[delta] if side == "upper" else truth.kappa_lower[delta]
                    )
                    for level in levels:
                        entry = ci.lookup(delta, side, 1.0 - level)
                        if entry.covers(true_value):
                            hits[(variant.label, delta, side, level)] += 1
        if progress and (r + 1) % 10 == 0:
            print(f"replicate {r + 1}/{cfg.replications}", flush=True)

    rows = []
    for variant in variants:
        for delta in cfg.deltas:
            for side in sides:
                for level in levels:
                    rows.append(
                        {
                            "variant": variant.label,
                            "face": variant.face_mode,
                            "kernel": variant.kernel_label,
                            "delta": delta,
                            "side": side,
                            "level": level,
                            "coverage": hits[(variant.label, delta, side, level)] / cfg.replications,
                        }
                    )
    return CoverageReport(
        n=cfg.n,
        rho=cfg.rho,
        c_b=cfg.c_b,
        deltas=cfg.deltas,
        rows=rows,
        replications=cfg.replications,
        runtime=time.monotonic() - start,
        bandwidth=bandwidth,
    )
