"""Varying-coefficient outcome regression with discrete-covariate kernel weights.

The outcome is modeled as a linear form in a basis of (treatment, exposure,
degree) features, with coefficients that vary across covariate cells.  Cells
borrow strength from one another through product kernel weights: categorical
components discount mismatches by a flat factor, ordered components decay
geometrically in the integer distance.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .bounds import ContrastVector
from .distributions import _as_support
from .errors import ConfigError, DataError, EmptyCellError, RankDeficiencyError

EXPOSURE_FAMILIES = ("ratio", "count", "indicator")

_COND_LIMIT = 1e12


def exposure(s, g, family: str = "ratio"):
    """Peer-treatment exposure e(s, g) for ``s`` treated peers among ``g``.

    Families: ``ratio`` (s/g, with the convention 0 at g = 0 -- an isolated
    unit has no treated peers), ``count`` (s), ``indicator`` (1{s > 0}).
    Accepts scalars or arrays.
    """
    scalar = np.ndim(s) == 0 and np.ndim(g) == 0
    s = np.asarray(s, dtype=np.float64)
    g = np.asarray(g, dtype=np.float64)
    if np.any(s < 0) or np.any(s > g):
        raise DataError("treated-peer counts must satisfy 0 <= s <= g")
    if family == "ratio":
        out = np.divide(s, g, out=np.zeros_like(s), where=g > 0)
    elif family == "count":
        out = s.copy()
    elif family == "indicator":
        out = (s > 0).astype(np.float64)
    else:
        raise ConfigError(f"unknown exposure family {family!r}")
    return float(out) if scalar else out


def _basis_default(d, e, g):
    lg = np.log(g + 1.0)
    one = np.ones_like(lg)
    return np.column_stack([one, d, e, d * e, lg, e * lg])


def _basis_short(d, e, g):
    one = np.ones_like(np.asarray(e, dtype=np.float64))
    return np.column_stack([one, d, e, d * e])


_BASIS_FAMILIES = {"default": _basis_default, "short": _basis_short}


@dataclass(frozen=True)
class BasisSpec:
    """Feature map w(d, e, g) together with the exposure family that feeds it.

    ``default`` is (1, d, e, d*e, log(g+1), e*log(g+1)); ``short`` drops the
    degree terms and is the right choice when only one or two degree values
    occur (the degree columns are collinear there).
    """

    family: str = "default"
    exposure_family: str = "ratio"

    def __post_init__(self):
        if self.family not in _BASIS_FAMILIES:
            raise ConfigError(f"unknown basis family {self.family!r}")
        if self.exposure_family not in EXPOSURE_FAMILIES:
            raise ConfigError(f"unknown exposure family {self.exposure_family!r}")

    @property
    def dim(self) -> int:
        return self.evaluate(np.array([0.0]), np.array([0.0]), np.array([0.0])).shape[1]

    def evaluate(self, d, e, g) -> np.ndarray:
        """Stack w(d_i, e_i, g_i) into an (n, dim) design block."""
        d = np.asarray(d, dtype=np.float64)
        e = np.asarray(e, dtype=np.float64)
        g = np.asarray(g, dtype=np.float64)
        out = _BASIS_FAMILIES[self.family](d, e, g)
        if not np.all(np.isfinite(out)):
            raise DataError("basis evaluation produced non-finite values")
        return out

    def design(self, data: "SourceDataset") -> np.ndarray:
        return self.evaluate(data.d, data.exposure_value, data.degree)

    def contrast_rows(self, degrees, component: str = "total") -> np.ndarray:
        """Basis difference between everyone-treated and no-one-treated states.

        ``total`` is w(1, e(g, g), g) - w(0, e(0, g), g); ``direct`` and
        ``spill`` split it by toggling only the own treatment or only the
        peer exposure.  The two pieces are bookkeeping quantities (the
        spill piece holds peers treated while the unit is not, which no
        single assignment policy produces), so interpret them with care.
        """
        g = np.asarray(degrees, dtype=np.float64)
        e_all = exposure(g, g, self.exposure_family)
        e_none = exposure(np.zeros_like(g), g, self.exposure_family)
        if component == "total":
            left = self.evaluate(np.ones_like(g), e_all, g)
            right = self.evaluate(np.zeros_like(g), e_none, g)
        elif component == "direct":
            left = self.evaluate(np.ones_like(g), e_all, g)
            right = self.evaluate(np.zeros_like(g), e_all, g)
        elif component == "spill":
            left = self.evaluate(np.zeros_like(g), e_all, g)
            right = self.evaluate(np.zeros_like(g), e_none, g)
        else:
            raise ConfigError(f"unknown contrast component {component!r}")
        return left - right


@dataclass(eq=False)
class SourceDataset:
    """Observed source sample: outcomes, treatments, discrete covariates, network.

    ``x_cat`` and ``x_ord`` hold integer codes, one column per categorical
    and ordered covariate.  The adjacency matrix may be directed; a unit's
    degree is its out-degree and its treated-peer count follows the same
    orientation.  ``columns`` carries named numeric columns (used for
    proxy-distance construction), ``blocks`` optional group labels.
    """

    y: np.ndarray
    d: np.ndarray
    x_cat: np.ndarray
    x_ord: np.ndarray
    adjacency: sp.csr_matrix
    exposure_family: str = "ratio"
    columns: dict = None
    blocks: np.ndarray = None

    def __post_init__(self):
        self.y = np.asarray(self.y, dtype=np.float64)
        n = self.y.size
        if not np.all(np.isfinite(self.y)):
            raise DataError("outcomes must be finite")
        self.d = np.asarray(self.d)
        if self.d.shape != (n,) or not np.all(np.isin(self.d, (0, 1))):
            raise DataError("treatment must be a 0/1 vector matching the outcomes")
        self.d = self.d.astype(np.int64)
        self.x_cat = self._covariate_block(self.x_cat, n)
        self.x_ord = self._covariate_block(self.x_ord, n)
        adj = sp.csr_matrix(self.adjacency)
        if adj.shape != (n, n):
            raise DataError(f"adjacency must be {n}x{n}")
        adj.eliminate_zeros()
        if adj.diagonal().any():
            raise DataError("adjacency contains self-loops")
        if adj.nnz and not np.all(adj.data == 1):
            raise DataError("adjacency entries must be 0 or 1")
        self.adjacency = adj
        self.columns = dict(self.columns or {})
        for name, col in self.columns.items():
            col = np.asarray(col, dtype=np.float64)
            if col.shape != (n,):
                raise DataError(f"column {name!r} does not match the sample size")
            self.columns[name] = col
        if self.blocks is not None:
            self.blocks = np.asarray(self.blocks)
            if self.blocks.shape != (n,):
                raise DataError("block labels must match the sample size")
        self.degree = np.asarray(adj.sum(axis=1)).ravel().astype(np.int64)
        self.treated_peers = np.asarray(adj @ self.d).ravel().astype(np.int64)
        self.exposure_value = exposure(self.treated_peers, self.degree, self.exposure_family)

    @staticmethod
    def _covariate_block(block, n):
        block = np.asarray(block)
        if block.size == 0:
            return np.zeros((n, 0), dtype=np.int64)
        if block.ndim == 1:
            block = block[:, None]
        if block.shape[0] != n:
            raise DataError("covariate block does not match the sample size")
        if not np.all(np.equal(np.mod(block, 1), 0)):
            raise DataError("covariate codes must be integers")
        return block.astype(np.int64)

    @property
    def n(self) -> int:
        return self.y.size

    @property
    def d_cat(self) -> int:
        return self.x_cat.shape[1]

    @property
    def d_ord(self) -> int:
        return self.x_ord.shape[1]

    def cell_of(self, i: int) -> tuple:
        return tuple(int(v) for v in self.x_cat[i]) + tuple(int(v) for v in self.x_ord[i])

    def cells(self) -> list:
        combined = np.hstack([self.x_cat, self.x_ord])
        return sorted({tuple(int(v) for v in row) for row in combined})

    def cell_mask(self, x) -> np.ndarray:
        x = tuple(int(v) for v in x)
        if len(x) != self.d_cat + self.d_ord:
            raise DataError(f"cell {x!r} has wrong arity")
        mask = np.ones(self.n, dtype=bool)
        for j in range(self.d_cat):
            mask &= self.x_cat[:, j] == x[j]
        for k in range(self.d_ord):
            mask &= self.x_ord[:, k] == x[self.d_cat + k]
        return mask


def kernel_weight(xi, x, b, n_categorical: int) -> float:
    """Product kernel weight between covariate tuples ``xi`` and ``x``.

    The first ``n_categorical`` components are categorical (mismatch factor
    b_c), the rest ordered (factor b_o^|difference|).  Equals 1 exactly when
    the tuples match.
    """
    b_c, b_o = _check_bandwidths(b)
    if len(xi) != len(x):
        raise DataError("covariate tuples must have equal length")
    weight = 1.0
    for j, (a, c) in enumerate(zip(xi, x)):
        if j < n_categorical:
            if a != c:
                weight *= b_c
        else:
            weight *= b_o ** abs(int(a) - int(c))
    return weight


def _check_bandwidths(b):
    try:
        b_c, b_o = (float(v) for v in b)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bandwidths must be a (b_c, b_o) pair, got {b!r}") from exc
    if not (0.0 <= b_c <= 1.0 and 0.0 <= b_o <= 1.0):
        raise ConfigError(f"bandwidths must lie in [0, 1], got {b!r}")
    return b_c, b_o


def _cell_weights(data: SourceDataset, x, b) -> np.ndarray:
    """Kernel weights of every unit relative to cell ``x`` (vectorized)."""
    b_c, b_o = b
    x = tuple(int(v) for v in x)
    xc = np.asarray(x[: data.d_cat], dtype=np.int64)
    xo = np.asarray(x[data.d_cat :], dtype=np.int64)
    weights = np.ones(data.n)
    if data.d_cat:
        mismatches = (data.x_cat != xc[None, :]).sum(axis=1)
        weights *= b_c**mismatches
    if data.d_ord:
        distance = np.abs(data.x_ord - xo[None, :]).sum(axis=1)
        weights *= b_o**distance
    return weights


@dataclass(eq=False)
class VCFit:
    """Fitted varying coefficients plus everything needed to replay the fit.

    ``coef_map[x]`` is the linear map taking the outcome vector to the cell's
    coefficient estimate, so refitting on a perturbed outcome is a single
    matrix-vector product.
    """

    cells: tuple
    beta: dict
    bandwidths: tuple
    residuals: np.ndarray
    coef_map: dict
    gram_cond: dict
    basis: BasisSpec
    design: np.ndarray
    y: np.ndarray

    @property
    def n(self) -> int:
        return self.y.size

    def to_json(self) -> dict:
        return {
            "bandwidths": [float(v) for v in self.bandwidths],
            "cells": [
                {"x": list(cell), "beta": [float(v) for v in self.beta[cell]]}
                for cell in self.cells
            ],
        }


def fit_vc(data: SourceDataset, basis: BasisSpec, b, cells=None, cond_limit: float = _COND_LIMIT) -> VCFit:
    """Kernel-weighted least squares of the outcome on the basis, per cell.

    Parameters
    ----------
    data : SourceDataset
    basis : BasisSpec
    b : (b_c, b_o)
        Bandwidth pair in [0, 1]^2.  b = (0, 0) gives exact per-cell least
        squares; b = (1, 1) collapses every cell to the pooled fit.
    cells : iterable of tuples, optional
        Extra cells to fit beyond those observed in the source (e.g. cells
        that carry target weight); cells with no exact matches are fitted
        from smoothed weights and flagged with a warning.
    cond_limit : float
        Upper bound on the weighted Gram condition number.

    Raises
    ------
    RankDeficiencyError
        If some cell's weighted Gram matrix is numerically singular.
    """
    b = _check_bandwidths(b)
    fit_cells = set(map(tuple, data.cells()))
    if cells is not None:
        fit_cells.update(tuple(int(v) for v in c) for c in cells)
    fit_cells = tuple(sorted(fit_cells))

    w_design = basis.design(data)
    y = data.y
    n = data.n
    beta, coef_map, gram_cond = {}, {}, {}
    for cell in fit_cells:
        weights = _cell_weights(data, cell, b)
        if not np.any(data.cell_mask(cell)):
            warnings.warn(
                f"cell {cell!r} has no exact matches in the source; "
                "its coefficients rely entirely on kernel smoothing",
                stacklevel=2,
            )
        sqrt_w = np.sqrt(weights)
        weighted = w_design * sqrt_w[:, None]
        u_mat, svals, vt = np.linalg.svd(weighted, full_matrices=False)
        if svals[-1] <= 0.0:
            cond = np.inf
        else:
            cond = (svals[0] / svals[-1]) ** 2
        gram_cond[cell] = float(cond)
        if not np.isfinite(cond) or cond > cond_limit:
            raise RankDeficiencyError(
                f"cell {cell!r}: weighted Gram condition {cond:.3e} exceeds {cond_limit:.0e}; "
                "increase the bandwidths or merge cells"
            )
        cmap = ((vt.T / svals) @ u_mat.T) * sqrt_w[None, :]
        coef_map[cell] = cmap
        beta[cell] = cmap @ y

    residuals = np.empty(n)
    for cell in fit_cells:
        mask = data.cell_mask(cell)
        if np.any(mask):
            residuals[mask] = y[mask] - w_design[mask] @ beta[cell]

    return VCFit(
        cells=fit_cells,
        beta=beta,
        bandwidths=b,
        residuals=residuals,
        coef_map=coef_map,
        gram_cond=gram_cond,
        basis=basis,
        design=w_design,
        y=y,
    )


def contrast_vector(
    fit: VCFit, basis: BasisSpec, p_target: dict, degrees, component: str = "total"
) -> ContrastVector:
    """Assemble m(g, x) = p(x) * contrast_row(g) @ beta(x) over the degree grid.

    Cells with zero target weight get identically-zero rows and drop out of
    any downstream bound.
    """
    degrees = _as_support(degrees)
    p_target = {tuple(cell): float(v) for cell, v in p_target.items()}
    total = sum(p_target.values())
    if abs(total - 1.0) > 1e-9:
        raise DataError(f"target proportions sum to {total!r}, not 1")
    if any(v < 0 for v in p_target.values()):
        raise DataError("target proportions must be nonnegative")
    z_rows = basis.contrast_rows(degrees, component)
    values = {}
    for cell, weight in sorted(p_target.items()):
        if weight == 0.0:
            values[cell] = np.zeros(degrees.size)
            continue
        if cell not in fit.beta:
            raise EmptyCellError(f"cell {cell!r} carries target weight but was not fitted")
        values[cell] = weight * (z_rows @ fit.beta[cell])
    return ContrastVector(degrees=degrees, values=values)


def cross_validate_bandwidth(data: SourceDataset, basis: BasisSpec, grid_c=None, grid_o=None):
    """Leave-one-out cross-validated bandwidth pair over a grid.

    Uses the closed-form leave-one-out residual e_i / (1 - h_ii) of weighted
    least squares, so no refitting is needed.  Returns the (b_c, b_o) pair
    minimizing the summed squared prediction error; grid order breaks ties.
    """
    grid_c = np.linspace(0.0, 1.0, 11) if grid_c is None else np.asarray(grid_c, dtype=np.float64)
    grid_o = np.linspace(0.0, 1.0, 11) if grid_o is None else np.asarray(grid_o, dtype=np.float64)
    w_design = basis.design(data)
    y = data.y
    cells = data.cells()
    masks = [data.cell_mask(cell) for cell in cells]
    cat_mismatch, ord_distance = [], []
    for cell in cells:
        xc = np.asarray(cell[: data.d_cat], dtype=np.int64)
        xo = np.asarray(cell[data.d_cat :], dtype=np.int64)
        cat_mismatch.append(
            (data.x_cat != xc[None, :]).sum(axis=1) if data.d_cat else np.zeros(data.n, dtype=np.int64)
        )
        ord_distance.append(
            np.abs(data.x_ord - xo[None, :]).sum(axis=1) if data.d_ord else np.zeros(data.n, dtype=np.int64)
        )

    best_score, best_pair = np.inf, (float(grid_c[0]), float(grid_o[0]))
    for b_c in grid_c:
        for b_o in grid_o:
            score = 0.0
            for k, cell in enumerate(cells):
                weights = (b_c ** cat_mismatch[k]) * (b_o ** ord_distance[k])
                gram = (w_design * weights[:, None]).T @ w_design
                rhs = w_design.T @ (weights * y)
                try:
                    beta = np.linalg.solve(gram, rhs)
                    gram_inv = np.linalg.inv(gram)
                except np.linalg.LinAlgError:
                    score = np.inf
                    break
                w_cell = w_design[masks[k]]
                hat = np.einsum("ij,jk,ik->i", w_cell, gram_inv, w_cell)
                denom = 1.0 - hat
                if np.any(denom <= 1e-10):
                    score = np.inf
                    break
                resid = y[masks[k]] - w_cell @ beta
                score += float(np.sum((resid / denom) ** 2))
            if score < best_score:
                best_score, best_pair = score, (float(b_c), float(b_o))
    if not np.isfinite(best_score):
        raise RankDeficiencyError("cross-validation failed at every grid point")
    return best_pair
