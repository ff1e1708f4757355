"""Shared test oracles, kept independent of the library's own solution paths."""

import itertools

import numpy as np
from scipy.optimize import linprog

from netshift import DiscreteDist
from netshift.simplex import solve_lp


def random_dist(rng, max_atoms=8, value_range=12, allow_zeros=True) -> DiscreteDist:
    k = int(rng.integers(1, max_atoms + 1))
    support = np.sort(rng.choice(value_range, size=k, replace=False))
    mass = rng.dirichlet(np.ones(k))
    if allow_zeros and k > 2 and rng.random() < 0.3:
        drop = rng.integers(0, k)
        mass[drop] = 0.0
        mass /= mass.sum()
    return DiscreteDist(support, mass)


def _transport_program(pi, pi_star, q):
    """Cost vector and marginal constraints of the coupling program."""
    na, nb = pi_star.support.size, pi.support.size
    cost = (
        np.abs(pi_star.support[:, None] - pi.support[None, :]).astype(np.float64) ** q
    ).reshape(-1)
    a_eq = np.zeros((na + nb, na * nb))
    for u in range(na):
        a_eq[u, u * nb : (u + 1) * nb] = 1.0
    for v in range(nb):
        a_eq[na + v, v::nb] = 1.0
    b_eq = np.concatenate([pi_star.mass, pi.mass])
    return cost, a_eq, b_eq


def transport_cost_simplex(pi, pi_star, q) -> float:
    """Minimum coupling cost via the in-house simplex."""
    cost, a_eq, b_eq = _transport_program(pi, pi_star, q)
    return solve_lp(cost, a_eq=a_eq, b_eq=b_eq).value


def transport_cost_scipy(pi, pi_star, q) -> float:
    """Minimum coupling cost via scipy's HiGHS solver (fully external oracle)."""
    cost, a_eq, b_eq = _transport_program(pi, pi_star, q)
    res = linprog(cost, A_eq=a_eq, b_eq=b_eq, bounds=(0, None), method="highs")
    assert res.status == 0, res.message
    return float(res.fun)


def brute_force_vertices(center_mass, cost, delta_q):
    """Basic feasible solutions by sweeping every column subset of the augmented system.

    Returns the deduplicated solutions as rows (vec(Gamma) then the cost
    slack).  Exponential in the degree count; keep the instances tiny.
    """
    d = len(center_mass)
    nv = d * d
    a = np.zeros((d + 1, nv + 1))
    for u in range(d):
        a[u, u * d : (u + 1) * d] = 1.0
    a[d, :nv] = np.asarray(cost, dtype=np.float64).reshape(-1)
    a[d, nv] = 1.0
    b = np.concatenate([center_mass, [delta_q]])
    m = d + 1
    sols = []
    for cols in itertools.combinations(range(nv + 1), m):
        basis = a[:, cols]
        if abs(np.linalg.det(basis)) < 1e-12:
            continue
        xb = np.linalg.solve(basis, b)
        if np.any(xb < -1e-9):
            continue
        full = np.zeros(nv + 1)
        full[list(cols)] = np.clip(xb, 0.0, None)
        sols.append(full)
    assert sols, "polytope unexpectedly empty"
    return np.unique(np.round(np.asarray(sols), 9), axis=0)
