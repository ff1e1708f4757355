import json

import numpy as np
import pytest

from netshift import (
    DataError,
    DiscreteDist,
    EmptyCellError,
    TransportPlan,
    align_supports,
    degree_dist_conditional,
    optimal_plan,
    wasserstein,
)
from helpers import random_dist, transport_cost_simplex


class TestDiscreteDist:
    def test_basic_construction(self):
        dist = DiscreteDist([0, 2, 5], [0.2, 0.3, 0.5])
        assert dist.support.tolist() == [0, 2, 5]
        assert dist.mass.sum() == 1.0

    def test_renormalizes_small_drift(self):
        dist = DiscreteDist([0, 1], [0.5, 0.5 + 5e-10])
        assert dist.mass.sum() == pytest.approx(1.0, abs=1e-15)

    def test_rejects_large_drift(self):
        with pytest.raises(DataError):
            DiscreteDist([0, 1], [0.5, 0.6])

    def test_rejects_negative_mass(self):
        with pytest.raises(DataError):
            DiscreteDist([0, 1], [-0.2, 1.2])

    def test_rejects_unsorted_support(self):
        with pytest.raises(DataError):
            DiscreteDist([1, 0], [0.5, 0.5])

    def test_rejects_empty_and_noninteger(self):
        with pytest.raises(DataError):
            DiscreteDist([], [])
        with pytest.raises(DataError):
            DiscreteDist([0.5, 1.0], [0.5, 0.5])

    def test_constructors(self):
        assert DiscreteDist.point_mass(3).mass.tolist() == [1.0]
        uni = DiscreteDist.uniform([0, 1, 2, 3])
        assert np.allclose(uni.mass, 0.25)
        bern = DiscreteDist.bernoulli(0.3)
        assert bern.mass.tolist() == [0.7, 0.3]
        emp = DiscreteDist.from_samples([2, 0, 0, 2, 2, 5])
        assert emp.support.tolist() == [0, 2, 5]
        assert np.allclose(emp.mass, [2 / 6, 3 / 6, 1 / 6])

    def test_json_round_trip(self):
        dist = DiscreteDist([1, 4], [0.25, 0.75])
        blob = json.dumps(dist.to_json())
        back = DiscreteDist.from_json(json.loads(blob))
        assert back.allclose(dist)

    def test_mass_is_read_only(self):
        dist = DiscreteDist.bernoulli(0.4)
        with pytest.raises(ValueError):
            dist.mass[0] = 0.0


class TestWasserstein:
    def test_bernoulli_distance_is_alpha_gap(self):
        for alpha, alpha_star in [(0.1, 0.9), (0.4, 0.4), (0.35, 0.6)]:
            got = wasserstein(DiscreteDist.bernoulli(alpha), DiscreteDist.bernoulli(alpha_star), 1.0)
            assert got == pytest.approx(abs(alpha - alpha_star), abs=1e-12)

    def test_identical_distributions(self):
        rng = np.random.default_rng(0)
        for _ in range(10):
            dist = random_dist(rng)
            assert wasserstein(dist, dist, 2.0) == pytest.approx(0.0, abs=1e-12)

    def test_point_masses(self):
        got = wasserstein(DiscreteDist.point_mass(0), DiscreteDist.point_mass(3), 2.0)
        assert got == pytest.approx(3.0, abs=1e-12)

    def test_rejects_bad_order(self):
        bern = DiscreteDist.bernoulli(0.5)
        with pytest.raises(DataError):
            wasserstein(bern, bern, 0.5)

    def test_matches_lp_transport_on_random_pairs(self):
        rng = np.random.default_rng(42)
        for _ in range(60):
            a = random_dist(rng, max_atoms=8)
            b = random_dist(rng, max_atoms=8)
            q = float(rng.choice([1.0, 1.5, 2.0]))
            got = wasserstein(a, b, q) ** q
            want = transport_cost_simplex(a, b, q)
            assert got == pytest.approx(want, abs=1e-9)

    def test_triangle_inequality(self):
        rng = np.random.default_rng(7)
        for _ in range(50):
            a, b, c = (random_dist(rng) for _ in range(3))
            q = float(rng.choice([1.0, 2.0, 3.0]))
            assert wasserstein(a, c, q) <= wasserstein(a, b, q) + wasserstein(b, c, q) + 1e-9

    def test_monotone_in_order(self):
        rng = np.random.default_rng(21)
        for _ in range(50):
            a, b = random_dist(rng), random_dist(rng)
            q1, q2 = sorted(rng.uniform(1.0, 4.0, size=2))
            assert wasserstein(a, b, q1) <= wasserstein(a, b, q2) + 1e-9

    def test_symmetry(self):
        rng = np.random.default_rng(3)
        for _ in range(20):
            a, b = random_dist(rng), random_dist(rng)
            assert wasserstein(a, b, 2.0) == pytest.approx(wasserstein(b, a, 2.0), abs=1e-12)


class TestOptimalPlan:
    def test_identity_plan_is_diagonal(self):
        bern = DiscreteDist.bernoulli(0.4)
        plan = optimal_plan(bern, bern, 2.0)
        assert np.allclose(plan.gamma, np.diag([0.6, 0.4]), atol=1e-12)

    def test_point_mass_plan(self):
        plan = optimal_plan(DiscreteDist.point_mass(0), DiscreteDist.point_mass(3), 1.0)
        assert plan.rows.tolist() == [0, 3]
        # all mass moves from the source atom 3 to the destination atom 0
        assert plan.gamma[1, 0] == pytest.approx(1.0, abs=1e-12)
        assert plan.gamma.sum() == pytest.approx(1.0, abs=1e-12)

    def test_plan_cost_equals_distance(self):
        rng = np.random.default_rng(11)
        for _ in range(40):
            a, b = random_dist(rng), random_dist(rng)
            plan = optimal_plan(a, b, 2.0)
            assert plan.cost(2.0) == pytest.approx(wasserstein(a, b, 2.0) ** 2, abs=1e-9)

    def test_marginals_reproduce_inputs(self):
        rng = np.random.default_rng(13)
        for _ in range(40):
            a, b = random_dist(rng), random_dist(rng)
            plan = optimal_plan(a, b, 1.0)
            support, mass_a, mass_b = align_supports(a, b)
            assert np.allclose(plan.col_marginal, mass_a, atol=1e-10)
            assert np.allclose(plan.row_marginal, mass_b, atol=1e-10)

    def test_plan_validation(self):
        with pytest.raises(DataError):
            TransportPlan([0, 1], [0, 1], [[-0.5, 0.5], [0.5, 0.5]])


class TestDegreeDistConditional:
    def _toy_data(self):
        import scipy.sparse as sp

        from netshift import SourceDataset

        adjacency = sp.csr_matrix(
            (np.ones(2, dtype=np.int8), ([2, 2], [0, 1])), shape=(3, 3)
        )
        return SourceDataset(
            y=np.zeros(3),
            d=np.array([0, 1, 0]),
            x_cat=np.zeros((3, 1), dtype=int),
            x_ord=np.zeros((3, 0)),
            adjacency=adjacency,
        )

    def test_direct_count(self):
        data = self._toy_data()
        dist = degree_dist_conditional(data, (0,))
        assert dist.support.tolist() == [0, 2]
        assert np.allclose(dist.mass, [2 / 3, 1 / 3])

    def test_point_mass_when_constant(self):
        import scipy.sparse as sp

        from netshift import SourceDataset

        n = 4
        rows = [0, 1, 2, 3]
        cols = [1, 2, 3, 0]
        data = SourceDataset(
            y=np.zeros(n),
            d=np.zeros(n, dtype=int),
            x_cat=np.zeros((n, 1), dtype=int),
            x_ord=np.zeros((n, 0)),
            adjacency=sp.csr_matrix((np.ones(n, dtype=np.int8), (rows, cols)), shape=(n, n)),
        )
        dist = degree_dist_conditional(data, (0,))
        assert dist.support.tolist() == [1]
        assert dist.mass.tolist() == [1.0]

    def test_empty_cell_raises(self):
        data = self._toy_data()
        with pytest.raises(EmptyCellError):
            degree_dist_conditional(data, (9,))

    def test_matches_brute_force_on_simulated_data(self):
        from netshift.simulation import DGPConfig, simulate_once

        cfg = DGPConfig(n=400, replications=1, B=10)
        data, _ = simulate_once(cfg, (5, 0, 0))
        for cell in data.cells():
            dist = degree_dist_conditional(data, cell)
            counts = {}
            for i in range(data.n):
                if data.cell_of(i) == cell:
                    counts[data.degree[i]] = counts.get(data.degree[i], 0) + 1
            total = sum(counts.values())
            for g, c in counts.items():
                idx = dist.support.tolist().index(g)
                assert dist.mass[idx] == pytest.approx(c / total, abs=1e-12)
