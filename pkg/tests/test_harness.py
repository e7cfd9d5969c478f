import json

import numpy as np
import pytest

from termembed import (
    build_embedder,
    build_point_set,
    evaluate,
    exact_small_embedding,
    generate_sketch,
    plan_dimension,
    sample_queries,
    sample_suite,
    scaling_study,
)
from termembed.extension import EfnEmbedder
from termembed.harness import scaling_table_csv
from termembed.sketch import SketchMatrix


@pytest.fixture
def X():
    return build_point_set(np.random.default_rng(0).standard_normal((8, 5)))


class TestSamplers:
    def test_member_returns_terminals(self, X):
        q = sample_queries(X, "member", 20, seed=1)
        for row in q:
            assert any(np.array_equal(row, p) for p in X.points)

    def test_shell_radius_exact(self, X):
        r = 0.37
        q = sample_queries(X, f"shell:{r}", 50, seed=2)
        for row in q:
            dists = np.linalg.norm(X.points - row, axis=1)
            assert abs(dists.min() - r) <= 1e-12

    def test_deterministic_per_seed(self, X):
        for mode in ("box", "segment", "shell:0.5", "far:2", "member", "shell_rel:0.1"):
            a = sample_queries(X, mode, 10, seed=9)
            b = sample_queries(X, mode, 10, seed=9)
            assert np.array_equal(a, b)

    def test_box_bounds(self, X):
        q = sample_queries(X, "box", 200, seed=3)
        lo, hi = X.points.min(axis=0), X.points.max(axis=0)
        c, half = (lo + hi) / 2, (hi - lo) / 2
        assert np.all(q >= c - 2 * half - 1e-12)
        assert np.all(q <= c + 2 * half + 1e-12)

    def test_segment_points_are_convex_combinations(self, X):
        q = sample_queries(X, "segment", 30, seed=4)
        for row in q:
            best = np.inf
            for i in range(X.n):
                for j in range(X.n):
                    if i == j:
                        continue
                    a, b = X.points[i], X.points[j]
                    t = np.clip((row - b) @ (a - b) / ((a - b) @ (a - b)), 0, 1)
                    best = min(best, np.linalg.norm(row - (t * a + (1 - t) * b)))
            assert best <= 1e-9

    def test_far_distance(self, X):
        s = 2.5
        q = sample_queries(X, f"far:{s}", 20, seed=5)
        centroid = X.points.mean(axis=0)
        diam = max(
            np.linalg.norm(a - b) for a in X.points for b in X.points
        )
        for row in q:
            assert abs(np.linalg.norm(row - centroid) - s * diam) <= 1e-9

    def test_unknown_mode(self, X):
        with pytest.raises(ValueError):
            sample_queries(X, "warp", 5, seed=0)

    def test_suite_labels_align(self, X):
        q, labels = sample_suite(X, 4, seed=6)
        assert q.shape[0] == len(labels) == 4 * 8


class TestEvaluate:
    def test_identity_sketch_near_exact(self, X):
        pi = SketchMatrix(entries=np.eye(5), distribution="gaussian", seed=0)
        E = build_embedder(X, pi, 1e-9)
        q, labels = sample_suite(X, 10, seed=7)
        rep = evaluate(E, q, labels)
        assert rep.max_abs_ratio_dev <= 1e-6

    def test_exact_small_path(self, X):
        E = exact_small_embedding(X)
        q, labels = sample_suite(X, 10, seed=8)
        rep = evaluate(E, q, labels)
        assert rep.max_abs_ratio_dev <= 1e-9

    def test_efn_instance_ratios(self):
        X = build_point_set([(-1.0,), (0.0,), (2.0,)])
        E = EfnEmbedder(X=X, base_images=X.points)
        rep = evaluate(E, np.array([[1.0]]))
        assert abs(rep.ratio_max - np.sqrt(5)) <= 1e-9
        assert abs(rep.ratio_min - 1 / np.sqrt(2)) <= 1e-9
        assert abs(rep.distortion - np.sqrt(10)) <= 1e-9

    def test_ratios_finite_and_positive(self, X):
        pi = generate_sketch(24, 5, "rademacher", 12)
        E = build_embedder(X, pi, 0.25)
        q, labels = sample_suite(X, 8, seed=9)
        rep = evaluate(E, q, labels, keep_raw=True)
        assert np.all(np.isfinite(rep.raw_ratio))
        assert np.all(rep.raw_ratio > 0.0)

    def test_report_reproducible_bytes(self, X):
        pi = generate_sketch(16, 5, "rademacher", 3)
        E = build_embedder(X, pi, 0.25)
        q, labels = sample_suite(X, 5, seed=10)
        a = evaluate(E, q, labels, config_echo={"seed": 10}).to_json()
        b = evaluate(E, q, labels, config_echo={"seed": 10}).to_json()
        assert a == b

    def test_histogram_bins(self, X):
        pi = generate_sketch(16, 5, "rademacher", 4)
        E = build_embedder(X, pi, 0.25)
        q, labels = sample_suite(X, 6, seed=11)
        rep = evaluate(E, q, labels)
        assert sum(rep.histogram_counts) == rep.pair_count
        assert len(rep.histogram_counts) in (1, 64)

    def test_anchor_error_consistency(self, X):
        pi = generate_sketch(16, 5, "rademacher", 5)
        E = build_embedder(X, pi, 0.25)
        q, labels = sample_suite(X, 6, seed=12)
        rep = evaluate(E, q, labels)
        assert rep.max_abs_ratio_dev >= rep.max_anchor_rel_error - 1e-15

    def test_member_only_queries_give_no_anchor_pairs(self, X):
        pi = generate_sketch(16, 5, "rademacher", 6)
        E = build_embedder(X, pi, 0.25)
        q = sample_queries(X, "member", 8, seed=13)
        rep = evaluate(E, q)
        # ratios exist only against the other terminals
        assert rep.pair_count == 8 * (X.n - 1)

    def test_json_round_trip(self, X):
        pi = generate_sketch(16, 5, "rademacher", 7)
        E = build_embedder(X, pi, 0.25)
        q, labels = sample_suite(X, 4, seed=14)
        rep = evaluate(E, q, labels, config_echo={"epsilon": 0.25})
        parsed = json.loads(rep.to_json())
        assert parsed["config"]["epsilon"] == 0.25
        assert parsed["pair_count"] == rep.pair_count
        assert set(parsed["samplers"]) == set(labels)


class TestScalingStudy:
    def test_rows_echo_and_m_consistency(self):
        X = build_point_set(np.random.default_rng(1).standard_normal((12, 6)))
        rows = scaling_study(
            X, epsilons=[0.5], Cs=[0.5, 1.0], seeds=[0, 1],
            queries_per_mode=3, chd_samples=100,
        )
        assert len(rows) == 4
        for row in rows:
            assert row["epsilon"] == 0.5
            plan = plan_dimension(X.n, row["epsilon"], row["C"])
            assert row["m"] == plan.m and row["mode"] == plan.mode

    def test_doubling_C_median_violation_not_worse(self):
        # sketch mode for both C values: n=32, d=16, eps=0.5
        X = build_point_set(np.random.default_rng(2).standard_normal((32, 16)))
        rows = scaling_study(
            X, epsilons=[0.5], Cs=[0.5, 1.0], seeds=[0, 1, 2, 3, 4],
            queries_per_mode=2, chd_samples=400,
        )
        by_c = {}
        for row in rows:
            assert row["mode"] == "sketch"
            by_c.setdefault(row["C"], []).append(row["chd_max_violation"])
        assert np.median(by_c[1.0]) <= np.median(by_c[0.5])

    def test_csv_table_shape(self):
        X = build_point_set(np.random.default_rng(3).standard_normal((6, 4)))
        rows = scaling_study(
            X, epsilons=[0.5], Cs=[1.0], seeds=[0],
            queries_per_mode=2, chd_samples=50,
        )
        text = scaling_table_csv(rows)
        lines = text.strip().split("\n")
        assert lines[0].startswith("epsilon,C,seed,m,mode")
        assert len(lines) == 2

    def test_empty_grid_rejected(self):
        X = build_point_set(np.random.default_rng(4).standard_normal((4, 3)))
        with pytest.raises(ValueError):
            scaling_study(X, [], [1.0], [0])
