import io
import itertools
import math

import numpy as np
import pytest

from conflictseq.cluster import ClusterAssignment
from conflictseq.grid import CellId
from conflictseq.spatial import (
    build_weights,
    j_tot_from_theta,
    join_counts,
    permutation_reference,
    write_zscore_matrix_csv,
)


def block(n_cols, n_rows):
    return [CellId(c, r) for r in range(n_rows) for c in range(n_cols)]


def assignment(cells, labels, k=None):
    arr = np.array(labels)
    return ClusterAssignment(cells=list(cells), labels=arr, k=k or int(arr.max()))


class TestBuildWeights:
    def test_isolated_cell_has_no_neighbors(self):
        w = build_weights([CellId(0, 0), CellId(5, 5)], scheme="queen")
        assert w.n_joins == 0
        assert w.degrees().tolist() == [0, 0]

    def test_2x2_rook_block(self):
        w = build_weights(block(2, 2), scheme="rook")
        assert w.n_joins == 4
        assert w.s0 == 8.0
        assert w.s1 == 16.0

    def test_2x2_queen_block(self):
        w = build_weights(block(2, 2), scheme="queen")
        assert w.n_joins == 6

    def test_3x3_rook_hand_enumeration(self):
        w = build_weights(block(3, 3), scheme="rook")
        assert w.n_joins == 12  # 6 horizontal + 6 vertical
        # S2 = 4 * sum(deg^2): corners deg 2 (x4), edges deg 3 (x4), center 4
        assert w.s2 == 4 * (4 * 4 + 4 * 9 + 16)

    def test_only_supplied_cells_are_nodes(self):
        cells = [CellId(0, 0), CellId(2, 0)]  # gap at (1, 0)
        w = build_weights(cells, scheme="queen")
        assert w.n_joins == 0

    def test_unknown_scheme(self):
        with pytest.raises(ValueError, match="scheme"):
            build_weights(block(2, 2), scheme="hexagon")


class TestJoinCounts:
    def test_checkerboard_has_no_like_joins(self):
        cells = block(4, 4)
        labels = [1 + (c.col + c.row) % 2 for c in cells]
        w = build_weights(cells, scheme="rook")
        report = join_counts(assignment(cells, labels), w)
        assert report.pairs[(1, 1)].observed == 0
        assert report.pairs[(2, 2)].observed == 0
        assert report.pairs[(1, 1)].z < -2
        assert report.pairs[(2, 2)].z < -2

    def test_2x2_aa_bb_hand_case(self):
        cells = block(2, 2)
        labels = [1, 1, 2, 2]  # bottom row A, top row B
        w = build_weights(cells, scheme="rook")
        report = join_counts(assignment(cells, labels), w)
        assert report.pairs[(1, 1)].observed == 1
        assert report.pairs[(2, 2)].observed == 1
        assert report.pairs[(1, 2)].observed == 2
        assert report.pairs[(1, 1)].expected == pytest.approx(2 / 3)

    def test_2x2_exhaustive_mean_over_all_labelings(self):
        # all 6 ways to place two A's among 4 cells; the average observed
        # J_AA must equal the analytic expectation exactly
        cells = block(2, 2)
        w = build_weights(cells, scheme="rook")
        observed = []
        for pos in itertools.combinations(range(4), 2):
            labels = [1 if i in pos else 2 for i in range(4)]
            report = join_counts(assignment(cells, labels), w)
            observed.append(report.pairs[(1, 1)].observed)
        assert np.mean(observed) == pytest.approx(2 / 3)
        assert np.mean(observed) == pytest.approx(report.pairs[(1, 1)].expected)

    def test_single_type_map(self):
        cells = block(3, 3)
        w = build_weights(cells, scheme="queen")
        report = join_counts(assignment(cells, [1] * 9, k=1), w)
        assert report.pairs[(1, 1)].observed == w.s0 / 2
        assert report.j_tot == 0

    def test_accounting_identity_on_random_maps(self):
        rng = np.random.default_rng(31)
        for _ in range(25):
            n_cols, n_rows = rng.integers(2, 9, size=2)
            cells = block(n_cols, n_rows)
            n_types = int(rng.integers(2, 6))
            labels = rng.integers(1, n_types + 1, size=len(cells))
            labels[: n_types] = np.arange(1, n_types + 1)  # every type occurs
            scheme = "rook" if rng.random() < 0.5 else "queen"
            w = build_weights(cells, scheme=scheme)
            report = join_counts(assignment(cells, labels.tolist(), k=n_types), w)
            total = sum(s.observed for s in report.pairs.values())
            assert total == w.s0 / 2
            assert report.j_tot == j_tot_from_theta(
                np.array([report_label for report_label in labels]), w
            )
            assert report.j_tot == sum(
                s.observed for (r, c), s in report.pairs.items() if r != c
            )

    def test_rare_type_z_is_undefined(self):
        cells = block(3, 3)
        labels = [1] * 8 + [2]  # type 2 occurs once
        w = build_weights(cells, scheme="rook")
        report = join_counts(assignment(cells, labels), w)
        assert report.pairs[(2, 2)].observed == 0
        assert report.pairs[(2, 2)].z is None

    def test_label_permutation_equivariance(self):
        rng = np.random.default_rng(5)
        cells = block(6, 6)
        labels = rng.integers(1, 4, size=36)
        labels[:3] = [1, 2, 3]
        w = build_weights(cells, scheme="queen")
        base = join_counts(assignment(cells, labels.tolist(), k=3), w)
        # rename 1->3, 2->1, 3->2
        rename = {1: 3, 2: 1, 3: 2}
        renamed = join_counts(
            assignment(cells, [rename[int(v)] for v in labels], k=3), w
        )
        for (r, s), stats in base.pairs.items():
            nr, ns = sorted((rename[r], rename[s]))
            other = renamed.pairs[(nr, ns)]
            assert other.observed == stats.observed
            assert other.expected == pytest.approx(stats.expected)
            assert other.variance == pytest.approx(stats.variance)

    def test_unlabeled_weighted_cell_is_an_error(self):
        cells = block(2, 2)
        w = build_weights(cells, scheme="rook")
        assign = assignment(cells[:3], [1, 1, 2])
        with pytest.raises(ValueError, match="no cluster label"):
            join_counts(assign, w)


class TestPermutationReference:
    def test_determinism(self):
        rng = np.random.default_rng(9)
        cells = block(5, 5)
        labels = rng.integers(1, 4, size=25)
        labels[:3] = [1, 2, 3]
        assign = assignment(cells, labels.tolist(), k=3)
        w = build_weights(cells, scheme="queen")
        a = permutation_reference(assign, w, n_perms=199, seed=77)
        b = permutation_reference(assign, w, n_perms=199, seed=77)
        assert a.mean == b.mean
        assert a.variance == b.variance
        assert a.pseudo_p == b.pseudo_p

    def test_minimum_permutations_enforced(self):
        cells = block(2, 2)
        assign = assignment(cells, [1, 1, 2, 2])
        w = build_weights(cells, scheme="rook")
        with pytest.raises(ValueError, match="99"):
            permutation_reference(assign, w, n_perms=10, seed=1)

    def test_2x2_permutation_mean_converges_to_exhaustive(self):
        cells = block(2, 2)
        assign = assignment(cells, [1, 1, 2, 2])
        w = build_weights(cells, scheme="rook")
        ref = permutation_reference(assign, w, n_perms=20_000, seed=3)
        assert ref.mean[(1, 1)] == pytest.approx(2 / 3, abs=0.02)

    def test_analytic_moments_within_monte_carlo_error(self):
        rng = np.random.default_rng(123)
        cells = block(12, 12)
        labels = rng.integers(1, 5, size=144)
        labels[:4] = [1, 2, 3, 4]
        assign = assignment(cells, labels.tolist(), k=4)
        w = build_weights(cells, scheme="queen")
        report = join_counts(assign, w)
        ref = permutation_reference(assign, w, n_perms=5000, seed=11)
        for key, stats in report.pairs.items():
            se = math.sqrt(ref.variance[key] / ref.n_perms)
            assert abs(stats.expected - ref.mean[key]) <= 3 * se + 1e-12
            assert ref.variance[key] == pytest.approx(stats.variance, rel=0.15)


class TestExports:
    def test_zscore_matrix_is_upper_triangular_with_na(self):
        cells = block(3, 3)
        labels = [1] * 8 + [2]
        w = build_weights(cells, scheme="rook")
        report = join_counts(assignment(cells, labels), w)
        buf = io.StringIO()
        write_zscore_matrix_csv(report, buf)
        lines = buf.getvalue().strip().splitlines()
        assert lines[0] == "type,1,2"
        assert "NA" in lines[2]
