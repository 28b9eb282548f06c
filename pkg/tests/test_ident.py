import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from raintrack.ident import (
    accc_cluster,
    default_radius,
    identify,
    identify_series,
    label_components,
    threshold_wet,
)
from conftest import make_series


def chebyshev_partition(wet, radius, connectivity=8, size_coef=None):
    """Brute-force oracle: union components whose closest cells are within reach.

    Fixed radius: reach ``2R+1``. Size-dependent: ``r_a + r_b + 1`` with
    ``r = ceil(c * sqrt(n_cells))``.
    """
    comps = label_components(wet, connectivity)
    nx = wet.shape[1]
    coords = [np.column_stack(np.divmod(c.cells, nx)) for c in comps]
    if size_coef is None:
        radii = [radius] * len(comps)
    else:
        radii = [math.ceil(size_coef * math.sqrt(len(c.cells))) for c in comps]
    parent = list(range(len(comps)))

    def find(i):
        while parent[i] != i:
            i = parent[i]
        return i

    for i in range(len(comps)):
        for j in range(i + 1, len(comps)):
            a, b = coords[i], coords[j]
            gap = np.abs(a[:, None, :] - b[None, :, :]).max(axis=2).min()
            if gap <= radii[i] + radii[j] + 1:
                parent[find(i)] = find(j)
    groups = {}
    for i, c in enumerate(comps):
        groups.setdefault(find(i), []).extend(c.cells.tolist())
    return sorted(tuple(sorted(g)) for g in groups.values())


def partition(clusters):
    return sorted(tuple(c.cells.tolist()) for c in clusters)


class TestThreshold:
    def test_strict_inequality_and_excluded_fraction(self):
        wm = threshold_wet(np.array([[0.1, 0.2, 0.3]]), 0.2)
        assert wm.wet.tolist() == [[False, False, True]]
        assert wm.excluded_fraction == pytest.approx(0.5, rel=1e-15)

    def test_dry_field(self):
        wm = threshold_wet(np.zeros((3, 3)), 0.2)
        assert not wm.wet.any() and wm.excluded_fraction == 0.0

    def test_masked_never_wet(self):
        wm = threshold_wet(np.full((2, 2), 5.0), 0.2, mask=np.array([[True, False], [False, True]]))
        assert wm.wet.tolist() == [[True, False], [False, True]]

    def test_nonpositive_threshold(self):
        with pytest.raises(ValueError):
            threshold_wet(np.zeros((1, 1)), 0.0)


class TestComponents:
    def test_empty(self):
        assert label_components(np.zeros((4, 4), bool)) == []

    @pytest.mark.parametrize("conn", [4, 8])
    def test_full_block(self, conn):
        comps = label_components(np.ones((2, 2), bool), conn)
        assert len(comps) == 1 and len(comps[0]) == 4

    def test_diagonal(self):
        m = np.array([[1, 0], [0, 1]], bool)
        assert len(label_components(m, 8)) == 1
        assert len(label_components(m, 4)) == 2

    def test_bad_connectivity(self):
        with pytest.raises(ValueError):
            label_components(np.ones((2, 2), bool), 5)


class TestAccc:
    @staticmethod
    def two_cells(distance):
        m = np.zeros((7, 7), bool)
        m[3, 1] = True
        m[3, 1 + distance] = True
        return m

    def test_gap_three_merges_at_r1(self):
        m = self.two_cells(3)
        cl = accc_cluster(label_components(m), 1, m.shape)
        assert len(cl) == 1 and cl[0].component_ids == (1, 2)

    def test_gap_four_stays_apart_at_r1(self):
        m = self.two_cells(4)
        assert len(accc_cluster(label_components(m), 1, m.shape)) == 2

    def test_r0_equals_8_connected_components(self, rng):
        m = rng.random((30, 30)) < 0.3
        cl = accc_cluster(label_components(m, 8), 0, m.shape)
        assert partition(cl) == sorted(tuple(c.cells.tolist()) for c in label_components(m, 8))

    @settings(max_examples=60, deadline=None)
    @given(
        hnp.arrays(np.bool_, (20, 20)),
        st.integers(0, 3),
        st.sampled_from([4, 8]),
    )
    def test_matches_chebyshev_oracle(self, m, radius, conn):
        cl = accc_cluster(label_components(m, conn), radius, m.shape)
        assert partition(cl) == chebyshev_partition(m, radius, conn)

    @settings(max_examples=40, deadline=None)
    @given(hnp.arrays(np.bool_, (16, 16)), st.sampled_from([0.1, 0.3, 0.5]))
    def test_size_dependent_radius_matches_oracle(self, m, coef):
        cl = accc_cluster(label_components(m), 0, m.shape, size_coef=coef)
        assert partition(cl) == chebyshev_partition(m, 0, size_coef=coef)

    @settings(max_examples=40, deadline=None)
    @given(hnp.arrays(np.bool_, (15, 15)))
    def test_partition_and_monotone_in_radius(self, m):
        comps = label_components(m)
        prev = None
        for r in range(5):
            cl = accc_cluster(comps, r, m.shape)
            cells = np.concatenate([c.cells for c in cl]) if cl else np.empty(0, int)
            assert len(cells) == m.sum() and len(np.unique(cells)) == len(cells)
            if prev is not None:
                assert len(cl) <= prev
            prev = len(cl)
        if m.any():
            assert len(accc_cluster(comps, 15, m.shape)) == 1

    def test_ids_follow_first_cell(self):
        m = np.zeros((10, 10), bool)
        m[0, 9] = True
        m[5, 0] = True
        cl = accc_cluster(label_components(m), 1, m.shape)
        assert [c.cells[0] for c in cl] == [9, 50]
        assert [c.id for c in cl] == [1, 2]

    def test_negative_radius(self):
        with pytest.raises(ValueError):
            accc_cluster([], -1, (3, 3))


class TestIdentify:
    def test_far_blobs_one_cluster_each(self):
        f = np.zeros((40, 40))
        for r, c in [(5, 5), (5, 30), (30, 18)]:
            f[r - 2:r + 3, c - 2:c + 3] = 1.0
        fr = identify(f, radius=2, cell_km=12.0)
        assert fr.n_clusters == 3
        assert [c.n_cells for c in fr.clusters] == [25, 25, 25]
        assert fr.clusters[0].area_km2 == 25 * 144.0

    def test_cluster_totals_and_label_image(self):
        f = np.zeros((6, 6))
        f[1, 1] = 2.0
        f[1, 2] = 3.0
        fr = identify(f, radius=0, cell_km=4.0)
        assert fr.clusters[0].total_mm == 5.0
        img = fr.label_image()
        assert img[1, 1] == 1 and img.sum() == 2

    def test_centroid_weighted(self):
        f = np.zeros((3, 4))
        f[1, 1] = 1.0
        f[1, 2] = 3.0
        c = identify(f, radius=0, cell_km=10.0).clusters[0]
        x, y = c.centroid_km
        assert x == pytest.approx((1.5 * 1 + 2.5 * 3) / 4 * 10.0)
        assert y == pytest.approx(15.0)

    def test_series_uses_default_radius(self):
        s = make_series(np.zeros((2, 5, 5)), cell_km=4.0)
        frames = identify_series(s)
        assert len(frames) == 2 and all(f.n_clusters == 0 for f in frames)

    def test_default_radius(self):
        assert default_radius(12.0) == 2
        assert default_radius(4.0) == 6
