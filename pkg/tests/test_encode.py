import numpy as np
import pytest

from cellseg.encode import (
    BD,
    BG,
    CB,
    distance_maps_from_labels,
    one_hot,
    ternary_from_labels,
    ternary_to_onehot,
    weight_mask,
)
from cellseg.grid import PROFILE_20X, mag_profile

from conftest import make_blob_labels
from oracles import ternary_brute


class TestTernary:
    def test_isolated_instance_has_no_boundary(self):
        labels = np.zeros((16, 16), int)
        labels[4:10, 4:10] = 1
        t = ternary_from_labels(labels, PROFILE_20X)
        assert not (t == BD).any()
        assert ((t == CB) == (labels > 0)).all()

    def test_well_separated_instances(self):
        # gap of 6 px >> 2*radius+3: dilations never overlap
        labels = np.zeros((12, 24), int)
        labels[3:9, 2:8] = 1
        labels[3:9, 14:20] = 2
        t = ternary_from_labels(labels, PROFILE_20X)
        assert not (t == BD).any()
        assert ((t == CB) == (labels > 0)).all()

    def test_close_squares_grow_boundary_on_facing_edges(self):
        labels = np.zeros((13, 13), int)
        labels[4:9, 1:6] = 1
        labels[4:9, 7:12] = 2  # 1-px gap
        t = ternary_from_labels(labels, PROFILE_20X, cleanup_min_area=0)
        oracle = ternary_brute(labels, PROFILE_20X.gt_dilate.footprint())
        assert (t == oracle).all()
        # facing edges are boundary
        assert (t[4:9, 5] == BD).all()
        assert (t[4:9, 7] == BD).all()

    def test_matches_oracle_on_random_two_instance_scenes(self, rng):
        for _ in range(40):
            labels = make_blob_labels(rng, shape=(24, 24), n_blobs=2, radius=(3, 5))
            t = ternary_from_labels(labels, PROFILE_20X, cleanup_min_area=0)
            oracle = ternary_brute(labels, PROFILE_20X.gt_dilate.footprint())
            assert (t == oracle).all()

    def test_foreground_preserved_up_to_cleanup(self, rng):
        for _ in range(20):
            labels = make_blob_labels(rng, shape=(32, 32), n_blobs=3, radius=(2, 5))
            t = ternary_from_labels(labels, PROFILE_20X)
            fg = labels > 0
            enc_fg = (t == BD) | (t == CB)
            # cleanup may only shrink foreground (CB -> BG reassignment)
            assert (enc_fg <= fg).all()


class TestDistanceMaps:
    def test_horizontal_strip(self):
        labels = np.zeros((3, 3), int)
        labels[0, 0:3] = 1
        d = distance_maps_from_labels(labels)
        assert np.allclose(d[0, :, 1], [-1.0, 0.0, 1.0])
        assert np.allclose(d[0, :, 0], 0.0)

    def test_single_pixel_is_zero(self):
        labels = np.zeros((3, 3), int)
        labels[1, 1] = 1
        d = distance_maps_from_labels(labels)
        assert np.allclose(d[1, 1], 0.0)

    def test_square_diagonal_channel(self):
        labels = np.zeros((3, 3), int)
        labels[:, :] = 1
        d = distance_maps_from_labels(labels)
        diag = d[:, :, 2]  # TL->BR
        assert diag[0, 0] == -1.0
        assert diag[2, 2] == 1.0
        assert np.allclose([diag[0, 2], diag[1, 1], diag[2, 0]], 0.0)

    def test_invariants_on_random_maps(self, rng):
        for _ in range(50):
            labels = make_blob_labels(rng, shape=(32, 32), n_blobs=3, radius=(1, 6))
            d = distance_maps_from_labels(labels)
            assert d.min() >= -1.0 and d.max() <= 1.0
            assert np.allclose(d[labels == 0], 0.0)
            for i in np.unique(labels[labels > 0]):
                vals = d[labels == i]
                for k in range(4):
                    mx, mn = vals[:, k].max(), vals[:, k].min()
                    assert (mx == 1.0 and mn == -1.0) or (mx == 0.0 and mn == 0.0)

    def test_sign_increases_with_row_inside_convex_instance(self):
        labels = np.zeros((9, 5), int)
        labels[1:8, 1:4] = 1
        d = distance_maps_from_labels(labels)
        col = d[1:8, 2, 0]
        assert (np.diff(col) > 0).all()


class TestWeightMask:
    def test_all_background(self):
        t = np.full((6, 6), BG)
        assert (weight_mask(t, PROFILE_20X) == 0.05).all()

    def test_all_cell_body(self):
        t = np.full((6, 6), CB)
        assert (weight_mask(t, PROFILE_20X) == 1.0).all()

    def test_single_pixel_disk(self):
        t = np.full((5, 5), BG)
        t[2, 2] = CB
        w = weight_mask(t, PROFILE_20X)
        ones = set(zip(*np.where(w == 1.0)))
        assert ones == {(2, 2), (1, 2), (3, 2), (2, 1), (2, 3)}
        assert (w[w != 1.0] == 0.05).all()

    def test_sum_identity(self, rng):
        from cellseg.grid import dilate

        for _ in range(10):
            labels = make_blob_labels(rng, shape=(24, 24), n_blobs=3, radius=(2, 4))
            t = ternary_from_labels(labels, PROFILE_20X)
            w = weight_mask(t, PROFILE_20X)
            fg = dilate((t == BD) | (t == CB), PROFILE_20X.post_dilate)
            assert w.sum() == pytest.approx(1.0 * fg.sum() + 0.05 * (~fg).sum())


class TestOneHot:
    def test_bd_pixel(self):
        t = np.full((1, 1), BD)
        assert ternary_to_onehot(t)[0, 0].tolist() == [1, 0, 0]

    def test_cb_bg_row(self):
        t = np.array([[CB, BG]])
        assert ternary_to_onehot(t).tolist() == [[[0, 1, 0], [0, 0, 1]]]

    def test_round_trip(self, rng):
        t = rng.integers(1, 4, size=(10, 10))
        oh = ternary_to_onehot(t)
        assert (oh.sum(axis=-1) == 1).all()
        assert (oh.argmax(axis=-1) + 1 == t).all()

    def test_out_of_range_rejected(self):
        with pytest.raises(ValueError):
            one_hot(np.array([[5]]), 3)
        with pytest.raises(ValueError):
            one_hot(np.array([[-1]]), 3)
