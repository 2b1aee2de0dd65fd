import numpy as np
import pytest

from cellseg.encode import distance_maps_from_labels, encode_all
from cellseg.grid import PROFILE_20X, mag_profile
from cellseg.postprocess import (
    InstanceType,
    PostprocessConfig,
    edge_mask,
    postprocess,
    sobel_bank,
    vote_types,
    watershed,
)

from conftest import make_blob_labels
from oracles import conv5_brute, watershed_brute


def labels_to_prob(labels, ternary):
    """Clean one-hot probabilities from a ternary map."""
    prob = np.zeros(labels.shape + (3,))
    prob[ternary == 1, 0] = 1.0
    prob[ternary == 2, 1] = 1.0
    prob[ternary == 3, 2] = 1.0
    return prob


class TestSobelBank:
    def test_zero_sum_kernels(self):
        for k in sobel_bank():
            assert k.sum() == pytest.approx(0.0, abs=1e-12)

    def test_vertical_is_transpose_of_horizontal(self):
        bank = sobel_bank()
        assert np.array_equal(bank[0], bank[1].T)

    def test_diagonals_are_half_sum_and_difference(self):
        bank = sobel_bank()
        assert np.allclose(bank[2], (bank[1] + bank[0]) / 2)
        assert np.allclose(bank[3], (bank[1] - bank[0]) / 2)

    def test_constant_field_response_zero(self):
        from scipy import ndimage

        f = np.full((8, 8), 3.7)
        for k in sobel_bank():
            r = ndimage.correlate(f, k, mode="constant", cval=0.0)
            assert np.allclose(r[2:-2, 2:-2], 0.0)

    def test_column_ramp_positive_response(self):
        from scipy import ndimage

        f = np.tile(np.arange(10.0), (10, 1))
        r = ndimage.correlate(f, sobel_bank()[1], mode="constant", cval=0.0)
        assert (r[2:-2, 2:-2] > 0).all()

    def test_diagonal_response_vs_brute_convolution(self):
        rng = np.random.default_rng(3)
        f = np.add.outer(np.arange(9.0), np.arange(9.0)) + rng.random((9, 9))
        bank = sobel_bank()
        from scipy import ndimage

        for k in range(4):
            fast = ndimage.correlate(f, bank[k], mode="constant", cval=0.0)
            assert np.allclose(fast, conv5_brute(f, bank[k]), atol=1e-10)
        # TL->BR kernel responds strongest to the TL->BR ramp interior
        ramp = np.add.outer(np.arange(9.0), np.arange(9.0))
        r2 = ndimage.correlate(ramp, bank[2], mode="constant", cval=0.0)[4, 4]
        r0 = ndimage.correlate(ramp, bank[0], mode="constant", cval=0.0)[4, 4]
        assert r2 >= r0


class TestEdgeMask:
    def test_all_zero_distances(self):
        dist = np.zeros((8, 8, 4))
        assert not edge_mask(dist, sobel_bank(), 0.57).any()

    def test_threshold_one_yields_empty(self, rng):
        dist = rng.uniform(-1, 1, (12, 12, 4))
        assert not edge_mask(dist, sobel_bank(), 1.0).any()

    def test_seam_between_adjacent_ramps(self):
        # two side-by-side instances, each a full -1..+1 horizontal ramp:
        # the +1 -> -1 seam carries the strongest gradient response
        labels = np.zeros((11, 26), int)
        labels[2:9, 3:13] = 1
        labels[2:9, 13:23] = 2
        dist = distance_maps_from_labels(labels).astype(np.float64)
        e = edge_mask(dist, sobel_bank(), 0.57)
        # seam columns are marked inside the instances
        assert e[2:9, 12:14].any()
        # the strongest horizontal response sits at the seam
        from scipy import ndimage

        chan = dist[:, :, 1]
        chan01 = (chan - chan.min()) / (chan.max() - chan.min())
        resp = ndimage.correlate(chan01, sobel_bank()[1], mode="constant", cval=0.0)
        peak_col = np.unravel_index(np.abs(resp).argmax(), resp.shape)[1]
        assert 11 <= peak_col <= 14


class TestWatershed:
    def test_matches_oracle_on_random_grids(self, rng):
        for _ in range(30):
            h = w = 16
            markers = np.zeros((h, w), np.int32)
            n = rng.integers(1, 4)
            for i in range(1, n + 1):
                markers[rng.integers(0, h), rng.integers(0, w)] = i
            fg = rng.random((h, w)) < 0.8
            fg[markers > 0] = True
            topo = np.round(rng.random((h, w)) * 4) / 4  # coarse values force ties
            ours = watershed(topo, markers, fg)
            theirs = watershed_brute(topo, markers, fg)
            assert (ours == theirs).all()

    def test_isolated_basins(self):
        topo = np.zeros((10, 10))
        markers = np.zeros((10, 10), np.int32)
        markers[2, 2] = 1
        markers[7, 7] = 2
        fg = np.zeros((10, 10), bool)
        fg[1:4, 1:4] = True
        fg[6:9, 6:9] = True
        out = watershed(topo, markers, fg)
        assert (out[1:4, 1:4] == 1).all()
        assert (out[6:9, 6:9] == 2).all()
        assert (out[~fg] == 0).all()

    def test_determinism(self, rng):
        topo = np.round(rng.random((20, 20)) * 3) / 3
        markers = np.zeros((20, 20), np.int32)
        markers[3, 3] = 1
        markers[15, 15] = 2
        fg = np.ones((20, 20), bool)
        a = watershed(topo, markers, fg)
        b = watershed(topo.copy(), markers.copy(), fg.copy())
        assert (a == b).all()


class TestPostprocess:
    def test_pure_background(self):
        prob = np.zeros((16, 16, 3))
        prob[:, :, 2] = 1.0
        dist = np.zeros((16, 16, 4))
        labels, types = postprocess(prob, dist)
        assert labels.max() == 0
        assert types is None

    def test_two_separated_blobs(self, rng):
        labels = make_blob_labels(rng, shape=(48, 48), n_blobs=2, radius=(5, 7), min_gap=6)
        assert labels.max() == 2
        enc = encode_all(labels, PROFILE_20X)
        prob = labels_to_prob(labels, enc.ternary)
        out, _ = postprocess(prob, enc.distances.astype(np.float64))
        assert out.max() == 2
        for i in (1, 2):
            gt_i = labels == i
            ids = np.unique(out[gt_i])
            ids = ids[ids > 0]
            assert len(ids) == 1
            pred_i = out == ids[0]
            iou = (gt_i & pred_i).sum() / (gt_i | pred_i).sum()
            assert iou >= 0.9

    def test_touching_blobs_split(self):
        # dumbbell: two squares sharing a 1-px neck in FG, distance maps
        # encode two instances (ramps reset at the neck)
        labels = np.zeros((20, 32), int)
        labels[4:16, 2:15] = 1
        labels[4:16, 16:29] = 2
        enc = encode_all(labels, PROFILE_20X)
        prob = labels_to_prob(labels, enc.ternary)
        out, _ = postprocess(prob, enc.distances.astype(np.float64))
        assert out.max() == 2

    def test_output_partitions_foreground(self, rng):
        for _ in range(5):
            labels = make_blob_labels(rng, shape=(40, 40), n_blobs=3, radius=(4, 6))
            enc = encode_all(labels, PROFILE_20X)
            prob = labels_to_prob(labels, enc.ternary)
            out, _ = postprocess(prob, enc.distances.astype(np.float64))
            fg = prob[:, :, 0] + prob[:, :, 1] > prob[:, :, 2]
            assert ((out > 0) <= fg).all()

    def test_theta2_monotonicity(self, rng):
        labels = make_blob_labels(rng, shape=(40, 40), n_blobs=4, radius=(2, 6))
        enc = encode_all(labels, PROFILE_20X)
        prob = labels_to_prob(labels, enc.ternary)
        dist = enc.distances.astype(np.float64)
        counts = []
        for theta2 in (0, 10, 40, 200):
            cfg = PostprocessConfig(theta2=theta2)
            out, _ = postprocess(prob, dist, cfg=cfg)
            counts.append(out.max())
        assert counts == sorted(counts, reverse=True)

    def test_determinism(self, rng):
        labels = make_blob_labels(rng, shape=(32, 32), n_blobs=3, radius=(3, 5))
        enc = encode_all(labels, PROFILE_20X)
        prob = labels_to_prob(labels, enc.ternary)
        dist = enc.distances.astype(np.float64)
        a, _ = postprocess(prob, dist)
        b, _ = postprocess(prob, dist)
        assert (a == b).all()

    def test_shape_mismatch_rejected(self):
        with pytest.raises(ValueError):
            postprocess(np.zeros((8, 8, 3)), np.zeros((9, 8, 4)))

    def test_theta1_validation(self):
        with pytest.raises(ValueError):
            PostprocessConfig(theta1=1.5)


class TestVoteTypes:
    def test_majority(self):
        labels = np.zeros((4, 4), np.int32)
        labels[0:2, 0:4] = 1
        type_prob = np.zeros((4, 4, 3))
        type_prob[:, :, 0] = 1.0
        type_prob[0, :, :] = [0.0, 0.9, 0.1]   # 4 px vote type 1
        type_prob[1, :2, :] = [0.0, 0.1, 0.9]  # 2 px vote type 2
        type_prob[1, 2:, :] = [1.0, 0.0, 0.0]  # 2 px background argmax
        (t,) = vote_types(labels, type_prob)
        assert t == InstanceType(1, 1, pytest.approx(4 / 6))

    def test_tie_breaks_to_lower_type(self):
        labels = np.ones((1, 2), np.int32)
        type_prob = np.zeros((1, 2, 3))
        type_prob[0, 0] = [0.0, 1.0, 0.0]
        type_prob[0, 1] = [0.0, 0.0, 1.0]
        (t,) = vote_types(labels, type_prob)
        assert t.type_id == 1

    def test_all_background_falls_back_to_mean_prob(self):
        labels = np.ones((2, 2), np.int32)
        type_prob = np.zeros((2, 2, 3))
        type_prob[:, :] = [0.6, 0.1, 0.3]
        (t,) = vote_types(labels, type_prob)
        assert t.type_id == 2
        assert t.vote_fraction == 1.0

    def test_idempotent_given_labels(self, rng):
        labels = make_blob_labels(rng, shape=(24, 24), n_blobs=3, radius=(3, 5))
        type_prob = rng.random((24, 24, 4))
        type_prob /= type_prob.sum(axis=-1, keepdims=True)
        a = vote_types(labels, type_prob)
        b = vote_types(labels, type_prob)
        assert a == b
