"""Loss-term tests: analytic zero/ceiling cases, scalar oracles, gradients."""

import math

import numpy as np
import pytest

from trackseg import autodiff as ad
from trackseg.autodiff import Tape, Tensor, gradcheck
from trackseg.train import (
    ContrastiveConfig,
    LossWeights,
    MatchResult,
    contrastive_terms,
    cosine_distance,
    loss_bce_mask,
    loss_class,
    loss_contrastive,
    loss_dice,
    loss_infonce,
    total_loss,
)


def match_for(n_q, pairs, iou=None):
    matched = {q for q, _ in pairs}
    return MatchResult(
        pairs=sorted(pairs),
        unmatched=[q for q in range(n_q) if q not in matched],
        max_iou=np.asarray(iou if iou is not None else np.zeros(n_q), dtype=np.float32),
    )


def unit_rows(rows):
    arr = np.asarray(rows, dtype=np.float64)
    return arr / np.linalg.norm(arr, axis=-1, keepdims=True)


class TestLossClass:
    def test_ideal_configuration_is_zero(self):
        logits = Tensor(np.array([40.0, -40.0, -40.0]))
        value = loss_class(logits, match_for(3, [(0, 7)])).item()
        assert abs(value) <= 1e-6

    def test_half_scores_give_ln2(self):
        logits = Tensor(np.zeros(4))
        value = loss_class(logits, match_for(4, [(1, 0)])).item()
        assert value == pytest.approx(math.log(2.0), abs=1e-9)

    def test_mixed_hand_case(self):
        # scores sigmoid([1, -2]); query 0 matched, query 1 background
        logits = np.array([1.0, -2.0])
        s = 1 / (1 + np.exp(-logits))
        expected = (-math.log(s[0]) - math.log(1 - s[1])) / 2
        value = loss_class(Tensor(logits), match_for(2, [(0, 3)])).item()
        assert value == pytest.approx(expected, abs=1e-9)

    def test_gradient(self):
        rng = np.random.default_rng(0)
        match = match_for(5, [(0, 1), (3, 2)])
        err = gradcheck(lambda z: loss_class(z, match), [rng.normal(size=5)])
        assert err <= 1e-6


class TestLossDice:
    def test_equal_binary_masks_zero(self):
        mask = (np.random.default_rng(1).random((6, 6)) > 0.5).astype(np.float64)
        value = loss_dice(Tensor(mask), mask).item()
        assert abs(value) <= 1e-9

    def test_disjoint_masks_near_one(self):
        a = np.zeros((10, 10))
        a[:5] = 1.0
        b = np.zeros((10, 10))
        b[5:] = 1.0
        value = loss_dice(Tensor(a), b).item()
        assert value == pytest.approx(1.0 - 1.0 / (100 + 1), abs=1e-9)

    def test_overlap_set_arithmetic(self):
        # equal areas 50, intersection rows 2..4 -> 30 pixels
        a = np.zeros((10, 10))
        a[:5] = 1.0
        b = np.zeros((10, 10))
        b[2:7] = 1.0
        value = loss_dice(Tensor(a), b).item()
        assert value == pytest.approx(1.0 - (2 * 30 + 1) / (50 + 50 + 1), abs=1e-9)

    def test_half_overlap_equal_areas_near_half(self):
        # areas A with overlap A/2 -> loss ~ 1 - 2*(A/2)/(2A) = 0.5 (up to smoothing)
        a = np.zeros((20, 20))
        a[:, :10] = 1.0          # area 200
        b = np.zeros((20, 20))
        b[:, 5:15] = 1.0         # area 200, overlap 100
        value = loss_dice(Tensor(a), b).item()
        assert value == pytest.approx(1.0 - (2 * 100 + 1) / (400 + 1), abs=1e-9)
        assert abs(value - 0.5) < 2e-3

    def test_gradient(self):
        rng = np.random.default_rng(2)
        target = (rng.random((4, 4)) > 0.4).astype(np.float64)
        err = gradcheck(lambda p: loss_dice(ad.sigmoid(p), target), [rng.normal(size=(4, 4))])
        assert err <= 1e-6


class TestBceMask:
    def test_matching_logits_near_zero(self):
        target = np.array([[1.0, 0.0], [0.0, 1.0]])
        logits = np.where(target > 0.5, 40.0, -40.0)
        assert loss_bce_mask(Tensor(logits), target).item() <= 1e-6

    def test_gradient(self):
        rng = np.random.default_rng(3)
        target = rng.random((3, 3))
        err = gradcheck(lambda z: loss_bce_mask(z, target), [rng.normal(size=(3, 3)) * 2])
        assert err <= 1e-6


class TestCosineDistance:
    def test_same_vector_zero(self):
        r = unit_rows([[1.0, 2.0, 3.0]])[0]
        assert cosine_distance(r, r) == pytest.approx(0.0, abs=1e-12)

    def test_opposite_is_one(self):
        r = unit_rows([[0.3, -0.8, 0.1]])[0]
        assert cosine_distance(r, -r) == pytest.approx(1.0, abs=1e-12)

    def test_orthogonal_is_half(self):
        assert cosine_distance(np.array([1.0, 0.0]), np.array([0.0, 1.0])) == pytest.approx(0.5)

    def test_tensor_path_matches(self):
        a = unit_rows([[1.0, 1.0]])[0]
        b = unit_rows([[1.0, 0.0]])[0]
        t = cosine_distance(Tensor(a), Tensor(b)).item()
        assert t == pytest.approx(cosine_distance(a, b), abs=1e-7)


class TestContrastive:
    def embeddings(self, rows_by_frame):
        return [Tensor(unit_rows(rows)) for rows in rows_by_frame]

    def test_ideal_configuration_zero(self):
        # positives identical; the lone negative sits beyond the margin
        e = self.embeddings([
            [[1.0, 0.0], [-1.0, 0.0]],
            [[1.0, 0.0], [0.0, 0.0 + 1.0]],
        ])
        matches = [match_for(2, [(0, 5)]), match_for(2, [(0, 5)])]
        # negative candidates: unmatched queries with IoU below the ceiling
        cfg = ContrastiveConfig(margin=0.5, negatives_per_anchor=None)
        value = loss_contrastive(e, matches, cfg).item()
        assert abs(value) <= 1e-6

    def test_match_term_point_three_squared(self):
        # one positive pair at cosine distance 0.3 -> match term 0.09
        angle = math.acos(1.0 - 2 * 0.3)
        e = self.embeddings([
            [[1.0, 0.0]],
            [[math.cos(angle), math.sin(angle)]],
        ])
        matches = [match_for(1, [(0, 9)]), match_for(1, [(0, 9)])]
        cfg = ContrastiveConfig(margin=0.5, negatives_per_anchor=None)
        match_term, nonmatch_term = contrastive_terms(e, matches, cfg)
        assert match_term.item() == pytest.approx(0.09, abs=1e-6)
        assert nonmatch_term.item() == pytest.approx(0.0, abs=1e-12)

    def test_nonmatch_term_half(self):
        # one negative pair at distance 0 with margin 0.5 -> hinge 0.5, N_hard 1
        e = self.embeddings([
            [[1.0, 0.0], [1.0, 0.0]],
        ])
        matches = [match_for(2, [(0, 1), (1, 2)])]
        cfg = ContrastiveConfig(margin=0.5, negatives_per_anchor=None)
        match_term, nonmatch_term = contrastive_terms(e, matches, cfg)
        assert match_term.item() == pytest.approx(0.0, abs=1e-12)  # no cross-frame positives
        assert nonmatch_term.item() == pytest.approx(0.5, abs=1e-6)

    def test_high_iou_unmatched_queries_excluded(self):
        e = self.embeddings([
            [[1.0, 0.0], [1.0, 0.0]],
        ])
        # query 1 unmatched but IoU 0.9: not a negative; no pairs at all
        matches = [match_for(2, [(0, 1)], iou=[1.0, 0.9])]
        cfg = ContrastiveConfig(margin=0.5, negatives_per_anchor=None)
        match_term, nonmatch_term = contrastive_terms(e, matches, cfg)
        assert nonmatch_term.item() == 0.0

    def test_zero_hard_negatives_defined_zero(self):
        e = self.embeddings([
            [[1.0, 0.0], [-1.0, 0.0]],
        ])
        matches = [match_for(2, [(0, 1), (1, 2)])]  # D=1 >= margin
        cfg = ContrastiveConfig(margin=0.5, negatives_per_anchor=None)
        _, nonmatch_term = contrastive_terms(e, matches, cfg)
        assert nonmatch_term.item() == 0.0

    def test_subsampling_bounds_pairs(self):
        rng = np.random.default_rng(4)
        e = [Tensor(unit_rows(rng.normal(size=(8, 4)))) for _ in range(2)]
        matches = [match_for(8, [(0, 1)]), match_for(8, [(0, 1)])]
        cfg_all = ContrastiveConfig(negatives_per_anchor=None)
        cfg_few = ContrastiveConfig(negatives_per_anchor=3)
        full = loss_contrastive(e, matches, cfg_all).item()
        few = loss_contrastive(e, matches, cfg_few, np.random.default_rng(0)).item()
        assert full >= 0 and few >= 0

    def test_gradient(self):
        rng = np.random.default_rng(5)
        matches = [match_for(3, [(0, 1), (1, 2)]), match_for(3, [(2, 1), (0, 2)])]
        cfg = ContrastiveConfig(negatives_per_anchor=None)

        def f(a, b):
            e = [ad.l2_normalize(a), ad.l2_normalize(b)]
            return loss_contrastive(e, matches, cfg)

        err = gradcheck(f, [rng.normal(size=(3, 4)), rng.normal(size=(3, 4))])
        assert err <= 1e-5


def softmax_nll(sims, pos):
    z = np.exp(sims - sims.max())
    return -math.log(z[pos] / z.sum())


class TestInfoNCE:
    @pytest.mark.parametrize("n_q", [3, 7, 20])
    def test_uniform_similarities_give_ln_nq(self, n_q):
        # anchor in frame 0 is orthogonal to every query of frame 1, so each
        # of the N_q frame-1 similarities is equal; that contribution is ln N_q
        anchor_frame = np.eye(1, n_q + 1, k=n_q)        # e_{n_q}
        other_frame = np.eye(n_q, n_q + 1)              # e_0 .. e_{n_q - 1}
        e = [Tensor(anchor_frame), Tensor(other_frame)]
        matches = [match_for(1, [(0, 4)]), match_for(n_q, [(1, 4)])]
        tau = Tensor(np.asarray(0.0))
        value = loss_infonce(e, matches, tau).item()
        contribs = [
            softmax_nll(anchor_frame @ anchor_frame[0], 0),   # own frame: single query
            softmax_nll(other_frame @ anchor_frame[0], 1),    # uniform row = ln n_q
            softmax_nll(anchor_frame @ other_frame[1], 0),
            softmax_nll(other_frame @ other_frame[1], 1),
        ]
        assert contribs[1] == pytest.approx(math.log(n_q), abs=1e-12)
        assert value == pytest.approx(np.mean(contribs), abs=1e-6)

    def test_perfect_separation_goes_to_zero(self):
        # positive similarity 1, negatives -1, large temperature -> loss ~ 0
        e = [Tensor(np.array([[1.0, 0.0], [-1.0, 0.0]])),
             Tensor(np.array([[1.0, 0.0], [-1.0, 0.0]]))]
        matches = [match_for(2, [(0, 1), (1, 2)]), match_for(2, [(0, 1), (1, 2)])]
        tau = Tensor(np.asarray(math.log(100.0)))
        assert loss_infonce(e, matches, tau).item() <= 1e-6

    def test_three_query_scalar_oracle(self):
        rng = np.random.default_rng(6)
        a = unit_rows(rng.normal(size=(3, 4)))
        b = unit_rows(rng.normal(size=(3, 4)))
        e = [Tensor(a), Tensor(b)]
        matches = [match_for(3, [(0, 1)]), match_for(3, [(2, 1)])]
        tau = Tensor(np.asarray(0.0))
        value = loss_infonce(e, matches, tau).item()
        contribs = [
            softmax_nll(a @ a[0], 0),   # anchor (f0,q0) vs frame 0
            softmax_nll(b @ a[0], 2),   # anchor (f0,q0) vs frame 1
            softmax_nll(a @ b[2], 0),   # anchor (f1,q2) vs frame 0
            softmax_nll(b @ b[2], 2),
        ]
        assert value == pytest.approx(np.mean(contribs), abs=1e-6)

    def test_identical_objects_replication(self):
        # frame 1 holds two appearance-identical positives: each replica keeps one
        a = unit_rows([[1.0, 0.0, 0.0]])
        b = unit_rows([[0.9, 0.1, 0.0], [0.8, -0.1, 0.1], [-1.0, 0.0, 0.0]])
        e = [Tensor(a), Tensor(b)]
        matches = [match_for(1, [(0, 10)]),
                   match_for(3, [(0, 10), (1, 11)])]
        groups = {10: 10, 11: 10}  # objects 10 and 11 look identical
        tau = Tensor(np.asarray(0.0))
        value = loss_infonce(e, matches, tau, identity_groups=groups).item()

        def nll_excluding(sims, pos, excluded):
            keep = [i for i in range(len(sims)) if i == pos or i not in excluded]
            z = np.exp(sims[keep] - sims[keep].max())
            return -math.log(z[keep.index(pos)] / z.sum())

        # anchors: (f0,q0) obj10, (f1,q0) obj10, (f1,q1) obj11 -- all one group
        contribs = []
        for anchor in (a[0], b[0], b[1]):
            # frame 0: one positive (q0)
            sims0 = a @ anchor
            contribs.append(nll_excluding(sims0, 0, set()))
            # frame 1: two positives q0, q1 -> two replicas
            sims1 = b @ anchor
            contribs.append(nll_excluding(sims1, 0, {1}))
            contribs.append(nll_excluding(sims1, 1, {0}))
        assert value == pytest.approx(np.mean(contribs), abs=1e-6)

    def test_temperature_cap(self):
        e = [Tensor(unit_rows([[1.0, 0.0], [0.0, 1.0]]))]
        matches = [match_for(2, [(0, 1)])]
        big = loss_infonce(e, matches, Tensor(np.asarray(50.0)), tau_cap=100.0).item()
        capped = loss_infonce(e, matches, Tensor(np.asarray(math.log(100.0))), tau_cap=100.0).item()
        assert big == pytest.approx(capped, abs=1e-9)

    def test_gradient_including_temperature(self):
        rng = np.random.default_rng(7)
        matches = [match_for(3, [(0, 1), (1, 2)]), match_for(3, [(2, 1), (0, 2)])]

        def f(a, b, tau):
            e = [ad.l2_normalize(a), ad.l2_normalize(b)]
            return loss_infonce(e, matches, tau)

        err = gradcheck(f, [rng.normal(size=(3, 4)), rng.normal(size=(3, 4)),
                            np.asarray(0.3)])
        assert err <= 1e-5


class TestTotalLoss:
    def test_all_zero_weights_rejected(self):
        with pytest.raises(ValueError):
            LossWeights(0, 0, 0, 0, 0)

    def test_single_weight_scales_term(self):
        terms = [Tensor(np.asarray(v)) for v in (0.5, 0.7, 0.9, 1.1, 1.3)]
        w = LossWeights(2.0, 1e-9, 1e-9, 1e-9, 1e-9)
        value = total_loss(*terms, w).item()
        assert value == pytest.approx(1.0, abs=1e-6)

    def test_weighted_sum_oracle(self):
        vals = (0.5, 0.7, 0.9, 1.1, 1.3)
        terms = [Tensor(np.asarray(v)) for v in vals]
        w = LossWeights(2.0, 5.0, 5.0, 1.0, 1.0)
        expected = 2 * 0.5 + 5 * 0.7 + 5 * 0.9 + 1 * 1.1 + 1 * 1.3
        assert total_loss(*terms, w).item() == pytest.approx(expected, abs=1e-9)
