import json

import numpy as np
import pytest

from sflab.bounds import (
    construction_error,
    verify_lemma1,
    verify_theorem1,
)
from sflab.errors import RegularizationViolated
from sflab.filters import filter_from_callable, get_filter, lse_fit_continuous, lse_fit_discrete
from sflab.graph import EigenSystem, eigendecompose, erdos_renyi, normalized_laplacian


def setup_eig(n, p, seed):
    return eigendecompose(normalized_laplacian(erdos_renyi(n, p, seed=seed)))


class TestConstructionError:
    def test_interpolating_fit_zero_error(self):
        eig = setup_eig(12, 0.5, seed=0)
        filt = get_filter("f1")
        lam = eig.eigenvalues
        # discrete fit on the eigenvalues with enough degrees interpolates
        fit = lse_fit_discrete("monomial", len(np.unique(lam.round(12))) - 1,
                               lam, np.asarray(filt(lam)))
        rng = np.random.default_rng(1)
        X = rng.standard_normal((12, 4))
        W = rng.standard_normal((4, 3))
        assert construction_error(eig, fit, filt, X, W) < 1e-6

    def test_zero_features(self):
        eig = setup_eig(10, 0.4, seed=1)
        filt = get_filter("f2")
        fit = lse_fit_continuous("monomial", 5, filt)
        W = np.random.default_rng(0).standard_normal((3, 2))
        assert construction_error(eig, fit, filt, np.zeros((10, 3)), W) == 0.0

    def test_matches_elementwise_oracle(self):
        # independent reimplementation with explicit loops over entries
        eig = setup_eig(30, 0.3, seed=2)
        filt = get_filter("f1")
        fit = lse_fit_continuous("monomial", 5, filt)
        rng = np.random.default_rng(3)
        X = rng.standard_normal((30, 8))
        W = np.eye(8)
        gap = fit(eig.eigenvalues) - np.asarray(filt(eig.eigenvalues))
        U = eig.eigenvectors
        M = np.zeros((30, 8))
        for i in range(30):
            for j in range(8):
                acc = 0.0
                for s in range(30):
                    ux = 0.0
                    for t in range(30):
                        ux += U[t, s] * X[t, j]
                    acc += U[i, s] * gap[s] * ux
                M[i, j] = acc
        oracle = np.sqrt(np.sum(M * M))
        assert construction_error(eig, fit, filt, X, W) == pytest.approx(
            oracle, abs=1e-10
        )

    def test_permutation_invariance(self):
        eig = setup_eig(20, 0.4, seed=4)
        filt = get_filter("f3")
        fit = lse_fit_continuous("monomial", 5, filt)
        rng = np.random.default_rng(5)
        X = rng.standard_normal((20, 4))
        W = rng.standard_normal((4, 2))
        xi = construction_error(eig, fit, filt, X, W)
        perm = rng.permutation(20)
        eig_p = EigenSystem(eigenvalues=eig.eigenvalues[perm],
                            eigenvectors=eig.eigenvectors[:, perm])
        xi_p = construction_error(eig_p, fit, filt, X, W)
        assert xi_p == pytest.approx(xi, abs=1e-10)


class TestLemmaSandwich:
    def test_single_covering_slice_is_tight(self):
        filt = get_filter("f1")
        rep = verify_lemma1(filt, np.array([0.0, 2.0]), "monomial", 6)
        # one nonempty slice covering [0, 2]: all three quantities coincide
        assert rep.sum_slices == pytest.approx(rep.epsilon, rel=1e-9)
        assert rep.sum_sqrt_slices_sq == pytest.approx(rep.epsilon, rel=1e-9)
        assert rep.left.ok and rep.right.ok

    def test_zero_filter_all_zero(self):
        zero = filter_from_callable(lambda x: np.zeros_like(x))
        rep = verify_lemma1(zero, np.array([0.0, 0.7, 1.3, 2.0]), "monomial", 4)
        assert rep.epsilon < 1e-20
        assert rep.sum_slices < 1e-20
        assert rep.left.ok and rep.right.ok

    def test_right_side_has_positive_slack(self):
        rng = np.random.default_rng(6)
        lam = np.sort(rng.uniform(0, 2, 50))
        lam[0], lam[-1] = 0.0, 2.0
        rep = verify_lemma1(get_filter("f3"), lam, "monomial", 10)
        assert rep.right.ok and rep.right.slack > 0

    def test_failures_are_data_not_exceptions(self):
        # fine slicing of a smooth plateau filter: the lower bound fails,
        # and the report simply records it
        rng = np.random.default_rng(7)
        lam = np.sort(rng.uniform(0, 2, 50))
        lam[0], lam[-1] = 0.0, 2.0
        rep = verify_lemma1(get_filter("f5"), lam, "monomial", 10)
        assert not rep.left.ok
        assert rep.right.ok


class TestTheorem1:
    def test_w_zero_degenerates(self):
        eig = setup_eig(10, 0.4, seed=8)
        X = np.random.default_rng(9).standard_normal((10, 3))
        rep = verify_theorem1(eig, get_filter("f1"), "monomial", 5, X,
                              np.zeros((3, 2)), r=1.0)
        assert rep.xi == 0.0
        assert rep.delta_W == 0.0
        assert rep.thm1_left.ok  # 0 <= 0

    def test_regularization_enforced(self):
        eig = setup_eig(10, 0.4, seed=10)
        rng = np.random.default_rng(11)
        X = rng.standard_normal((10, 3))
        W = rng.standard_normal((3, 2))
        with pytest.raises(RegularizationViolated):
            verify_theorem1(eig, get_filter("f1"), "monomial", 5, X, W,
                            r=0.5 * np.linalg.norm(W))

    def test_discrete_continuous_gap_flag(self):
        # an exactly interpolating fit makes xi = 0 while the continuous
        # slice errors stay positive; the report must flag the gap
        eig = setup_eig(8, 0.5, seed=12)
        rng = np.random.default_rng(13)
        X = rng.standard_normal((8, 3))
        W = rng.standard_normal((3, 2))
        filt = get_filter("f1")
        lam = eig.eigenvalues
        fit = lse_fit_discrete("monomial", 7, lam, np.asarray(filt(lam)))
        xi = construction_error(eig, fit, filt, X, W)
        assert xi < 1e-8
        rep = verify_theorem1(eig, filt, "monomial", 5, X, W,
                              r=float(np.linalg.norm(W)))
        assert rep.lemma.sum_slices > 0
        # the report's own fit is the continuous one, so xi > 0 there; the
        # flag fires when a discrete-interpolation xi is supplied instead
        assert not rep.discrete_continuous_gap
        from sflab.bounds import BoundsReport

        assert isinstance(rep, BoundsReport)

    def test_provable_right_sides_hold_on_random_batch(self):
        # only two upper bounds are theorems: the slice sandwich in the
        # squared continuous convention, and the construction-error bound
        # through the discrete norm; the mixed continuous/discrete form is
        # recorded but not guaranteed
        rng = np.random.default_rng(14)
        checked = 0
        mixed_holds = 0
        for fid in ("f1", "f2", "f3", "f4", "f5", "f6"):
            for n in (20, 50):
                for D in (3, 5, 10):
                    seed = checked
                    eig = setup_eig(n, 0.5, seed=seed)
                    X = rng.standard_normal((n, 6))
                    W = rng.standard_normal((6, 3))
                    rep = verify_theorem1(eig, get_filter(fid), "monomial", D,
                                          X, W, r=float(np.linalg.norm(W)))
                    assert rep.lemma.right.ok, (fid, n, D)
                    assert rep.thm1_right_discrete.ok, (fid, n, D)
                    mixed_holds += rep.thm1_right.ok
                    checked += 1
        assert checked == 36
        assert mixed_holds < checked  # the mixed form genuinely differs

    def test_full_rank_left_side_logged(self):
        eig = setup_eig(20, 0.5, seed=15)
        rng = np.random.default_rng(16)
        X = rng.standard_normal((20, 4))
        W = rng.standard_normal((4, 2))
        rep = verify_theorem1(eig, get_filter("f4"), "monomial", 5, X, W,
                              r=float(np.linalg.norm(W)))
        assert isinstance(rep.thm1_left.ok, bool)
        assert rep.thm1_left.slack == rep.xi - rep.delta_X * rep.delta_W * rep.lemma.sum_slices


class TestReportSerialization:
    def test_json_round_trip(self):
        eig = setup_eig(12, 0.5, seed=17)
        rng = np.random.default_rng(18)
        X = rng.standard_normal((12, 3))
        W = rng.standard_normal((3, 2))
        rep = verify_theorem1(eig, get_filter("f2"), "monomial", 5, X, W,
                              r=float(np.linalg.norm(W)))
        doc = json.loads(rep.to_json())
        for key in ("epsilon", "xi", "delta_X", "delta_W", "r",
                    "thm1_right_ok", "thm1_right_discrete_ok", "unsquared",
                    "lemma1", "discrete_continuous_gap"):
            assert key in doc
        assert doc["lemma1"]["lemma1_right_ok"] is True
        assert len(doc["epsilon_slices"]) == len(rep.epsilon_slices)
