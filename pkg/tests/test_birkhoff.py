import json

import numpy as np
import pytest

from bandalloc.birkhoff import (
    ConstraintViolationError,
    DecompositionError,
    DoublyStochasticMatrix,
    PadInfo,
    PermutationSchedule,
    decompose,
    pad_to_doubly_stochastic,
    reconstruct,
    sample_assignments,
    sample_permutation,
)
from bandalloc.region import RegionQuery, max_rate_lp


def random_doubly_stochastic(rng, n, terms=None):
    terms = terms or int(rng.integers(1, 2 * n + 1))
    w = rng.dirichlet(np.ones(terms))
    out = np.zeros((n, n))
    for weight in w:
        out[rng.permutation(n), np.arange(n)] += weight
    return out


def test_two_by_two_example():
    ds = DoublyStochasticMatrix.square([[0.3, 0.7], [0.7, 0.3]])
    sched = decompose(ds)
    assert len(sched.terms) == 2
    by_perm = {t.perm: t.weight for t in sched.terms}
    assert by_perm[(0, 1)] == pytest.approx(0.3)
    assert by_perm[(1, 0)] == pytest.approx(0.7)


def test_identity_single_term():
    sched = decompose(DoublyStochasticMatrix.square(np.eye(4)))
    assert len(sched.terms) == 1 and sched.terms[0].weight == pytest.approx(1.0)


def test_uniform_three():
    sched = decompose(DoublyStochasticMatrix.square(np.full((3, 3), 1 / 3)))
    assert len(sched.terms) <= 3 ** 2 - 2 * 3 + 2
    np.testing.assert_allclose(reconstruct(sched), 1 / 3, atol=1e-12)


@pytest.mark.parametrize("n", [2, 3, 5, 8])
def test_round_trip_and_term_bound(n, rng):
    for _ in range(15):
        m = random_doubly_stochastic(rng, n)
        sched = decompose(DoublyStochasticMatrix.square(m))
        assert np.abs(reconstruct(sched) - m).max() <= 1e-9
        assert len(sched.terms) <= n * n - 2 * n + 2
        assert sched.weights.sum() == pytest.approx(1.0, abs=1e-9)
        assert np.all(sched.weights > 0)
        for t in sched.terms:
            assert sorted(t.perm) == list(range(n))


def test_rejects_non_stochastic():
    with pytest.raises(ValueError):
        DoublyStochasticMatrix.square([[0.5, 0.5], [0.6, 0.4]])
    with pytest.raises(ValueError):
        DoublyStochasticMatrix.square(np.ones((2, 3)) / 2)


def test_decomposition_error_carries_residual():
    err = DecompositionError("x", np.eye(2))
    assert err.residual.shape == (2, 2)


class TestPadding:
    def test_more_bands_than_sus(self):
        ds = pad_to_doubly_stochastic([[0.5], [0.3], [0.2]])
        assert ds.n == 3
        np.testing.assert_allclose(ds.values[:, 1:].sum(axis=1), [0.5, 0.7, 0.8])

    def test_more_sus_than_bands(self):
        omega = np.array([[0.4, 0.6, 0.0], [0.1, 0.2, 0.7]])
        ds = pad_to_doubly_stochastic(omega)
        assert ds.n == 3
        np.testing.assert_allclose(ds.values[:2, :3], omega)

    def test_square_with_slack_grows(self):
        ds = pad_to_doubly_stochastic([[0.5, 0.0], [0.0, 0.5]])
        assert ds.n > 2
        sched = decompose(ds)
        np.testing.assert_allclose(sched.marginals(), [[0.5, 0.0], [0.0, 0.5]], atol=1e-12)

    def test_rejects_oversubscribed(self):
        with pytest.raises(ConstraintViolationError):
            pad_to_doubly_stochastic([[0.6, 0.0], [0.8, 0.6]])
        with pytest.raises(ConstraintViolationError):
            pad_to_doubly_stochastic([[0.3, 0.3], [0.7, 0.7]])

    @pytest.mark.parametrize("shape", [(2, 2), (3, 2), (2, 3), (4, 4), (3, 5), (5, 3)])
    def test_lp_outputs_keep_width_and_marginals(self, shape, rng):
        for _ in range(5):
            from bandalloc.model import SuccessMatrix

            P = SuccessMatrix(rng.random(shape))
            fixed = {ell: 0.3 * rng.random() * P.values[:, ell].max() for ell in range(1, shape[1])}
            pt = max_rate_lp(P, RegionQuery(0, fixed))
            ds = pad_to_doubly_stochastic(pt.omega_star)
            assert ds.n == max(shape)
            sched = decompose(ds)
            np.testing.assert_allclose(sched.marginals(), pt.omega_star.omega, atol=1e-9)


class TestSchedule:
    def test_frequency_of_half_term(self):
        sched = decompose(DoublyStochasticMatrix.square([[0.3, 0.7], [0.7, 0.3]]))
        draws = sample_assignments(sched, np.random.default_rng(7), 1_000_000)
        freq = np.mean(draws[:, 0] == 0)
        assert abs(freq - 0.3) <= 0.005

    def test_sampling_deterministic(self, rng):
        sched = decompose(DoublyStochasticMatrix.square(random_doubly_stochastic(rng, 4)))
        a = [sample_permutation(sched, np.random.default_rng(3)) for _ in range(3)]
        b = [sample_permutation(sched, np.random.default_rng(3)) for _ in range(3)]
        assert a == b
        np.testing.assert_array_equal(
            sample_assignments(sched, np.random.default_rng(11), 100),
            sample_assignments(sched, np.random.default_rng(11), 100),
        )

    def test_virtual_band_is_none(self):
        sched = decompose(pad_to_doubly_stochastic([[1.0, 0.0]]))
        assert sample_permutation(sched, np.random.default_rng(0)) == (0, None)
        assert sched.assignment(0) == (1, 0)

    def test_json_round_trip(self, rng):
        omega = np.array([[0.2, 0.5, 0.1], [0.6, 0.1, 0.3]])
        sched = decompose(pad_to_doubly_stochastic(omega))
        text = json.dumps(sched.to_json())
        back = PermutationSchedule.from_json(json.loads(text), 2, 3)
        np.testing.assert_allclose(back.marginals(), omega, atol=1e-12)
        assert [back.assignment(i) for i in range(len(back.terms))] == [
            sched.assignment(i) for i in range(len(sched.terms))
        ]

    def test_from_json_validation(self):
        with pytest.raises(ValueError):
            PermutationSchedule.from_json([{"assignment": [1, 1], "q": 1.0}], 2, 2)
        with pytest.raises(ValueError):
            PermutationSchedule.from_json([{"assignment": [3, 1], "q": 1.0}], 2, 2)
        with pytest.raises(ValueError):
            PermutationSchedule.from_json([{"assignment": [1], "q": 1.0}], 2, 2)

    def test_pad_info_kept(self):
        sched = decompose(pad_to_doubly_stochastic(np.array([[0.5], [0.5]])))
        assert sched.pad_info == PadInfo(2, 1)
