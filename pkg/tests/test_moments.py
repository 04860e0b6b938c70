import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.stats import poisson

from uhcm.errors import (
    DivergentRepresentation,
    DomainError,
    InsufficientMoments,
    NumericalInconsistency,
    SeriesTruncationError,
)
from uhcm.fock import StateSpec, build_state, squeezed_vacuum_expm, DensityMatrix
from uhcm.moments import (
    MomentCache,
    MomentSet,
    moment_direct,
    moment_set,
    moment_via_displacement,
    moments_direct,
    photocount_direct,
    photocount_from_moments,
    quasiprob_s,
)

from conftest import random_state


def factorial_moment(pops, m):
    """Brute-force sum of n(n-1)...(n-m+1) p_n."""
    return sum(p * math.prod(range(n - m + 1, n + 1)) for n, p in enumerate(pops) if n >= m)


# ---- moment oracles --------------------------------------------------------


def test_coherent_moments():
    beta, alpha = 0.9 + 0.3j, 0.2 - 0.5j
    # a deep cut so the truncated state reproduces the infinite-space values
    rho = build_state(StateSpec("coherent", beta=beta, tail_tol=1e-16))
    for m in range(7):
        expect = abs(beta - alpha) ** (2 * m)
        assert abs(moment_direct(rho, alpha, m) - expect) < 1e-9 * max(1, expect)
        assert abs(moment_via_displacement(rho, alpha, m) - expect) < 1e-9 * max(1, expect)


def test_fock_one_photon():
    rho = build_state(StateSpec("fock", n=1))
    assert moment_direct(rho, 0, 1) == 1.0
    assert moment_direct(rho, 0, 2) == 0.0


def test_thermal_factorial_moments():
    rho = build_state(StateSpec("thermal", nbar=0.8, tail_tol=1e-16))
    oracle = factorial_moment(rho.populations, 3)
    assert abs(oracle - 3.072) < 1e-8
    assert abs(moment_direct(rho, 0, 3) - oracle) < 1e-12
    for m in range(1, 8):
        assert abs(moment_direct(rho, 0, m) - math.factorial(m) * 0.8**m) < 1e-7


def test_squeezed_moments_against_dense_operators():
    xi, alpha = 0.4, 0.3 + 0.2j
    d = 60
    psi = squeezed_vacuum_expm(xi, d)
    rho = DensityMatrix(psi / np.trace(psi).real)
    a = np.diag(np.sqrt(np.arange(1, d + 20)), 1)
    b = a - alpha * np.eye(d + 20)
    big = np.zeros((d + 20, d + 20), dtype=complex)
    big[:d, :d] = rho.entries
    for m in range(1, 5):
        bm = np.linalg.matrix_power(b, m)
        oracle = np.trace(big @ bm.conj().T @ bm).real
        assert abs(moment_direct(rho, alpha, m) - oracle) < 1e-11 * max(1, oracle)


def test_moment_zero_is_one(rng):
    rho = random_state(rng, 6)
    assert moment_direct(rho, 1.3, 0) == 1.0
    assert moment_via_displacement(rho, 1.3, 0) == 1.0


@settings(max_examples=30, deadline=None)
@given(
    st.integers(min_value=1, max_value=20),
    st.floats(min_value=-1.4, max_value=1.4),
    st.floats(min_value=-1.4, max_value=1.4),
    st.integers(min_value=0, max_value=2**32 - 1),
)
def test_cross_path_agreement(dim, re, im, seed):
    rho = random_state(np.random.default_rng(seed), dim)
    alpha = complex(re, im)
    direct = moments_direct(rho, alpha, 6)
    assert np.all(direct >= -1e-9)
    for m in range(1, 7):
        other = moment_via_displacement(rho, alpha, m)
        assert abs(direct[m] - other) <= 1e-9 * max(1.0, abs(direct[m]))


def test_moment_set_and_scaling():
    rho = build_state(StateSpec("thermal", nbar=0.5))
    ms = moment_set(rho, 0, 4, cache=None)
    assert ms.max_order == 4
    half = ms.scaled(0.5)
    lossy = moment_set(build_state(StateSpec("thermal", nbar=0.5, efficiency=0.5)), 0, 4, cache=None)
    assert np.allclose(half.values, lossy.values, rtol=1e-9)


def test_moment_set_validation():
    with pytest.raises(DomainError):
        MomentSet(0, [0.9, 1.0])
    with pytest.raises(NumericalInconsistency):
        MomentSet(0, [1.0, -0.5])
    est = MomentSet(0, [1.0, -0.5], source="simulated", std_errors=[0.0, 0.3])
    assert est.values[1] == -0.5
    with pytest.raises(DomainError):
        MomentSet(0, [1.0, 0.5], source="simulated", std_errors=[0.1])


def test_cache_hits_and_keys():
    cache = MomentCache()
    rho = build_state(StateSpec("coherent", beta=0.5))
    first = moment_set(rho, 0.1, 3, cache=cache)
    assert len(cache) == 4
    again = moment_set(rho, 0.1, 3, cache=cache)
    assert np.array_equal(first.values, again.values)
    moment_set(rho, 0.1 + 1e-14, 3, cache=cache)
    assert len(cache) == 4
    moment_set(rho, 0.2, 3, cache=cache)
    assert len(cache) == 8
    cache.clear()
    assert len(cache) == 0


# ---- counting statistics ---------------------------------------------------


def test_photocount_coherent_is_poisson():
    beta, alpha, eta = 1.1, 0.3j, 0.6
    rho = build_state(StateSpec("coherent", beta=beta))
    dist = photocount_direct(rho, alpha, eta, n_max=12)
    lam = eta * abs(beta - alpha) ** 2
    assert np.allclose(dist.probs, poisson.pmf(np.arange(13), lam), atol=1e-10)
    assert abs(dist.probs.sum() + dist.tail_mass - 1) < 1e-12


def test_photocount_thermal_is_geometric():
    rho = build_state(StateSpec("thermal", nbar=1.0))
    dist = photocount_direct(rho, 0, 0.5, n_max=10)
    nb = 0.5
    expect = (1 / (1 + nb)) * (nb / (1 + nb)) ** np.arange(11)
    assert np.allclose(dist.probs, expect, atol=1e-10)


def test_photocount_from_moments_examples():
    coh = moment_set(build_state(StateSpec("coherent", beta=0.7)), 0.7, 12, cache=None)
    assert abs(photocount_from_moments(coh, 1.0, 0).value - 1.0) < 1e-12

    f1 = moment_set(build_state(StateSpec("fock", n=1)), 0, 8, cache=None)
    assert abs(photocount_from_moments(f1, 1.0, 1).value - 1.0) < 1e-12
    assert abs(photocount_from_moments(f1, 1.0, 0).value) < 1e-12

    th = moment_set(build_state(StateSpec("thermal", nbar=0.5)), 0, 80, cache=None)
    res = photocount_from_moments(th, 1.0, 0)
    assert abs(res.value - 2 / 3) < 1e-9


def test_series_matches_direct_counts():
    rho = build_state(StateSpec("squeezed_vacuum", xi=0.03))
    ms = moment_set(rho, 0.4, 40, cache=None)
    direct = photocount_direct(rho, 0.4, 0.5).probs
    for n in range(4):
        assert abs(photocount_from_moments(ms, 0.5, n).value - direct[n]) < 1e-8


def test_series_reports_non_convergence():
    ms = moment_set(build_state(StateSpec("thermal", nbar=1.0)), 0, 8, cache=None)
    with pytest.raises(SeriesTruncationError) as info:
        photocount_from_moments(ms, 1.0, 0)
    assert info.value.residual > 1e-10
    with pytest.raises(InsufficientMoments):
        photocount_from_moments(ms, 1.0, 6)
    with pytest.raises(DomainError):
        photocount_from_moments(ms, 1.5, 0)


# ---- quasiprobabilities ----------------------------------------------------


def test_husimi_is_vacuum_projection():
    rho = build_state(StateSpec("coherent", beta=0.5 + 0.5j))
    assert abs(quasiprob_s(rho, 0.5 + 0.5j, -1.0) - 1 / math.pi) < 1e-12
    vac = build_state(StateSpec("vacuum"))
    assert abs(quasiprob_s(vac, 0.8, -1.0) - math.exp(-0.64) / math.pi) < 1e-12


def test_wigner_values():
    vac = build_state(StateSpec("vacuum"))
    for a in (0.0, 0.6j, 1.0):
        expect = 2 / math.pi * math.exp(-2 * abs(a) ** 2)
        assert abs(quasiprob_s(vac, a, 0.0) - expect) < 1e-10
        # loss is undone exactly on a vacuum input
        assert abs(quasiprob_s(vac, a, 0.0, eta=0.5) - expect) < 1e-10
    # Gaussian peak 2 / (pi (2 nbar + 1)) and the alternating geometric series agree
    th = build_state(StateSpec("thermal", nbar=0.5))
    series = 2 / math.pi * sum((-1) ** n * p for n, p in enumerate(th.populations))
    assert abs(series - 1 / math.pi) < 1e-10
    assert abs(quasiprob_s(th, 0, 0.0) - 1 / math.pi) < 1e-10


def test_wigner_of_single_photon_is_negative():
    f1 = build_state(StateSpec("fock", n=1))
    assert abs(quasiprob_s(f1, 0, 0.0) + 2 / math.pi) < 1e-12


def test_divergent_representation():
    th = build_state(StateSpec("thermal", nbar=1.0))
    with pytest.raises(DivergentRepresentation):
        quasiprob_s(th, 0, 0.0, eta=0.5)
    with pytest.raises(DomainError):
        quasiprob_s(th, 0, 1.0)
