import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.linalg import expm

from uhcm.errors import DomainError, TruncationError
from uhcm.fock import (
    DensityMatrix,
    StateSpec,
    annihilation,
    build_state,
    displace,
    displacement_matrix,
    loss_channel,
    squeezed_vacuum_expm,
)

from conftest import random_state


def beam_splitter_loss(rho, eta):
    """Loss by explicit two-mode dilation: mix with vacuum, trace the idler."""
    d = rho.shape[0]
    a = annihilation(d)
    eye = np.eye(d)
    A, B = np.kron(a, eye), np.kron(eye, a)
    theta = math.acos(math.sqrt(eta))
    U = expm(theta * (A.conj().T @ B - A @ B.conj().T))
    vac = np.zeros((d, d))
    vac[0, 0] = 1.0
    big = U @ np.kron(rho, vac) @ U.conj().T
    return np.einsum("ajbj->ab", big.reshape(d, d, d, d))


def laguerre_element(alpha, m, n):
    """<m|D(alpha)|n> from the closed form, in extended precision."""
    alpha = mpmath.mpc(alpha)
    x = abs(alpha) ** 2
    if m >= n:
        pref = mpmath.sqrt(mpmath.factorial(n) / mpmath.factorial(m)) * alpha ** (m - n)
        val = pref * mpmath.exp(-x / 2) * mpmath.laguerre(n, m - n, x)
    else:
        pref = mpmath.sqrt(mpmath.factorial(m) / mpmath.factorial(n)) * (-mpmath.conj(alpha)) ** (n - m)
        val = pref * mpmath.exp(-x / 2) * mpmath.laguerre(m, n - m, x)
    return complex(val)


# ---- oracles ---------------------------------------------------------------


def test_vacuum_and_fock():
    vac = build_state(StateSpec("vacuum"))
    assert vac.entries[0, 0] == 1.0
    assert np.count_nonzero(vac.entries) == 1
    f3 = build_state(StateSpec("fock", n=3))
    assert f3.entries[3, 3] == 1.0
    assert f3.mean_photon_number() == 3.0


def test_thermal_populations():
    rho = build_state(StateSpec("thermal", nbar=0.5))
    n = np.arange(rho.dim)
    expect = (1 / 1.5) * (0.5 / 1.5) ** n
    assert np.allclose(rho.populations, expect / expect.sum(), atol=1e-14)
    assert abs(rho.mean_photon_number() - 0.5) < 1e-9


def test_coherent_amplitudes():
    beta = 0.7 - 0.4j
    rho = build_state(StateSpec("coherent", beta=beta))
    n = np.arange(rho.dim)
    c = np.array([math.exp(-abs(beta) ** 2 / 2) * beta**k / math.sqrt(math.factorial(k)) for k in n])
    assert np.allclose(rho.entries, np.outer(c, c.conj()), atol=1e-10)


def test_spats_vacuum_weight_matches_dilation():
    # exact value 12.5/49 from the geometric sum of loss onto vacuum
    rho = build_state(StateSpec("spats", nbar=0.8, efficiency=0.5))
    assert abs(rho.entries[0, 0].real - 12.5 / 49) < 1e-9

    # on a fixed finite input, the Kraus sum equals the unitary dilation
    d = 30
    x = 0.8 / 1.8
    p = np.array([k * x ** (k - 1) * (1 - x) ** 2 for k in range(d)])
    raw = np.diag(p / p.sum()).astype(complex)
    oracle = beam_splitter_loss(raw, 0.5)
    ours = loss_channel(DensityMatrix(raw), 0.5).entries
    assert np.max(np.abs(ours - oracle)) < 1e-12


def test_loss_matches_dilation_for_coherences(rng):
    rho = random_state(rng, 8)
    oracle = beam_splitter_loss(np.asarray(rho.entries), 0.3)
    assert np.max(np.abs(loss_channel(rho, 0.3).entries - oracle)) < 1e-12


def test_thermal_under_loss_stays_thermal():
    lossy = build_state(StateSpec("thermal", nbar=1.0, efficiency=0.4))
    direct = build_state(StateSpec("thermal", nbar=0.4))
    d = min(lossy.dim, direct.dim)
    assert np.max(np.abs(lossy.entries[:d, :d] - direct.entries[:d, :d])) < 1e-10


def test_coherent_under_loss_shrinks_amplitude():
    # coherences carry the square root of the truncated tail, so cut deep
    lossy = build_state(StateSpec("coherent", beta=1.2, efficiency=0.25, tail_tol=1e-15))
    direct = build_state(StateSpec("coherent", beta=0.6))
    d = min(lossy.dim, direct.dim)
    assert np.max(np.abs(lossy.entries[:d, :d] - direct.entries[:d, :d])) < 1e-10


def test_squeezed_vacuum_two_routes():
    for xi in (0.03, 0.5, 0.8 * np.exp(0.7j)):
        rho = build_state(StateSpec("squeezed_vacuum", xi=xi))
        ref = squeezed_vacuum_expm(xi, rho.dim)
        assert np.max(np.abs(rho.entries - ref)) < 1e-10
        # the truncated tail weighs in with its photon number
        assert abs(rho.mean_photon_number() - math.sinh(abs(xi)) ** 2) < 1e-8
        odd = rho.populations[1::2]
        assert np.all(odd == 0.0)


def test_displacement_elements_match_closed_form():
    for alpha in (0.3, 1.7 - 0.6j, -2.5j):
        D = displacement_matrix(alpha, 24)
        for m, n in [(0, 0), (3, 1), (1, 3), (10, 4), (4, 10), (23, 23), (20, 0), (0, 20)]:
            assert abs(D[m, n] - laguerre_element(alpha, m, n)) < 1e-12


def test_displacement_large_dimension_closed_form():
    D = displacement_matrix(4.0 + 3.0j, 200)
    for m, n in [(0, 0), (25, 25), (40, 10), (10, 40), (199, 150), (150, 199)]:
        ref = laguerre_element(4.0 + 3.0j, m, n)
        assert abs(D[m, n] - ref) < 1e-10


def test_displacement_matches_expm_in_big_space():
    alpha = 0.8 + 0.5j
    work = 120
    a = annihilation(work)
    ref = expm(alpha * a.conj().T - np.conj(alpha) * a)[:30, :30]
    assert np.max(np.abs(displacement_matrix(alpha, 30) - ref)) < 1e-12


def test_displace_vacuum_gives_coherent():
    out = displace(build_state(StateSpec("vacuum")), 1.1 + 0.2j)
    coh = build_state(StateSpec("coherent", beta=-(1.1 + 0.2j)))
    d = min(out.dim, coh.dim)
    assert np.max(np.abs(out.entries[:d, :d] - coh.entries[:d, :d])) < 1e-9


def test_displace_round_trip(rng):
    rho = random_state(rng, 10)
    back = displace(displace(rho, 1.3 - 0.7j), -(1.3 - 0.7j))
    assert np.max(np.abs(back.entries[:10, :10] - rho.entries)) < 1e-8


@settings(max_examples=25, deadline=None)
@given(
    st.integers(min_value=1, max_value=12),
    st.floats(min_value=-2, max_value=2),
    st.floats(min_value=-2, max_value=2),
    st.integers(min_value=0, max_value=2**32 - 1),
)
def test_displace_preserves_state_properties(dim, re, im, seed):
    rho = random_state(np.random.default_rng(seed), dim)
    out = displace(rho, complex(re, im))
    assert abs(np.trace(out.entries).real - 1) < 1e-10
    assert np.linalg.eigvalsh(out.entries)[0] > -1e-8
    assert out.dim >= dim


def test_loss_composes():
    rho = build_state(StateSpec("squeezed_vacuum", xi=0.6))
    two_step = loss_channel(loss_channel(rho, 0.7), 0.5)
    one_step = loss_channel(rho, 0.35)
    assert np.max(np.abs(two_step.entries - one_step.entries)) < 1e-12


def test_loss_extremes():
    rho = build_state(StateSpec("fock", n=2))
    assert loss_channel(rho, 1.0) is rho
    vac = loss_channel(rho, 0.0)
    assert vac.entries[0, 0] == 1.0


# ---- validation ------------------------------------------------------------


def test_density_matrix_rejects_bad_input():
    with pytest.raises(DomainError):
        DensityMatrix(np.array([[0.5, 0.1], [0.2, 0.5]]))
    with pytest.raises(DomainError):
        DensityMatrix(np.diag([0.5, 0.4]))
    with pytest.raises(DomainError):
        DensityMatrix(np.diag([1.5, -0.5]))
    with pytest.raises(DomainError):
        DensityMatrix(np.ones((2, 3)) / 2)


def test_density_matrix_is_frozen():
    rho = build_state(StateSpec("thermal", nbar=0.2))
    with pytest.raises(ValueError):
        rho.entries[0, 0] = 0.5


def test_tail_tolerance_enforced():
    with pytest.raises(TruncationError):
        build_state(StateSpec("thermal", nbar=1.0, cutoff=5))
    with pytest.raises(TruncationError):
        build_state(StateSpec("thermal", nbar=50.0, max_dim=64))
    rho = build_state(StateSpec("thermal", nbar=1.0, cutoff=5, tail_tol=0.1))
    assert rho.dim == 6


def test_displacement_cap():
    with pytest.raises(TruncationError):
        displace(build_state(StateSpec("vacuum")), 30.0, max_dim=64)


@pytest.mark.parametrize(
    "kw",
    [
        dict(kind="nonsense"),
        dict(kind="thermal", nbar=-1.0),
        dict(kind="fock", n=-2),
        dict(kind="coherent", beta=complex("nan")),
        dict(kind="vacuum", efficiency=1.5),
        dict(kind="custom"),
    ],
)
def test_state_spec_domain_errors(kw):
    with pytest.raises(DomainError):
        StateSpec(**kw)


def test_custom_state_and_loss():
    m = np.diag([0.0, 1.0]).astype(complex)
    rho = build_state(StateSpec("custom", matrix=m, efficiency=0.5))
    assert np.allclose(rho.populations, [0.5, 0.5])
