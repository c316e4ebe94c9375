import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.linalg import solve_banded

from slipstab.tridiag import TridiagonalFactor, thomas, tridiag_matvec


def random_system(rng, n, batch=None, complex_=False):
    shape = (batch,) if batch else ()
    lo = rng.normal(size=shape + (n - 1,))
    up = rng.normal(size=shape + (n - 1,))
    d = 4.0 + rng.random(size=shape + (n,))
    if complex_:
        lo = lo + 1j * rng.normal(size=lo.shape)
    b = rng.normal(size=shape + (n,))
    return lo, d, up, b


@settings(max_examples=50, deadline=None)
@given(st.integers(3, 60), st.integers(0, 2 ** 31 - 1))
def test_thomas_matches_banded(n, seed):
    lo, d, up, b = random_system(np.random.default_rng(seed), n)
    ab = np.zeros((3, n))
    ab[0, 1:] = up
    ab[1] = d
    ab[2, :-1] = lo
    assert np.allclose(thomas(lo, d, up, b), solve_banded((1, 1), ab, b), atol=1e-12)


@settings(max_examples=30, deadline=None)
@given(st.integers(3, 40), st.integers(1, 5), st.booleans(), st.integers(0, 2 ** 31 - 1))
def test_factor_inverts_matvec(n, batch, cplx, seed):
    lo, d, up, b = random_system(np.random.default_rng(seed), n, batch, cplx)
    fac = TridiagonalFactor(lo, d, up)
    x = fac.solve(b)
    assert np.allclose(tridiag_matvec(lo, d, up, x), b, atol=1e-11)


def test_real_factor_complex_rhs():
    rng = np.random.default_rng(0)
    lo, d, up, b = random_system(rng, 20)
    fac = TridiagonalFactor(lo, d, up)
    z = b + 1j * rng.normal(size=20)
    x = fac.solve(z)
    assert np.allclose(tridiag_matvec(lo, d, up, x), z)


def test_singular_matrix():
    with pytest.raises(np.linalg.LinAlgError):
        TridiagonalFactor(np.zeros(2), np.zeros(3), np.zeros(2))
