import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from secinfer.ckks.ntt import basis, intt, negacyclic_schoolbook, ntt
from secinfer.ckks.params import preset
from secinfer.ckks.ring import RnsPoly

N_SMALL = 64
Q_SMALL = preset("test").primes[:2]


@st.composite
def residues(draw, n=N_SMALL, moduli=Q_SMALL):
    seed = draw(st.integers(0, 2 ** 32 - 1))
    rng = np.random.default_rng(seed)
    return np.stack([rng.integers(0, q, size=n, dtype=np.uint64) for q in moduli])


@given(residues())
def test_ntt_roundtrip_exact(a):
    b = basis(Q_SMALL, N_SMALL)
    assert np.array_equal(intt(ntt(a, b), b), a)


@given(residues(), residues())
def test_ntt_product_is_negacyclic_convolution(a, c):
    b = basis(Q_SMALL, N_SMALL)
    prod = RnsPoly(a, Q_SMALL, False).to_ntt() * RnsPoly(c, Q_SMALL, False).to_ntt()
    got = prod.to_coeff().limbs
    for i, q in enumerate(Q_SMALL):
        assert np.array_equal(got[i], negacyclic_schoolbook(a[i], c[i], q))
    assert b.qs.size == len(Q_SMALL)


def test_x_to_the_n_is_minus_one():
    q = Q_SMALL[:1]
    x = np.zeros((1, N_SMALL), np.uint64)
    x[0, 1] = 1
    xn = RnsPoly(x, q, False).to_ntt()
    acc = xn
    for _ in range(N_SMALL - 1):
        acc = acc * xn
    assert np.array_equal(acc.to_coeff().limbs[0], np.array([q[0] - 1] + [0] * (N_SMALL - 1), np.uint64))


@pytest.mark.parametrize("name", ["test", "paper"])
def test_full_size_roundtrip(name):
    p = preset(name)
    rng = np.random.default_rng(3)
    a = np.stack([rng.integers(0, q, size=p.degree_n, dtype=np.uint64) for q in p.primes])
    b = basis(p.primes, p.degree_n)
    assert np.array_equal(intt(ntt(a, b), b), a)


def test_full_size_product_spot_check():
    p = preset("test")
    q = p.primes[:1]
    rng = np.random.default_rng(4)
    a = rng.integers(0, q[0], size=(1, p.degree_n), dtype=np.uint64)
    c = np.zeros((1, p.degree_n), np.uint64)
    c[0, 5] = 3  # multiplication by 3 X^5 is a signed shift
    got = (RnsPoly(a, q, False).to_ntt() * RnsPoly(c, q, False).to_ntt()).to_coeff().limbs[0]
    want = np.array([int(v) for v in negacyclic_schoolbook(c[0], a[0], q[0])], dtype=np.uint64)
    assert np.array_equal(got, want)
