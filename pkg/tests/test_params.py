import gmpy2
import pytest

from secinfer.ckks.params import SECURITY_BUDGET, CkksParams, ntt_primes, preset, validate_params
from secinfer.errors import BudgetExceeded, DegreeUnusable, NonNttPrime, ParamError


def test_budget_table_values():
    assert SECURITY_BUDGET == {1024: 27, 2048: 54, 4096: 109, 8192: 218, 16384: 438, 32768: 881}


@pytest.mark.parametrize("name", ["paper", "test"])
def test_preset_primes_are_ntt_friendly(name):
    p = preset(name)
    two_n = 2 * p.degree_n
    for bits, q in zip(p.modulus_bits, p.primes):
        assert gmpy2.is_prime(q)
        assert q % two_n == 1
        assert 2 ** bits < q < 2 ** (bits + 1)
    assert len(set(p.primes + (p.special_prime,))) == len(p.primes) + 1
    # the scale sits strictly below every prime that gets divided out
    assert all(p.initial_scale < q for q in p.primes[1:])


def test_paper_preset_concrete_primes():
    p = preset("paper")
    assert p.degree_n == 16384 and p.modulus_bits == (60, 40, 40, 40, 30, 30)
    assert p.total_bits == 240 <= SECURITY_BUDGET[16384]
    assert p.primes == (1152921504607338497, 1099511922689, 1099512938497, 1099514314753,
                        1073872897, 1073971201)
    assert p.special_prime == 1152921504608747521


def test_ntt_primes_are_smallest_above_bound():
    (q,) = ntt_primes(30, 4096, 1)
    m = 8192
    below = [c for c in range(2 ** 30 + 1, q, 1) if c % m == 1 and gmpy2.is_prime(c)]
    assert below == []


def test_degree_1024_is_unusable():
    with pytest.raises(DegreeUnusable):
        validate_params(CkksParams(1024, (27,), 2.0 ** 20))


@pytest.mark.parametrize("n", [3000, 512, 65536])
def test_bad_degrees(n):
    with pytest.raises(ParamError):
        validate_params(CkksParams(n, (30,), 2.0 ** 20))


def test_prime_bits_out_of_range():
    with pytest.raises(NonNttPrime):
        validate_params(CkksParams(4096, (62,), 2.0 ** 20))


def test_scale_must_be_below_rescaling_primes():
    with pytest.raises(ParamError):
        validate_params(CkksParams(4096, (40, 30), 2.0 ** 40))


def test_unknown_preset():
    with pytest.raises(ParamError):
        preset("huge")
