import random
from fractions import Fraction

from minvec.cyclotomic import CyclotomicSum


def test_full_orbit_sums_to_zero():
    for p, k in [(3, 1), (3, 2), (5, 1), (2, 3)]:
        order = p ** k
        total = CyclotomicSum(p, {Fraction(a, order): 1 for a in range(order)})
        assert total.is_zero()


def test_primitive_orbit_relation():
    # 1 + zeta_p + ... + zeta_p^(p-1) = 0 inside Z[zeta_{p^2}]
    p = 3
    s = CyclotomicSum(p, {Fraction(a, p): 1 for a in range(p)})
    t = CyclotomicSum.root(p, Fraction(1, 9)) * s
    assert s.is_zero() and t.is_zero()


def test_norm_of_root_is_one():
    z = CyclotomicSum.root(3, Fraction(2, 9))
    assert z.norm_square() == 1


def test_rational_detection():
    z = CyclotomicSum.root(3, Fraction(1, 3))
    w = z + z.conjugate()   # 2 cos(2 pi / 3) = -1
    assert w.rational_value() == -1
    assert CyclotomicSum.rational(3, Fraction(5, 7)).rational_value() == \
        Fraction(5, 7)
    assert z.rational_value() is None


def test_ring_laws_randomized():
    rnd = random.Random(99)
    p = 3
    def rand_sum():
        return CyclotomicSum(p, {Fraction(rnd.randrange(27), 27):
                                 rnd.randint(-3, 3) for _ in range(4)})
    for _ in range(60):
        a, b, c = rand_sum(), rand_sum(), rand_sum()
        assert (a * b) * c == a * (b * c)
        assert a * (b + c) == a * b + a * c
        assert (a * b).conjugate() == a.conjugate() * b.conjugate()


def test_equality_across_denominators():
    # e(1/3) written with denominator 9 reduces to the same class
    a = CyclotomicSum.root(3, Fraction(1, 3))
    b = CyclotomicSum.root(3, Fraction(3, 9))
    assert a == b
