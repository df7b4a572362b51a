import random
from fractions import Fraction

import pytest

from minvec.errors import PrecisionLoss
from minvec.padic import (MatrixApprox, PrecisionCtx, ScaledResidue,
                          mat_inv, normalize, psi_exponent, trace_det)


def mat(ctx, entries, scale=0):
    return MatrixApprox.from_exact(ctx, entries, scale)


class TestNormalize:
    def test_identity_fixed(self):
        ctx = PrecisionCtx(3, 4)
        m = normalize([[1, 0], [0, 1]], 0, ctx)
        assert m.scale == 0
        assert m.residues(4) == ((1, 0), (0, 1))

    def test_common_factor_extraction(self):
        ctx = PrecisionCtx(3, 4)
        m = normalize([[3, 0], [0, 3]], 0, ctx)
        assert m.scale == 1
        assert m.residues(3) == ((1, 0), (0, 1))

    def test_unit_entry_blocks_extraction(self):
        ctx = PrecisionCtx(3, 4)
        m = normalize([[0, 1], [3, 0]], -1, ctx)
        assert m.scale == -1
        assert m.residues(4) == ((0, 1), (3, 0))

    def test_zero_matrix_is_flagged(self):
        ctx = PrecisionCtx(3, 4)
        m = normalize([[0, 0], [0, 0]], 0, ctx)
        assert m.zero

    def test_truncated_vanishing_raises(self):
        ctx = PrecisionCtx(3, 3)
        m = mat(ctx, [[27, 0], [0, 27]]).reduce_to(3)
        with pytest.raises(PrecisionLoss):
            m.normalize()


class TestInverse:
    def test_identity(self):
        ctx = PrecisionCtx(3, 4)
        ident = MatrixApprox.identity(ctx, 2)
        assert mat_inv(ident) == ident

    def test_diagonal_with_p(self):
        # diag(1, p) at p=2, N=5 inverts to diag(1, p^{-1})
        ctx = PrecisionCtx(2, 5)
        m = mat(ctx, [[1, 0], [0, 2]])
        inv = mat_inv(m)
        prod = (m * inv).normalize()
        assert prod.approx_equal(MatrixApprox.identity(ctx, 2), level=4)
        assert inv.normalize().scale == -1

    def test_antidiagonal_prime(self):
        # [[0,1],[p,0]] inverts to [[0,p^{-1}],[1,0]]
        ctx = PrecisionCtx(3, 5)
        m = mat(ctx, [[0, 1], [3, 0]])
        inv = mat_inv(m).normalize()
        assert inv.scale == -1
        assert inv.residues(3)[0][1] % 3 == 1
        prod = (m * inv).normalize()
        assert prod.approx_equal(MatrixApprox.identity(ctx, 2), level=4)

    def test_involution_randomized(self):
        rnd = random.Random(20240)
        for _ in range(1000):
            p = rnd.choice([2, 3, 5])
            n = rnd.randint(1, 4)
            ctx = PrecisionCtx(p, 5)
            while True:
                rows = [[rnd.randrange(p ** 3) for _ in range(n)]
                        for _ in range(n)]
                m = mat(ctx, rows)
                tr, det = m.trace_det()
                if not det.zero and det.val == 0:
                    break
            inv = m.inverse()
            back = inv.inverse()
            assert back.approx_equal(m, level=inv.prec - inv.scale - m.scale)


class TestTraceDet:
    def test_identity_n3(self):
        ctx = PrecisionCtx(5, 4)
        tr, det = trace_det(MatrixApprox.identity(ctx, 3))
        assert tr.as_rational() == 3 and det.as_rational() == 1

    def test_antidiagonal(self):
        ctx = PrecisionCtx(3, 4)
        tr, det = trace_det(mat(ctx, [[0, 1], [3, 0]]))
        assert tr.zero
        assert det.as_rational() == -3

    def test_scaled_antidiagonal(self):
        # beta = p^{-1} [[0,1],[p,0]]: trace 0, det -p^{-1}
        ctx = PrecisionCtx(3, 4)
        tr, det = trace_det(mat(ctx, [[0, 1], [3, 0]], scale=-1))
        assert tr.zero
        assert det.as_rational() == Fraction(-1, 3)


class TestRingLaws:
    def test_randomized_ring_laws(self):
        rnd = random.Random(7)
        ctx = PrecisionCtx(3, 4)
        for _ in range(200):
            ms = [mat(ctx, [[rnd.randrange(-40, 40) for _ in range(2)]
                            for _ in range(2)]) for _ in range(3)]
            a, b, c = ms
            assert ((a * b) * c).canonical_key() == (a * (b * c)).canonical_key()
            assert (a * (b + c)).canonical_key() == (a * b + a * c).canonical_key()
            assert (a + b).canonical_key() == (b + a).canonical_key()

    def test_valuation_multiplicative(self):
        rnd = random.Random(11)
        for _ in range(300):
            p = rnd.choice([2, 3, 5])
            ctx = PrecisionCtx(p, 6)
            x = ScaledResidue.from_rational(
                ctx, Fraction(rnd.randint(1, 400), rnd.randint(1, 400)))
            y = ScaledResidue.from_rational(
                ctx, Fraction(rnd.randint(1, 400), rnd.randint(1, 400)))
            assert (x * y).val == x.val + y.val


class TestScalars:
    def test_exact_zero_flag(self):
        ctx = PrecisionCtx(3, 4)
        z = ScaledResidue.from_rational(ctx, 0)
        assert z.zero
        assert z + z == z

    def test_cancellation_beyond_precision(self):
        ctx = PrecisionCtx(3, 3)
        x = ScaledResidue(ctx, 0, 1, 3)
        y = ScaledResidue(ctx, 0, 26, 3)  # -1 mod 27, truncated
        with pytest.raises(PrecisionLoss):
            _ = x + y

    def test_mixed_context_rejected(self):
        a = ScaledResidue.from_rational(PrecisionCtx(3, 4), 2)
        b = ScaledResidue.from_rational(PrecisionCtx(3, 5), 2)
        with pytest.raises(ValueError):
            _ = a * b


class TestPsi:
    def test_level_one(self):
        ctx = PrecisionCtx(3, 4)
        # trivial on p O, nontrivial on O
        assert psi_exponent(ScaledResidue.from_rational(ctx, 3)) == 0
        assert psi_exponent(ScaledResidue.from_rational(ctx, 1)) == Fraction(1, 3)
        assert psi_exponent(ScaledResidue.from_rational(ctx, Fraction(1, 3))) \
            == Fraction(1, 9)

    def test_exact_zero(self):
        ctx = PrecisionCtx(3, 4)
        assert psi_exponent(ScaledResidue.zero_of(ctx)) == 0
