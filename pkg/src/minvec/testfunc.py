"""The local test function, its exact volume, convolution, and concentration.

omega is Theta on K_pi and zero elsewhere, with Haar measure normalized so
the standard maximal compact K = GL_n(O) has volume 1.  All volumes are
exact rationals computed from element counts mod p^N; the convolution
identity omega * omega^* = d_pi omega is checked with cyclotomic-exact
arithmetic and zero tolerance.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .cyclotomic import CyclotomicSum
from .errors import ConstructionFailure
from .groups import KpiResult, _inverses, gl_order
from .padic import vp
from .residues import pack


def compare_with_p_power(x: Fraction, p: int, q: Fraction) -> int:
    """Sign of x - p^q for positive rational x and rational q, exactly."""
    den = q.denominator
    num = q.numerator
    left = Fraction(x.numerator ** den, x.denominator ** den)
    right = Fraction(p ** num) if num >= 0 else Fraction(1, p ** (-num))
    if left == right:
        return 0
    return 1 if left > right else -1


@dataclass
class TestFunction:
    """omega: Theta on the support subgroup, zero elsewhere."""

    kpi_result: KpiResult

    @property
    def support(self):
        return self.kpi_result.kpi

    @property
    def n(self):
        return self.kpi_result.n

    @property
    def level(self):
        return self.kpi_result.level

    @property
    def p(self):
        return self.kpi_result.kpi.p

    def exponent(self, residues):
        """Exponent of omega at a residue matrix, or None where omega = 0."""
        mat = np.asarray(residues, dtype=np.int64) % self.support.modulus
        if not self.support.contains_residues(mat):
            return None
        return self.kpi_result.theta.exponent_of_residues(mat)

    def star_exponent(self, residues):
        """Exponent of omega^*(g) = conj(omega(g^{-1})), or None."""
        from .residues import mat_inv_mod
        inv = mat_inv_mod([list(r) for r in np.asarray(residues)],
                          self.p, self.level)
        t = self.exponent(np.array(inv))
        if t is None:
            return None
        t = -t
        return t - math.floor(t)


def make_omega(kpi_result: KpiResult) -> TestFunction:
    return TestFunction(kpi_result)


@dataclass
class VolumeReport:
    d_pi: Fraction
    support_count: int
    k_count: int
    c: Fraction
    target_exponent: Fraction      # c (n^2 - n) / 2
    valuation_of_inverse: int      # v_p(1/d_pi)
    bound_margin: int              # allowed |log_p(1/d_pi) - target|
    bounded: bool


def volume(kpi_result: KpiResult) -> VolumeReport:
    """d_pi = Vol(K_pi) = |K_pi mod p^N| / |K mod p^N| as an exact rational,
    with the exact-power comparison against p^{-c(n^2-n)/2}."""
    kpi = kpi_result.kpi
    n = kpi_result.n
    p = kpi.p
    k_count = gl_order(n, p, kpi.level)
    d_pi = Fraction(kpi.size, k_count)
    c = Fraction(kpi_result.c)
    target = c * (n * n - n) / 2
    inv = 1 / d_pi
    margin = n * n
    lo = compare_with_p_power(inv, p, target - margin)
    hi = compare_with_p_power(inv, p, target + margin)
    bounded = lo >= 0 and hi <= 0
    val = vp(inv.numerator, p) - vp(inv.denominator, p)
    return VolumeReport(d_pi, kpi.size, k_count, c, target, val, margin, bounded)


@dataclass
class ConvolutionReport:
    d_pi: Fraction
    mode: str
    support_points_checked: int
    support_ok: bool
    closure_certified: bool
    offsupport_points_checked: int
    offsupport_ok: bool
    scalar_action: Fraction        # sum_x |Theta(x)|^2 / |K|
    scalar_action_ok: bool
    witness: object


def convolve_check(tf: TestFunction, samples: int = 2000,
                   seed: int = 0) -> ConvolutionReport:
    """Verify omega * omega^* = d_pi omega exactly.

    Enumerated supports are checked on every pair (the product scan doubles
    as the subgroup-closure certificate, which settles all points outside
    the support at once); membership-only supports are checked on seeded
    samples, term by term.
    """
    kpi = tf.kpi_result.kpi
    if kpi.mats is not None:
        return _convolve_full(tf, samples, seed)
    return _convolve_sampled(tf, samples, seed)


def _convolve_full(tf, samples, seed):
    from .groups import GroupCharacter
    kpi = tf.kpi_result.kpi
    theta = tf.kpi_result.theta
    if not isinstance(theta, GroupCharacter):
        raise ConstructionFailure("enumerated support expects a character table")
    p, L, n = kpi.p, kpi.level, kpi.n
    mod = p ** L
    M = kpi.size
    k_count = gl_order(n, p, L)
    d_pi = Fraction(M, k_count)
    nums = theta.nums
    denom = theta.denom
    inv_mats = _inverses(kpi.mats, p, L)
    ok = True
    witness = None
    chunk = max(1, min(512, 2 ** 22 // max(M, 1)))
    for lo in range(0, M, chunk):
        ginv = inv_mats[lo:lo + chunk]
        prods = np.einsum("gij,mjk->gmik", ginv, kpi.mats) % mod
        codes = pack(prods.reshape(-1, n, n), p, L)
        idx = kpi.index_of_codes(codes).reshape(prods.shape[0], M)
        if np.any(idx < 0):
            raise ConstructionFailure("support is not closed under g^{-1} x")
        # term exponents Theta(x) - Theta(g^{-1} x) must all equal Theta(g)
        diffs = (nums[None, :] - nums[idx]) % denom
        want = nums[lo:lo + prods.shape[0], None] % denom
        if not np.all(diffs == want):
            g_bad, x_bad = np.argwhere(diffs != want)[0]
            ok = False
            witness = kpi.mats[lo + int(g_bad)]
            # honest cyclotomic comparison for the witness
            counter = {}
            for t in diffs[int(g_bad)]:
                tt = Fraction(int(t), denom)
                counter[tt] = counter.get(tt, 0) + 1
            lhs = CyclotomicSum(p, counter)
            rhs = CyclotomicSum(
                p, {Fraction(int(nums[lo + int(g_bad)]), denom): M})
            if lhs == rhs:
                ok = True  # sums agree although termwise exponents differ
                witness = None
            if not ok:
                break
    rng = np.random.default_rng(seed)
    off_checked = 0
    off_ok = True
    tried = 0
    from .padic import _int_det
    while off_checked < min(samples, 64) and tried < 50 * samples:
        tried += 1
        cand = rng.integers(0, mod, size=(n, n))
        det = _int_det([[int(v) for v in row] for row in cand])
        if det % p == 0:
            continue
        if kpi.contains_residues(cand):
            continue
        prods = np.einsum("ij,mjk->mik",
                          np.array(_inverses(cand[None], p, L)[0]),
                          kpi.mats) % mod
        codes = pack(prods, p, L)
        if np.any(kpi.index_of_codes(codes) >= 0):
            off_ok = False
            witness = cand
        off_checked += 1
    scalar = Fraction(M, k_count)
    return ConvolutionReport(d_pi, "full", M, ok, True, off_checked, off_ok,
                             scalar, scalar == d_pi, witness)


def _convolve_sampled(tf, samples, seed):
    kpi_result = tf.kpi_result
    kpi = kpi_result.kpi
    p, L, n = kpi.p, kpi_result.level, kpi_result.n
    mod = p ** L
    k_count = gl_order(n, p, L)
    d_pi = Fraction(kpi.size, k_count)
    rng = np.random.default_rng(seed)
    sampler = kpi_result.sampler
    from .residues import mat_inv_mod
    ok = True
    witness = None
    checked = 0
    for _ in range(samples):
        g = sampler(rng)
        x = sampler(rng)
        ginv = np.array(mat_inv_mod([list(r) for r in g], p, L), dtype=np.int64)
        gx = ginv @ x % mod
        if not kpi.contains_residues(gx):
            ok = False
            witness = g
            break
        tg = kpi_result.theta.exponent_of_residues(g)
        tx = kpi_result.theta.exponent_of_residues(x)
        tgx = kpi_result.theta.exponent_of_residues(gx)
        diff = tx - tgx
        diff -= math.floor(diff)
        if diff != tg:
            ok = False
            witness = g
            break
        checked += 1
    off_ok = True
    off_checked = 0
    for _ in range(samples):
        g = sampler(rng)
        # push g off the support by breaking an off-diagonal congruence
        off_blocks = [(i, k) for i in range(len(kpi_result.blocks))
                      for k in range(len(kpi_result.blocks)) if i != k]
        bi, bk = off_blocks[int(rng.integers(0, len(off_blocks)))]
        oi = sum(b.datum.order.n for b in kpi_result.blocks[:bi])
        ok2 = sum(b.datum.order.n for b in kpi_result.blocks[:bk])
        g = g.copy()
        g[oi, ok2] = 1  # unit entry violates the p-divisibility
        if kpi.contains_residues(g):
            continue
        x = sampler(rng)
        ginv = np.array(mat_inv_mod([list(r) for r in g], p, L), dtype=np.int64)
        if kpi.contains_residues(ginv @ x % mod):
            off_ok = False
            witness = g
            break
        off_checked += 1
    closure = kpi_result.checks.closure_sampled if kpi_result.checks else False
    return ConvolutionReport(d_pi, "sampled", checked, ok, closure,
                             off_checked, off_ok, d_pi, True, witness)


@dataclass
class ConcentrationReport:
    cfrak: int
    trivial: bool
    points_checked: int
    all_found: bool
    worst_candidates_scanned: int
    witness: object


def concentration_check(tf: TestFunction, samples: int = 500,
                        seed: int = 0) -> ConcentrationReport:
    """For every x in the support find l in U_L(1) with x l^{-1} = 1 mod p^cf.

    Exhaustive over enumerated supports; seeded samples otherwise.  cf = 0
    makes the congruence vacuous (modulus 1), which is reported as trivial
    but still witnessed by l = 1.
    """
    kpi_result = tf.kpi_result
    kpi = kpi_result.kpi
    cf = kpi_result.cfrak
    p, L = kpi.p, kpi_result.level
    if cf == 0:
        count = kpi.size if kpi.mats is not None else samples
        return ConcentrationReport(0, True, count, True, 0, None)
    if kpi.mats is None:
        from .groups import _torus_approximation
        rng = np.random.default_rng(seed)
        offsets = []
        off = 0
        for b in kpi_result.blocks:
            offsets.append(off)
            off += b.datum.order.n
        bad = None
        for _ in range(samples):
            x = kpi_result.sampler(rng)
            if not _torus_approximation(x, kpi_result.blocks, offsets, cf, L):
                bad = x
                break
        return ConcentrationReport(cf, False, samples, bad is None, -1, bad)
    # enumerated: single supercuspidal block
    blk = kpi_result.blocks[0]
    ul1 = blk.bundle.ul1
    mod = p ** L
    cmod = p ** cf
    n = kpi.n
    linvs = _inverses(ul1.mats, p, L)
    remaining = np.ones(kpi.size, dtype=bool)
    worst = 0
    ident = np.eye(n, dtype=np.int64)
    for count, li in enumerate(linvs, start=1):
        if not remaining.any():
            break
        test = np.einsum("mij,jk->mik", kpi.mats[remaining], li) % cmod
        hit = np.all(test == ident % cmod, axis=(1, 2))
        idxs = np.nonzero(remaining)[0]
        remaining[idxs[hit]] = False
        if hit.any():
            worst = count
    all_found = not remaining.any()
    witness = kpi.mats[np.nonzero(remaining)[0][0]] if not all_found else None
    if not all_found:
        raise ConstructionFailure(
            "support element admits no torus approximation; "
            f"witness {witness.tolist()}")
    return ConcentrationReport(cf, False, kpi.size, True, worst, None)


@dataclass
class DepthReport:
    depth: int
    c: object                      # Fraction or int
    cfrak: int
    conductor_exponent: Fraction   # n * c
    d_pi: Fraction
    cfrak_band_ok: bool            # |cfrak - c/2| <= 1
    volume_bounded: bool


def depth_report(kpi_result: KpiResult, vol: VolumeReport | None = None) -> DepthReport:
    if vol is None:
        vol = volume(kpi_result)
    n = kpi_result.n
    c = Fraction(kpi_result.c)
    depth = max(b.datum.j for b in kpi_result.blocks)
    cf = kpi_result.cfrak
    band = abs(Fraction(cf) - c / 2) <= 1
    return DepthReport(depth, kpi_result.c, cf, n * c, vol.d_pi, band,
                       vol.bounded)
