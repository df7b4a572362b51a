"""Finite quotients of the compact groups attached to an induction datum.

Subgroups are realized as explicit element sets inside GL_n(Z/p^L), where
the level L is chosen so that 1 + p^L M_n(O) is contained in every subgroup
of interest; images mod p^L are then faithful and all character identities
can be checked exhaustively on the quotient.  For a datum of depth j over
a period-e order the right level is ceil(j/e) + 1: the congruence subgroup
of that level sits inside U_A(j+1), on which every simple character dies.

Characters are stored as exponent tables (values e^{2 pi i t} with t a
p-power-denominator rational), so every verification below is an integer
congruence and "equal" always means exactly equal.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .errors import BudgetExceeded, ConstructionFailure, DatumInvalid, PrecisionLoss
from .orders import HereditaryOrder, InductionDatum, v_A
from .padic import MatrixApprox
from .residues import (batch_inv_2x2, box_enumerate, contains_codes, cross_mul,
                       mat_inv_mod, pack, product_set, sorted_index, unpack)


def gl_order(n: int, p: int, L: int) -> int:
    """|GL_n(Z/p^L)| exactly."""
    count = 1
    for i in range(n):
        count *= p ** n - p ** i
    return count * p ** (n * n * (L - 1))


# ---------------------------------------------------------------------------
# subgroups
# ---------------------------------------------------------------------------

class FiniteSubgroup:
    """An explicit subgroup of GL_n(Z/p^L).

    Either fully enumerated (sorted code array plus matrices) or given by a
    membership predicate with a size formula, for groups too large to list.
    """

    def __init__(self, name, p, level, n, mats=None, membership=None,
                 size=None, generators=None):
        self.name = name
        self.p = p
        self.level = level
        self.n = n
        self.membership = membership
        self.generators = generators
        if mats is not None:
            mats = np.asarray(mats, dtype=np.int64) % p ** level
            codes = pack(mats, p, level)
            order = np.argsort(codes)
            self.codes = codes[order]
            self.mats = mats[order]
            if len(np.unique(self.codes)) != len(self.codes):
                raise ConstructionFailure(f"{name}: duplicate elements")
            self.size = len(self.codes)
            # dense code -> index table when the code space is small
            space = (p ** level) ** (n * n)
            self._lut = None
            if space <= 1 << 26:
                self._lut = np.full(space, -1, dtype=np.int32)
                self._lut[self.codes] = np.arange(self.size, dtype=np.int32)
        else:
            self.codes = None
            self.mats = None
            if size is None:
                raise ValueError("membership-only subgroups need a size formula")
            self.size = size

    def __len__(self):
        return self.size

    @property
    def modulus(self):
        return self.p ** self.level

    def contains_residues(self, mat) -> bool:
        mat = np.asarray(mat, dtype=np.int64) % self.modulus
        if self.codes is not None:
            code = pack(mat[None, :, :], self.p, self.level)[0]
            i = np.searchsorted(self.codes, code)
            return i < len(self.codes) and self.codes[i] == code
        return bool(self.membership(mat))

    def contains(self, m: MatrixApprox) -> bool:
        res = residues_of(m, self.level)
        if res is None:
            return False
        return self.contains_residues(res)

    def index_of_codes(self, codes):
        if getattr(self, "_lut", None) is not None:
            return self._lut[codes]
        return sorted_index(self.codes, codes)

    def identity_index(self) -> int:
        ident = np.eye(self.n, dtype=np.int64)
        return int(self.index_of_codes(pack(ident[None], self.p, self.level))[0])

    def closure_check(self, rng=None, samples=512) -> bool:
        """Product/inverse closure: full when small, seeded sample otherwise."""
        if self.codes is None:
            raise ValueError("cannot closure-check a membership-only subgroup")
        m = self.modulus
        if self.size <= 3000:
            for lo in range(0, self.size, 256):
                prods = cross_mul(self.mats[lo:lo + 256], self.mats, m)
                codes = pack(prods.reshape(-1, self.n, self.n), self.p, self.level)
                if not np.all(contains_codes(self.codes, codes)):
                    return False
        else:
            idx = rng.integers(0, self.size, size=(samples, 2)) if rng is not None \
                else np.stack([np.arange(samples) % self.size,
                               (np.arange(samples) * 7 + 3) % self.size], axis=1)
            prods = (self.mats[idx[:, 0]] @ self.mats[idx[:, 1]]) % m
            codes = pack(prods, self.p, self.level)
            if not np.all(contains_codes(self.codes, codes)):
                return False
        for mat in _inverses(self.mats[:min(self.size, 1024)], self.p, self.level):
            if not self.contains_residues(mat):
                return False
        return True

    def dump_lines(self):
        """Canonical line format: row-major residues, sorted."""
        out = [f"# subgroup {self.name} p={self.p} N={self.level} n={self.n} "
               f"size={self.size}"]
        flat = self.mats.reshape(self.size, self.n * self.n)
        for row in flat:
            out.append(" ".join(str(int(v)) for v in row))
        return out


def residues_of(m: MatrixApprox, level: int):
    """Residues mod p^level of an integral matrix value, else None."""
    p = m.ctx.p
    if m.zero:
        return np.zeros((m.n, m.n), dtype=np.int64)
    mn = m.normalize()
    if mn.scale < 0:
        return None
    if not mn.exact and mn.prec + mn.scale < level:
        raise PrecisionLoss(f"need {level} digits, have {mn.prec + mn.scale}")
    mod = p ** level
    return np.array([[v * p ** mn.scale % mod for v in row]
                     for row in mn.entries], dtype=np.int64)


def _inverses(mats, p, L):
    n = mats.shape[1]
    if n == 2:
        return batch_inv_2x2(mats, p, L)
    return np.array([mat_inv_mod([list(r) for r in mat], p, L)
                     for mat in mats], dtype=np.int64)


def enumerate_radical_unipotents(o: HereditaryOrder, i: int, p: int, L: int,
                                 budget: int = 2_000_000) -> np.ndarray:
    """Elements of U_A(i) = 1 + B^i as residue matrices mod p^L, i >= 1."""
    if i < 1:
        raise ValueError("only positive filtration steps are unipotent boxes")
    n = o.n
    offsets, steps, counts = [], [], []
    total = 1
    for r in range(n):
        for c in range(n):
            t = max(0, o.entry_threshold(i, r, c))
            base = 1 if r == c else 0
            cnt = p ** max(0, L - t)
            offsets.append(base)
            steps.append(p ** min(t, L))
            counts.append(cnt)
            total *= cnt
    if total > budget:
        raise BudgetExceeded(f"U_A({i}) has {total} elements mod p^{L}",
                             estimate=total)
    flat = box_enumerate(offsets, steps, counts, p ** L)
    return flat.reshape(-1, n, n)


def enumerate_field_order(d: InductionDatum, L: int):
    """O_L mod p^L as the span of powers of the integral generator.

    Returns (mats, is_unit_mask, in_UL1_mask).
    """
    p, n, o = d.p, d.order.n, d.order
    mod = p ** L
    powers = []
    cur = np.eye(n, dtype=np.int64)
    bt = np.array(d.beta_integral, dtype=np.int64)
    for _ in range(n):
        powers.append(cur % mod)
        cur = cur @ bt
    powers = np.array(powers)
    coeffs = box_enumerate([0] * n, [1] * n, [mod] * n, mod)
    mats = np.einsum("mc,cij->mij", coeffs, powers) % mod
    codes = pack(mats, p, L)
    if len(np.unique(codes)) != len(codes):
        raise ConstructionFailure("power basis of O_L is not free mod p^L")
    # unit iff invertible iff not in the radical: grade-0 part nonzero
    unit = np.zeros(len(mats), dtype=bool)
    ul1 = np.ones(len(mats), dtype=bool)
    ident = np.eye(n, dtype=np.int64)
    for r in range(n):
        for c in range(n):
            t1 = max(0, o.entry_threshold(1, r, c))
            if t1 > 0:
                unit |= mats[:, r, c] % p ** min(t1, L) != 0
            diff = (mats[:, r, c] - ident[r, c]) % mod
            ul1 &= diff % p ** min(t1, L) == 0 if t1 > 0 else np.ones(len(mats), bool)
    return mats, unit, ul1


def prime_element_of_L(d: InductionDatum) -> MatrixApprox:
    """A prime element of L = F[beta]: valuation 1 for the order filtration."""
    e = d.order.e
    if e == 1:
        return MatrixApprox.identity(d.ctx, d.order.n) * d.p
    r = (e * d.s0 - d.j) % e
    if r == 0:
        raise DatumInvalid("normalized generator has grade 0; no prime power")
    a = pow(r, -1, e)
    k = (a * r - 1) // e
    bt = MatrixApprox.from_exact(d.ctx, d.beta_integral)
    return bt.pow(a).scaled(-k).normalize()


@dataclass
class SubgroupBundle:
    """Explicit subgroup family of one supercuspidal datum at one level.

    The noncompact group J = L^* U_A(floor((j+1)/2)) is never materialized;
    it is represented by its compact part J cap K together with the prime
    element of L, whose power grades the cosets J / (J cap K).
    """

    datum: InductionDatum
    level: int
    ua: dict
    ul1: FiniteSubgroup
    ol_units: FiniteSubgroup
    h1: FiniteSubgroup
    j1: FiniteSubgroup
    jcapk: FiniteSubgroup
    prime_element: MatrixApprox

    def j_grade_and_part(self, g: MatrixApprox):
        """Decompose g = Pi^k g0: returns (k, g0) with g0 the compact part."""
        k = v_A(g, self.datum.order)
        g0 = (self.prime_element.pow(-k) * g).normalize()
        return k, g0

    def j_contains(self, g: MatrixApprox) -> bool:
        """Membership in J via the symbolic prime-power grading."""
        try:
            k, g0 = self.j_grade_and_part(g)
        except (PrecisionLoss, ValueError):
            return False
        return self.jcapk.contains(g0)


def build_subgroups(d: InductionDatum, level: int | None = None,
                    budget: int = 2_000_000) -> SubgroupBundle:
    """Element lists for U_A(i), U_L(1), H^1, J^1 and J cap K mod p^level."""
    from .orders import is_minimal
    if not is_minimal(d):
        raise DatumInvalid("subgroup construction requires a minimal datum")
    o, p, j = d.order, d.p, d.j
    L = d.group_level if level is None else level
    if d.ctx.N < j + 2:
        raise PrecisionLoss("datum context carries fewer than j + 2 digits")
    ua = {}
    for i in range(1, j + 2):
        mats = enumerate_radical_unipotents(o, i, p, L, budget)
        ua[i] = FiniteSubgroup(f"U_A({i})", p, L, o.n, mats)
    ol_mats, unit_mask, ul1_mask = enumerate_field_order(d, L)
    ul1 = FiniteSubgroup("U_L(1)", p, L, o.n, ol_mats[ul1_mask])
    ol_units = FiniteSubgroup("O_L^*", p, L, o.n, ol_mats[unit_mask])
    half_low = j // 2 + 1        # H^1 congruence part
    half_high = (j + 1) // 2     # J^1 congruence part
    h1_codes = product_set(ul1.mats, ua[half_low].mats, p, L)
    j1_codes = product_set(ul1.mats, ua[half_high].mats, p, L) if half_high >= 1 \
        else None
    h1 = FiniteSubgroup("H1", p, L, o.n, unpack(h1_codes, p, L, o.n))
    j1 = FiniteSubgroup("J1", p, L, o.n, unpack(j1_codes, p, L, o.n))
    jk_codes = product_set(ol_units.mats, ua[half_high].mats, p, L)
    jcapk = FiniteSubgroup("JcapK", p, L, o.n, unpack(jk_codes, p, L, o.n))
    prime = prime_element_of_L(d)
    return SubgroupBundle(d, L, ua, ul1, ol_units, h1, j1, jcapk, prime)


# ---------------------------------------------------------------------------
# characters
# ---------------------------------------------------------------------------

class GroupCharacter:
    """A character of an enumerated subgroup, stored as exponent numerators
    over a common p-power denominator."""

    def __init__(self, domain: FiniteSubgroup, nums, denom: int):
        self.domain = domain
        self.nums = np.asarray(nums, dtype=np.int64) % denom
        self.denom = denom

    def exponent_at(self, idx: int) -> Fraction:
        return Fraction(int(self.nums[idx]), self.denom)

    def exponent_of_residues(self, mat) -> Fraction:
        mat = np.asarray(mat, dtype=np.int64) % self.domain.modulus
        code = pack(mat[None], self.domain.p, self.domain.level)
        idx = self.domain.index_of_codes(code)[0]
        if idx < 0:
            raise KeyError("element outside the character domain")
        return self.exponent_at(int(idx))

    def exponent(self, m: MatrixApprox) -> Fraction:
        res = residues_of(m, self.domain.level)
        if res is None:
            raise KeyError("element is not integral")
        return self.exponent_of_residues(res)

    def restricted_nums(self, codes):
        idx = self.domain.index_of_codes(codes)
        if np.any(idx < 0):
            raise KeyError("subset is not inside the character domain")
        return self.nums[idx]

    def dump_lines(self):
        out = [f"# character on {self.domain.name} p={self.domain.p} "
               f"N={self.domain.level} n={self.domain.n} denom={self.denom}"]
        flat = self.domain.mats.reshape(self.domain.size, -1)
        for row, num in zip(flat, self.nums):
            t = Fraction(int(num), self.denom)
            out.append(" ".join(str(int(v)) for v in row) +
                       f"  {t.numerator}/{t.denominator}")
        return out


def formula_exponent_nums(d: InductionDatum, mats: np.ndarray, denom: int):
    """Exponents of psi(Tr(beta (x - 1))) for integral residue matrices."""
    p, n = d.p, d.order.n
    lvl = d.s0 + 1
    mod = p ** lvl
    bt = np.array(d.beta_integral, dtype=np.int64)
    diff = mats.copy()
    for i in range(n):
        diff[:, i, i] -= 1
    tr = np.einsum("ij,mji->m", bt, diff) % mod
    return tr * (denom // mod) % denom


def _cross_products_packed(A, B, p, L):
    """Packed codes of all pairwise products a b mod p^L, shape (|A|, |B|).

    Explicit broadcast arithmetic; measurably faster than einsum for the
    small residue matrices used here.
    """
    mod = p ** L
    n = A.shape[1]
    base = p ** L
    codes = None
    for i in range(n):
        for j in range(n):
            acc = A[:, i, 0, None] * B[None, :, 0, j]
            for k in range(1, n):
                acc += A[:, i, k, None] * B[None, :, k, j]
            acc %= mod
            codes = acc if codes is None else codes * base + acc
    return codes


def _pair_scan(sub, fns, chunk=768):
    """Run each fn(lo, idx_block) over the full product-index table."""
    mats, p, L = sub.mats, sub.p, sub.level
    for lo in range(0, len(mats), chunk):
        pcodes = _cross_products_packed(mats[lo:lo + chunk], mats, p, L)
        idx = sub.index_of_codes(pcodes.reshape(-1)).reshape(pcodes.shape)
        if np.any(idx < 0):
            i, k = np.argwhere(idx < 0)[0]
            raise ConstructionFailure(
                f"{sub.name} is not closed under products "
                f"(witness indices {lo + int(i)}, {int(k)})")
        for fn in fns:
            fn(lo, idx)


def verify_character(sub: FiniteSubgroup, nums, denom: int, coords=None,
                     coord_orders=None):
    """Exhaustive multiplicativity of an exponent table over all pairs.

    Optionally checks in the same pass that coset coordinates add, which
    certifies the count of character extensions.  Returns
    (multiplicative, witness, coords_additive).
    """
    bad = []
    coords_bad = []
    fns = []

    def check(lo, idx):
        if bad:
            return
        block = nums[lo:lo + idx.shape[0]]
        want = (block[:, None] + nums[None, :]) % denom
        got = nums[idx]
        if not np.array_equal(want, got):
            i, k = np.argwhere(want != got)[0]
            bad.append((lo + int(i), int(k)))

    fns.append(check)
    if coords is not None and coords.shape[1]:
        orders_arr = np.asarray(coord_orders, dtype=np.int64)

        def check_coords(lo, idx):
            if coords_bad:
                return
            block = coords[lo:lo + idx.shape[0]]
            want = (block[:, None, :] + coords[None, :, :]) % orders_arr
            if not np.array_equal(want, coords[idx]):
                coords_bad.append(True)

        fns.append(check_coords)
    _pair_scan(sub, fns)
    return (not bad), (bad[0] if bad else None), (not coords_bad)


@dataclass
class ExtensionData:
    """A character of a group built by extending one from a subgroup."""

    nums: np.ndarray
    denom: int
    coords: np.ndarray          # per element, exponents of the coset generators
    orders: list                # relative orders of the generators
    count: int                  # number of extensions (certified)
    coords_additive: bool


def extend_character(group: FiniteSubgroup, sub_exponents,
                     denom_hint=None) -> ExtensionData:
    """All extensions of a character to a finite overgroup, one chosen.

    sub_exponents maps the subgroup's sorted codes to Fractions (as a dict).
    The chosen extension takes the minimal admissible exponent at every new
    coset generator; the count of extensions is the index, certified by the
    coordinate-homomorphism check plus one exhaustive multiplicativity pass.
    """
    p, L, n = group.p, group.level, group.n
    mod = p ** L
    values = dict(sub_exponents)
    coords = {c: () for c in values}
    gens = []
    orders = []
    all_codes = [int(c) for c in group.codes]
    assigned = set(values)
    mats_by_code = {int(c): group.mats[i] for i, c in enumerate(group.codes)}
    while len(assigned) < group.size:
        g_code = min(c for c in all_codes if c not in assigned)
        g = mats_by_code[g_code]
        # relative order of g over the assigned part
        power = g.copy()
        m = 1
        while int(pack(power[None], p, L)[0]) not in assigned:
            power = power @ g % mod
            m += 1
        t_power = values[int(pack(power[None], p, L)[0])]
        t = Fraction(t_power, m)
        t -= math.floor(t)
        base_items = list(values.items())
        base_coords = {code: coords[code] for code, _ in base_items}
        gens.append(g_code)
        orders.append(m)
        base_mats = np.array([mats_by_code[code] for code, _ in base_items])
        gc = np.eye(n, dtype=np.int64)
        for c in range(1, m):
            gc = gc @ g % mod
            prod = np.einsum("ij,mjk->mik", gc, base_mats) % mod
            pcodes = pack(prod, p, L)
            for (code0, val0), newc in zip(base_items, pcodes):
                newc = int(newc)
                values[newc] = val0 + c * t
                coords[newc] = base_coords[code0] + (c,)
        for code in list(coords):
            if len(coords[code]) < len(gens):
                coords[code] = coords[code] + (0,) * (len(gens) - len(coords[code]))
        assigned = set(values)
    # align to the group's sorted code order
    denom = 1
    for v in values.values():
        denom = denom * v.denominator // math.gcd(denom, v.denominator)
    if denom_hint:
        denom = denom * denom_hint // math.gcd(denom, denom_hint)
    nums = np.array([int(values[int(c)] * denom) % denom for c in group.codes],
                    dtype=np.int64)
    r = len(gens)
    cmat = np.array([tuple(coords[int(c)]) + (0,) * (r - len(coords[int(c)]))
                     for c in group.codes], dtype=np.int64) \
        if r else np.zeros((group.size, 0), dtype=np.int64)
    ok, witness, coords_ok = verify_character(group, nums, denom,
                                              coords=cmat, coord_orders=orders)
    if not ok:
        raise ConstructionFailure(
            f"no multiplicative extension found on {group.name}; "
            f"first mismatch at indices {witness}")
    count = 1
    for m in orders:
        count *= m
    if not coords_ok:
        # conservative fallback: count only the verified base extension
        count = 1
    return ExtensionData(nums, denom, cmat, orders, count, coords_ok)


@dataclass
class SimpleCharacterResult:
    theta: GroupCharacter
    extension_count: int
    base: FiniteSubgroup
    denom: int
    trivial_level: int


def simple_character(d: InductionDatum, bundle: SubgroupBundle) -> SimpleCharacterResult:
    """The simple character theta on H^1: psi(Tr(beta(x-1))) on the
    congruence part, extended multiplicatively to all of H^1."""
    p, j = d.p, d.j
    base = bundle.ua[j // 2 + 1]
    denom0 = p ** (d.s0 + 1)
    base_nums = formula_exponent_nums(d, base.mats, denom0)
    ok, witness, _ = verify_character(base, base_nums, denom0)
    if not ok:
        raise ConstructionFailure(
            f"trace formula is not multiplicative on {base.name}: {witness}")
    sub_exp = {int(c): Fraction(int(v), denom0)
               for c, v in zip(base.codes, base_nums)}
    ext = extend_character(bundle.h1, sub_exp, denom_hint=denom0)
    theta = GroupCharacter(bundle.h1, ext.nums, ext.denom)
    # triviality on U_A(j+1)
    top = bundle.ua[j + 1]
    tnums = theta.restricted_nums(top.codes)
    if np.any(tnums % ext.denom != 0):
        raise ConstructionFailure("theta is not trivial on U_A(j+1)")
    return SimpleCharacterResult(theta, ext.count, base, ext.denom, j + 1)


# ---------------------------------------------------------------------------
# Heisenberg polarization
# ---------------------------------------------------------------------------

@dataclass
class PolarizationData:
    trivial: bool
    reason: str
    dim: int
    coset_reps: np.ndarray | None
    pairing: list | None
    isotropic: list | None
    b1: FiniteSubgroup
    raw_pairing_well_defined: bool | None
    raw_pairing_alternating: bool | None
    quotient_index: int


def _coset_decomposition(big: FiniteSubgroup, small_codes):
    """Left cosets of an enumerated normal subgroup; returns (rep_indices,
    coset_id array aligned to big's sorted order)."""
    p, L, n = big.p, big.level, big.n
    mod = p ** L
    small_idx = sorted_index(big.codes, small_codes)
    if np.any(small_idx < 0):
        raise ConstructionFailure("subgroup is not contained in the overgroup")
    small_mats = big.mats[small_idx]
    coset_id = np.full(big.size, -1, dtype=np.int64)
    reps = []
    for i in range(big.size):
        if coset_id[i] >= 0:
            continue
        rep = big.mats[i]
        prods = np.einsum("ij,mjk->mik", rep, small_mats) % mod
        idx = sorted_index(big.codes, pack(prods, p, L))
        if np.any(idx < 0):
            raise ConstructionFailure("coset leaves the overgroup")
        coset_id[idx] = len(reps)
        reps.append(i)
    return np.array(reps, dtype=np.int64), coset_id


def heisenberg(d: InductionDatum, bundle: SubgroupBundle,
               theta: GroupCharacter, rng=None) -> PolarizationData:
    """Polarize J^1/H^1 for the commutator pairing derived from theta.

    For odd depth J^1 = H^1 and the uniform convention B^1 = H^1 applies;
    the returned data is flagged trivial.
    """
    p, j, o = d.p, d.j, d.order
    h1, j1 = bundle.h1, bundle.j1
    if j % 2 == 1:
        return PolarizationData(
            trivial=True, reason="J1 == H1 at odd depth; take B1 = H1",
            dim=0, coset_reps=None, pairing=None, isotropic=None,
            b1=h1, raw_pairing_well_defined=None, raw_pairing_alternating=None,
            quotient_index=1)
    if j1.size == h1.size:
        raise ConstructionFailure("even depth but J1 == H1; datum is ill-formed")
    L = bundle.level
    mod = p ** L
    rep_idx, coset_id = _coset_decomposition(j1, h1.codes)
    k = len(rep_idx)
    dim = round(math.log(k, p))
    if p ** dim != k:
        raise ConstructionFailure("J1/H1 is not a p-group quotient")
    # normality spot check: conjugating H1 by the representatives fixes it
    hmats = j1.mats[sorted_index(j1.codes, h1.codes)]
    for ri in rep_idx[:k]:
        g = j1.mats[ri]
        ginv = np.array(mat_inv_mod([list(r) for r in g], p, L), dtype=np.int64)
        conj = np.einsum("ij,mjk,kl->mil", g, hmats, ginv) % mod
        if not np.all(contains_codes(h1.codes, pack(conj, p, L))):
            raise ConstructionFailure("H1 is not normal in J1")

    # coset multiplication table and an F_p basis of V = J1/H1
    table = np.zeros((k, k), dtype=np.int64)
    reps = j1.mats[rep_idx]
    for a in range(k):
        prods = np.einsum("ij,mjk->mik", reps[a], reps) % mod
        idx = sorted_index(j1.codes, pack(prods, p, L))
        table[a] = coset_id[idx]
    if not np.array_equal(table, table.T):
        raise ConstructionFailure("J1/H1 is not abelian")

    id_coset = int(coset_id[j1.identity_index()])
    basis = []
    span = {id_coset}
    for cid in range(k):
        if cid in span:
            continue
        basis.append(cid)
        powers = [id_coset]
        cur = id_coset
        for _ in range(p - 1):
            cur = int(table[cur, cid])
            powers.append(cur)
        if int(table[cur, cid]) != id_coset:
            raise ConstructionFailure("J1/H1 is not elementary abelian")
        span = {int(table[s, pw]) for s in span for pw in powers}
        if len(span) == k:
            break
    if len(basis) != dim:
        raise ConstructionFailure("failed to find an F_p basis of J1/H1")

    bt = np.array(d.beta_integral, dtype=np.int64)
    lvl = d.s0 + 1
    pmod = p ** lvl

    def pairing_num(x, y):
        u = x.astype(np.int64).copy()
        v = y.astype(np.int64).copy()
        for i in range(o.n):
            u[i, i] -= 1
            v[i, i] -= 1
        w = (u @ v - v @ u)
        tr = int(np.einsum("ij,ji->", bt, w)) % pmod
        if tr % p ** (lvl - 1) != 0:
            raise ConstructionFailure("pairing value is not F_p-valued")
        return tr // p ** (lvl - 1) % p

    def raw_num(x, y):
        u = x.astype(np.int64).copy()
        v = y.astype(np.int64).copy()
        for i in range(o.n):
            u[i, i] -= 1
            v[i, i] -= 1
        w = u @ v
        return int(np.einsum("ij,ji->", bt, w)) % pmod

    basis_mats = [j1.mats[rep_idx[c]] for c in basis]
    pairing = [[pairing_num(x, y) for y in basis_mats] for x in basis_mats]

    # alternating + nondegenerate
    for a in range(dim):
        if pairing[a][a] != 0:
            raise ConstructionFailure("pairing is not alternating")
        for b in range(dim):
            if (pairing[a][b] + pairing[b][a]) % p != 0:
                raise ConstructionFailure("pairing is not antisymmetric")
    det = _fp_det([row[:] for row in pairing], p)
    if det == 0:
        raise ConstructionFailure(
            "degenerate pairing: datum is non-minimal or ill-formed")

    # well-definedness of the commutator form on cosets (sampled)
    rng = np.random.default_rng(0) if rng is None else rng
    hsample = hmats[rng.integers(0, len(hmats), size=4)]
    for x in basis_mats:
        for y in basis_mats:
            base_val = pairing_num(x, y)
            for h in hsample:
                if pairing_num(x @ h % mod, y) != base_val:
                    raise ConstructionFailure("commutator pairing not coset-invariant")
    # the raw (uncommutated) form, reported for comparison
    raw_well = True
    raw_alt = True
    for x in basis_mats:
        if raw_num(x, x) % pmod != 0:
            raw_alt = False
        for y in basis_mats:
            for h in hsample[:2]:
                if raw_num(x @ h % mod, y) != raw_num(x, y):
                    raw_well = False

    iso_vecs = _symplectic_isotropic_basis(pairing, p)

    # lift the isotropic subspace: union of the cosets it spans
    combos = box_enumerate([0] * len(iso_vecs), [1] * len(iso_vecs),
                           [p] * len(iso_vecs), p)
    member_cosets = set()
    for combo in combos:
        vec = [0] * dim
        for cf, bv in zip(combo, iso_vecs):
            vec = [(a + cf * b) % p for a, b in zip(vec, bv)]
        cid = int(id_coset)
        for coord, times in zip(basis, vec):
            for _ in range(times):
                cid = int(table[cid, coord])
        member_cosets.add(cid)
    mask = np.isin(coset_id, sorted(member_cosets))
    b1 = FiniteSubgroup("B1", p, L, o.n, j1.mats[mask])
    if not b1.closure_check():
        raise ConstructionFailure("polarization preimage is not a group")
    return PolarizationData(
        trivial=False, reason="", dim=dim, coset_reps=np.array(basis_mats),
        pairing=pairing, isotropic=iso_vecs, b1=b1,
        raw_pairing_well_defined=raw_well, raw_pairing_alternating=raw_alt,
        quotient_index=k)


def _fp_det(rows, p):
    n = len(rows)
    det = 1
    for col in range(n):
        piv = next((r for r in range(col, n) if rows[r][col] % p), None)
        if piv is None:
            return 0
        if piv != col:
            rows[col], rows[piv] = rows[piv], rows[col]
            det = -det
        det = det * rows[col][col] % p
        inv = pow(rows[col][col], -1, p)
        for r in range(col + 1, n):
            f = rows[r][col] * inv % p
            rows[r] = [(a - f * b) % p for a, b in zip(rows[r], rows[col])]
    return det % p


def _symplectic_isotropic_basis(pairing, p):
    """Basis of a maximal isotropic subspace via symplectic reduction."""
    dim = len(pairing)
    vecs = [[1 if i == j else 0 for j in range(dim)] for i in range(dim)]

    def form(u, v):
        s = 0
        for a in range(dim):
            for b in range(dim):
                s += u[a] * pairing[a][b] * v[b]
        return s % p

    isotropic = []
    remaining = vecs
    while remaining and 2 * len(isotropic) < dim:
        e = remaining[0]
        partner = None
        for cand in remaining[1:]:
            if form(e, cand) % p != 0:
                partner = cand
                break
        if partner is None:
            # e pairs to zero with everything left: contradicts nondegeneracy
            raise ConstructionFailure("unexpected radical in symplectic reduction")
        c = pow(form(e, partner), -1, p)
        f = [(v * c) % p for v in partner]   # <e, f> = 1
        isotropic.append(e)
        new_remaining = []
        for w in remaining:
            if w is e or w is partner:
                continue
            wf = form(w, f)
            we = form(w, e)
            # w - <w,f> e + <w,e> f pairs to zero with both e and f
            adj = [(wi - wf * ei + we * fi) % p
                   for wi, ei, fi in zip(w, e, f)]
            new_remaining.append(adj)
        remaining = _fp_independent(new_remaining, p)
    return isotropic


def _fp_independent(vectors, p):
    out = []
    basis = []
    for v in vectors:
        w = list(v)
        for b in basis:
            piv = next(i for i, x in enumerate(b) if x % p)
            if w[piv] % p:
                f = w[piv] * pow(b[piv], -1, p) % p
                w = [(a - f * c) % p for a, c in zip(w, b)]
        if any(x % p for x in w):
            basis.append(w)
            out.append(list(v))
    return out


# ---------------------------------------------------------------------------
# Heisenberg extension and induced class function
# ---------------------------------------------------------------------------

class ClassFunction:
    """A function on an enumerated group stored as root-of-unity multisets.

    The value at an element is the formal sum of e^{2 pi i t} over its
    exponent list; dimensions and inner products are exact rationals.
    """

    def __init__(self, domain: FiniteSubgroup, exponent_lists):
        self.domain = domain
        self.exponent_lists = exponent_lists

    def value(self, idx: int):
        from .cyclotomic import CyclotomicSum
        terms = {}
        for t in self.exponent_lists[idx]:
            terms[t] = terms.get(t, 0) + 1
        return CyclotomicSum(self.domain.p, terms)

    @property
    def dim(self) -> int:
        ident = self.domain.identity_index()
        val = self.value(ident).rational_value()
        if val is None or val.denominator != 1 or val <= 0:
            raise ConstructionFailure("dimension is not a positive integer")
        return int(val)


@dataclass
class InducedResult:
    theta_tilde: GroupCharacter
    tilde_count: int
    eta: ClassFunction
    dim: int
    inner_product: Fraction
    restriction_is_multiple: bool
    restriction_inner: Fraction
    class_constancy_sampled: bool


def _exponent_counter_inner(lists_a, lists_b, p):
    """sum_g value_a(g) * conj(value_b(g)) as an exact CyclotomicSum."""
    from .cyclotomic import CyclotomicSum
    counter = {}
    for la, lb in zip(lists_a, lists_b):
        for ta in la:
            for tb in lb:
                t = ta - tb
                t -= math.floor(t)
                counter[t] = counter.get(t, 0) + 1
    return CyclotomicSum(p, counter)


def extend_and_induce(d: InductionDatum, bundle: SubgroupBundle,
                      theta: GroupCharacter, pol: PolarizationData,
                      rng=None) -> InducedResult:
    """Extend theta to B^1 and induce to J^1; verify the Heisenberg laws."""
    from .cyclotomic import CyclotomicSum
    p = d.p
    h1, j1 = bundle.h1, bundle.j1
    L = bundle.level
    mod = p ** L
    theta_exp = {int(c): theta.exponent_at(i) for i, c in enumerate(h1.codes)}

    if pol.trivial:
        theta_tilde = theta
        tilde_count = 1
        lists = [(theta.exponent_at(i),) for i in range(h1.size)]
        eta = ClassFunction(j1, lists)
    else:
        ext = extend_character(pol.b1, theta_exp)
        theta_tilde = GroupCharacter(pol.b1, ext.nums, ext.denom)
        tilde_count = ext.count
        rep_idx, _ = _coset_decomposition(j1, pol.b1.codes)
        reps = j1.mats[rep_idx]
        lists = [[] for _ in range(j1.size)]
        for t in reps:
            tinv = np.array(mat_inv_mod([list(r) for r in t], p, L),
                            dtype=np.int64)
            conj = np.einsum("ij,mjk,kl->mil", tinv, j1.mats, t) % mod
            codes = pack(conj, p, L)
            idx_in_b1 = sorted_index(pol.b1.codes, codes)
            for gidx in range(j1.size):
                bi = idx_in_b1[gidx]
                if bi >= 0:
                    lists[gidx].append(theta_tilde.exponent_at(int(bi)))
        lists = [tuple(v) for v in lists]
        eta = ClassFunction(j1, lists)

    dim = eta.dim
    index = j1.size // h1.size
    expected_dim = math.isqrt(index)
    if expected_dim * expected_dim != index:
        raise ConstructionFailure("[J1:H1] is not a perfect square")
    if dim != expected_dim:
        raise ConstructionFailure(
            f"dim eta = {dim} differs from (J1:H1)^(1/2) = {expected_dim}")

    total = _exponent_counter_inner(eta.exponent_lists, eta.exponent_lists, p)
    inner = (total * Fraction(1, j1.size)).rational_value()
    if inner is None:
        raise ConstructionFailure("<eta, eta> is not rational")
    if inner != 1:
        raise ConstructionFailure(f"<eta, eta> = {inner}, eta is reducible")

    # restriction to H1 is dim * theta, checked cyclotomically per element
    h_in_j = sorted_index(j1.codes, h1.codes)
    restriction_ok = True
    h_lists = []
    for hidx, jidx in enumerate(h_in_j):
        lst = eta.exponent_lists[int(jidx)]
        h_lists.append(lst)
        if restriction_ok:
            want = CyclotomicSum(p, {theta.exponent_at(hidx): dim})
            counts = {}
            for t in lst:
                counts[t] = counts.get(t, 0) + 1
            if CyclotomicSum(p, counts) != want:
                restriction_ok = False
    theta_lists = [(theta.exponent_at(i),) for i in range(h1.size)]
    rinner = (_exponent_counter_inner(h_lists, theta_lists, p)
              * Fraction(1, h1.size)).rational_value()

    # class constancy, sampled conjugations
    rng = np.random.default_rng(0) if rng is None else rng
    samples = rng.integers(0, j1.size, size=(64, 2))
    constancy = True
    value_ids = {}

    def vid(idx):
        if idx not in value_ids:
            value_ids[idx] = tuple(sorted(eta.value(idx).reduced().items()))
        return value_ids[idx]

    for gi, xi in samples:
        x = j1.mats[xi]
        xinv = np.array(mat_inv_mod([list(r) for r in x], p, L), dtype=np.int64)
        conj = x @ j1.mats[gi] @ xinv % mod
        cidx = sorted_index(j1.codes, pack(conj[None], p, L))[0]
        if cidx < 0:
            raise ConstructionFailure("conjugation left J1")
        if vid(int(cidx)) != vid(int(gi)):
            constancy = False
            break

    return InducedResult(theta_tilde, tilde_count, eta, dim, inner,
                         restriction_ok, rinner, constancy)


# ---------------------------------------------------------------------------
# intertwining
# ---------------------------------------------------------------------------

def intertwines(g: MatrixApprox, theta: GroupCharacter, d: InductionDatum,
                bundle: SubgroupBundle):
    """Whether g intertwines theta: theta(x) = theta(g x g^{-1}) on the
    intersection H^1 cap g^{-1} H^1 g.  Returns (bool, witness)."""
    h1 = theta.domain
    L = h1.level
    p = d.p
    gn = g.normalize()
    gi = g.inverse().normalize()
    loss = max(0, -(gn.scale + gi.scale))
    if loss == 0:
        gm = residues_of(gn, L)
        gim = residues_of(gi, L)
        if gm is None or gim is None:
            raise PrecisionLoss("integral conjugator expected at zero loss")
        mod = p ** L
        conj = np.einsum("ij,mjk,kl->mil", gm, h1.mats, gim) % mod
        codes = pack(conj, p, L)
        idx = sorted_index(h1.codes, codes)
        mask = idx >= 0
        ok = np.array_equal(theta.nums[idx[mask]], theta.nums[mask])
        if ok:
            return True, None
        bad = np.nonzero(theta.nums[idx[mask]] != theta.nums[mask])[0][0]
        widx = np.nonzero(mask)[0][bad]
        return False, h1.mats[widx]
    lifted = build_subgroups(d, level=L + loss)
    for x_res in lifted.h1.mats:
        x = MatrixApprox.from_exact(d.ctx, [list(r) for r in x_res])
        conj = gn * x * gi
        res = residues_of(conj, L)
        if res is None:
            continue
        if not h1.contains_residues(res):
            continue
        tx = theta.exponent_of_residues(np.asarray(x_res) % p ** L)
        tc = theta.exponent_of_residues(res)
        if tx != tc:
            return False, x_res
    return True, None


@dataclass
class DichotomyReport:
    total: int
    intertwining: int
    jcapk_size: int
    agree: bool
    witness: np.ndarray | None


@dataclass
class SpotIntertwiningReport:
    members_checked: int
    nonmembers_checked: int
    agree: bool
    witness: np.ndarray | None


def intertwining_spot(d: InductionDatum, bundle: SubgroupBundle,
                      theta: GroupCharacter, members: int = 40,
                      nonmembers: int = 40, seed: int = 0) -> SpotIntertwiningReport:
    """Budget-friendly instance of the dichotomy on sampled conjugators:
    sampled elements of J cap K must intertwine theta and sampled units
    outside it must not."""
    p, n = d.p, d.order.n
    L = bundle.level
    mod = p ** L
    h1, jk = bundle.h1, bundle.jcapk
    rng = np.random.default_rng(seed)

    def test(g):
        ginv = np.array(mat_inv_mod([list(r) for r in g], p, L), dtype=np.int64)
        conj = np.einsum("ij,mjk,kl->mil", g, h1.mats, ginv) % mod
        idx = sorted_index(h1.codes, pack(conj, p, L))
        mask = idx >= 0
        return bool(np.array_equal(theta.nums[idx[mask]], theta.nums[mask]))

    checked_m = 0
    for i in rng.integers(0, jk.size, size=members):
        g = jk.mats[int(i)]
        if not test(g):
            return SpotIntertwiningReport(checked_m, 0, False, g)
        checked_m += 1
    checked_n = 0
    tries = 0
    from .padic import _int_det
    while checked_n < nonmembers and tries < 100 * nonmembers:
        tries += 1
        g = rng.integers(0, mod, size=(n, n))
        if _int_det([[int(v) for v in r] for r in g]) % p == 0:
            continue
        if jk.contains_residues(g):
            continue
        if test(g):
            return SpotIntertwiningReport(checked_m, checked_n, False, g)
        checked_n += 1
    return SpotIntertwiningReport(checked_m, checked_n, True, None)


def intertwining_dichotomy(d: InductionDatum, bundle: SubgroupBundle,
                           theta: GroupCharacter,
                           budget: int = 5_000_000) -> DichotomyReport:
    """Exhaustively compare {g in K : g intertwines theta} with J cap K
    inside GL_n(Z/p^L)."""
    p, n = d.p, d.order.n
    L = bundle.level
    mod = p ** L
    total_mats = p ** (n * n * L)
    work = total_mats * bundle.h1.size
    if work > budget:
        raise BudgetExceeded("K sweep too expensive at this level",
                             estimate=work)
    allm = box_enumerate([0] * (n * n), [1] * (n * n), [mod] * (n * n), mod)
    allm = allm.reshape(-1, n, n)
    if n == 2:
        det = (allm[:, 0, 0] * allm[:, 1, 1] - allm[:, 0, 1] * allm[:, 1, 0]) % mod
    else:
        det = np.array([round(np.linalg.det(m)) % mod for m in allm])
    units = allm[det % p != 0]
    h1 = bundle.h1
    jk = bundle.jcapk
    inv_all = _inverses(units, p, L)
    agree = True
    witness = None
    count = 0
    for g, ginv in zip(units, inv_all):
        conj = np.einsum("ij,mjk,kl->mil", g, h1.mats, ginv) % mod
        idx = sorted_index(h1.codes, pack(conj, p, L))
        mask = idx >= 0
        inter = bool(np.array_equal(theta.nums[idx[mask]], theta.nums[mask]))
        member = jk.contains_residues(g)
        if inter:
            count += 1
        if inter != member:
            agree = False
            if witness is None:
                witness = g
    return DichotomyReport(len(units), count, jk.size, agree, witness)


# ---------------------------------------------------------------------------
# the parabolic group K_pi and its character
# ---------------------------------------------------------------------------

@dataclass
class PreparedBlock:
    """One supercuspidal factor with its groups, character, and extension."""

    datum: InductionDatum
    bundle: SubgroupBundle
    simple: SimpleCharacterResult
    pol: PolarizationData
    induced: InducedResult

    @property
    def b1(self) -> FiniteSubgroup:
        return self.pol.b1

    @property
    def theta_tilde(self) -> GroupCharacter:
        return self.induced.theta_tilde


def prepare_block(d: InductionDatum, level: int | None = None) -> PreparedBlock:
    bundle = build_subgroups(d, level=level)
    simple = simple_character(d, bundle)
    pol = heisenberg(d, bundle, simple.theta)
    induced = extend_and_induce(d, bundle, simple.theta, pol)
    return PreparedBlock(d, bundle, simple, pol, induced)


class BlockCharacter:
    """Theta on K_pi: the product of the block characters at the diagonal."""

    def __init__(self, blocks, offsets, level, p):
        self.blocks = blocks
        self.offsets = offsets
        self.level = level
        self.p = p

    def exponent_of_residues(self, mat) -> Fraction:
        mat = np.asarray(mat, dtype=np.int64)
        total = Fraction(0)
        for blk, off in zip(self.blocks, self.offsets):
            ni = blk.datum.order.n
            sub = mat[off:off + ni, off:off + ni] % blk.b1.modulus
            total += blk.theta_tilde.exponent_of_residues(sub)
        total -= math.floor(total)
        return total


@dataclass
class KpiChecks:
    closure_sampled: bool
    theta_multiplicative_sampled: bool
    block_congruence: bool
    containment: bool
    inequivalence_source: str
    samples: int


@dataclass
class KpiResult:
    kpi: FiniteSubgroup
    theta: object                 # GroupCharacter or BlockCharacter
    blocks: list
    c: object                     # Fraction (single) or int (parabolic)
    cfrak: int
    level: int
    checks: KpiChecks | None
    sampler: object | None

    @property
    def n(self) -> int:
        return sum(b.datum.order.n for b in self.blocks)


def depth_bound_cfrak(data) -> int:
    """min over blocks of floor((1/e) floor((d+1)/2))."""
    return min(((d.j + 1) // 2) // d.order.e for d in data)


def build_Kpi(blocks, c: int | None = None, band: Fraction = Fraction(1),
              inequivalent_assertion: bool = False, samples: int = 200,
              seed: int = 0) -> KpiResult:
    """Assemble K_pi and Theta from prepared supercuspidal blocks.

    A single block returns the uniform convention K_pi = B^1, Theta = the
    extended character.  Multiple blocks assemble the block-congruence group
    with p^floor((c+1)/2) above and p^ceil((c+1)/2) below the diagonal and
    verify on seeded samples that it is a group, that Theta is multiplicative
    through the mod p^(c+1) block congruence, and that the support sits inside
    U_L(1) (1 + p^cfrak M_n(O)).
    """
    if not blocks:
        raise DatumInvalid("at least one block is required")
    p = blocks[0].datum.p
    if len(blocks) == 1:
        blk = blocks[0]
        d = blk.datum
        return KpiResult(
            kpi=blk.b1, theta=blk.theta_tilde, blocks=list(blocks),
            c=d.normalised_depth, cfrak=depth_bound_cfrak([d]),
            level=blk.bundle.level, checks=None, sampler=None)

    data = [b.datum for b in blocks]
    if any(b.datum.p != p for b in blocks):
        raise DatumInvalid("blocks live over different primes")
    if any(b.datum.order.n < 2 for b in blocks):
        raise DatumInvalid("every block must have dimension at least 2")
    cs = [b.datum.normalised_depth for b in blocks]
    c_val = c if c is not None else math.ceil(max(cs))
    for ci in cs:
        if abs(ci - c_val) > band:
            raise DatumInvalid(
                f"normalised depth {ci} violates the O(1) band around {c_val}")
    shapes = {(b.datum.order.e, b.datum.j) for b in blocks}
    if len(shapes) == len(blocks):
        ineq_source = "heuristic (distinct invariants)"
    elif inequivalent_assertion:
        ineq_source = "user assertion"
    else:
        raise DatumInvalid(
            "blocks share (e, j); pairwise inequivalence must be asserted")

    n = sum(b.datum.order.n for b in blocks)
    offsets = []
    off = 0
    for b in blocks:
        offsets.append(off)
        off += b.datum.order.n
    upper = (c_val + 1) // 2          # floor
    lower = (c_val + 2) // 2          # ceil
    level = max(c_val + 2, max(b.bundle.level for b in blocks))
    mod = p ** level

    def lifted_block_size(b):
        ni = b.datum.order.n
        return b.b1.size * p ** (ni * ni * (level - b.bundle.level))

    size = 1
    for b in blocks:
        size *= lifted_block_size(b)
    for i, bi in enumerate(blocks):
        for k2, bk in enumerate(blocks):
            if i == k2:
                continue
            thr = upper if i < k2 else lower
            size *= p ** ((level - thr) * bi.datum.order.n * bk.datum.order.n)

    def membership(mat) -> bool:
        mat = np.asarray(mat, dtype=np.int64) % mod
        for i, bi in enumerate(blocks):
            ni = bi.datum.order.n
            oi = offsets[i]
            sub = mat[oi:oi + ni, oi:oi + ni] % bi.b1.modulus
            if not bi.b1.contains_residues(sub):
                return False
            for k2, bk in enumerate(blocks):
                if i == k2:
                    continue
                thr = upper if i < k2 else lower
                ok2 = offsets[k2]
                blkm = mat[oi:oi + ni, ok2:ok2 + bk.datum.order.n]
                if np.any(blkm % p ** thr != 0):
                    return False
        return True

    kpi = FiniteSubgroup("K_pi", p, level, n, membership=membership, size=size)
    theta = BlockCharacter(blocks, offsets, level, p)

    rng = np.random.default_rng(seed)

    def sampler(rng_in=None):
        r = rng_in if rng_in is not None else rng
        mat = np.zeros((n, n), dtype=np.int64)
        for i, bi in enumerate(blocks):
            ni = bi.datum.order.n
            oi = offsets[i]
            base = bi.b1.mats[int(r.integers(0, bi.b1.size))].astype(np.int64)
            lift = base + p ** bi.bundle.level * r.integers(
                0, p ** (level - bi.bundle.level), size=(ni, ni))
            mat[oi:oi + ni, oi:oi + ni] = lift % mod
            for k2, bk in enumerate(blocks):
                if i == k2:
                    continue
                thr = upper if i < k2 else lower
                ok2 = offsets[k2]
                nk = bk.datum.order.n
                mat[oi:oi + ni, ok2:ok2 + nk] = \
                    p ** thr * r.integers(0, p ** (level - thr), size=(ni, nk)) % mod
        return mat

    # --- seeded verifications ---
    closure_ok = True
    theta_ok = True
    congruence_ok = True
    contain_ok = True
    cf = depth_bound_cfrak(data)
    cmod = p ** (c_val + 1)
    for _ in range(samples):
        x = sampler()
        y = sampler()
        xy = x @ y % mod
        if not membership(xy):
            closure_ok = False
        xinv = np.array(mat_inv_mod([list(r) for r in x], p, level),
                        dtype=np.int64)
        if not membership(xinv):
            closure_ok = False
        # displayed block congruence mod p^(c+1)
        for i, bi in enumerate(blocks):
            ni = bi.datum.order.n
            oi = offsets[i]
            prod_block = (x[oi:oi + ni, oi:oi + ni] @
                          y[oi:oi + ni, oi:oi + ni]) % cmod
            if not np.array_equal(xy[oi:oi + ni, oi:oi + ni] % cmod, prod_block):
                congruence_ok = False
        tx = theta.exponent_of_residues(x)
        ty = theta.exponent_of_residues(y)
        txy = theta.exponent_of_residues(xy)
        s = tx + ty
        s -= math.floor(s)
        if txy != s:
            theta_ok = False
        if not _torus_approximation(x, blocks, offsets, cf, level):
            contain_ok = False
    if not (closure_ok and theta_ok and congruence_ok):
        raise ConstructionFailure(
            f"K_pi verification failed: closure={closure_ok} "
            f"theta={theta_ok} congruence={congruence_ok}")
    checks = KpiChecks(closure_ok, theta_ok, congruence_ok, contain_ok,
                       ineq_source, samples)
    return KpiResult(kpi, theta, list(blocks), c_val, cf, level, checks, sampler)


def _torus_approximation(mat, blocks, offsets, cf, level) -> bool:
    """Find l in U_L(1) with mat * l^{-1} = 1 mod p^cf (blockwise search)."""
    if cf == 0:
        return True
    p = blocks[0].datum.p
    mod = p ** level
    cmod = p ** cf
    n = mat.shape[0]
    linv = np.zeros((n, n), dtype=np.int64)
    for i, bi in enumerate(blocks):
        ni = bi.datum.order.n
        oi = offsets[i]
        sub = mat[oi:oi + ni, oi:oi + ni] % bi.bundle.ul1.modulus
        found = False
        for l in bi.bundle.ul1.mats:
            li = np.array(mat_inv_mod([list(r) for r in l], p,
                                      bi.bundle.level), dtype=np.int64)
            test = sub @ li % bi.bundle.ul1.modulus
            if np.array_equal(test % cmod, np.eye(ni, dtype=np.int64) % cmod):
                linv[oi:oi + ni, oi:oi + ni] = li % mod
                found = True
                break
        if not found:
            return False
    full = mat @ linv % mod
    return np.array_equal(full % cmod, np.eye(n, dtype=np.int64) % cmod)
