"""Principal hereditary orders, radical filtrations, and minimal elements.

The standard order with period e in M_n has block shape: block (a,b)
(1-indexed, blocks of size m = n/e) consists of matrices with entries of
valuation >= ceil((i + a - b)/e) in the i-th radical power B^i.  This closed
form reproduces the block pictures for i = 0 (the order itself) and i = 1
(the Jacobson radical) and satisfies B^e = p * B^0.

The semi-valuation v_A(x) is the largest i with x in B^i.  An induction
datum is a pair (order, beta) with v_A(beta) = -j < 0 generating a degree-n
field; minimality of beta is the coprimality-plus-residue-generation test,
equivalent to k0(beta, A) = v_A(beta), and k0 itself is computed by an
exhaustive leading-term search over the finite quotient A / B^(j+2).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction

from .errors import BudgetExceeded, DatumInvalid, PrecisionLoss
from .padic import MatrixApprox, PrecisionCtx, vp


def _ceil_div(a: int, b: int) -> int:
    return -((-a) // b)


@dataclass(frozen=True)
class HereditaryOrder:
    """Standard principal hereditary order: dimension n, period e | n."""

    n: int
    e: int

    def __post_init__(self):
        if self.e < 1 or self.n < 1:
            raise DatumInvalid("n and e must be positive")
        if self.n % self.e != 0:
            raise DatumInvalid("e must divide n")

    @property
    def m(self) -> int:
        return self.n // self.e

    def block(self, r: int, c: int):
        """1-indexed block coordinates of entry (r, c)."""
        return r // self.m + 1, c // self.m + 1

    def entry_threshold(self, i: int, r: int, c: int) -> int:
        """Minimal entry valuation at (r, c) for membership in B^i."""
        a, b = self.block(r, c)
        return _ceil_div(i + a - b, self.e)

    def entry_grade(self, r: int, c: int, val: int) -> int:
        """Largest i with p^val * E_rc in B^i."""
        a, b = self.block(r, c)
        return self.e * val + b - a

    def graded_positions(self, t: int):
        """Entries (r, c, power) with p^power * E_rc of grade exactly t >= 0."""
        out = []
        for r in range(self.n):
            for c in range(self.n):
                a, b = self.block(r, c)
                num = t + a - b
                if num % self.e == 0 and num // self.e >= 0:
                    out.append((r, c, num // self.e))
        return out


def in_radical_power(x: MatrixApprox, i: int, o: HereditaryOrder) -> bool:
    """Whether x lies in B^i, decided entrywise from the closed form."""
    if x.zero:
        return True
    if x.n != o.n:
        raise ValueError("dimension mismatch")
    for r in range(o.n):
        for c in range(o.n):
            t = o.entry_threshold(i, r, c)
            val, known = x.entry_val_floor(r, c)
            if val is None:
                continue  # exact zero entry
            if known:
                if val < t:
                    return False
            elif val < t:
                raise PrecisionLoss(
                    f"entry ({r},{c}) known only up to p^{val}, need p^{t}")
    return True


def v_A(x: MatrixApprox, o: HereditaryOrder) -> int:
    """The largest i with x in B^i (the semi-valuation of the filtration)."""
    if x.zero:
        raise ValueError("v_A of the zero matrix is undefined")
    best = None
    floors = []
    for r in range(o.n):
        for c in range(o.n):
            val, known = x.entry_val_floor(r, c)
            if val is None:
                continue
            g = o.entry_grade(r, c, val)
            if known:
                best = g if best is None else min(best, g)
            else:
                floors.append(g)
    if best is None:
        raise PrecisionLoss("no entry has a decidable valuation")
    if any(f < best for f in floors):
        raise PrecisionLoss("an undecided entry could lower the valuation")
    return best


@dataclass(frozen=True)
class ApproximationReport:
    """Outcome of the two-sided comparison of B^i against powers of p*M_n."""

    i: int
    lower_exponent: int   # B_0^lower subset of B^i
    upper_exponent: int   # B^i subset of B_0^upper
    holds: bool
    lower_strict: bool
    upper_strict: bool


def approximation_report(o: HereditaryOrder, i: int, ctx: PrecisionCtx) -> ApproximationReport:
    """Verify p^M M_n < B^i < p^(floor(i/e)) M_n on elementary spanning sets."""
    lower = _ceil_div(i - 1, o.e) + 1
    upper = i // o.e
    holds = True
    lower_strict = False
    upper_strict = False
    for r in range(o.n):
        for c in range(o.n):
            t = o.entry_threshold(i, r, c)
            # spanning element p^lower E_rc of B_0^lower must lie in B^i
            if lower < t:
                holds = False
            # spanning element p^t E_rc of B^i must lie in B_0^upper
            if t < upper:
                holds = False
            if t < lower:
                lower_strict = True   # p^t E_rc lies in B^i but not in B_0^lower
            if t > upper:
                upper_strict = True   # B_0^upper has p^upper E_rc outside B^i
    return ApproximationReport(i, lower, upper, holds, lower_strict, upper_strict)


def check_approximation(o: HereditaryOrder, i: int, ctx: PrecisionCtx) -> bool:
    return approximation_report(o, i, ctx).holds


# -- integer matrix helpers for the exact searches ---------------------------

def mat_mul_int(a, b):
    n = len(a)
    return [[sum(a[i][k] * b[k][j] for k in range(n)) for j in range(n)]
            for i in range(n)]


def mat_sub_int(a, b):
    n = len(a)
    return [[a[i][j] - b[i][j] for j in range(n)] for i in range(n)]


def int_matrix_grade(rows, o: HereditaryOrder, p: int):
    """v_A of an exact integer matrix; None for the zero matrix."""
    best = None
    for r in range(o.n):
        for c in range(o.n):
            v = rows[r][c]
            if v == 0:
                continue
            g = o.entry_grade(r, c, vp(v, p))
            best = g if best is None else min(best, g)
    return best


# -- polynomial helpers over F_p and Z ---------------------------------------

def _poly_divmod_fp(num, den, p):
    num = list(num)
    d = len(den) - 1
    inv = pow(den[-1], -1, p)
    quo = [0] * (len(num) - d)
    for i in range(len(num) - 1, d - 1, -1):
        coef = num[i] * inv % p
        quo[i - d] = coef
        for k in range(d + 1):
            num[i - d + k] = (num[i - d + k] - coef * den[k]) % p
    while len(num) > 1 and num[-1] % p == 0:
        num.pop()
    return quo, num


def poly_irreducible_fp(coeffs, p) -> bool:
    """Irreducibility of a monic polynomial over F_p by trial division."""
    deg = len(coeffs) - 1
    if deg == 1:
        return True
    # trial divisors: all monic polynomials of degree 1 .. deg//2
    for d in range(1, deg // 2 + 1):
        for code in range(p ** d):
            den = []
            x = code
            for _ in range(d):
                den.append(x % p)
                x //= p
            den.append(1)
            _, rem = _poly_divmod_fp(coeffs, den, p)
            if len(rem) == 1 and rem[0] % p == 0:
                return False
    return True


def min_poly_fp(rows, p):
    """Monic minimal polynomial over F_p of a square matrix mod p."""
    n = len(rows)
    dim = n * n
    powers = [[1 if i == j else 0 for j in range(n)] for i in range(n)]
    basis = []   # rows of reduced vectors
    combos = []  # expression of each reduced vector in terms of powers
    cur = powers
    k = 0
    while True:
        vec = [cur[i][j] % p for i in range(n) for j in range(n)]
        combo = [0] * (k + 1)
        combo[k] = 1
        # reduce vec against the basis
        for bvec, bcombo in zip(basis, combos):
            piv = next(i for i, v in enumerate(bvec) if v)
            if vec[piv]:
                f = vec[piv] * pow(bvec[piv], -1, p) % p
                vec = [(v - f * w) % p for v, w in zip(vec, bvec)]
                cc = list(combo) + [0] * (len(bcombo) - len(combo))
                bb = list(bcombo) + [0] * (len(combo) - len(bcombo))
                combo = [(a - f * b) % p for a, b in zip(cc, bb)]
        if all(v == 0 for v in vec):
            # monic relation of degree k
            lead = combo[k]
            inv = pow(lead, -1, p)
            return [c * inv % p for c in combo]
        basis.append(vec)
        combos.append(combo)
        cur = mat_mul_int(cur, rows)
        cur = [[v % p for v in row] for row in cur]
        k += 1
        if k > dim:
            raise RuntimeError("minimal polynomial search did not terminate")


def charpoly_int(rows):
    """Characteristic polynomial of an integer matrix (Faddeev-LeVerrier).

    Returns [c_0, ..., c_n] with det(xI - A) = sum c_i x^i, all integers.
    """
    n = len(rows)
    coeffs = [0] * (n + 1)
    coeffs[n] = 1
    M = [[0] * n for _ in range(n)]
    c = 1
    for k in range(1, n + 1):
        M = mat_mul_int(rows, M)
        for i in range(n):
            M[i][i] += c
        M_rows = mat_mul_int(rows, M)
        tr = sum(M_rows[i][i] for i in range(n))
        assert tr % k == 0
        c = -tr // k
        coeffs[n - k] = c
        M = [row[:] for row in M]
    return coeffs


def newton_slope_denominator(coeffs, p):
    """Denominator of the slope if the Newton polygon is a single segment.

    coeffs = [c_0, ..., c_n] monic with c_0 != 0.  Returns the denominator of
    v_p(c_0)/n in lowest terms when every interior point lies on or above the
    segment from (0, v_p(c_0)) to (n, 0); otherwise None.
    """
    n = len(coeffs) - 1
    if coeffs[0] == 0:
        return None
    v0 = vp(coeffs[0], p)
    for i in range(1, n):
        if coeffs[i] == 0:
            continue
        # need v_p(c_i) >= v0 * (n - i) / n
        if n * vp(coeffs[i], p) < v0 * (n - i):
            return None
    g = math.gcd(v0, n)
    return n // g


@dataclass
class FieldCertificate:
    """Evidence that F[beta] is a field of degree n with e_(L/F) = e."""

    slope_denominator: int
    residue_minpoly: list
    residue_degree: int
    residue_irreducible: bool

    @property
    def certified(self) -> bool:
        return self.residue_irreducible


class InductionDatum:
    """A pair (order, beta) with v_A(beta) = -j < 0 and derived invariants."""

    def __init__(self, order, beta, ctx, *, field_cert, normalizes):
        self.order = order
        self.beta = beta
        self.ctx = ctx
        self.p = ctx.p
        v = v_A(beta, order)
        if v >= 0:
            raise DatumInvalid(f"v_A(beta) = {v} must be negative")
        self.j = -v
        self.depth = self.j
        self.normalised_depth = Fraction(self.j, order.e)
        self.s0 = _ceil_div(self.j, order.e)
        self.field_cert = field_cert
        self.normalizes = normalizes
        bi = beta * (ctx.p ** self.s0)
        # p^s0 * beta is integral; store plain integer rows at scale 0
        bi = bi.normalize()
        if bi.scale < 0:
            raise DatumInvalid("p^ceil(j/e) * beta is not integral")
        self.beta_integral = [[v * ctx.p ** bi.scale for v in row]
                              for row in bi.entries]

    # convenience levels used by the group-side modules
    @property
    def group_level(self) -> int:
        """Digits needed so subgroup images mod p^level are faithful."""
        return self.s0 + 1

    @property
    def work_level(self) -> int:
        return 2 * self.s0 + 2

    @property
    def field_certified(self) -> bool:
        return self.field_cert is not None and self.field_cert.certified

    @classmethod
    def build(cls, order, beta, ctx=None, strict=True):
        """Validate and construct a datum.

        strict=True requires the field certificate (degree n, ramification
        index e) and the normalizer check to pass; strict=False constructs a
        flagged datum for degenerate elements so that the coprimality clause
        of the minimality test can still be evaluated on them.
        """
        if ctx is None:
            raise ValueError("a precision context is required")
        if beta.n != order.n:
            raise DatumInvalid("beta dimension does not match the order")
        v = v_A(beta, order)
        if v >= 0:
            raise DatumInvalid(f"v_A(beta) = {v} must be negative")
        j = -v
        s0 = _ceil_div(j, order.e)
        cert = _field_certificate(order, beta, ctx, j, s0)
        normalizes = _normalizer_check(order, beta, ctx)
        if strict:
            if cert is None or not cert.certified:
                if math.gcd(j, order.e) == 1:
                    raise DatumInvalid(
                        "F[beta] could not be certified as a degree-n field")
                raise DatumInvalid(
                    "beta fails the coprimality clause and F[beta] is not "
                    "certified; construct with strict=False to inspect it")
            if not normalizes:
                raise DatumInvalid("L* does not normalize the order")
        return cls(order, beta, ctx, field_cert=cert, normalizes=normalizes)


def _field_certificate(order, beta, ctx, j, s0):
    """Unified two-part certificate.

    (1) the Newton polygon of the characteristic polynomial of p^s0 * beta is
        pure of slope with denominator exactly e, forcing e | deg of every
        irreducible factor over Q_p;
    (2) the reduction of p^j beta^e has an m x m diagonal block whose minimal
        polynomial over F_p is irreducible of degree f = n/e, forcing the
        residue degree.
    Together these certify [F[beta] : F] = e * f = n.  Inconclusive data
    (for example non-pure polygons) return None.
    """
    p = ctx.p
    bi = (beta * p ** s0).normalize()
    if bi.scale < 0:
        return None
    rows = [[v * p ** bi.scale for v in row] for row in bi.entries]
    coeffs = charpoly_int(rows)
    denom = newton_slope_denominator(coeffs, p)
    if denom is None or denom != order.e:
        return None
    # residue part: gamma = p^j * beta^e must be integral of grade 0
    gamma = (beta.pow(order.e) * p ** (j * 1)).normalize()
    if gamma.zero or gamma.scale < 0:
        return None
    try:
        if v_A(gamma, order) != 0:
            return None
    except PrecisionLoss:
        return None
    grows = [[v * p ** gamma.scale % p for v in row] for row in gamma.entries]
    m = order.m
    block = [[grows[r][c] for c in range(m)] for r in range(m)]
    mp = min_poly_fp(block, p)
    f = order.n // order.e
    deg = len(mp) - 1
    irred = deg == f and poly_irreducible_fp(mp, p)
    return FieldCertificate(denom, mp, deg, irred)


def _normalizer_check(order, beta, ctx) -> bool:
    """Instance check that conjugation by beta preserves every grade."""
    try:
        binv = beta.inverse()
    except (PrecisionLoss, ZeroDivisionError):
        return False
    for t in range(order.e):
        for (r, c, power) in order.graded_positions(t):
            ent = [[0] * order.n for _ in range(order.n)]
            ent[r][c] = ctx.p ** power
            elt = MatrixApprox.from_exact(ctx, ent)
            conj = beta * elt * binv
            try:
                if v_A(conj, order) != t:
                    return False
            except PrecisionLoss:
                return False
    return True


# -- the k0 search ------------------------------------------------------------

@dataclass
class K0Result:
    value: int
    capped: bool
    witness: list | None
    nodes: int

    def __int__(self):
        return self.value


def _grade0_projection(rows, o: HereditaryOrder, p: int, pos0):
    """Coefficient vector of the grade-0 part of an integral matrix."""
    out = []
    for (r, c, power) in pos0:
        v = rows[r][c]
        out.append(v // p ** power % p)
    return tuple(out)


def _residue_span(vectors, p):
    """All F_p combinations of the given coefficient vectors, as a set."""
    span = {tuple(0 for _ in vectors[0])}
    for vec in vectors:
        new = set()
        for base in span:
            for c in range(p):
                new.add(tuple((b + c * v) % p for b, v in zip(base, vec)))
        span = new
    return span


def k0(d: InductionDatum, budget: int = 500_000) -> K0Result:
    """k0(beta, A): the largest k admitting x in A, outside B + O_L, with
    beta x - x beta in B^k.

    Exhaustive search over A / B^(j+2) organized by graded leading terms:
    a partial sum over grades 0..t is explored further only while the
    commutator condition still holds, which covers every coset of the flat
    quotient without enumerating it.  Values are capped at j + 1 (deeper
    cancellation cannot occur for alpha_beta against B^(j+2)).
    """
    o, p, j = d.order, d.p, d.j
    if d.ctx.N < j + 2:
        raise PrecisionLoss(f"k0 requires N >= j + 2 = {j + 2}, ctx has {d.ctx.N}")
    e, n, s0 = o.e, o.n, d.s0
    Bt = d.beta_integral
    pos = [o.graded_positions(t) for t in range(2 * j + 1)]
    pos0 = pos[0]

    # image of O_L in A/B: span of grade-0 projections of 1, b', b'^2, ...
    basis = []
    cur = [[1 if i == k else 0 for k in range(n)] for i in range(n)]
    for _ in range(n):
        basis.append(_grade0_projection(cur, o, p, pos0))
        cur = mat_mul_int(cur, Bt)
    kbar = _residue_span(basis, p)

    def commutator_grade(rows):
        com = mat_sub_int(mat_mul_int(Bt, rows), mat_mul_int(rows, Bt))
        return int_matrix_grade(com, o, p)   # None means exactly zero

    def valid(rows, depth):
        g = commutator_grade(rows)
        if g is None:
            return True
        # alpha(x) = p^{-s0}(Bt x - x Bt): v_A = g - e*s0
        return g - e * s0 >= depth + 1 - j

    cap_depth = 2 * j
    nodes = 0
    best_depth = -1
    best_witness = None

    def layer_elements(t):
        for combo in _coeff_tuples(len(pos[t]), p):
            if t == 0 and combo in kbar:
                continue
            ent = [[0] * n for _ in range(n)]
            for (r, c, power), coef in zip(pos[t], combo):
                ent[r][c] = coef * p ** power
            yield ent

    class _Capped(Exception):
        pass

    def dfs(rows, depth):
        nonlocal nodes, best_depth, best_witness
        nodes += 1
        if nodes > budget:
            raise BudgetExceeded(
                "k0 search budget exceeded",
                estimate=budget,
                partial=-j + best_depth + 1)
        if not valid(rows, depth):
            return
        if depth > best_depth:
            best_depth = depth
            best_witness = [row[:] for row in rows]
        if depth == cap_depth:
            raise _Capped
        for layer in layer_elements(depth + 1):
            nxt = [[rows[i][k] + layer[i][k] for k in range(n)] for i in range(n)]
            dfs(nxt, depth + 1)

    capped = False
    try:
        for x0 in layer_elements(0):
            dfs(x0, 0)
    except _Capped:
        capped = True
        best_depth = cap_depth
    value = -j + best_depth + 1
    return K0Result(value, capped, best_witness, nodes)


def _coeff_tuples(k, p):
    combo = [0] * k
    while True:
        yield tuple(combo)
        i = 0
        while i < k:
            combo[i] += 1
            if combo[i] < p:
                break
            combo[i] = 0
            i += 1
        else:
            return


def k0_flat(d: InductionDatum, budget: int = 2_000_000) -> int:
    """Independent flat enumeration of A / B^(j+2) (small data only)."""
    o, p, j = d.order, d.p, d.j
    n, e, s0 = o.n, o.e, d.s0
    Bt = d.beta_integral
    depth = j + 2
    pos = [o.graded_positions(t) for t in range(depth)]
    pos0 = pos[0]
    basis = []
    cur = [[1 if i == k else 0 for k in range(n)] for i in range(n)]
    for _ in range(n):
        basis.append(_grade0_projection(cur, o, p, pos0))
        cur = mat_mul_int(cur, Bt)
    kbar = _residue_span(basis, p)
    total = p ** sum(len(t) for t in pos)
    if total > budget:
        raise BudgetExceeded("flat k0 oracle too large", estimate=total)
    best = -j
    flat_positions = [(t, r, c, power) for t in range(depth)
                      for (r, c, power) in pos[t]]
    for combo in _coeff_tuples(len(flat_positions), p):
        proj = tuple(coef for (t, _, _, _), coef in zip(flat_positions, combo)
                     if t == 0)
        if proj in kbar:
            continue
        ent = [[0] * n for _ in range(n)]
        for (t, r, c, power), coef in zip(flat_positions, combo):
            ent[r][c] += coef * p ** power
        com = mat_sub_int(mat_mul_int(Bt, ent), mat_mul_int(ent, Bt))
        g = int_matrix_grade(com, o, p)
        val = j + 1 if g is None else min(g - e * s0, j + 1)
        best = max(best, val)
    return best


def is_minimal(d: InductionDatum) -> bool:
    """Coprimality of v_L(beta) with e plus residue generation of k_L/k_F."""
    if math.gcd(d.j, d.order.e) != 1:
        return False
    if not d.field_certified:
        raise DatumInvalid("F[beta] is not a certified degree-n field")
    cert = d.field_cert
    f = d.order.n // d.order.e
    return cert.residue_degree == f and cert.residue_irreducible
