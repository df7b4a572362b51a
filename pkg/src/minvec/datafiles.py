"""Datum and query files, canonical serialization, and report formatting.

Files are canonical JSON (sorted keys, two-space indent, trailing newline),
so parse -> serialize is byte-identical on canonical input.  Reports pair a
human-readable section with one machine-readable block delimited by marker
lines; golden tests diff only the block.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path

from .errors import DatumInvalid
from .orders import HereditaryOrder, InductionDatum, v_A
from .padic import MatrixApprox, PrecisionCtx

BLOCK_BEGIN = "--- BEGIN STRUCTURED BLOCK ---"
BLOCK_END = "--- END STRUCTURED BLOCK ---"


def canonical_dumps(obj) -> str:
    return json.dumps(obj, sort_keys=True, indent=2) + "\n"


def _frac_str(x) -> str:
    x = Fraction(x)
    return f"{x.numerator}/{x.denominator}" if x.denominator != 1 \
        else str(x.numerator)


@dataclass
class DatumSpec:
    """Parsed contents of a datum file (one supercuspidal block)."""

    p: int
    n: int
    e: int
    j: int
    beta_entries: list
    beta_scale: int

    def as_dict(self):
        return {
            "kind": "supercuspidal",
            "p": self.p,
            "n": self.n,
            "e": self.e,
            "j": self.j,
            "beta": {"scale": self.beta_scale,
                     "entries": [list(r) for r in self.beta_entries]},
        }

    def context(self, margin: int = 0) -> PrecisionCtx:
        s0 = -((-self.j) // self.e)
        need = max(self.j + 2, 2 * s0 + 2)
        return PrecisionCtx(self.p, need + margin)

    def build(self, margin: int = 0, strict: str = "auto") -> InductionDatum:
        """Construct the induction datum; strict='auto' relaxes the field
        certificate only for data already failing the coprimality clause."""
        order = HereditaryOrder(self.n, self.e)
        ctx = self.context(margin)
        beta = MatrixApprox.from_exact(ctx, self.beta_entries, self.beta_scale)
        val = v_A(beta, order)
        if val != -self.j:
            raise DatumInvalid(
                f"declared j = {self.j} but v_A(beta) = {val}")
        if strict == "always":
            return InductionDatum.build(order, beta, ctx, strict=True)
        try:
            return InductionDatum.build(order, beta, ctx, strict=True)
        except DatumInvalid:
            if strict == "auto" and math.gcd(self.j, self.e) != 1:
                return InductionDatum.build(order, beta, ctx, strict=False)
            raise


@dataclass
class ParabolicSpec:
    p: int
    blocks: list          # of DatumSpec
    inequivalent: bool

    def as_dict(self):
        return {
            "kind": "parabolic",
            "p": self.p,
            "blocks": [b.as_dict() for b in self.blocks],
            "inequivalent": self.inequivalent,
        }


@dataclass
class QuerySpec:
    n: int
    m: int
    entry_bound: int
    p: int
    c: int
    torus_generators: list

    def as_dict(self):
        return {
            "kind": "lattice-query",
            "n": self.n,
            "m": self.m,
            "entry_bound": self.entry_bound,
            "p": self.p,
            "c": self.c,
            "torus_generators": [[list(r) for r in g]
                                 for g in self.torus_generators],
        }

    def query(self):
        from .counting import LatticeQuery
        return LatticeQuery(
            self.n, self.m, self.entry_bound, self.p, self.c,
            tuple(tuple(tuple(v for v in row) for row in g)
                  for g in self.torus_generators))


def _require(cond, msg):
    if not cond:
        raise DatumInvalid(msg)


def _parse_block(obj) -> DatumSpec:
    for key in ("p", "n", "e", "j", "beta"):
        _require(key in obj, f"missing field {key!r}")
    p, n, e, j = (obj[k] for k in ("p", "n", "e", "j"))
    _require(isinstance(n, int) and n >= 1, "n must be a positive integer")
    _require(isinstance(e, int) and e >= 1, "e must be a positive integer")
    _require(n % e == 0, "e must divide n")
    _require(isinstance(j, int) and j >= 1, "j must be a positive integer")
    beta = obj["beta"]
    _require(isinstance(beta, dict) and "entries" in beta and "scale" in beta,
             "beta needs entries and scale")
    ent = beta["entries"]
    _require(len(ent) == n and all(len(r) == n for r in ent),
             "beta entries must be an n x n integer matrix")
    _require(all(isinstance(v, int) for r in ent for v in r),
             "beta entries must be integers")
    return DatumSpec(p, n, e, j, [list(r) for r in ent], int(beta["scale"]))


def parse_datum_text(text: str):
    """Parse a datum file: a DatumSpec or a ParabolicSpec."""
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as err:
        raise DatumInvalid(f"malformed datum file: {err}") from None
    _require(isinstance(obj, dict), "datum file must hold a JSON object")
    kind = obj.get("kind", "supercuspidal")
    if kind == "supercuspidal":
        return _parse_block(obj)
    if kind == "parabolic":
        _require("blocks" in obj and isinstance(obj["blocks"], list)
                 and obj["blocks"], "parabolic datum needs blocks")
        blocks = [_parse_block(b) for b in obj["blocks"]]
        p = obj.get("p", blocks[0].p)
        _require(all(b.p == p for b in blocks), "blocks must share p")
        return ParabolicSpec(p, blocks, bool(obj.get("inequivalent", False)))
    raise DatumInvalid(f"unknown datum kind {kind!r}")


def parse_query_text(text: str) -> QuerySpec:
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as err:
        raise DatumInvalid(f"malformed query file: {err}") from None
    _require(isinstance(obj, dict), "query file must hold a JSON object")
    _require(obj.get("kind", "lattice-query") == "lattice-query",
             "not a lattice query file")
    for key in ("n", "m", "entry_bound", "p", "c"):
        _require(key in obj, f"missing field {key!r}")
    gens = obj.get("torus_generators", [])
    return QuerySpec(obj["n"], obj["m"], obj["entry_bound"], obj["p"],
                     obj["c"], [[list(r) for r in g] for g in gens])


def load_datum(path):
    return parse_datum_text(Path(path).read_text())


def load_query(path):
    return parse_query_text(Path(path).read_text())


def serialize(spec) -> str:
    return canonical_dumps(spec.as_dict())


def roundtrip_ok(path) -> bool:
    """Bit-exact round trip: parse then reserialize reproduces the bytes."""
    text = Path(path).read_text()
    spec = parse_datum_text(text) if json.loads(text).get("kind") != \
        "lattice-query" else parse_query_text(text)
    return serialize(spec) == text


# ---------------------------------------------------------------------------
# reports
# ---------------------------------------------------------------------------

def render_report(title: str, human_lines, block: dict) -> str:
    out = [f"minvec report: {title}"]
    out.extend(human_lines)
    out.append("")
    out.append(BLOCK_BEGIN)
    out.append(canonical_dumps(block).rstrip("\n"))
    out.append(BLOCK_END)
    out.append("")
    return "\n".join(out)


def extract_block(text: str) -> dict:
    lines = text.splitlines()
    try:
        lo = lines.index(BLOCK_BEGIN)
        hi = lines.index(BLOCK_END)
    except ValueError:
        raise ValueError("report has no structured block") from None
    return json.loads("\n".join(lines[lo + 1:hi]))
