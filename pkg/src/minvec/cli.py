"""Batch command-line front end.

Subcommands: order, verify, count, exponent, report-all.
Exit codes: 0 all checks pass, 1 a verified identity is falsified,
2 usage or parse error, 3 construction failure, 4 budget exceeded.
Identical inputs and seed produce byte-identical report files; wall-clock
timings appear only in the human-readable section, never in the structured
block.
"""

from __future__ import annotations

import argparse
import sys
import time
from pathlib import Path

from . import counting, datafiles, groups, testfunc
from .errors import (BudgetExceeded, ConstructionFailure, DatumInvalid,
                     MinvecError, PrecisionLoss)
from .orders import approximation_report, is_minimal, k0

EXIT_PASS = 0
EXIT_FALSIFIED = 1
EXIT_USAGE = 2
EXIT_CONSTRUCTION = 3
EXIT_BUDGET = 4

ALL_CHECKS = ("character", "heisenberg", "intertwine", "omega",
              "convolution", "concentration")


def _frac(x) -> str:
    return datafiles._frac_str(x)


def _emit(text: str, out_path):
    if out_path:
        Path(out_path).write_text(text)
    else:
        sys.stdout.write(text)


def _load_datum(path):
    p = Path(path)
    if not p.is_file():
        raise DatumInvalid(f"no such file: {path}")
    return datafiles.load_datum(p)


# ---------------------------------------------------------------------------
# order
# ---------------------------------------------------------------------------

def cmd_order(args) -> int:
    spec = _load_datum(args.datum)
    specs = spec.blocks if isinstance(spec, datafiles.ParabolicSpec) else [spec]
    human = [f"datum: {args.datum}"]
    blocks = []
    falsified = False
    for i, s in enumerate(specs):
        t0 = time.perf_counter()
        d = s.build(margin=args.precision_margin)
        res = k0(d, budget=args.budget)
        try:
            minimal = is_minimal(d)
        except DatumInvalid:
            minimal = False
        approx_ok = all(
            approximation_report(d.order, idx, d.ctx).holds
            for idx in range(-2 * d.order.e, 2 * d.order.e + 1))
        falsified |= not approx_ok
        ms = (time.perf_counter() - t0) * 1000
        human.append(
            f"block {i}: p={s.p} n={s.n} e={s.e} j={s.j}  "
            f"v_A(beta) = {-d.j}, k0 = {res.value}"
            f"{' (capped)' if res.capped else ''}, minimal: "
            f"{str(minimal).lower()}, radical approximation: "
            f"{'ok' if approx_ok else 'FAIL'}  [{ms:.0f} ms]")
        blocks.append({
            "p": s.p, "n": s.n, "e": s.e, "j": s.j,
            "v_A_beta": -d.j,
            "k0": res.value,
            "k0_capped": res.capped,
            "k0_nodes": res.nodes,
            "minimal": minimal,
            "normalised_depth": _frac(d.normalised_depth),
            "approximation_ok": approx_ok,
            "normalizer_ok": d.normalizes,
            "field_certified": d.field_certified,
        })
    block = {"command": "order", "input": Path(args.datum).name,
             "blocks": blocks}
    _emit(datafiles.render_report("order", human, block), args.out)
    return EXIT_FALSIFIED if falsified else EXIT_PASS


# ---------------------------------------------------------------------------
# verify
# ---------------------------------------------------------------------------

def _prepare(spec, margin):
    if isinstance(spec, datafiles.ParabolicSpec):
        data = [b.build(margin=margin, strict="always") for b in spec.blocks]
        blocks = [groups.prepare_block(d) for d in data]
        kr = groups.build_Kpi(blocks, inequivalent_assertion=spec.inequivalent)
        return blocks, kr
    d = spec.build(margin=margin, strict="always")
    if not is_minimal(d):
        raise DatumInvalid("verification requires a minimal datum")
    blk = groups.prepare_block(d)
    kr = groups.build_Kpi([blk])
    return [blk], kr


def _check_character(blocks, kr, args):
    out = []
    for i, blk in enumerate(blocks):
        sc = blk.simple
        ok, witness, _ = groups.verify_character(
            blk.bundle.h1, sc.theta.nums, sc.theta.denom)
        out.append({
            "block": i,
            "H1_size": blk.bundle.h1.size,
            "extensions": sc.extension_count,
            "denominator": sc.denom,
            "multiplicative": ok,
            "trivial_on": f"U_A({sc.trivial_level})",
        })
        if not ok:
            return "FAIL", out, f"theta not multiplicative at {witness}"
    return "PASS", out, None


def _check_heisenberg(blocks, kr, args):
    out = []
    for i, blk in enumerate(blocks):
        pol, ind = blk.pol, blk.induced
        entry = {
            "block": i,
            "trivial": pol.trivial,
            "dim_V": pol.dim,
            "dim_eta": ind.dim,
            "inner_product": _frac(ind.inner_product),
            "restriction_is_multiple": ind.restriction_is_multiple,
            "restriction_inner": _frac(ind.restriction_inner),
            "tilde_extensions": ind.tilde_count,
        }
        if pol.trivial:
            entry["note"] = pol.reason
        else:
            entry["pairing"] = pol.pairing
            entry["isotropic"] = pol.isotropic
            entry["raw_pairing_well_defined"] = pol.raw_pairing_well_defined
            entry["raw_pairing_alternating"] = pol.raw_pairing_alternating
        out.append(entry)
        bad = (ind.inner_product != 1 or not ind.restriction_is_multiple
               or ind.restriction_inner != ind.dim)
        if bad:
            return "FAIL", out, f"Heisenberg law failed on block {i}"
    return "PASS", out, None


def _check_intertwine(blocks, kr, args):
    out = []
    for i, blk in enumerate(blocks):
        try:
            rep = groups.intertwining_dichotomy(
                blk.datum, blk.bundle, blk.simple.theta, budget=args.budget)
            out.append({
                "block": i,
                "mode": "sweep",
                "K_size": rep.total,
                "intertwining": rep.intertwining,
                "JcapK_size": rep.jcapk_size,
                "dichotomy": rep.agree,
            })
            if not rep.agree:
                return "FAIL", out, \
                    f"intertwining dichotomy failed: {rep.witness.tolist()}"
        except BudgetExceeded:
            rep = groups.intertwining_spot(
                blk.datum, blk.bundle, blk.simple.theta, seed=args.seed)
            out.append({
                "block": i,
                "mode": "spot",
                "members_checked": rep.members_checked,
                "nonmembers_checked": rep.nonmembers_checked,
                "dichotomy": rep.agree,
            })
            if not rep.agree:
                return "FAIL", out, \
                    f"spot intertwining failed: {rep.witness.tolist()}"
    return "PASS", out, None


def _check_omega(blocks, kr, args):
    tf = testfunc.make_omega(kr)
    import numpy as np
    rng = np.random.default_rng(args.seed)
    n = kr.n
    ident = np.eye(n, dtype=np.int64)
    at_one = tf.exponent(ident)
    outside = 0
    mod = kr.kpi.modulus
    from .padic import _int_det
    while outside < 20:
        cand = rng.integers(0, mod, size=(n, n))
        if _int_det([[int(v) for v in r] for r in cand]) % kr.kpi.p == 0:
            continue
        if tf.exponent(cand) is None:
            outside += 1
        # members are fine too; only zero values off the support matter
    section = {
        "omega_at_identity": _frac(at_one) if at_one is not None else None,
        "off_support_zeros_sampled": outside,
        "support_size": kr.kpi.size,
    }
    ok = at_one == 0
    return ("PASS" if ok else "FAIL"), section, \
        (None if ok else "omega(1) != 1")


def _check_convolution(blocks, kr, args):
    tf = testfunc.make_omega(kr)
    vol = testfunc.volume(kr)
    conv = testfunc.convolve_check(tf, seed=args.seed)
    section = {
        "d_pi": _frac(vol.d_pi),
        "mode": conv.mode,
        "support_points": conv.support_points_checked,
        "support_ok": conv.support_ok,
        "closure_certified": conv.closure_certified,
        "offsupport_points": conv.offsupport_points_checked,
        "offsupport_ok": conv.offsupport_ok,
        "scalar_action": _frac(conv.scalar_action),
        "scalar_action_ok": conv.scalar_action_ok,
        "volume_bounded": vol.bounded,
        "target_exponent": _frac(vol.target_exponent),
        "v_p_inverse_volume": vol.valuation_of_inverse,
    }
    ok = (conv.support_ok and conv.offsupport_ok and conv.scalar_action_ok
          and vol.bounded)
    msg = None
    if not ok:
        wit = None if conv.witness is None else \
            [list(map(int, r)) for r in conv.witness]
        msg = f"convolution identity falsified, witness {wit}"
    return ("PASS" if ok else "FAIL"), section, msg


def _check_concentration(blocks, kr, args):
    tf = testfunc.make_omega(kr)
    conc = testfunc.concentration_check(tf, seed=args.seed)
    section = {
        "cfrak": conc.cfrak,
        "trivial_modulus": conc.trivial,
        "points": conc.points_checked,
        "all_found": conc.all_found,
        "worst_candidates_scanned": conc.worst_candidates_scanned,
    }
    return ("PASS" if conc.all_found else "FAIL"), section, \
        (None if conc.all_found else "concentration witness missing")


_CHECK_FNS = {
    "character": _check_character,
    "heisenberg": _check_heisenberg,
    "intertwine": _check_intertwine,
    "omega": _check_omega,
    "convolution": _check_convolution,
    "concentration": _check_concentration,
}


def cmd_verify(args) -> int:
    if args.checks is not None:
        names = [c for c in args.checks.split(",") if c]
        if not names:
            raise DatumInvalid("empty check set")
        for c in names:
            if c not in ALL_CHECKS:
                raise DatumInvalid(f"unknown check {c!r}")
    else:
        names = list(ALL_CHECKS)
    spec = _load_datum(args.datum)
    blocks, kr = _prepare(spec, args.precision_margin)
    dr = testfunc.depth_report(kr)
    human = [f"datum: {args.datum}", f"checks: {','.join(names)}",
             f"depth: d = {dr.depth}, c = {_frac(dr.c)}, cfrak = {dr.cfrak}, "
             f"conductor exponent = {_frac(dr.conductor_exponent)}, "
             f"d_pi = {_frac(dr.d_pi)}"]
    sections = {}
    verdicts = {}
    failure_msg = None
    for name in names:
        t0 = time.perf_counter()
        verdict, section, msg = _CHECK_FNS[name](blocks, kr, args)
        ms = (time.perf_counter() - t0) * 1000
        sections[name] = {"verdict": verdict, "detail": section}
        verdicts[name] = verdict
        extra = ""
        if name == "convolution" and "d_pi" in section:
            extra = f" (d_pi = {section['d_pi']})"
        human.append(f"{name}: {verdict}{extra}  [{ms:.0f} ms]")
        if verdict == "FAIL" and failure_msg is None:
            failure_msg = msg
    block = {"command": "verify", "input": Path(args.datum).name,
             "checks": sections, "seed": args.seed,
             "depth_report": {
                 "d": dr.depth,
                 "c": _frac(dr.c),
                 "cfrak": dr.cfrak,
                 "conductor_exponent": _frac(dr.conductor_exponent),
                 "d_pi": _frac(dr.d_pi),
                 "cfrak_band_ok": dr.cfrak_band_ok,
                 "volume_bounded": dr.volume_bounded,
             }}
    _emit(datafiles.render_report("verify", human, block), args.out)
    if any(v == "FAIL" for v in verdicts.values()):
        sys.stderr.write(f"FALSIFIED: {failure_msg}\n")
        return EXIT_FALSIFIED
    if any(v == "SKIPPED" for v in verdicts.values()):
        return EXIT_BUDGET
    return EXIT_PASS


# ---------------------------------------------------------------------------
# count / exponent
# ---------------------------------------------------------------------------

def cmd_count(args) -> int:
    path = Path(args.query)
    if not path.is_file():
        raise DatumInvalid(f"no such file: {args.query}")
    qspec = datafiles.load_query(path)
    rep = counting.enumerate_S(qspec.query(), budget=args.budget)
    human = [
        f"query: {args.query}",
        f"|S| = {rep.count} (scanned {rep.candidates_scanned} candidates, "
        f"{rep.elapsed_ms:.0f} ms)",
        f"abelian: {rep.abelian}; regime holds: {rep.regime_ok} "
        f"(threshold {rep.regime_threshold} vs p^c = "
        f"{rep.query.p ** rep.query.cf})",
        f"tau image (unit classes): {rep.tau_image_size}, measured fiber: "
        f"{rep.fiber_measured}, partition bound: {rep.partition_bound}",
    ]
    block = {
        "command": "count",
        "input": Path(args.query).name,
        "count": rep.count,
        "matches": [[list(r) for r in m] for m in rep.matches],
        "abelian": rep.abelian,
        "commute_witness": None if rep.commute_witness is None else
            [[list(r) for r in m] for m in rep.commute_witness],
        "regime_ok": rep.regime_ok,
        "regime_threshold": rep.regime_threshold,
        "tau_image_size": rep.tau_image_size,
        "fiber_measured": rep.fiber_measured,
        "partition_bound": rep.partition_bound,
        "bound_ok": rep.bound_ok,
    }
    _emit(datafiles.render_report("count", human, block), args.out)
    if rep.regime_ok and (not rep.abelian or not rep.bound_ok):
        sys.stderr.write("FALSIFIED: abelian-regime law failed\n")
        return EXIT_FALSIFIED
    return EXIT_PASS


def cmd_exponent(args) -> int:
    if args.n < 2:
        raise DatumInvalid("n >= 2 required")
    rep = counting.amplifier_exponent(args.n)
    human = [
        f"n = {args.n}",
        f"sup-norm exponent: {_frac(rep.bound_exponent)}",
        f"amplifier length L0 = p^(c_frak * {_frac(rep.amplifier_exponent_coeff)})",
        f"sign audit: assembled {_frac(rep.assembled)} "
        f"(matches: {rep.assembled_matches}); penultimate display "
        f"{_frac(rep.penultimate)} (matches: {rep.penultimate_matches}); "
        f"flipped variant {_frac(rep.flipped_variant)} "
        f"(matches: {rep.flipped_matches})",
    ]
    block = {
        "command": "exponent",
        "n": args.n,
        "bound_exponent": _frac(rep.bound_exponent),
        "L0_exponent_coefficient": _frac(rep.amplifier_exponent_coeff),
        "d_pi_exponent": _frac(rep.d_pi_exponent),
        "L0_exponent": _frac(rep.l0_exponent),
        "assembled": _frac(rep.assembled),
        "assembled_matches": rep.assembled_matches,
        "penultimate": _frac(rep.penultimate),
        "penultimate_matches": rep.penultimate_matches,
        "flipped_variant": _frac(rep.flipped_variant),
        "flipped_matches": rep.flipped_matches,
    }
    _emit(datafiles.render_report("exponent", human, block), args.out)
    return EXIT_PASS


# ---------------------------------------------------------------------------
# report-all
# ---------------------------------------------------------------------------

def cmd_report_all(args) -> int:
    data_dir = Path(args.data_dir)
    if not data_dir.is_dir():
        raise DatumInvalid(f"no such directory: {args.data_dir}")
    pieces = []
    codes = []

    class _Sub:
        pass

    for path in sorted(data_dir.glob("*.json")):
        import json as _json
        kind = _json.loads(path.read_text()).get("kind", "supercuspidal")
        sub = _Sub()
        sub.__dict__.update(vars(args))
        sub.out = None
        if kind in ("supercuspidal", "parabolic"):
            sub.datum = str(path)
            sub.checks = None
            buf, code = _capture(cmd_order, sub)
            pieces.append(buf)
            codes.append(code)
            if _verifiable(path, args.precision_margin):
                buf, code = _capture(cmd_verify, sub)
                pieces.append(buf)
                codes.append(code)
            else:
                pieces.append(f"verify {path.name}: not applicable "
                              "(datum is not minimal; see the order report)\n")
        elif kind == "lattice-query":
            sub.query = str(path)
            buf, code = _capture(cmd_count, sub)
            pieces.append(buf)
            codes.append(code)
    for n in (2, 3):
        sub = _Sub()
        sub.__dict__.update(vars(args))
        sub.out = None
        sub.n = n
        buf, code = _capture(cmd_exponent, sub)
        pieces.append(buf)
        codes.append(code)
    text = "\n".join(pieces)
    _emit(text, args.out)
    if EXIT_FALSIFIED in codes:
        return EXIT_FALSIFIED
    if EXIT_CONSTRUCTION in codes:
        return EXIT_CONSTRUCTION
    if EXIT_BUDGET in codes:
        return EXIT_BUDGET
    return EXIT_PASS


def _verifiable(path, margin) -> bool:
    """Whether the verification preconditions (minimal data) hold."""
    try:
        spec = datafiles.load_datum(path)
        specs = spec.blocks if isinstance(spec, datafiles.ParabolicSpec) \
            else [spec]
        return all(is_minimal(s.build(margin=margin, strict="always"))
                   for s in specs)
    except MinvecError:
        return False


def _capture(fn, args):
    import io
    from contextlib import redirect_stdout
    buf = io.StringIO()
    with redirect_stdout(buf):
        try:
            code = fn(args)
        except BudgetExceeded as err:
            buf.write(f"SKIPPED (budget): {err}\n")
            code = EXIT_BUDGET
        except (ConstructionFailure, PrecisionLoss) as err:
            buf.write(f"CONSTRUCTION FAILURE: {err}\n")
            code = EXIT_CONSTRUCTION
    return buf.getvalue(), code


# ---------------------------------------------------------------------------
# entry point
# ---------------------------------------------------------------------------

def _common_flags():
    """Shared flags, accepted both before and after the subcommand."""
    common = argparse.ArgumentParser(add_help=False)
    # SUPPRESS so a subcommand parse never clobbers values given up front
    common.add_argument("--budget", type=int, default=argparse.SUPPRESS,
                        help="enumeration/search budget (elements)")
    common.add_argument("--seed", type=int, default=argparse.SUPPRESS,
                        help="seed for sampled checks")
    common.add_argument("--precision-margin", type=int,
                        default=argparse.SUPPRESS,
                        help="extra p-adic digits beyond the default")
    common.add_argument("--out", type=str, default=argparse.SUPPRESS,
                        help="write the report to a file instead of stdout")
    return common


_FLAG_DEFAULTS = {"budget": 5_000_000, "seed": 0, "precision_margin": 0,
                  "out": None}


def build_parser() -> argparse.ArgumentParser:
    common = _common_flags()
    ap = argparse.ArgumentParser(
        prog="minvec", parents=[common],
        description="exact verification of minimal-vector test functions")
    sub = ap.add_subparsers(dest="command", required=True)

    p_order = sub.add_parser("order", parents=[common],
                             help="order/minimality invariants")
    p_order.add_argument("datum")
    p_order.set_defaults(fn=cmd_order)

    p_verify = sub.add_parser("verify", parents=[common],
                              help="character and test-function laws")
    p_verify.add_argument("datum")
    p_verify.add_argument("--checks", type=str, default=None,
                          help=f"comma-separated subset of "
                               f"{','.join(ALL_CHECKS)}")
    p_verify.set_defaults(fn=cmd_verify)

    p_count = sub.add_parser("count", parents=[common],
                             help="lattice point counting")
    p_count.add_argument("query")
    p_count.set_defaults(fn=cmd_count)

    p_exp = sub.add_parser("exponent", parents=[common],
                           help="exact sup-norm exponent")
    p_exp.add_argument("n", type=int)
    p_exp.set_defaults(fn=cmd_exponent)

    p_all = sub.add_parser("report-all", parents=[common],
                           help="run everything in a data dir")
    p_all.add_argument("data_dir")
    p_all.set_defaults(fn=cmd_report_all)
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as err:
        return EXIT_USAGE if err.code not in (0, None) else 0
    for key, value in _FLAG_DEFAULTS.items():
        if not hasattr(args, key):
            setattr(args, key, value)
    try:
        return args.fn(args)
    except DatumInvalid as err:
        sys.stderr.write(f"error: {err}\n")
        return EXIT_USAGE
    except BudgetExceeded as err:
        sys.stderr.write(f"budget exceeded: {err}\n")
        return EXIT_BUDGET
    except (ConstructionFailure, PrecisionLoss) as err:
        sys.stderr.write(f"construction failure: {err}\n")
        return EXIT_CONSTRUCTION
    except MinvecError as err:
        sys.stderr.write(f"error: {err}\n")
        return EXIT_CONSTRUCTION


if __name__ == "__main__":
    sys.exit(main())
