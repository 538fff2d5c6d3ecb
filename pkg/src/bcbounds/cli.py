"""Command-line front end: ``bcb <command> [options]``.

Every command writes a comma-separated table and a JSON document carrying
the run manifest. Tables repeat the manifest as ``# key: value`` comment
lines but leave out wall-clock time, so re-running a manifest reproduces
them byte for byte. ``bcb replay RUN.json`` re-executes a stored manifest.

Exit codes: 0 success, 1 internal error, 2 bad input, 3 verification failure.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .channel import ChannelError, resolve_channel
from .optimizer import (
    BOUND_KINDS,
    SAT_TOL,
    AuxSpec,
    OptimizerConfig,
    SpecError,
    cardinality_saturation,
    compare_bounds,
    default_fan,
    private_fan,
    trace_region,
)
from .probkit import JointPmf, LabelError, random_deterministic_pmf, random_pmf
from .symmetrize import (
    CORRUPTIONS,
    MARGINAL_TOL,
    MI_TOL,
    NJ_SOURCE,
    check_forward_embedding,
    check_reverse_embedding,
    check_uv_embeddings,
    star,
    verify_marginal_identities,
    verify_mi_equalities,
)

EXIT_OK, EXIT_INTERNAL, EXIT_USAGE, EXIT_FAIL = 0, 1, 2, 3
REGION_HEADER = "w0,w1,w2,value,r0,r1,r2"


class UsageError(Exception):
    pass


def parse_weights(texts) -> list[tuple[float, float, float]]:
    """Each text holds one or more triples separated by ';', e.g. "0,1,0;1,1,1"."""
    out = []
    for text in texts:
        for chunk in text.split(";"):
            chunk = chunk.strip()
            if not chunk:
                continue
            try:
                w = tuple(float(v) for v in chunk.split(","))
            except ValueError:
                raise UsageError(f"bad weight {chunk!r}: expected three comma-separated numbers") from None
            if len(w) != 3 or any(v < 0 or not np.isfinite(v) for v in w) or not any(w):
                raise UsageError(f"bad weight {chunk!r}: need three finite nonnegative numbers, not all zero")
            out.append(w)
    if not out:
        raise UsageError("no weights given")
    return out


def parse_cards(text: str | None) -> dict[str, int]:
    """``"W=1,U=3"`` -> {"W": 1, "U": 3}."""
    if not text:
        return {}
    out = {}
    for item in text.split(","):
        name, sep, val = item.partition("=")
        try:
            if not sep:
                raise ValueError
            out[name.strip()] = int(val)
        except ValueError:
            raise UsageError(f"bad cardinality {item!r}: expected NAME=INT") from None
    return out


def parse_enlargement(text: str, base: AuxSpec) -> AuxSpec:
    """``"U=+2,W=9"``: a leading '+' adds to the base cardinality, otherwise sets it."""
    cards = {}
    for item in text.split(","):
        name, sep, val = item.partition("=")
        name = name.strip()
        if not sep or name not in base.aux_names:
            raise UsageError(f"bad enlargement {item!r} for {base.describe()}")
        try:
            cards[name] = base.card(name) + int(val[1:]) if val.startswith("+") else int(val)
        except ValueError:
            raise UsageError(f"bad enlargement {item!r}: expected NAME=INT or NAME=+INT") from None
    return base.with_cards(**cards)


def _fmt(x: float) -> str:
    return repr(float(x))


def _pmf_doc(p: JointPmf) -> dict:
    return {"names": list(p.names), "cards": list(p.cards), "mass": p.mass.tolist()}


def _spec_doc(spec: AuxSpec) -> dict:
    return {"bound": spec.bound_kind, "cards": dict(spec.cards), "x_deterministic": spec.x_deterministic}


def _config(args) -> OptimizerConfig:
    return OptimizerConfig(restarts=args.restarts, max_iters=args.max_iters, seed=args.seed,
                           gradient=args.gradient, workers=args.workers)


def _spec(kind: str, x_card: int, cards: dict, args) -> AuxSpec:
    det = None
    if getattr(args, "x_mode", None) is not None:
        det = args.x_mode == "deterministic"
    return AuxSpec.default(kind, x_card, x_deterministic=det, **cards)


class Output:
    """Collects a table plus a JSON document and writes both."""

    def __init__(self, args, header: str):
        self.args = args
        self.header = header
        self.lines: list[str] = []
        self.doc: dict = {}
        self.manifest = {
            "command": args.command,
            "argv": args.replay_argv,
            "channel": getattr(args, "channel", None),
            "seed": getattr(args, "seed", None),
            "version": __version__,
        }

    def row(self, *cells) -> None:
        buf = io.StringIO()
        csv.writer(buf, lineterminator="").writerow([c if isinstance(c, str) else _fmt(c) for c in cells])
        self.lines.append(buf.getvalue())

    def table(self) -> str:
        head = [f"# {k}: {json.dumps(v, sort_keys=True)}" for k, v in self.manifest.items()]
        return "\n".join(head + [self.header] + self.lines) + "\n"

    def write(self, wall: float) -> None:
        text = self.table()
        doc = {"manifest": dict(self.manifest, wall_clock_s=wall), **self.doc, "table": text}
        if self.args.out is None:
            sys.stdout.write(text)
            return
        out = Path(self.args.out)
        out.parent.mkdir(parents=True, exist_ok=True)
        Path(f"{out}.csv").write_text(text)
        Path(f"{out}.json").write_text(json.dumps(doc, indent=1, sort_keys=True) + "\n")


def cmd_compute_region(args, out: Output) -> int:
    ch = resolve_channel(args.channel)
    spec = _spec(args.bound, ch.x_card, parse_cards(args.cards), args)
    weights = parse_weights(args.weights) if args.weights else default_fan()
    cfg = _config(args)
    out.manifest.update(spec=_spec_doc(spec), config=_cfg_doc(cfg))
    est = trace_region(ch, spec, weights, cfg)
    records = []
    for r in est.records:
        out.row(*r.weight, r.value, *r.point)
        records.append({"weight": list(r.weight), "value": r.value, "point": list(r.point),
                        "digest": r.digest, "restarts_to_best": r.restarts_to_best, "pmf": _pmf_doc(r.pmf)})
    out.doc["records"] = records
    return EXIT_OK


def _cfg_doc(cfg: OptimizerConfig) -> dict:
    return {"restarts": cfg.restarts, "max_iters": cfg.max_iters, "step_init": cfg.step_init,
            "tol": cfg.tol, "seed": cfg.seed, "temperatures": list(cfg.temperatures),
            "gradient": cfg.gradient, "map_cutoff": cfg.map_cutoff}


def cmd_verify_symmetrization(args, out: Output) -> int:
    ch = resolve_channel(args.channel)
    sizes = {"U": 2, "V": 2, "T": 2, "W1": 2, "W2": 2}
    given = parse_cards(args.cards)
    if set(given) - set(sizes):
        raise UsageError(f"unknown auxiliaries {sorted(set(given) - set(sizes))}; use {list(sizes)}")
    sizes.update(given)
    if min(sizes.values()) < 1:
        raise UsageError("cardinalities must be positive")
    if args.seeds < 1:
        raise UsageError("--seeds must be positive")
    out.manifest.update(cards=sizes, seeds=args.seeds, corrupt=args.corrupt)
    worst: dict[str, float] = {}
    tols: dict[str, float] = {}

    def note(prefix, rep_or_value, tol):
        items = rep_or_value.deviations.items() if hasattr(rep_or_value, "deviations") else [("", rep_or_value)]
        for k, v in items:
            key = f"{prefix}{k}"
            worst[key] = max(worst.get(key, 0.0), float(v))
            tols[key] = tol

    src_cards = [sizes[n] for n in NJ_SOURCE[:-1]] + [ch.x_card]
    small = [min(sizes["U"], 2), min(sizes["V"], 2), min(sizes["T"], 2)]
    for n in range(args.seeds):
        rng = np.random.default_rng(np.random.SeedSequence([args.seed, n]))
        s = star(random_pmf(list(NJ_SOURCE), src_cards, rng), corrupt=args.corrupt)
        note("marginal:", verify_marginal_identities(s), MARGINAL_TOL)
        note("mi:", verify_mi_equalities(s, ch), MI_TOL)
        fwd = check_forward_embedding(random_pmf(list(NJ_SOURCE), src_cards, rng), ch)
        note("embed:nj_in_bound2", max(fwd.violation, 0.0), 1e-8)
        rev = check_reverse_embedding(random_deterministic_pmf(["U", "V", "W"], small, ch.x_card, rng), ch)
        note("embed:bound2_rows_in_nj", rev.rows.max_deviation if rev.passed else float("inf"), MI_TOL)
        a, b = check_uv_embeddings(random_pmf(["U", "V", "W", "X"], small + [ch.x_card], rng),
                                   random_pmf(["U", "V", "X"], small[:2] + [ch.x_card], rng), ch)
        note("embed:uvw_slice_in_uv", max(a.violation, 0.0), 1e-8)
        note("embed:uv_in_uvw_slice", max(b.violation, 0.0), 1e-8)
    failed = []
    for key in worst:
        ok = worst[key] <= tols[key]
        out.row(key, worst[key], tols[key], "pass" if ok else "FAIL")
        if not ok:
            failed.append(key)
    out.doc["worst"] = worst
    out.doc["failed"] = failed
    print(f"{len(worst) - len(failed)}/{len(worst)} checks passed over {args.seeds} fixtures", file=sys.stderr)
    return EXIT_FAIL if failed else EXIT_OK


def _check_pair(a: str, b: str, weights) -> None:
    for k in (a, b):
        if k not in BOUND_KINDS:
            raise UsageError(f"unknown bound {k!r}; choose from {', '.join(BOUND_KINDS)}")
    if "uv" in (a, b) and any(w[0] != 0 for w in weights):
        raise UsageError("the uv bound has no common message; compare it with --r0 0 or R0-free weights")


def cmd_compare_bounds(args, out: Output) -> int:
    ch = resolve_channel(args.channel)
    if args.r0 is not None and args.r0 != 0:
        raise UsageError("--r0 only supports 0 (the private-message slice)")
    if args.weights:
        weights = parse_weights(args.weights)
        if args.r0 == 0 and any(w[0] != 0 for w in weights):
            raise UsageError("--r0 0 needs weights with w0 = 0")
    else:
        weights = private_fan(9) if args.r0 == 0 else default_fan()
    _check_pair(args.bound_a, args.bound_b, weights)
    spec_a = _spec(args.bound_a, ch.x_card, parse_cards(args.cards), args)
    spec_b = _spec(args.bound_b, ch.x_card, parse_cards(args.cards_b), args)
    cfg = _config(args)
    # same kind with different alphabets: report gaps without judging them
    informative = spec_a.bound_kind == spec_b.bound_kind and spec_a != spec_b
    out.manifest.update(spec_a=_spec_doc(spec_a), spec_b=_spec_doc(spec_b), config=_cfg_doc(cfg),
                        tol=args.tol, mode="informative" if informative else "check")
    rows = compare_bounds(ch, spec_a, spec_b, weights, cfg)
    worst = 0.0
    for r in rows:
        out.row(*r.weight, r.value_a, r.value_b, r.diff)
        worst = max(worst, abs(r.diff))
    ok = informative or worst <= args.tol
    out.doc["max_abs_diff"] = worst
    out.doc["passed"] = ok
    verdict = "informative" if informative else ("pass" if ok else "FAIL")
    print(f"max |diff| = {worst:.3e} bits (tol {args.tol:g}): {verdict}", file=sys.stderr)
    return EXIT_OK if ok else EXIT_FAIL


def cmd_saturation(args, out: Output) -> int:
    ch = resolve_channel(args.channel)
    base = _spec(args.bound, ch.x_card, parse_cards(args.cards), args)
    extra = [parse_enlargement(text, base) for text in args.enlarge]
    weights = parse_weights(args.weights) if args.weights else default_fan()
    cfg = _config(args)
    out.manifest.update(base=_spec_doc(base), enlarged=[_spec_doc(e) for e in extra],
                        config=_cfg_doc(cfg), tol=args.tol)
    tab = cardinality_saturation(ch, base, extra, weights, cfg, tol=args.tol)
    for r in tab.rows:
        out.row(*r.weight, r.base, *r.enlarged, r.gap)
    out.doc["max_gap"] = tab.max_gap
    out.doc["passed"] = tab.passed
    print(f"max gap = {tab.max_gap:.3e} bits (tol {args.tol:g}): {'pass' if tab.passed else 'FAIL'}",
          file=sys.stderr)
    return EXIT_OK if tab.passed else EXIT_FAIL


def _add_channel(p, default=None):
    p.add_argument("--channel", default=default, required=default is None,
                   help="channel file, or builtin: copy, copy:N, blackwell, bsc-bc:P1,P2")


def _add_optimizer(p):
    p.add_argument("--weights", action="append",
                   help="weight triple(s) 'w0,w1,w2', ';'-separated or repeated (default: 13-direction fan)")
    p.add_argument("--restarts", type=int, default=20)
    p.add_argument("--max-iters", type=int, default=300)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--gradient", choices=("analytic", "fd"), default="analytic")
    p.add_argument("--workers", type=int, default=1, help="processes for independent restarts")
    p.add_argument("--x-mode", choices=("deterministic", "stochastic"),
                   help="force X to be a function of the auxiliaries or not (default depends on the bound)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="bcb", description="Outer bounds for two-receiver broadcast channels.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("compute-region", help="support values of one bound along a weight fan")
    _add_channel(p)
    p.add_argument("--bound", choices=BOUND_KINDS, default="uvw")
    p.add_argument("--cards", help="alphabet overrides, e.g. W=1,U=3")
    _add_optimizer(p)
    p.add_argument("--out", help="output prefix; writes PREFIX.csv and PREFIX.json (default: table to stdout)")

    p = sub.add_parser("verify-symmetrization", help="check the mod-shift construction and the embeddings")
    _add_channel(p, default="bsc-bc:0.1,0.2")
    p.add_argument("--seeds", type=int, default=100, help="number of random fixtures")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--cards", help="source alphabet sizes, e.g. U=3,T=2 (default all binary)")
    p.add_argument("--corrupt", nargs="?", const="hide_u_shift", choices=CORRUPTIONS,
                   help="build a deliberately broken construction (negative control)")
    p.add_argument("--out")

    p = sub.add_parser("compare-bounds", help="twin support values of two bounds")
    p.add_argument("bound_a", metavar="A")
    p.add_argument("bound_b", metavar="B")
    _add_channel(p)
    p.add_argument("--cards", help="alphabet overrides for A")
    p.add_argument("--cards-b", help="alphabet overrides for B")
    p.add_argument("--r0", type=float, help="0 restricts to the private-message slice (9-direction fan)")
    p.add_argument("--tol", type=float, default=SAT_TOL)
    _add_optimizer(p)
    p.add_argument("--out")

    p = sub.add_parser("saturation", help="support values for the default alphabets against enlarged ones")
    _add_channel(p)
    p.add_argument("--bound", choices=BOUND_KINDS, default="uvw")
    p.add_argument("--cards", help="base alphabet overrides")
    p.add_argument("--enlarge", action="append", default=None,
                   help="enlarged alphabet, e.g. 'U=+2,V=+2,W=+2' (repeatable; default that one)")
    p.add_argument("--tol", type=float, default=SAT_TOL)
    _add_optimizer(p)
    p.add_argument("--out")

    p = sub.add_parser("replay", help="re-run the manifest stored in a JSON output")
    p.add_argument("manifest", help="PREFIX.json written by an earlier run")
    p.add_argument("--out")
    return parser


COMMANDS = {
    "compute-region": cmd_compute_region,
    "verify-symmetrization": cmd_verify_symmetrization,
    "compare-bounds": cmd_compare_bounds,
    "saturation": cmd_saturation,
}


def _strip_out(argv: list[str]) -> list[str]:
    kept, skip = [], False
    for a in argv:
        if skip:
            skip = False
        elif a == "--out":
            skip = True
        elif not a.startswith("--out="):
            kept.append(a)
    return kept


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "replay":
            try:
                doc = json.loads(Path(args.manifest).read_text())
                stored = list(doc["manifest"]["argv"])
            except (OSError, ValueError, KeyError, TypeError) as err:
                raise UsageError(f"cannot read manifest from {args.manifest}: {err}") from None
            if args.out is not None:
                stored += ["--out", args.out]
            return main(stored)
        args.replay_argv = _strip_out(argv)
        if getattr(args, "enlarge", "unset") is None:
            args.enlarge = ["U=+2,V=+2,W=+2"]
        out = Output(args, _header(args))
        t0 = time.perf_counter()
        code = COMMANDS[args.command](args, out)
        out.write(time.perf_counter() - t0)
        return code
    except (UsageError, ChannelError, SpecError, LabelError) as err:
        print(f"bcb: error: {err}", file=sys.stderr)
        return EXIT_USAGE
    except Exception as err:  # noqa: BLE001
        print(f"bcb: internal error: {type(err).__name__}: {err}", file=sys.stderr)
        return EXIT_INTERNAL


def _header(args) -> str:
    if args.command == "compute-region":
        return REGION_HEADER
    if args.command == "compare-bounds":
        return "w0,w1,w2,value_a,value_b,diff"
    if args.command == "saturation":
        return ",".join(["w0,w1,w2,base"] + [f"enlarged{i}" for i in range(len(args.enlarge))] + ["gap"])
    return "check,worst,tol,status"


if __name__ == "__main__":
    sys.exit(main())
