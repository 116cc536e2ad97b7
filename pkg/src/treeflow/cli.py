"""Command line front end.

Exit codes: 0 when a result was computed (verdicts live in the output),
2 for input errors, 3 when a request exceeds the materialized truncation.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
from pathlib import Path

import numpy as np

from . import chain_oracle, dynamics, semigroup, weights
from .errors import InputError, TreeflowError, TruncationExceeded
from .lp_space import GridFunction, LpConfig, norm, random_test_function
from .serialize import emit
from .tree import TreeSpec, build_tree, find_leaf

EXIT_OK, EXIT_INPUT, EXIT_TRUNCATION = 0, 2, 3


class UsageError(InputError):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _load_json(path: str, what: str):
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise InputError(f"{path}: cannot read {what}: {exc.strerror or exc}") from None
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise InputError(f"{path}:{exc.lineno}:{exc.colno}: malformed {what}: {exc.msg}") from None


def _positive_int(text):
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer, got {text!r}")
    if v < 1:
        raise argparse.ArgumentTypeError("must be >= 1")
    return v


def _common(p: argparse.ArgumentParser, weights_needed=True):
    p.add_argument("--tree-spec", required=True)
    if weights_needed:
        p.add_argument("--weight-spec")
    p.add_argument("--p", type=float, default=2.0)
    p.add_argument("--N", type=int, default=64)
    p.add_argument("--horizon", type=_positive_int, default=4)
    p.add_argument("--tol", type=float, default=1e-9)
    p.add_argument("--tol-dyn", type=float, default=dynamics.TOL_DYN)
    p.add_argument("--M", type=float)
    p.add_argument("--w", type=float)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--output", default="-")
    p.add_argument("--format", choices=("json", "csv"), default="json")
    p.add_argument("--threads", type=_positive_int)
    p.add_argument("--quadrature", choices=("rectangle", "trapezoid"), default="rectangle")


def build_parser() -> argparse.ArgumentParser:
    root = _Parser(prog="treeflow", description="Translation semigroups on weighted trees.")
    groups = root.add_subparsers(dest="group", required=True, parser_class=_Parser)

    g = groups.add_parser("tree").add_subparsers(dest="command", required=True, parser_class=_Parser)
    _common(g.add_parser("validate"), weights_needed=False)

    g = groups.add_parser("weights").add_subparsers(dest="command", required=True, parser_class=_Parser)
    _common(g.add_parser("check"))
    _common(g.add_parser("fit"))

    g = groups.add_parser("dynamics").add_subparsers(dest="command", required=True, parser_class=_Parser)
    _common(g.add_parser("criterion"))
    w = g.add_parser("witness")
    _common(w)
    w.add_argument("--f1")
    w.add_argument("--f2")
    w.add_argument("--eps", type=float, default=0.5)
    c = g.add_parser("certificate")
    _common(c)
    c.add_argument("--i0", type=int, default=0)
    c.add_argument("--samples", type=_positive_int, default=100)

    g = groups.add_parser("semigroup").add_subparsers(dest="command", required=True, parser_class=_Parser)
    o = g.add_parser("orbit")
    _common(o)
    o.add_argument("--f")
    o.add_argument("--t-step", type=float, default=1.0)
    la = g.add_parser("laws")
    _common(la)
    la.add_argument("--samples", type=_positive_int, default=20)

    g = groups.add_parser("oracle").add_subparsers(dest="command", required=True, parser_class=_Parser)
    oc = g.add_parser("chain")
    _common(oc)
    oc.add_argument("--samples", type=_positive_int, default=20)
    return root


# ---------------------------------------------------------------------------

def _setup(args):
    if args.p < 1 or not math.isfinite(args.p):
        raise InputError("--p must lie in [1, inf)")
    cfg = LpConfig(args.p, args.N, args.quadrature, args.tol)
    spec = TreeSpec.from_mapping(_load_json(args.tree_spec, "tree spec"))
    tree = build_tree(spec)
    W = None
    if getattr(args, "weight_spec", None):
        W = weights.WeightFamily.from_mapping(tree, _load_json(args.weight_spec, "weight spec"))
    elif hasattr(args, "weight_spec"):
        W = weights.WeightFamily.constant(tree)
    return cfg, tree, W


def _threads(args):
    if args.threads:
        return args.threads
    env = os.environ.get("TREEFLOW_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise InputError(f"TREEFLOW_THREADS must be an integer, got {env!r}") from None
    return None


def _function(path, N, what):
    if path is None:
        return None
    return GridFunction.from_record(_load_json(path, what), N)


def _times(horizon, N):
    return [k / N for k in range(1, int(horizon) * N + 1)]


def _require_Mw(args):
    if args.M is None or args.w is None:
        raise InputError("this command needs --M and --w")


def cmd_tree_validate(args):
    spec = TreeSpec.from_mapping(_load_json(args.tree_spec, "tree spec"))
    tree = build_tree(spec)
    return {"kind": tree.kind, "n_edges": tree.n_edges, "min_level": tree.min_level,
            "max_level": tree.max_level, "base": tree.base, "is_chain": tree.is_chain,
            "leaf": find_leaf(tree), "spec": spec.to_mapping()}, None


def cmd_weights_check(args):
    cfg, tree, W = _setup(args)
    _require_Mw(args)
    rep = weights.check_admissibility(tree, W, args.M, args.w, _times(args.horizon, cfg.N), cfg,
                                      workers=_threads(args))
    return rep.to_record(), None


def cmd_weights_fit(args):
    cfg, tree, W = _setup(args)
    fit = weights.fit_admissibility(tree, W, args.horizon, cfg)
    if fit is None:
        return {"p": cfg.p, "horizon": args.horizon, "fit": None}, None
    return {"p": cfg.p, "horizon": args.horizon, "fit": {"M": fit[0], "w": fit[1]}}, None


def cmd_dynamics_criterion(args):
    cfg, tree, W = _setup(args)
    rep = dynamics.criterion(tree, W, args.horizon, cfg, args.tol_dyn, workers=_threads(args))
    if args.format == "csv":
        return rep, (("edge_id", "n", "value"), list(rep.csv_rows()) if rep.edges.size else [])
    return rep.to_record(), None


def cmd_dynamics_witness(args):
    cfg, tree, W = _setup(args)
    f1 = _function(args.f1, cfg.N, "f1")
    f2 = _function(args.f2, cfg.N, "f2")
    f1 = GridFunction.zero(cfg.N) if f1 is None else f1
    f2 = GridFunction.indicator([tree.base], cfg.N) if f2 is None else f2
    try:
        if tree.rooted:
            wit = dynamics.build_witness_rooted(tree, W, f1, f2, args.eps, cfg)
        else:
            wit = dynamics.build_witness_unrooted(tree, W, f1, f2, args.eps, cfg, args.M, args.w)
    except dynamics.CriterionNotMet as exc:
        return {"status": "criterion-not-met", "message": str(exc)}, None
    rec = wit.to_record()
    rec["status"] = "ok"
    return rec, None


def cmd_dynamics_certificate(args):
    cfg, tree, W = _setup(args)
    try:
        cert = dynamics.negative_certificate(tree, W, args.i0, range(1, args.horizon + 1), cfg,
                                             n_random=args.samples, seed=args.seed, tol_dyn=args.tol_dyn)
    except dynamics.CriterionMet as exc:
        return {"status": "criterion-met", "message": str(exc)}, None
    rec = cert.to_record()
    rec["status"] = "ok"
    return rec, None


def cmd_semigroup_orbit(args):
    cfg, tree, W = _setup(args)
    f = _function(args.f, cfg.N, "function")
    f = GridFunction.indicator([tree.base], cfg.N) if f is None else f
    n_steps = int(round(args.horizon / args.t_step))
    times = [k * args.t_step for k in range(n_steps + 1)]
    traj = semigroup.orbit(tree, f, times, cfg)
    if args.format == "csv":
        rows = [(repr(t), e, k, float(x)) for t, g in zip(times, traj) for e, v in g.items()
                for k, x in enumerate(v)]
        return None, (("t", "edge_id", "k", "value"), rows)
    return {"norms": [{"t": t, "norm": norm(g, W, cfg)} for t, g in zip(times, traj)]}, None


def cmd_semigroup_laws(args):
    cfg, tree, W = _setup(args)
    pool = np.flatnonzero(tree.depth >= max(0, tree.min_level + args.horizon))
    if pool.size == 0:
        raise TruncationExceeded("no edge leaves room for the requested horizon")
    dyadic = sorted({j / 2 ** k for k in range(int(math.log2(cfg.N)) + 1)
                     for j in range(0, int(args.horizon) * 2 ** k + 1)})
    worst_law = worst_lin = 0.0
    rng = np.random.default_rng(args.seed)
    for r in range(args.samples):
        f = random_test_function(tree, args.seed + r, min(8, pool.size), cfg, pool)
        g = random_test_function(tree, args.seed + 10_000 + r, min(8, pool.size), cfg, pool)
        a, b = rng.standard_normal(2)
        for t1 in dyadic:
            for t2 in dyadic:
                if t1 + t2 <= args.horizon:
                    worst_law = max(worst_law, semigroup.check_semigroup_law(tree, f, t1, t2, cfg))
        for t in dyadic:
            lhs = semigroup.translate(tree, a * f + b * g, t, cfg)
            rhs = a * semigroup.translate(tree, f, t, cfg) + b * semigroup.translate(tree, g, t, cfg)
            worst_lin = max(worst_lin, lhs.max_abs_diff(rhs))
    out = {"samples": args.samples, "horizon": args.horizon, "semigroup_law_max_error": worst_law,
           "linearity_max_error": worst_lin}
    if args.M is not None and args.w is not None:
        worst = 0.0
        for r in range(args.samples):
            f = random_test_function(tree, args.seed + r, min(8, pool.size), cfg, pool)
            worst = max(worst, semigroup.check_norm_bound(tree, W, f, dyadic, args.M, args.w, cfg))
        out["norm_bound_worst_ratio"] = worst
    return out, None


def cmd_oracle_chain(args):
    cfg, tree, W = _setup(args)
    to_line = chain_oracle.phi if tree.rooted else chain_oracle.line_phi
    iso = inter = 0.0
    times = [k / cfg.N for k in range(0, int(args.horizon) * cfg.N + 1)]
    for r in range(args.samples):
        f = random_test_function(tree, args.seed + r, min(5, tree.n_edges), cfg)
        F = to_line(tree, f, W)
        nf = norm(f, W, cfg)
        iso = max(iso, abs(F.norm(cfg.p, cfg.quadrature) - nf) / max(nf, 1e-300))
        for t in times:
            try:
                a = to_line(tree, semigroup.translate(tree, f, t, cfg), W).samples
                b = chain_oracle.classical_translate(F, t).samples
            except TruncationExceeded:
                break
            inter = max(inter, float(np.max(np.abs(a - b))))
    out = {"isometry_max_rel_error": iso, "intertwining_max_error": inter, "samples": args.samples}
    if tree.rooted:
        rep = dynamics.criterion(tree, W, args.horizon, cfg, args.tol_dyn)
        classical = chain_oracle.classical_criterion(tree, W, cfg.p, args.horizon, cfg.N, args.tol_dyn)
        out.update({"tree_verdict": rep.verdict, "classical_verdict": classical,
                    "verdicts_agree": dynamics.is_satisfied(rep) == (classical == "satisfied")})
    return out, None


COMMANDS = {
    ("tree", "validate"): cmd_tree_validate,
    ("weights", "check"): cmd_weights_check,
    ("weights", "fit"): cmd_weights_fit,
    ("dynamics", "criterion"): cmd_dynamics_criterion,
    ("dynamics", "witness"): cmd_dynamics_witness,
    ("dynamics", "certificate"): cmd_dynamics_certificate,
    ("semigroup", "orbit"): cmd_semigroup_orbit,
    ("semigroup", "laws"): cmd_semigroup_laws,
    ("oracle", "chain"): cmd_oracle_chain,
}


def run(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        record, table = COMMANDS[(args.group, args.command)](args)
        if args.format == "csv" and table is not None:
            header, rows = table
            emit(rows, "csv", args.output, header=header)
        else:
            emit(record, "json", args.output)
        return EXIT_OK
    except TruncationExceeded as exc:
        print(f"treeflow: truncation exceeded: {exc}", file=sys.stderr)
        return EXIT_TRUNCATION
    except (InputError, OSError) as exc:
        print(f"treeflow: error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except TreeflowError as exc:
        print(f"treeflow: error: {exc}", file=sys.stderr)
        return EXIT_INPUT


def main():
    sys.exit(run())


if __name__ == "__main__":
    main()
