"""Command-line front end.

Subcommands: gate, shine, epower, maxe, simulate.  All outputs embed a
header with the package version, the exact command line, and the seed;
identical (command, inputs, seed) produce byte-identical files.  Floats
are printed with 10 significant digits.

Exit codes: 0 ok, 2 bad input, 3 solver failure, 4 geometry failure,
5 infeasible.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .errors import (
    DegenerateNode,
    Infeasible,
    InfeasibleExactness,
    NewtonDivergence,
    NoSignChange,
    SizeOverflow,
    SolverFailure,
)
from .evariable import OutcomeEVariable, RegionEVariable, recover_evariable
from .gates import DiscreteHypothesis, gate, max_epower_exact, product_power
from .martingale import simulate
from .measures import ParticleMeasure, RNCloud
from .oracles import OracleSpec, gamma_cloud, optimal_epower
from .shine import ShineNode, ShineTree, run


def _round_floats(obj):
    if isinstance(obj, float):
        return float(f"{obj:.10g}")
    if isinstance(obj, dict):
        return {k: _round_floats(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_round_floats(v) for v in obj]
    return obj


def _meta(args_ns, seed):
    return {
        "version": __version__,
        "command": " ".join(args_ns._raw_argv),
        "seed": seed,
    }


def _write_or_print(payload: dict, out, args_ns, seed=None, force=False):
    payload = dict(payload)
    payload["meta"] = _meta(args_ns, seed)
    text = json.dumps(_round_floats(payload), sort_keys=True, indent=1) + "\n"
    if out is None:
        sys.stdout.write(text)
        return
    _write_text(Path(out), text, force)


def _write_text(path: Path, text: str, force: bool):
    if path.exists() and not force:
        raise ValueError(f"refusing to overwrite {path} without --force")
    path.write_text(text)


def _write_csv(path: Path, header_cols, rows, args_ns, seed, force):
    lines = [
        f"# evgate {__version__}",
        f"# command: {' '.join(args_ns._raw_argv)}",
        f"# seed: {seed}",
        ",".join(header_cols),
    ]
    for row in rows:
        lines.append(
            ",".join(f"{v:.10g}" if isinstance(v, float) else str(v) for v in row)
        )
    _write_text(path, "\n".join(lines) + "\n", force)


def _load_hypothesis(path: str) -> DiscreteHypothesis:
    with open(path) as fh:
        return DiscreteHypothesis.from_json(json.load(fh))


def _oracle_from_args(args) -> OracleSpec:
    name = {
        "gauss": "gauss_shift",
        "gauss_shift": "gauss_shift",
        "sym3": "gauss_sym3",
        "gauss_sym3": "gauss_sym3",
        "bernoulli": "bernoulli",
        "atom": "atom_example",
        "atom_example": "atom_example",
    }.get(args.oracle)
    if name is None:
        raise ValueError(f"unknown oracle '{args.oracle}'")
    p_list = tuple(float(x) for x in args.p.split(",")) if args.p else ()
    return OracleSpec(name=name, n_obs=args.n, p_list=p_list, q=args.q)


def _cloud_from_args(args, spec):
    if args.gamma:
        with open(args.gamma) as fh:
            return RNCloud.from_json(json.load(fh))
    if args.mc:
        if args.seed is None:
            raise ValueError("--seed is required for Monte Carlo clouds")
        return gamma_cloud(spec, "monte_carlo", n_samples=args.mc, seed=args.seed)
    return gamma_cloud(spec, "quadrature", nodes=args.nodes)


def tree_from_json(obj: dict) -> ShineTree:
    """Rebuild routing structure; leaf measures are barycenter placeholders."""
    from .measures import HalfSpace

    dim = int(obj["dim"])

    def dec(node: dict) -> ShineNode:
        children = tuple(dec(ch) for ch in node.get("children", ()))
        bary = float(node["bary_scalar"])
        mass = float(node["mass"])
        hs = HalfSpace.from_json(node["halfspace"]) if "halfspace" in node else None
        measure = ParticleMeasure(
            np.full((1, dim), bary), np.array([max(mass, 0.0)])
        )
        return ShineNode(
            measure=measure,
            bary_scalar=bary,
            mass=mass,
            halfspace=hs,
            children=children,
            frozen=bool(node.get("frozen", False)),
        )

    return ShineTree(
        root=dec(obj["root"]),
        depth=int(obj["depth"]),
        gamma_ref=RNCloud.from_json(obj["gamma"]),
    )


def cmd_gate(args) -> int:
    h = _load_hypothesis(args.hypothesis)
    if args.power > 1:
        h = product_power(h, args.power)
    mode = {
        "span": "span_membership",
        "conv": "conv_membership",
        "span-conv": "span_conv_disjoint",
        "conv-conv": "conv_conv_disjoint",
    }[args.mode]
    verdict = gate(h, mode)
    _write_or_print(verdict.to_json(), args.out, args, force=args.force)
    return 0


def cmd_shine(args) -> int:
    spec = _oracle_from_args(args) if args.oracle else None
    if spec is None and not args.gamma:
        raise ValueError("provide --oracle or --gamma")
    cloud = _cloud_from_args(args, spec)
    tree, trace = run(cloud, args.steps, stop_eps=args.stop_eps)
    if args.out:
        payload = tree.to_json()
        if spec is not None:
            payload["oracle"] = spec.to_json()
        _write_or_print(payload, args.out, args, seed=args.seed, force=args.force)
    if args.trace:
        _write_csv(
            Path(args.trace),
            ["step", "e_power", "n_leaves"],
            [(r["step"], float(r["e_power"]), r["n_leaves"]) for r in trace],
            args,
            args.seed,
            args.force,
        )
    if args.evar:
        X = recover_evariable(tree)
        payload = X.to_json()
        if spec is not None:
            payload["oracle"] = spec.to_json()
        _write_or_print(payload, args.evar, args, seed=args.seed, force=args.force)
    last = trace[-1]
    sys.stdout.write(
        f"steps={last['step']} e_power={last['e_power']:.10g} "
        f"n_leaves={last['n_leaves']}\n"
    )
    return 0


def cmd_epower(args) -> int:
    spec = _oracle_from_args(args)
    val = optimal_epower(spec)
    sys.stdout.write(f"{val:.10g}\n")
    if args.out:
        _write_or_print(
            {"oracle": spec.to_json(), "optimal_epower": val},
            args.out, args, force=args.force,
        )
    return 0


def cmd_maxe(args) -> int:
    h = _load_hypothesis(args.hypothesis)
    if args.power > 1:
        h = product_power(h, args.power)
    X, epower, lam = max_epower_exact(h)
    payload = {
        "outcomes": list(h.outcomes),
        "X": X.tolist(),
        "e_power": epower,
        "lambda": lam.tolist(),
    }
    _write_or_print(payload, args.out, args, force=args.force)
    return 0


def cmd_simulate(args) -> int:
    with open(args.evar) as fh:
        obj = json.load(fh)
    if obj.get("kind") == "outcome_vector":
        X = OutcomeEVariable(np.asarray(obj["values"]))
        model = DiscreteHypothesis.from_json(obj["hypothesis"])
    elif obj.get("kind") == "shine_regions":
        tree = tree_from_json(obj["tree"])
        X = RegionEVariable(tree, np.asarray(obj["values"]))
        if "oracle" not in obj:
            raise ValueError("shine e-variable file lacks its oracle spec")
        model = OracleSpec.from_json(obj["oracle"])
    else:
        raise ValueError("unrecognized e-variable file")
    paths = simulate(X, model, args.regime, args.horizon, args.paths, args.seed)
    rows = []
    for k, p in enumerate(paths):
        for t, (m, lm) in enumerate(zip(p.values, p.log_values)):
            rows.append((k, t, float(m), float(lm), args.regime))
    _write_csv(
        Path(args.out), ["path", "t", "M", "logM", "regime"],
        rows, args, args.seed, args.force,
    )
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="evgate",
        description="existence gates and separating-hyperplane e/p-variables",
    )
    ap.add_argument("--version", action="version", version=f"evgate {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gate", help="run an existence gate on a hypothesis file")
    g.add_argument("hypothesis")
    g.add_argument("--mode", required=True,
                   choices=["span", "conv", "span-conv", "conv-conv"])
    g.add_argument("--power", type=int, default=1)
    g.add_argument("--out")
    g.add_argument("--force", action="store_true")
    g.set_defaults(func=cmd_gate)

    s = sub.add_parser("shine", help="run the separating-hyperplane iteration")
    s.add_argument("--oracle")
    s.add_argument("--gamma", help="RN cloud JSON file")
    s.add_argument("--n", type=int, default=1, help="observations per data point")
    s.add_argument("--p", help="comma-separated null success probabilities")
    s.add_argument("--q", type=float, help="alternative success probability")
    s.add_argument("--nodes", type=int, default=256)
    s.add_argument("--mc", type=int, help="Monte Carlo cloud size (needs --seed)")
    s.add_argument("--steps", type=int, required=True)
    s.add_argument("--stop-eps", type=float, default=0.0)
    s.add_argument("--seed", type=int)
    s.add_argument("--out", help="tree JSON output")
    s.add_argument("--trace", help="trace CSV output")
    s.add_argument("--evar", help="e-variable JSON output")
    s.add_argument("--force", action="store_true")
    s.set_defaults(func=cmd_shine)

    e = sub.add_parser("epower", help="closed-form optimal e-power")
    e.add_argument("--oracle", required=True)
    e.add_argument("--n", type=int, default=1)
    e.add_argument("--p")
    e.add_argument("--q", type=float)
    e.add_argument("--out")
    e.add_argument("--force", action="store_true")
    e.set_defaults(func=cmd_epower)

    x = sub.add_parser("maxe", help="exactness-constrained e-power maximizer")
    x.add_argument("hypothesis")
    x.add_argument("--power", type=int, default=1)
    x.add_argument("--out")
    x.add_argument("--force", action="store_true")
    x.set_defaults(func=cmd_maxe)

    m = sub.add_parser("simulate", help="simulate wealth paths from an e-variable")
    m.add_argument("--evar", required=True)
    m.add_argument("--regime", required=True)
    m.add_argument("--paths", type=int, required=True)
    m.add_argument("--horizon", type=int, required=True)
    m.add_argument("--seed", type=int, required=True)
    m.add_argument("--out", required=True)
    m.add_argument("--force", action="store_true")
    m.set_defaults(func=cmd_simulate)
    return ap


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    os.environ.setdefault("EVGATE_THREADS", "1")
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
        args._raw_argv = ["evgate"] + argv
        return args.func(args)
    except (NoSignChange, DegenerateNode) as err:
        sys.stderr.write(f"geometry error: {err}\n")
        return 4
    except (SolverFailure, NewtonDivergence) as err:
        sys.stderr.write(f"solver error: {err}\n")
        return 3
    except (Infeasible, InfeasibleExactness) as err:
        sys.stderr.write(f"infeasible: {err}\n")
        return 5
    except (ValueError, KeyError, OSError, SizeOverflow, json.JSONDecodeError) as err:
        sys.stderr.write(f"input error: {err}\n")
        return 2


if __name__ == "__main__":
    sys.exit(main())
