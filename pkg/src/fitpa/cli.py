"""Command-line front end.

Every command takes a mandatory ``--seed`` and writes its table to ``--out``
(or stdout) plus a ``<out>.meta.json`` sidecar holding the resolved
configuration. Floats are written in shortest round-trip form (``repr``).
Exit codes: 0 ok, 2 usage or invalid input, 3 runtime or I/O failure.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import sys
from pathlib import Path
from typing import Any, Sequence

import numpy as np

from . import __version__
from ._rng import split
from .errors import ValidationError
from .experiments import (
    DEFAULT_ROOTS_PER_TREE,
    STREAM_GRAPH,
    coupling_table,
    degree_experiment,
    diagnose_table,
    local_limit_table,
    moment_table,
    mori_table,
)
from .fitness import FitnessModel, make_fitness_model, sample_fitness_sequence
from .generators import (
    Embellishment,
    generate_embellished_urn_tree,
    generate_sequential,
    generate_urn_tree,
)
from .pointtree import DEFAULT_NODE_CAP

EXIT_OK, EXIT_USAGE, EXIT_RUNTIME = 0, 2, 3
DEFAULT_MODEL = '{"kind": "point_mass", "params": {"value": 1.0}, "x1": 1.0}'


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # argparse would exit 2 itself; keep the message uniform
        raise _UsageError(message)


# ------------------------------------------------------------ argument parsing


def _int(text: str, lowest: int) -> int:
    try:
        f = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}") from None
    if f != int(f) or f < lowest:
        raise argparse.ArgumentTypeError(f"expected an integer >= {lowest}, got {text!r}")
    return int(f)


def _positive_int(text: str) -> int:
    return _int(text, 1)


def _nonneg_int(text: str) -> int:
    return _int(text, 0)


def _grid(text: str) -> list[int]:
    return [_positive_int(t) for t in text.replace(",", " ").split()]


def _build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="fitpa", description="Preferential attachment trees with additive fitness.")
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(sp, n_kind: str | None):
        sp.add_argument("--model", default=DEFAULT_MODEL, help="fitness model as JSON text or @path")
        sp.add_argument("--seed", type=int, required=True)
        sp.add_argument("--out", help="output path; stdout when omitted")
        sp.add_argument("--format", choices=("csv", "json"), default="csv")
        if n_kind == "n":
            sp.add_argument("--n", type=_positive_int, required=True)
        elif n_kind == "grid":
            sp.add_argument("--n-grid", type=_grid, required=True, help="comma separated, strictly increasing")

    def parallel(sp):
        sp.add_argument("--workers", type=_positive_int, default=1)

    g = sub.add_parser("generate", help="sample one tree and write its edge list")
    common(g, "n")
    g.add_argument("--gen", choices=("sequential", "urn", "embellished"), default="urn")
    g.add_argument("--embellishment", help="JSON file with 'probed' and 'edges'")

    ll = sub.add_parser("local-limit", help="ball-shape TV against the limit tree")
    common(ll, "grid")
    ll.add_argument("--r", type=_nonneg_int, required=True)
    ll.add_argument("--reps", type=_positive_int, required=True)
    ll.add_argument("--gen", choices=("sequential", "urn"), default="urn")
    ll.add_argument("--roots-per-tree", type=_positive_int, default=DEFAULT_ROOTS_PER_TREE)
    ll.add_argument("--node-cap", type=_positive_int, default=DEFAULT_NODE_CAP)
    parallel(ll)

    d = sub.add_parser("degree", help="root and ancestor degree histograms")
    common(d, "n")
    d.add_argument("--reps", type=_positive_int, required=True)
    d.add_argument("--gen", choices=("sequential", "urn"), default="urn")
    d.add_argument("--roots-per-tree", type=_positive_int, default=DEFAULT_ROOTS_PER_TREE)
    d.add_argument("--k-max", type=_positive_int, default=50)
    parallel(d)

    c = sub.add_parser("couple", help="coupling failure rates")
    common(c, "grid")
    c.add_argument("--reps", type=_positive_int, required=True)
    c.add_argument("--probe", choices=("root", "typeL", "typeR"), default="root")
    parallel(c)

    m = sub.add_parser("moments", help="urn partial-product moments or conditional in-degree means")
    common(m, "n")
    m.add_argument("--table", choices=("moments", "mori"), default="moments")
    m.add_argument("--p-max", type=_positive_int, default=3)
    m.add_argument("--reps", type=_nonneg_int, default=0, help="Monte Carlo replicates (0 = exact only)")
    m.add_argument("--k", type=_grid, help="vertex labels")
    m.add_argument("--l", type=_positive_int, help="conditioning time (mori table)")
    m.add_argument("--m", type=_positive_int, help="target time (mori table)")

    dg = sub.add_parser("diagnose", help="concentration diagnostics")
    common(dg, "grid")
    dg.add_argument("--reps", type=_positive_int, required=True)
    dg.add_argument("--alpha", type=float, default=2.0 / 3.0)
    return p


def _load_model(text: str) -> FitnessModel:
    if text.startswith("@"):
        text = Path(text[1:]).read_text()
    try:
        spec = json.loads(text)
    except json.JSONDecodeError as e:
        raise ValidationError(f"not valid JSON ({e.msg})", "model") from None
    if not isinstance(spec, dict):
        raise ValidationError("expected a JSON object", "model")
    return make_fitness_model(spec)


# ------------------------------------------------------------ output


def _csv(rows: list[dict], header_lines: Sequence[str] = ()) -> str:
    buf = io.StringIO()
    for line in header_lines:
        buf.write(f"# {line}\n")
    if rows:
        w = csv.DictWriter(buf, fieldnames=list(rows[0]), lineterminator="\n")
        w.writeheader()
        w.writerows(rows)
    return buf.getvalue()


def _json(obj: Any) -> str:
    return json.dumps(obj, sort_keys=True, indent=2, allow_nan=True) + "\n"


def _emit(text: str, out: str | None, config: dict) -> None:
    if out is None:
        sys.stdout.write(text)
        return
    path = Path(out)
    path.write_text(text)
    Path(f"{out}.meta.json").write_text(_json(config))


def _config(args: argparse.Namespace, model: FitnessModel) -> dict:
    cfg = {k: v for k, v in vars(args).items() if k not in ("out", "workers", "model")}
    cfg["model"] = model.to_dict()
    cfg["version"] = __version__
    return cfg


def _flatten(d: dict, prefix: str = "") -> dict:
    out = {}
    for k, v in d.items():
        if isinstance(v, dict):
            out.update(_flatten(v, f"{prefix}{k}."))
        else:
            out[prefix + k] = v
    return out


# ------------------------------------------------------------ commands


def cmd_generate(args, model) -> tuple[str, dict]:
    cfg = _config(args, model)
    rng = split(args.seed, STREAM_GRAPH, args.n, 0)
    seq = sample_fitness_sequence(model, args.n, rng)
    if args.gen == "embellished":
        if not args.embellishment:
            raise _UsageError("--gen embellished needs --embellishment")
        try:
            spec = json.loads(Path(args.embellishment).read_text())
        except json.JSONDecodeError as e:
            raise ValidationError(f"not valid JSON ({e.msg})", "embellishment") from None
        emb = Embellishment.from_dict(spec)
        tree = generate_embellished_urn_tree(seq, emb, rng)
        cfg["embellishment"] = emb.to_dict()
    elif args.gen == "urn":
        tree = generate_urn_tree(seq, rng)[0]
    else:
        tree = generate_sequential(seq, rng)
    text = tree.to_edge_list() if args.format == "csv" else _json(tree.to_dict())
    return text, cfg


def cmd_local_limit(args, model) -> tuple[str, dict]:
    rows = local_limit_table(
        model, args.n_grid, args.r, args.reps, args.seed, args.roots_per_tree, args.node_cap, args.gen, args.workers
    )
    data = [r.to_dict() for r in rows]
    return (_csv(data) if args.format == "csv" else _json(data)), _config(args, model)


def cmd_degree(args, model) -> tuple[str, dict]:
    res = degree_experiment(model, args.n, args.reps, args.seed, args.roots_per_tree, args.gen, args.k_max, args.workers)
    rows = res.rows()[: args.k_max]
    keys = ("empirical_root", "pmf_root", "empirical_ancestor", "pmf_ancestor")
    rest = {"k": "rest"}
    for key in keys:
        rest[key] = max(0.0, 1.0 - float(np.sum([r[key] for r in rows])))
    rows.append(rest)
    summary = {"n": args.n, "replicates": args.reps, "tv_root": res.tv_root, "tv_ancestor": res.tv_ancestor}
    if args.format == "csv":
        text = _csv(rows, [" ".join(f"{k}={v!r}" for k, v in summary.items())])
    else:
        text = _json({**summary, "rows": rows})
    return text, _config(args, model)


def cmd_couple(args, model) -> tuple[str, dict]:
    reports = coupling_table(model, args.n_grid, args.reps, args.seed, args.probe, workers=args.workers)
    data = [_flatten(r.to_dict()) for r in reports]
    return (_csv(data) if args.format == "csv" else _json(data)), _config(args, model)


def cmd_moments(args, model) -> tuple[str, dict]:
    if args.table == "moments":
        rows = moment_table(model, args.n, args.p_max, args.reps, args.seed, args.k)
    else:
        if args.l is None or args.m is None:
            raise _UsageError("--table mori needs --l and --m")
        rows = mori_table(model, args.n, args.l, args.m, args.seed, args.k)
    return (_csv(rows) if args.format == "csv" else _json(rows)), _config(args, model)


def cmd_diagnose(args, model) -> tuple[str, dict]:
    rows = diagnose_table(model, args.n_grid, args.reps, args.seed, args.alpha)
    return (_csv(rows) if args.format == "csv" else _json(rows)), _config(args, model)


COMMANDS = {
    "generate": cmd_generate,
    "local-limit": cmd_local_limit,
    "degree": cmd_degree,
    "couple": cmd_couple,
    "moments": cmd_moments,
    "diagnose": cmd_diagnose,
}


def main(argv: Sequence[str] | None = None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
        model = _load_model(args.model)
        text, cfg = COMMANDS[args.command](args, model)
        _emit(text, args.out, cfg)
    except SystemExit as e:  # --help / --version
        return int(e.code or 0)
    except (_UsageError, ValidationError) as e:
        print(f"fitpa: error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except (OSError, RuntimeError, ArithmeticError) as e:
        print(f"fitpa: runtime error: {e}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
