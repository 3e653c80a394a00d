"""Replicated experiments behind the command line and the acceptance suite.

Replicates are grouped in blocks; block ``b`` of stream ``s`` at size ``n``
draws from ``split(seed, s, n, b)``. Block sizes are fixed by the
configuration, never by the worker count, so results are identical however
blocks are scheduled.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from ._rng import split
from .analytics import (
    degree_pmf_ancestor,
    degree_pmf_root,
    mori_conditional_mean,
    s_deviation_profile,
    s_moment_exact,
)
from .couplings import CouplingReport, RootContext, coupling_run, sample_probe_context
from .errors import ValidationError
from .exploration import explore_neighborhood
from .fitness import FitnessModel, check_concentration_event, sample_fitness_sequence
from .generators import PATree, generate_sequential, generate_urn_tree, partial_products, urn_betas
from .pointtree import DEFAULT_NODE_CAP, sample_pi_polya_point_tree
from .stats import EmpiricalDistribution, canonical_code, tv_distance, tv_to_pmf

# substream tags
STREAM_GRAPH = 1
STREAM_LIMIT = 2
STREAM_COUPLE = 3
STREAM_MOMENTS = 4
STREAM_DIAGNOSE = 5

DEFAULT_ROOTS_PER_TREE = 1000
LIMIT_BLOCK = 1000
TRUNCATION_FLAG_LEVEL = 0.01


def _map(fn: Callable, jobs: Sequence, workers: int) -> list:
    if workers <= 1 or len(jobs) <= 1:
        return [fn(*job) for job in jobs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, *zip(*jobs)))


def _blocks(total: int, size: int) -> list[int]:
    full, rest = divmod(total, size)
    return [size] * full + ([rest] if rest else [])


def _graph(model: FitnessModel, n: int, gen: str, rng: np.random.Generator) -> PATree:
    seq = sample_fitness_sequence(model, n, rng)
    if gen == "sequential":
        return generate_sequential(seq, rng)
    if gen == "urn":
        return generate_urn_tree(seq, rng)[0]
    raise ValidationError(f"unsupported generator {gen!r}", "gen")


# ------------------------------------------------------------ degrees


def _degree_block(model, n, count, seed, block, gen):
    rng = split(seed, STREAM_GRAPH, n, block)
    tree = _graph(model, n, gen, rng)
    roots = rng.integers(1, n + 1, size=count)
    d0 = tree.degree[roots]
    anc = tree.parent[roots]
    d1 = np.where(roots >= 2, tree.degree[anc], -1)
    return EmpiricalDistribution.from_samples(d0), EmpiricalDistribution.from_samples(d1)


@dataclass(eq=False)
class DegreeResult:
    model: FitnessModel
    n: int
    replicates: int
    root: EmpiricalDistribution
    ancestor: EmpiricalDistribution
    k_max: int
    tv_root: float
    tv_ancestor: float

    def rows(self) -> list[dict]:
        ks = np.arange(1, self.k_max + 1)
        p = degree_pmf_root(self.model, ks)
        q = np.zeros(ks.size)
        q[1:] = degree_pmf_ancestor(self.model, ks[1:])
        rp, ap = self.root.probs(), self.ancestor.probs()
        return [
            {
                "k": int(k),
                "empirical_root": rp.get(int(k), 0.0),
                "pmf_root": float(pk),
                "empirical_ancestor": ap.get(int(k), 0.0),
                "pmf_ancestor": float(qk),
            }
            for k, pk, qk in zip(ks, p, q)
        ]


def degree_experiment(
    model: FitnessModel,
    n: int,
    reps: int,
    seed: int,
    roots_per_tree: int = DEFAULT_ROOTS_PER_TREE,
    gen: str = "urn",
    k_max: int | None = None,
    workers: int = 1,
) -> DegreeResult:
    """Degrees of a uniform vertex and of its parent, against the limit laws.

    Each block draws one tree (with fresh fitness) and ``roots_per_tree``
    uniform roots in it. Roots equal to vertex 1 have no parent and are
    recorded with ancestor degree -1, which counts as mass outside the
    support of the limiting ancestor law.
    """
    sizes = _blocks(reps, roots_per_tree)
    parts = _map(_degree_block, [(model, n, c, seed, b, gen) for b, c in enumerate(sizes)], workers)
    root, anc = EmpiricalDistribution(), EmpiricalDistribution()
    for d0, d1 in parts:
        root = root.merge(d0)
        anc = anc.merge(d1)
    observed = max(max(root.counts), max(anc.counts))
    k_max = max(k_max or 0, observed)
    tv0 = tv_to_pmf(root, lambda k: degree_pmf_root(model, k), k_max, 1)
    tv1 = tv_to_pmf(anc, lambda k: degree_pmf_ancestor(model, k), k_max, 2)
    return DegreeResult(model, n, reps, root, anc, k_max, tv0, tv1)


# ------------------------------------------------------------ local limit


def _graph_codes_block(model, n, r, count, seed, block, gen):
    rng = split(seed, STREAM_GRAPH, n, block)
    tree = _graph(model, n, gen, rng)
    roots = rng.integers(1, n + 1, size=count)
    dist = EmpiricalDistribution()
    flagged = 0
    for v in roots:
        nb = explore_neighborhood(tree, int(v), r)
        flagged += nb.contains_vertex_one
        dist.add(canonical_code(nb))
    return dist, flagged


def _limit_codes_block(model, r, count, seed, block, node_cap):
    rng = split(seed, STREAM_LIMIT, 0, block)
    dist = EmpiricalDistribution()
    truncated = 0
    for _ in range(count):
        nb = sample_pi_polya_point_tree(model, r, node_cap, rng)
        truncated += nb.truncated
        dist.add(canonical_code(nb))
    return dist, truncated


@dataclass(frozen=True)
class LocalLimitRow:
    n: int
    r: int
    replicates: int
    tv_upper_bound: float
    vertex_one_fraction: float
    limit_truncated_fraction: float
    flagged: bool

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def limit_shape_distribution(
    model: FitnessModel, r: int, reps: int, seed: int, node_cap: int = DEFAULT_NODE_CAP, workers: int = 1
) -> tuple[EmpiricalDistribution, int]:
    sizes = _blocks(reps, LIMIT_BLOCK)
    parts = _map(_limit_codes_block, [(model, r, c, seed, b, node_cap) for b, c in enumerate(sizes)], workers)
    dist = EmpiricalDistribution()
    trunc = 0
    for d, t in parts:
        dist = dist.merge(d)
        trunc += t
    return dist, trunc


def graph_shape_distribution(
    model: FitnessModel,
    n: int,
    r: int,
    reps: int,
    seed: int,
    roots_per_tree: int = DEFAULT_ROOTS_PER_TREE,
    gen: str = "urn",
    workers: int = 1,
) -> tuple[EmpiricalDistribution, int]:
    sizes = _blocks(reps, roots_per_tree)
    parts = _map(_graph_codes_block, [(model, n, r, c, seed, b, gen) for b, c in enumerate(sizes)], workers)
    dist = EmpiricalDistribution()
    flagged = 0
    for d, f in parts:
        dist = dist.merge(d)
        flagged += f
    return dist, flagged


def local_limit_table(
    model: FitnessModel,
    n_grid: Sequence[int],
    r: int,
    reps: int,
    seed: int,
    roots_per_tree: int = DEFAULT_ROOTS_PER_TREE,
    node_cap: int = DEFAULT_NODE_CAP,
    gen: str = "urn",
    workers: int = 1,
) -> list[LocalLimitRow]:
    """Plug-in TV between ball shapes around uniform roots and limit-tree
    shapes. One limit sample of size ``reps`` is shared by every row."""
    _check_grid(n_grid)
    ref, trunc = limit_shape_distribution(model, r, reps, seed, node_cap, workers)
    rows = []
    for n in n_grid:
        dist, flagged = graph_shape_distribution(model, n, r, reps, seed, roots_per_tree, gen, workers)
        tfrac = trunc / reps
        rows.append(
            LocalLimitRow(n, r, reps, tv_distance(dist, ref), flagged / reps, tfrac, tfrac > TRUNCATION_FLAG_LEVEL)
        )
    return rows


# ------------------------------------------------------------ couplings


def _couple_block(model, n, count, seed, block, kind):
    rng = split(seed, STREAM_COUPLE, n, block)
    seq = sample_fitness_sequence(model, n, rng)
    if kind == "root":
        return coupling_run(seq, RootContext(), rng, count)
    report = CouplingReport(n, kind)
    for _ in range(count):
        ctx = sample_probe_context(seq, kind, rng)
        if ctx is None:
            report.skipped += 1
        else:
            report = report.merge(coupling_run(seq, ctx, rng, 1))
    return report


def coupling_table(
    model: FitnessModel,
    n_grid: Sequence[int],
    reps: int,
    seed: int,
    kind: str = "root",
    block: int = 1000,
    workers: int = 1,
) -> list[CouplingReport]:
    _check_grid(n_grid)
    out = []
    for n in n_grid:
        sizes = _blocks(reps, block)
        parts = _map(_couple_block, [(model, n, c, seed, b, kind) for b, c in enumerate(sizes)], workers)
        rep = parts[0]
        for p in parts[1:]:
            rep = rep.merge(p)
        out.append(rep)
    return out


# ------------------------------------------------------------ moments and diagnostics


def moment_table(model: FitnessModel, n: int, p_max: int, reps: int, seed: int, ks: Sequence[int] | None = None) -> list[dict]:
    """Exact ``E[S_{k,n}^p]`` with optional Monte Carlo means and standard errors."""
    rng = split(seed, STREAM_MOMENTS, n, 0)
    seq = sample_fitness_sequence(model, n, rng)
    if ks is None:
        ks = sorted({max(1, round(n * f)) for f in (0.01, 0.1, 0.25, 0.5, 0.75, 1.0)})
    S = None
    if reps > 0:
        S = partial_products(urn_betas(seq, rng, size=reps))
    rows = []
    for k in ks:
        for p in range(1, p_max + 1):
            row = {"k": int(k), "p": p, "exact": s_moment_exact(seq, int(k), p)}
            if S is not None:
                vals = S[:, k] ** p
                row["mc_mean"] = float(vals.mean())
                row["mc_se"] = float(vals.std(ddof=1) / math.sqrt(reps)) if reps > 1 else float("nan")
            rows.append(row)
    return rows


def mori_table(model: FitnessModel, n: int, l: int, m: int, seed: int, k_values: Sequence[int] | None = None) -> list[dict]:
    rng = split(seed, STREAM_MOMENTS, n, 1)
    seq = sample_fitness_sequence(model, n, rng)
    if k_values is None:
        k_values = range(1, min(l, 5) + 1)
    rows = []
    for k in k_values:
        for w in range(0, l - k + 1):
            rows.append({"k": k, "l": l, "m": m, "w": w, "conditional_mean": mori_conditional_mean(seq, k, l, m, w)})
    return rows


def diagnose_table(model: FitnessModel, n_grid: Sequence[int], reps: int, seed: int, alpha: float = 2.0 / 3.0) -> list[dict]:
    """Mean max deviation of ``S_{k,n}`` from ``(k/n)^chi`` and the frequency
    of the fitness concentration event over fresh fitness draws."""
    _check_grid(n_grid)
    rows = []
    for n in n_grid:
        rng = split(seed, STREAM_DIAGNOSE, n, 0)
        seq = sample_fitness_sequence(model, n, rng)
        prof = s_deviation_profile(seq, reps, rng)
        hits = sum(check_concentration_event(sample_fitness_sequence(model, n, rng), alpha) for _ in range(reps))
        rows.append({"n": n, "mean_max_deviation": prof.max_abs_dev, "concentration_frequency": hits / reps})
    return rows


def _check_grid(n_grid: Sequence[int]) -> None:
    if not n_grid:
        raise ValidationError("empty grid", "n_grid")
    if any(b <= a for a, b in zip(n_grid, n_grid[1:])):
        raise ValidationError("grid must be strictly increasing", "n_grid")
    if n_grid[0] < 2:
        raise ValidationError("sizes must be at least 2", "n_grid")
