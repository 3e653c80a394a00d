"""Breadth-first exploration of PA trees and the conditional urn law of the
neighbourhood of each probed vertex."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from types import MappingProxyType
from typing import Iterable, Mapping

import numpy as np

from ._rng import SeedLike, as_generator
from .errors import ValidationError
from .fitness import FitnessSequence
from .generators import PATree, locate, partial_products

ROOT, TYPE_L, TYPE_R = "root", "L", "R"


@dataclass(frozen=True)
class NodeRecord:
    pa_label: int | None
    age: float | None
    vertex_type: str
    fitness: float
    child_count_R: int | None = None
    gamma: float | None = None


@dataclass(frozen=True, eq=False)
class RootedNeighborhood:
    """Ulam-Harris labelled ball. Labels are tuples starting with 0."""

    nodes: Mapping[tuple, NodeRecord]
    radius: int
    truncated: bool = False
    contains_vertex_one: bool = False

    def children(self) -> dict[tuple, list[tuple]]:
        kids: dict[tuple, list[tuple]] = {lab: [] for lab in self.nodes}
        for lab in self.nodes:
            if len(lab) > 1:
                kids[lab[:-1]].append(lab)
        for v in kids.values():
            v.sort()
        return kids

    def to_dict(self) -> dict:
        kids = self.children()

        def build(lab: tuple) -> dict:
            rec = self.nodes[lab]
            d = {
                "label": list(lab),
                "pa_label": rec.pa_label,
                "age": rec.age,
                "type": rec.vertex_type,
                "fitness": rec.fitness,
                "child_count_R": rec.child_count_R,
            }
            d["children"] = [build(c) for c in kids[lab]]
            return d

        return {
            "radius": self.radius,
            "truncated": self.truncated,
            "contains_vertex_one": self.contains_vertex_one,
            "root": build((0,)),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)


def explore_neighborhood(tree: PATree, root: int, r: int) -> RootedNeighborhood:
    """Radius-``r`` ball around ``root`` with type-L child first, then type-R
    children in increasing vertex order. Vertex 1 has no type-L child."""
    n = tree.n
    if not 1 <= root <= n:
        raise ValidationError(f"must lie in [1, {n}], got {root}", "root")
    if r < 0:
        raise ValidationError(f"must be nonnegative, got {r}", "r")
    x = tree.fitness.x
    parent = tree.parent
    recs: dict[tuple, list] = {(0,): [root, ROOT, None]}
    frontier = [((0,), root, ROOT, 0)]
    hit_one = root == 1
    for _ in range(r):
        nxt = []
        for lab, v, typ, came_from in frontier:
            kids = [int(c) for c in tree.children(v) if c != came_from]
            idx = 1
            if typ != TYPE_R and v >= 2:
                p = int(parent[v])
                child = lab + (1,)
                recs[child] = [p, TYPE_L, None]
                nxt.append((child, p, TYPE_L, v))
                hit_one |= p == 1
                idx = 2
            for c in kids:
                child = lab + (idx,)
                idx += 1
                recs[child] = [c, TYPE_R, None]
                nxt.append((child, c, TYPE_R, v))
            recs[lab][2] = len(kids)
        frontier = nxt
    nodes = {
        lab: NodeRecord(pa_label=v, age=None, vertex_type=typ, fitness=float(x[v]), child_count_R=cnt)
        for lab, (v, typ, cnt) in recs.items()
    }
    return RootedNeighborhood(MappingProxyType(nodes), r, False, hit_one)


# ------------------------------------------------------------------ exploration


@dataclass(frozen=True, eq=False)
class ExplorationState:
    """Partition of ``{1..n}`` into active, probed and neutral vertices.

    ``k_s`` and ``k_star`` are the smallest probed and smallest active vertex
    of this state, i.e. the values that govern the *next* probe.
    """

    n: int
    root: int
    t: int
    active: tuple
    probed: tuple
    labels: Mapping[int, tuple]
    types: Mapping[int, str]
    discovered_edges: frozenset = field(default_factory=frozenset)

    @property
    def k_s(self) -> int | None:
        return min(self.probed) if self.probed else None

    @property
    def k_star(self) -> int | None:
        return min(self.active) if self.active else None

    @property
    def neutral(self) -> frozenset:
        return frozenset(range(1, self.n + 1)) - set(self.labels)

    def is_neutral(self, v: int) -> bool:
        return v not in self.labels

    def neutral_mask(self) -> np.ndarray:
        mask = np.ones(self.n + 1, dtype=bool)
        mask[0] = False
        mask[list(self.labels)] = False
        return mask

    @property
    def next_probe(self) -> int | None:
        return self.active[0] if self.active else None


def initial_exploration(n: int, root: int) -> ExplorationState:
    if not 1 <= root <= n:
        raise ValidationError(f"must lie in [1, {n}], got {root}", "root")
    return ExplorationState(
        n, root, 0, (root,), (), MappingProxyType({root: (0,)}), MappingProxyType({root: ROOT})
    )


def advance_exploration(state: ExplorationState, tree: PATree) -> ExplorationState:
    """Probe the breadth-first-smallest active vertex."""
    if not state.active:
        return state
    if tree.n != state.n:
        raise ValidationError("tree and state sizes differ", "tree")
    k = state.active[0]
    typ = state.types[k]
    lab = state.labels[k]
    labels = dict(state.labels)
    types = dict(state.types)
    found = []
    idx = 1
    if typ != TYPE_R and k >= 2:
        p = int(tree.parent[k])
        if p not in labels:
            labels[p] = lab + (1,)
            types[p] = TYPE_L
            found.append(p)
            idx = 2
    for c in tree.children(k):
        c = int(c)
        if c not in labels:
            labels[c] = lab + (idx,)
            types[c] = TYPE_R
            found.append(c)
            idx += 1
    edges = state.discovered_edges | {(min(k, d), max(k, d)) for d in found}
    new = ExplorationState(
        state.n,
        state.root,
        state.t + 1,
        state.active[1:] + tuple(found),
        state.probed + (k,),
        MappingProxyType(labels),
        MappingProxyType(types),
        frozenset(edges),
    )
    _check_edge_structure(new, tree)
    return new


def _check_edge_structure(state: ExplorationState, tree: PATree) -> None:
    """While vertex 1 is undiscovered every probed vertex sends its edge into
    the probed set, except the smallest one, whose edge goes to the smallest
    active vertex, the unique type-L vertex among the active ones."""
    if 1 in state.labels or not state.active:
        return
    ks, kstar = state.k_s, state.k_star
    for v in state.probed:
        p = int(tree.parent[v])
        if v == ks:
            if p != kstar:
                raise AssertionError(f"smallest probed vertex {v} sends to {p}, not to {kstar}")
        elif p not in state.probed:
            raise AssertionError(f"probed vertex {v} sends its edge outside the probed set")
    l_active = [v for v in state.active if state.types[v] == TYPE_L]
    if l_active != [kstar]:
        raise AssertionError(f"type-L active vertices {l_active} differ from [{kstar}]")


# -------------------------------------------------------------- conditional urn


def conditional_gamma_shapes(
    seq: FitnessSequence,
    probed: Iterable[int],
    edges: Iterable[tuple[int, int]],
    k_star: int | None,
    k_s: int | None,
    first_step: bool,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Gamma shapes for the probe-step betas.

    Returns ``(shape_Z, shape_Zt, sampled)``; ``sampled[j]`` is False for
    vertex 1 and probed vertices, whose betas are fixed at 1 and 0.
    """
    n = seq.n
    x, T = seq.x, seq.prefix_sums
    j = np.arange(n + 1)
    probed_mask = np.zeros(n + 1, dtype=bool)
    probed_mask[list(probed)] = True
    sampled = ~probed_mask
    sampled[:2] = False
    shape_Z = x.copy()
    shape_Zt = np.zeros(n + 1)
    shape_Zt[1:] = T[:-1] + j[1:] - 1
    if not first_step:
        shape_Z[k_star] += 1.0
        mid = (j > k_star) & (j < k_s)
        shape_Zt[mid] += 1.0
        xP_below = np.concatenate(([0.0], np.cumsum(np.where(probed_mask, x, 0.0))[:-1]))
        his = [max(e) for e in edges]
        # discovered edges inside {1..j}: an active type-R vertex counts its own edge
        e_upto = np.cumsum(np.bincount(his, minlength=n + 1)[: n + 1])
        high = j > k_s
        shape_Zt[high] = T[j[high] - 1] + j[high] - xP_below[high] - e_upto[high]
    bad = sampled & ((shape_Z <= 0) | (shape_Zt <= 0))
    if np.any(bad):
        raise ValidationError(f"non-positive gamma shape at vertices {np.flatnonzero(bad)[:5].tolist()}", "state")
    return shape_Z, shape_Zt, sampled


def betas_from_gammas(Z: np.ndarray, Zt: np.ndarray, sampled: np.ndarray) -> np.ndarray:
    B = np.zeros(Z.shape)
    with np.errstate(invalid="ignore", divide="ignore"):
        ratio = Z / (Z + Zt)
    B[..., sampled] = ratio[..., sampled]
    B[..., 1] = 1.0
    return B


@dataclass(frozen=True, eq=False)
class ConditionalUrnState:
    n: int
    t: int
    probe: int | None
    k_star: int | None
    k_s: int | None
    shape_Z: np.ndarray
    shape_Z_tilde: np.ndarray
    Z: np.ndarray
    Z_tilde: np.ndarray
    beta: np.ndarray
    S: np.ndarray
    neutral: np.ndarray


def conditional_urn_state(seq: FitnessSequence, state: ExplorationState, seed: SeedLike) -> ConditionalUrnState:
    """Betas governing probe step ``t = state.t + 1``."""
    if seq.n != state.n:
        raise ValidationError("fitness and state sizes differ", "seq")
    first = state.t == 0
    if not first and 1 in state.labels:
        raise ValidationError("vertex 1 has been discovered", "state")
    if len(state.labels) >= state.n and not first:
        raise ValidationError("no neutral vertices left", "state")
    rng = as_generator(seed)
    shape_Z, shape_Zt, sampled = conditional_gamma_shapes(
        seq, state.probed, state.discovered_edges, state.k_star, state.k_s, first
    )
    n = seq.n
    Z = np.zeros(n + 1)
    Zt = np.zeros(n + 1)
    cols = np.flatnonzero(sampled)
    Z[cols] = rng.standard_gamma(shape_Z[cols])
    Zt[cols] = rng.standard_gamma(shape_Zt[cols])
    B = betas_from_gammas(Z, Zt, sampled)
    S = partial_products(B)
    for arr in (shape_Z, shape_Zt, Z, Zt, B, S):
        arr.setflags(write=False)
    return ConditionalUrnState(
        n, state.t + 1, state.next_probe, state.k_star, state.k_s, shape_Z, shape_Zt, Z, Zt, B, S,
        state.neutral_mask(),
    )


@dataclass(frozen=True, eq=False)
class NeighborProcess:
    vertices: np.ndarray
    means: np.ndarray
    indicators: np.ndarray

    def __len__(self) -> int:
        return int(self.vertices.size)


def neighbor_means(cond: ConditionalUrnState, probe: int) -> np.ndarray:
    """``P_{k -> probe}`` for ``k = probe+1..n``."""
    S = cond.S
    ks = np.arange(probe + 1, cond.n + 1)
    with np.errstate(invalid="ignore", divide="ignore"):
        p = S[probe] / S[ks - 1] * cond.beta[probe]
    p = np.where(cond.neutral[ks] & np.isfinite(p), p, 0.0)
    return np.clip(p, 0.0, 1.0)


def bernoulli_neighbor_process(cond: ConditionalUrnState, probe: int, seed: SeedLike) -> NeighborProcess:
    if not 1 <= probe <= cond.n:
        raise ValidationError(f"must lie in [1, {cond.n}], got {probe}", "probe")
    if cond.probe is not None and probe != cond.probe:
        raise ValidationError(f"state probes {cond.probe}, not {probe}", "probe")
    rng = as_generator(seed)
    means = neighbor_means(cond, probe)
    ind = (rng.random(means.size) < means).astype(np.int8)
    return NeighborProcess(np.arange(probe + 1, cond.n + 1), means, ind)


def type_l_recipient(cond: ConditionalUrnState, probe: int, u: float) -> int:
    """``h < probe`` with ``S[h-1] <= u S[probe-1] < S[h]``."""
    if probe < 2 or probe > cond.n:
        raise ValidationError(f"must lie in [2, {cond.n}], got {probe}", "probe")
    if not 0 <= u < 1:
        raise ValidationError(f"must lie in [0, 1), got {u}", "u")
    return int(locate(cond.S, np.array([u * cond.S[probe - 1]]), probe - 1)[0])
