"""Tree generators: sequential attachment, the urn (stick-breaking) form and
its conditioned ("embellished") variant, plus exact small-n oracles.

Arrays indexed by vertex are 1-based with an unused slot 0, so ``parent[k]``
is the recipient of vertex ``k``'s outgoing edge (``parent[0] = parent[1] = 0``).
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from functools import cached_property
from typing import Iterable

import numpy as np

from ._rng import SeedLike, as_generator
from .errors import ValidationError
from .fitness import FitnessSequence

EXACT_ORACLE_MAX_N = 12
# above this size batch parent lookups switch from broadcast comparison to searchsorted
_BROADCAST_MAX_N = 64


@dataclass(frozen=True, eq=False)
class PATree:
    n: int
    parent: np.ndarray
    in_degree: np.ndarray
    fitness: FitnessSequence

    def __post_init__(self):
        p = self.parent
        if p.shape != (self.n + 1,) or self.in_degree.shape != (self.n + 1,):
            raise ValidationError("parent and in_degree need length n+1", "parent")
        if self.n >= 2:
            k = np.arange(2, self.n + 1)
            if np.any(p[2:] < 1) or np.any(p[2:] >= k):
                raise ValidationError("parent[k] must lie in [1, k-1]", "parent")
        if int(self.in_degree.sum()) != self.n - 1:
            raise ValidationError("in-degrees must sum to n-1", "in_degree")
        p.setflags(write=False)
        self.in_degree.setflags(write=False)

    @classmethod
    def from_parents(cls, parent: np.ndarray, fitness: FitnessSequence) -> "PATree":
        parent = np.asarray(parent, dtype=np.int64)
        n = parent.size - 1
        if n != fitness.n:
            raise ValidationError(f"tree has {n} vertices but fitness has {fitness.n}", "parent")
        indeg = np.bincount(parent[2:], minlength=n + 1).astype(np.int64)
        if n >= 1:
            indeg[0] = 0
        return cls(n, parent.copy(), indeg, fitness)

    @cached_property
    def degree(self) -> np.ndarray:
        """Graph degree: in-degree plus the outgoing edge for ``k >= 2``."""
        d = self.in_degree.copy()
        d[2:] += 1
        d.setflags(write=False)
        return d

    @cached_property
    def _children_csr(self) -> tuple[np.ndarray, np.ndarray]:
        kids = np.arange(2, self.n + 1)
        order = np.argsort(self.parent[2:], kind="stable")
        sorted_kids = kids[order]
        ptr = np.zeros(self.n + 2, dtype=np.int64)
        np.cumsum(self.in_degree, out=ptr[1:])
        return ptr, sorted_kids

    def children(self, v: int) -> np.ndarray:
        """Vertices whose outgoing edge points at ``v``, ascending."""
        ptr, kids = self._children_csr
        return kids[ptr[v] : ptr[v + 1]]

    def to_edge_list(self) -> str:
        return "".join(f"{k} {int(self.parent[k])}\n" for k in range(2, self.n + 1))

    def to_dict(self) -> dict:
        return {
            "n": self.n,
            "parents": [int(v) for v in self.parent[2:]],
            "fitness": [float(v) for v in self.fitness.values],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)


@dataclass(frozen=True, eq=False)
class UrnState:
    """Betas ``beta[1..n]`` (``beta[1] = 1``) and partial products ``S[0..n]``."""

    n: int
    beta: np.ndarray
    S: np.ndarray

    @property
    def interval_lengths(self) -> np.ndarray:
        """``S[j] - S[j-1]`` for ``j = 1..n`` (index 0 unused)."""
        out = np.zeros(self.n + 1)
        out[1:] = np.diff(self.S)
        return out


def partial_products(beta: np.ndarray) -> np.ndarray:
    """``S[..., k] = prod_{i=k+1}^n (1 - beta[..., i])`` with ``S[..., 0] = 0``.

    ``beta`` is 1-indexed along its last axis (slot 0 ignored).
    """
    beta = np.asarray(beta, dtype=float)
    n = beta.shape[-1] - 1
    S = np.zeros(beta.shape)
    S[..., n] = 1.0
    if n >= 2:
        one_minus = 1.0 - beta[..., 2:]
        tail = np.cumprod(one_minus[..., ::-1], axis=-1)[..., ::-1]
        S[..., 1:n] = tail
    return S


def locate(S: np.ndarray, targets: np.ndarray, upper: np.ndarray) -> np.ndarray:
    """Index ``j`` with ``S[j-1] <= t < S[j]``, clipped to ``[1, upper]``.

    ``S`` may be 1-D or a stack of rows matching ``targets``' leading axis.
    """
    S = np.asarray(S)
    targets = np.asarray(targets)
    if S.ndim == 1:
        j = np.searchsorted(S, targets, side="right")
    elif S.shape[-1] <= _BROADCAST_MAX_N + 1:
        j = (S[..., None, :] <= targets[..., :, None]).sum(axis=-1)
    else:
        j = np.empty(targets.shape, dtype=np.int64)
        for row in range(S.shape[0]):
            j[row] = np.searchsorted(S[row], targets[row], side="right")
    return np.clip(j, 1, upper)


def urn_betas(seq: FitnessSequence, rng: np.random.Generator, size: int | None = None) -> np.ndarray:
    """Sample ``B_i ~ Beta(x_i, i-1+T_{i-1})`` (``B_1 = 1``), 1-indexed."""
    n = seq.n
    shape = (n + 1,) if size is None else (size, n + 1)
    B = np.zeros(shape)
    B[..., 1] = 1.0
    if n >= 2:
        i = np.arange(2, n + 1)
        a = seq.x[2:]
        b = i - 1 + seq.prefix_sums[1:n]
        B[..., 2:] = rng.beta(a, b, size=None if size is None else (size, n - 1))
    return B


def _attach_by_uniforms(S: np.ndarray, u: np.ndarray, vertices: np.ndarray) -> np.ndarray:
    """Recipients for ``vertices`` given uniforms ``u`` in [0,1): ``U_k = u S[k-1]``."""
    targets = u * S[..., vertices - 1]
    return locate(S, targets, vertices - 1)


def urn_parents_batch(seq: FitnessSequence, reps: int, seed: SeedLike) -> tuple[np.ndarray, np.ndarray]:
    """``reps`` independent urn trees: parent arrays ``(reps, n+1)`` and ``S`` rows."""
    rng = as_generator(seed)
    n = seq.n
    B = urn_betas(seq, rng, size=reps)
    S = partial_products(B)
    parents = np.zeros((reps, n + 1), dtype=np.int64)
    if n >= 2:
        ks = np.arange(2, n + 1)
        u = rng.random((reps, n - 1))
        parents[:, 2:] = _attach_by_uniforms(S, u, ks)
    return parents, S


def generate_urn_tree(seq: FitnessSequence, seed: SeedLike) -> tuple[PATree, UrnState]:
    rng = as_generator(seed)
    n = seq.n
    B = urn_betas(seq, rng)
    S = partial_products(B)
    parent = np.zeros(n + 1, dtype=np.int64)
    if n >= 2:
        ks = np.arange(2, n + 1)
        parent[2:] = _attach_by_uniforms(S, rng.random(n - 1), ks)
    B.setflags(write=False)
    S.setflags(write=False)
    return PATree.from_parents(parent, seq), UrnState(n, B, S)


class _Fenwick:
    """Prefix sums over nonnegative weights with O(log n) search."""

    def __init__(self, size: int):
        self.size = size
        self.tree = [0.0] * (size + 1)
        self.top = 1 << (size.bit_length() - 1) if size else 0

    def add(self, i: int, delta: float) -> None:
        tree, size = self.tree, self.size
        while i <= size:
            tree[i] += delta
            i += i & -i

    def search(self, target: float) -> int:
        """Smallest ``i`` with prefix(i) > target (``size + 1`` if none)."""
        tree = self.tree
        pos = 0
        step = self.top
        while step:
            nxt = pos + step
            if nxt <= self.size and tree[nxt] <= target:
                pos = nxt
                target -= tree[nxt]
            step >>= 1
        return pos + 1


def _sequential_ball_list(seq: FitnessSequence, rng: np.random.Generator) -> np.ndarray:
    n = seq.n
    x = seq.x.astype(np.int64)
    parent = np.zeros(n + 1, dtype=np.int64)
    balls: list[int] = [1] * int(x[1])
    u = rng.random(n + 1)
    for m in range(2, n + 1):
        if balls:
            j = balls[int(u[m] * len(balls))]
        else:
            j = 1  # x1 = 0 at m = 2
        parent[m] = j
        balls.append(j)
        balls.extend([m] * int(x[m]))
    return parent


def _sequential_fenwick(seq: FitnessSequence, rng: np.random.Generator) -> np.ndarray:
    n = seq.n
    x = seq.x
    T = seq.prefix_sums
    parent = np.zeros(n + 1, dtype=np.int64)
    if n < 2:
        return parent
    fw = _Fenwick(n)
    fw.add(1, float(x[1]))
    u = rng.random(n + 1)
    parent[2] = 1
    fw.add(1, 1.0)
    fw.add(2, float(x[2]))
    for m in range(3, n + 1):
        total = (m - 2) + T[m - 1]
        j = fw.search(u[m] * total)
        if j > m - 1:
            j = m - 1
        parent[m] = j
        fw.add(j, 1.0)
        fw.add(m, float(x[m]))
    return parent


def generate_sequential(seq: FitnessSequence, seed: SeedLike) -> PATree:
    """Vertex ``m`` attaches to ``k < m`` w.p. ``(W_{k,m-1}+x_k)/(m-2+T_{m-1})``.

    Step ``m = 2`` always attaches to vertex 1, which also covers ``x1 <= 0``.
    """
    rng = as_generator(seed)
    if seq.is_integer:
        parent = _sequential_ball_list(seq, rng)
    else:
        parent = _sequential_fenwick(seq, rng)
    return PATree.from_parents(parent, seq)


def sequential_parents_batch(seq: FitnessSequence, reps: int, seed: SeedLike) -> np.ndarray:
    """``reps`` sequential trees at once, vectorised over replicates (small n)."""
    rng = as_generator(seed)
    n = seq.n
    parents = np.zeros((reps, n + 1), dtype=np.int64)
    if n < 2:
        return parents
    weights = np.tile(seq.x, (reps, 1))
    rows = np.arange(reps)
    parents[:, 2] = 1
    weights[:, 1] += 1
    T = seq.prefix_sums
    for m in range(3, n + 1):
        total = (m - 2) + T[m - 1]
        cum = np.cumsum(weights[:, 1:m], axis=1)
        target = rng.random(reps) * total
        j = (cum <= target[:, None]).sum(axis=1) + 1
        j = np.minimum(j, m - 1)
        parents[:, m] = j
        weights[rows, j] += 1
    return parents


# ---------------------------------------------------------------- embellishment


@dataclass(frozen=True)
class Embellishment:
    """Conditioning event: vertices in ``probed`` receive no edges other than
    those listed in ``edges`` (pairs stored as ``(low, high)``), and every
    listed edge is present."""

    probed: frozenset
    edges: frozenset

    @classmethod
    def build(cls, probed: Iterable[int], edges: Iterable[Iterable[int]]) -> "Embellishment":
        V = frozenset(int(v) for v in probed)
        E = set()
        for e in edges:
            a, b = (int(v) for v in e)
            if a == b:
                raise ValidationError(f"self-loop {a}", "edges")
            E.add((min(a, b), max(a, b)))
        if not V:
            raise ValidationError("probed set must be non-empty", "probed")
        return cls(V, frozenset(E))

    @classmethod
    def from_dict(cls, d: dict) -> "Embellishment":
        return cls.build(d.get("probed", ()), d.get("edges", ()))

    def to_dict(self) -> dict:
        return {"probed": sorted(self.probed), "edges": sorted(list(e) for e in self.edges)}

    @property
    def v_s(self) -> int:
        return min(self.probed)

    @property
    def boundary(self) -> frozenset:
        """Endpoints of listed edges outside ``probed``."""
        return frozenset(v for e in self.edges for v in e if v not in self.probed)

    @property
    def v_star(self) -> int:
        return min(self.boundary)

    def outgoing(self) -> dict[int, int]:
        """Recipient of each vertex's listed outgoing edge."""
        out: dict[int, int] = {}
        for lo, hi in self.edges:
            if hi in out:
                raise ValidationError(f"vertex {hi} has two outgoing edges", "edges")
            out[hi] = lo
        return out

    def validate(self, n: int) -> None:
        V = self.probed
        if any(v < 1 or v > n for v in V) or any(v < 1 or v > n for e in self.edges for v in e):
            raise ValidationError(f"vertices must lie in [1, {n}]", "probed")
        out = self.outgoing()
        for lo, hi in self.edges:
            if lo not in V and hi not in V:
                raise ValidationError(f"edge {(lo, hi)} touches no probed vertex", "edges")
        for u in V:
            if u > 1 and u not in out:
                raise ValidationError(f"probed vertex {u} has no outgoing edge", "edges")
        vs = self.v_s
        for v in V:
            if v != vs and v > 1 and out[v] not in V:
                raise ValidationError(
                    f"outgoing edge of probed vertex {v} must be received inside the probed set", "edges"
                )
        if not self.boundary:
            raise ValidationError("no boundary vertex", "edges")
        if len(V | self.boundary) >= n:
            raise ValidationError("probed set and boundary cover every vertex", "probed")
        if not self.v_star < vs:
            raise ValidationError("smallest boundary vertex must precede smallest probed vertex", "edges")

    def event_holds(self, parents: np.ndarray) -> np.ndarray:
        """Vectorised indicator of the conditioning event for parent arrays."""
        parents = np.atleast_2d(parents)
        ok = np.ones(parents.shape[0], dtype=bool)
        for lo, hi in self.edges:
            ok &= parents[:, hi] == lo
        n = parents.shape[1] - 1
        allowed = {(lo, hi) for lo, hi in self.edges}
        for h in self.probed:
            for ell in range(h + 1, n + 1):
                if (h, ell) not in allowed:
                    ok &= parents[:, ell] != h
        return ok


def embellished_beta_shapes(seq: FitnessSequence, emb: Embellishment) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Shapes ``(a_j, b_j)`` for ``j = 1..n`` and a mask of zeroed betas."""
    n = seq.n
    x, T = seq.x, seq.prefix_sums
    vs, vstar = emb.v_s, emb.v_star
    j = np.arange(n + 1)
    in_V = np.zeros(n + 1, dtype=bool)
    in_V[list(emb.probed)] = True
    xV = np.where(in_V, x, 0.0)
    # fitness of probed k < j; listed edges inside {1..j}, so that a pinned
    # boundary vertex already counts its own edge into the probed set
    xV_below = np.concatenate(([0.0], np.cumsum(xV)[:-1]))
    emax = np.bincount([hi for _, hi in emb.edges], minlength=n + 2)[: n + 1]
    e_upto = np.cumsum(emax)

    a = x.copy()
    b = np.zeros(n + 1)
    low = j <= vstar
    mid = (j > vstar) & (j < vs)
    high = j > vs
    a[vstar] += 1.0
    b[low] = T[np.maximum(j[low] - 1, 0)] + j[low] - 1
    b[mid] = T[j[mid] - 1] + j[mid]
    b[high] = T[j[high] - 1] + j[high] - xV_below[high] - e_upto[high]
    return a, b, in_V


def generate_embellished_urn_tree(seq: FitnessSequence, emb: Embellishment, seed: SeedLike) -> PATree:
    parents = embellished_parents_batch(seq, emb, 1, seed)
    return PATree.from_parents(parents[0], seq)


def embellished_parents_batch(seq: FitnessSequence, emb: Embellishment, reps: int, seed: SeedLike) -> np.ndarray:
    emb.validate(seq.n)
    rng = as_generator(seed)
    n = seq.n
    a, b, in_V = embellished_beta_shapes(seq, emb)
    free = np.ones(n + 1, dtype=bool)
    free[:2] = False
    free[in_V] = False
    if np.any(b[free] <= 0):
        raise ValidationError("non-positive beta parameter; fitness too small for this event", "edges")
    B = np.zeros((reps, n + 1))
    B[:, 1] = 1.0
    cols = np.flatnonzero(free)
    B[:, cols] = rng.beta(a[cols], b[cols], size=(reps, cols.size))
    S = partial_products(B)

    parents = np.zeros((reps, n + 1), dtype=np.int64)
    fixed = emb.outgoing()
    pinned = set(emb.probed) | (set(emb.boundary) - {emb.v_star})
    sampled = np.array([k for k in range(2, n + 1) if k not in pinned], dtype=np.int64)
    if sampled.size:
        u = rng.random((reps, sampled.size))
        parents[:, sampled] = _attach_by_uniforms(S, u, sampled)
    for k in pinned:
        if k >= 2:
            parents[:, k] = fixed[k]
    return parents


# ---------------------------------------------------------------- exact oracles


def sequential_tree_probability(seq: FitnessSequence, parent: Iterable[int]) -> float:
    """Exact probability of a full parent array under the sequential rule."""
    parent = list(parent)
    n = seq.n
    if len(parent) != n + 1:
        raise ValidationError("parent array needs length n+1", "parent")
    x, T = seq.x, seq.prefix_sums
    W = [0] * (n + 1)
    prob = 1.0
    for m in range(2, n + 1):
        j = parent[m]
        if not 1 <= j < m:
            return 0.0
        if m > 2:
            prob *= (W[j] + x[j]) / (m - 2 + T[m - 1])
        W[j] += 1
    return prob


def _profile_distribution(seq: FitnessSequence, upto: int) -> dict[tuple, float]:
    """Law of the in-degree profile ``(W_1..W_upto)`` after ``upto`` vertices."""
    x, T = seq.x, seq.prefix_sums
    dist: dict[tuple, float] = {(0,): 1.0}
    for m in range(2, upto + 1):
        nxt: dict[tuple, float] = {}
        total = m - 2 + T[m - 1]
        for prof, p in dist.items():
            for j in range(1, m):
                if m == 2:
                    q = 1.0
                else:
                    q = (prof[j - 1] + x[j]) / total
                if q <= 0:
                    continue
                new = list(prof)
                new[j - 1] += 1
                new.append(0)
                key = tuple(new)
                nxt[key] = nxt.get(key, 0.0) + p * q
        dist = nxt
    return dist


def sequential_edge_probability_exact(seq: FitnessSequence, j: int, k: int) -> float:
    """``P(parent[k] = j)`` summed over all in-degree histories (``n <= 12``)."""
    n = seq.n
    if n > EXACT_ORACLE_MAX_N:
        raise ValidationError(f"exact recursion is limited to n <= {EXACT_ORACLE_MAX_N}, got {n}", "n")
    if not 1 <= j < k <= n:
        raise ValidationError(f"need 1 <= j < k <= n, got j={j}, k={k}", "k")
    if k == 2:
        return 1.0
    x, T = seq.x, seq.prefix_sums
    total = k - 2 + T[k - 1]
    return float(sum(p * (prof[j - 1] + x[j]) / total for prof, p in _profile_distribution(seq, k - 1).items()))


def classical_polya_urn(black: float, white: float, draws: int, seed: SeedLike, size: int | None = None):
    """Reinforced urn: each draw returns the ball plus one more of its colour.

    Returns the white mass after ``draws`` draws (an array when ``size`` is
    given).
    """
    if not black > 0:
        raise ValidationError(f"must be positive, got {black}", "black")
    if not white > 0:
        raise ValidationError(f"must be positive, got {white}", "white")
    if draws < 0:
        raise ValidationError(f"must be nonnegative, got {draws}", "draws")
    rng = as_generator(seed)
    reps = 1 if size is None else size
    w = np.full(reps, float(white))
    total = float(black) + float(white)
    u = rng.random((draws, reps))
    for d in range(draws):
        w += u[d] * (total + d) < w
    extra = w - white
    if size is None:
        return white + int(round(extra[0]))
    return white + np.rint(extra).astype(np.int64)
