"""Limit objects: the pi-Polya point tree, its finite-n intermediate version
and the closed-form degree variables of the root and its ancestors."""

from __future__ import annotations

import math
from collections import deque
from types import MappingProxyType

import numpy as np

from ._rng import SeedLike, as_generator
from .errors import ValidationError
from .exploration import ROOT, TYPE_L, TYPE_R, NodeRecord, RootedNeighborhood
from .fitness import FitnessModel, FitnessSequence

DEFAULT_NODE_CAP = 100_000
# Poisson means are clipped here; anything this large overflows any node cap
_MASS_CEILING = 1e15


def _poisson_mass(Z: float, a: float, mu: float) -> float:
    """``Z (a^{-1/mu} - 1)``, evaluated via expm1 in log space."""
    if a <= 0.0:
        return _MASS_CEILING
    return min(Z * math.expm1(min(-math.log(a) / mu, 700.0)), _MASS_CEILING)


def _poisson_ages(rng: np.random.Generator, count: int, a: float, mu: float) -> np.ndarray:
    """``count`` sorted points on ``(a, 1]`` with density proportional to ``y^{1/mu - 1}``."""
    if count == 0:
        return np.empty(0)
    base = a ** (1.0 / mu)
    v = rng.random(count)
    return np.sort((base + v * (1.0 - base)) ** mu)


def sample_pi_polya_point_tree(
    model: FitnessModel, r: int, node_cap: int = DEFAULT_NODE_CAP, seed: SeedLike = None
) -> RootedNeighborhood:
    """Breadth-first sample of the limit tree to depth ``r``.

    Nodes at depth ``r`` carry age, fitness and gamma but their R-children
    are not generated (``child_count_R`` is None).
    """
    if r < 0:
        raise ValidationError(f"must be nonnegative, got {r}", "r")
    if node_cap < 1:
        raise ValidationError(f"must be positive, got {node_cap}", "node_cap")
    rng = as_generator(seed)
    mu, chi = model.mu, model.chi
    recs: dict[tuple, list] = {}
    queue = deque([((0,), ROOT, rng.random() ** chi)])
    truncated = False
    while queue:
        lab, typ, a = queue.popleft()
        X = float(model.sample(1, rng)[0])
        Z = float(rng.standard_gamma(X + 1.0 if typ == TYPE_L else X))
        if len(lab) - 1 >= r:
            recs[lab] = [a, typ, X, Z, None]
            continue
        count = int(rng.poisson(_poisson_mass(Z, a, mu)))
        recs[lab] = [a, typ, X, Z, count]
        if len(recs) + len(queue) + count + 1 > node_cap:
            truncated = True
            break
        idx = 1
        if typ != TYPE_R:
            queue.append((lab + (1,), TYPE_L, rng.random() * a))
            idx = 2
        for y in _poisson_ages(rng, count, a, mu):
            queue.append((lab + (idx,), TYPE_R, float(y)))
            idx += 1
    for qlab, qtyp, qa in queue if truncated else ():
        recs[qlab] = [qa, qtyp, float("nan"), float("nan"), None]
    nodes = {
        lab: NodeRecord(None, float(a), typ, X, cnt, Z) for lab, (a, typ, X, Z, cnt) in recs.items()
    }
    return RootedNeighborhood(MappingProxyType(nodes), r, truncated, False)


def age_label(age: float, n: int, chi: float) -> int:
    """``k`` with ``((k-1)/n)^chi < age <= (k/n)^chi``."""
    k = min(n, max(1, math.ceil(n * math.exp(math.log(age) / chi))))
    while k > 1 and ((k - 1) / n) ** chi >= age:
        k -= 1
    while k < n and (k / n) ** chi < age:
        k += 1
    return k


def _l_step_label(
    seq: FitnessSequence, k_hat: int, u: float, excluded: set, rng: np.random.Generator
) -> int:
    """Label ``h < k_hat`` with ``S_{h-1} <= u S_{k_hat-1} < S_h``.

    Only the ratios ``S_h / S_{k_hat-1}``, products of ``1 - beta_j`` over
    ``h < j < k_hat``, matter; below ``k_hat`` the betas have the unbiased
    shapes ``(x_j, T_{j-1}+j-1)``. They are drawn lazily from ``k_hat-1``
    downward in geometrically growing blocks.
    """
    x, T = seq.x, seq.prefix_sums
    ratio = 1.0
    top = k_hat - 1
    block = 64
    while top >= 2:
        lo = max(2, top - block + 1)
        j = np.arange(top, lo - 1, -1)
        beta = rng.beta(x[j], T[j - 1] + j - 1)
        if excluded:
            beta[np.isin(j, list(excluded))] = 0.0
        running = ratio * np.cumprod(1.0 - beta)
        hit = np.flatnonzero(running <= u)
        if hit.size:
            return int(j[hit[0]])
        ratio = float(running[-1])
        top = lo - 1
        block *= 2
    return 1


def sample_intermediate_point_tree(
    seq: FitnessSequence,
    r: int,
    node_cap: int = DEFAULT_NODE_CAP,
    seed: SeedLike = None,
    label_frontier: bool = True,
) -> RootedNeighborhood:
    """Finite-n point tree whose nodes carry PA labels.

    Construction stops as soon as a node receives label 1 (flagged as
    ``contains_vertex_one``). With ``label_frontier=False`` the type-L
    child at depth ``r`` gets no PA label, which skips the only O(n) step
    when the shape of the ball is all that is needed.
    """
    n = seq.n
    if n < 2:
        raise ValidationError(f"need n >= 2, got {n}", "n")
    if r < 0:
        raise ValidationError(f"must be nonnegative, got {r}", "r")
    rng = as_generator(seed)
    mu, chi = seq.mu, seq.chi
    x = seq.x
    u0 = rng.random()
    a0 = u0**chi
    k0 = min(n, max(1, math.ceil(n * u0)))
    recs: dict[tuple, list] = {}
    used: set[int] = set()
    truncated = False
    hit_one = k0 == 1
    queue = deque([((0,), ROOT, a0, k0)])
    while queue:
        lab, typ, a, k = queue.popleft()
        depth = len(lab) - 1
        if hit_one or depth >= r or k is None:
            recs[lab] = [k, a, typ, float(x[k]) if k else float("nan"), None, None]
            continue
        zeta = float(rng.standard_gamma(x[k] + 1.0 if typ == TYPE_L else x[k]))
        used.add(k)
        count = int(rng.poisson(_poisson_mass(zeta, a, mu)))
        if len(recs) + len(queue) + count + 1 > node_cap:
            recs[lab] = [k, a, typ, float(x[k]), count, zeta]
            truncated = True
            break
        recs[lab] = [k, a, typ, float(x[k]), count, zeta]
        idx = 1
        if typ != TYPE_R:
            u = rng.random()
            if depth + 1 < r or label_frontier:
                kl = _l_step_label(seq, k, u, used, rng)
            else:
                kl = None
            queue.append((lab + (1,), TYPE_L, u * a, kl))
            hit_one |= kl == 1
            idx = 2
        for y in _poisson_ages(rng, count, a, mu):
            kr = age_label(float(y), n, chi)
            queue.append((lab + (idx,), TYPE_R, float(y), kr))
            hit_one |= kr == 1
            idx += 1
    for qlab, qtyp, qa, qk in queue if truncated else ():
        recs[qlab] = [qk, qa, qtyp, float(x[qk]) if qk else float("nan"), None, None]
    nodes = {
        lab: NodeRecord(k, float(a), typ, X, cnt, z) for lab, (k, a, typ, X, cnt, z) in recs.items()
    }
    return RootedNeighborhood(MappingProxyType(nodes), r, truncated, hit_one)


def sample_root_degree_limit(model: FitnessModel, seed: SeedLike) -> int:
    return int(sample_root_degree_limits(model, 1, seed)[0])


def sample_root_degree_limits(model: FitnessModel, size: int, seed: SeedLike) -> np.ndarray:
    """Vectorised ``xi_0 = 1 + Poisson(Z_0 (a_0^{-1/mu} - 1))``."""
    rng = as_generator(seed)
    # same draw order as the ancestor sampler, whose first column this is
    a = rng.random(size) ** model.chi
    X = model.sample(size, rng)
    Z = rng.standard_gamma(X)
    return 1 + rng.poisson(Z * np.expm1(-np.log(a) / model.mu))


def sample_ancestor_degree_vector(model: FitnessModel, r: int, seed: SeedLike) -> np.ndarray:
    return sample_ancestor_degree_vectors(model, r, 1, seed)[0]


def sample_ancestor_degree_vectors(model: FitnessModel, r: int, size: int, seed: SeedLike) -> np.ndarray:
    """Rows ``(tau_0 + 1, tau_L1 + 2, ..., tau_Lr + 2)``."""
    if r < 0:
        raise ValidationError(f"must be nonnegative, got {r}", "r")
    rng = as_generator(seed)
    out = np.empty((size, r + 1), dtype=np.int64)
    a = rng.random(size) ** model.chi
    for q in range(r + 1):
        if q:
            a = a * rng.random(size)
        X = model.sample(size, rng)
        Z = rng.standard_gamma(X + (1.0 if q else 0.0))
        tau = rng.poisson(Z * np.expm1(-np.log(a) / model.mu))
        out[:, q] = tau + (2 if q else 1)
    return out
