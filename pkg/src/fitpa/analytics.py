"""Closed-form quantities: limiting degree laws, tail constants, exact moments
of the urn partial products and the conditional in-degree mean."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass

import numpy as np
from scipy.special import gammaln

from ._rng import SeedLike, as_generator
from .errors import ValidationError
from .fitness import FitnessModel, FitnessSequence
from .generators import partial_products, urn_betas

QUADRATURE_ORDER = 64


def _integrate(model: FitnessModel, log_integrand, order: int) -> np.ndarray:
    """``int exp(log_integrand(x)) dpi(x)``; ``log_integrand`` maps an
    (m, 1) node column to an (m, K) array."""
    nodes, weights = model.quadrature(order)
    vals = np.exp(log_integrand(nodes[:, None]))
    return weights @ vals


def degree_pmf_root(model: FitnessModel, k, order: int = QUADRATURE_ORDER):
    """Limiting degree law of a uniform vertex (scalar or array ``k``)."""
    ks = np.atleast_1d(np.asarray(k, dtype=float))
    if np.any(ks < 1) or np.any(ks != np.floor(ks)):
        raise ValidationError("k must be an integer >= 1", "k")
    mu = model.mu

    def log_f(x):
        return gammaln(x + ks - 1) + gammaln(x + mu + 1) - gammaln(x) - gammaln(x + mu + ks + 1)

    out = (mu + 1) * _integrate(model, log_f, order)
    return float(out[0]) if np.ndim(k) == 0 else out


def degree_pmf_ancestor(model: FitnessModel, k, order: int = QUADRATURE_ORDER):
    """Limiting degree law of the type-L ancestors (support ``k >= 2``)."""
    ks = np.atleast_1d(np.asarray(k, dtype=float))
    if np.any(ks < 2) or np.any(ks != np.floor(ks)):
        raise ValidationError("k must be an integer >= 2", "k")
    mu = model.mu

    def log_f(x):
        return gammaln(x + ks - 1) + gammaln(x + mu + 1) - gammaln(x + 1) - gammaln(x + mu + ks + 1)

    out = mu * (mu + 1) * (ks - 1) * _integrate(model, log_f, order)
    return float(out[0]) if np.ndim(k) == 0 else out


def tail_constant_root(model: FitnessModel, order: int = QUADRATURE_ORDER) -> float:
    mu = model.mu
    val = _integrate(model, lambda x: gammaln(x + mu + 1) - gammaln(x), order)
    return float((mu + 1) * val[0])


def tail_constant_ancestor(model: FitnessModel, order: int = QUADRATURE_ORDER) -> float:
    mu = model.mu
    val = _integrate(model, lambda x: gammaln(x + mu + 1) - gammaln(x + 1), order)
    return float(mu * (mu + 1) * val[0])


@dataclass(frozen=True, eq=False)
class PmfTable:
    kind: str
    k_min: int
    k_max: int
    values: np.ndarray
    tail_constant: float
    tail_exponent: float

    @property
    def ks(self) -> np.ndarray:
        return np.arange(self.k_min, self.k_max + 1)

    def tail_estimate(self) -> float:
        """Power-law approximation of the mass beyond ``k_max``."""
        e = -self.tail_exponent
        return self.tail_constant * (self.k_max + 0.5) ** (1 - e) / (e - 1)

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write(f"# kind={self.kind} tail_constant={self.tail_constant!r} tail_exponent={self.tail_exponent!r}\n")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["k", "p"])
        for k, v in zip(self.ks, self.values):
            w.writerow([int(k), repr(float(v))])
        return buf.getvalue()


def pmf_table(model: FitnessModel, k_max: int, kind: str = "root") -> PmfTable:
    mu = model.mu
    if kind == "root":
        ks = np.arange(1, k_max + 1)
        return PmfTable(kind, 1, k_max, degree_pmf_root(model, ks), tail_constant_root(model), -(mu + 2))
    if kind == "ancestor":
        ks = np.arange(2, k_max + 1)
        return PmfTable(kind, 2, k_max, degree_pmf_ancestor(model, ks), tail_constant_ancestor(model), -(mu + 1))
    raise ValidationError(f"unknown kind {kind!r}", "kind")


# ------------------------------------------------------------ urn moments


def _check_seq_index(seq: FitnessSequence, k: int, name: str = "k") -> None:
    if not 1 <= k <= seq.n:
        raise ValidationError(f"must lie in [1, {seq.n}], got {k}", name)


def s_moment_exact(seq: FitnessSequence, k: int, p: int) -> float:
    """``E[S_{k,n}^p]`` from the closed product formula."""
    _check_seq_index(seq, k)
    if int(p) != p or p < 1:
        raise ValidationError(f"must be a positive integer, got {p}", "p")
    n = seq.n
    if k == n:
        return 1.0
    T = seq.prefix_sums
    h = np.arange(p)
    log_val = np.sum(np.log(T[k] + k + h) - np.log(T[n] + n - 1 + h))
    if k + 1 <= n - 1:
        i = np.arange(k + 1, n)
        base = (T[i] + i - 1)[:, None] + h[None, :]
        log_val += np.sum(np.log1p(1.0 / base))
    return float(math.exp(log_val))


def mori_conditional_mean(seq: FitnessSequence, k: int, l: int, m: int, w_kl: int) -> float:
    """``E[W_{k,m} + x_k | W_{k,l} = w_kl]``."""
    n = seq.n
    if not 1 <= k <= l <= m <= n:
        raise ValidationError(f"need 1 <= k <= l <= m <= n, got k={k}, l={l}, m={m}, n={n}", "l")
    if w_kl < 0:
        raise ValidationError(f"must be nonnegative, got {w_kl}", "w_kl")
    x, T = seq.x, seq.prefix_sums
    if l == 1:
        # vertex 2 attaches to vertex 1 deterministically
        if m == 1:
            return float(w_kl + x[1])
        return mori_conditional_mean(seq, 1, 2, m, w_kl + 1)
    j = np.arange(l, m)
    factor = float(np.exp(np.sum(np.log(T[j] + j) - np.log(T[j] + j - 1))))
    return (w_kl + x[k]) * factor


@dataclass(frozen=True, eq=False)
class SDeviationProfile:
    n: int
    replicates: int
    max_abs_dev: float
    per_k_dev: np.ndarray
    k_min: int

    def to_dict(self) -> dict:
        return {"n": self.n, "replicates": self.replicates, "max_abs_dev": self.max_abs_dev, "k_min": self.k_min}


def s_deviation_profile(seq: FitnessSequence, replicates: int, seed: SeedLike, chunk: int | None = None) -> SDeviationProfile:
    """Mean over replicates of ``max_{k >= ceil(n^chi)} |S_{k,n} - (k/n)^chi|``.

    ``per_k_dev[k]`` is the replicate mean of ``|S_{k,n} - (k/n)^chi|``.
    """
    if replicates < 1:
        raise ValidationError(f"must be positive, got {replicates}", "replicates")
    rng = as_generator(seed)
    n, chi = seq.n, seq.chi
    k_min = max(1, min(n, math.ceil(n**chi)))
    ages = (np.arange(n + 1) / n) ** chi
    if chunk is None:
        chunk = max(1, min(replicates, 2_000_000 // (n + 1)))
    per_k = np.zeros(n + 1)
    max_sum = 0.0
    done = 0
    while done < replicates:
        m = min(chunk, replicates - done)
        S = partial_products(urn_betas(seq, rng, size=m))
        dev = np.abs(S - ages)
        dev[:, 0] = 0.0
        per_k += dev.sum(axis=0)
        max_sum += dev[:, k_min:].max(axis=1).sum()
        done += m
    return SDeviationProfile(n, replicates, max_sum / replicates, per_k / replicates, k_min)


# ------------------------------------------------- exact finite-n degree law


def finite_degree_law(value: float, x1: float, n: int, k_cap: int = 5000) -> np.ndarray:
    """Exact law of the degree of a uniform vertex of the sequential tree
    with constant fitness ``value`` (vertex 1 has ``x1``).

    Every vertex other than 1 runs the same in-degree chain, so the expected
    in-degree counts obey a linear recursion. Returns ``p`` with ``p[k]`` the
    probability of degree ``k`` for ``0 <= k < k_cap`` and ``p[k_cap]`` the
    mass at degree ``>= k_cap``.
    """
    if n < 2:
        raise ValidationError(f"need n >= 2, got {n}", "n")
    if value <= 0 or x1 <= -1:
        raise ValidationError("need value > 0 and x1 > -1", "value")
    K = k_cap + 1
    F = np.zeros(K)  # expected count of vertices j >= 2 by in-degree
    G = np.zeros(K)  # in-degree law of vertex 1
    F[0], G[min(1, K - 1)] = 1.0, 1.0
    w = np.arange(K, dtype=float)
    for m in range(2, n):
        D = m - 1 + x1 + (m - 1) * value
        top = min(m + 1, K)
        for arr, x in ((F, value), (G, x1)):
            a = arr[:top]
            move = a * (w[:top] + x) / D
            move[-1] = 0.0 if top == K else move[-1]
            a -= move
            a[1:] += move[:-1]
            if top < K:
                arr[top] += move[-1]
        F[0] += 1.0
    p = np.zeros(K)
    p[1:] += F[:-1] / n
    p[-1] += F[-1] / n
    p += G / n
    return p


def finite_degree_tv(value: float, x1: float, n: int, model: FitnessModel, k_cap: int = 5000) -> float:
    """Exact TV between the finite-n degree law and the limit pmf; mass at or
    beyond ``k_cap`` on either side is counted in full."""
    p = finite_degree_law(value, x1, n, k_cap)
    ks = np.arange(1, k_cap)
    ref = degree_pmf_root(model, ks)
    return 0.5 * (float(np.abs(p[1:k_cap] - ref).sum()) + p[0] + p[k_cap] + max(0.0, 1.0 - float(ref.sum())))
