"""Bernoulli/Poisson couplings between the finite-n neighbour process of a
probed vertex and the discretised mixed Poisson process of the limit.

Each index carries four variables: ``Y`` (Bernoulli with the urn mean),
``Yhat`` (Bernoulli with the age-based mean), ``Vhat`` (Poisson with the
same mean as ``Yhat``) and ``V`` (Poisson with the binned limit intensity).
One uniform per index drives ``Y``, ``Yhat`` and ``Vhat``; ``V`` is obtained
from ``Vhat`` by superposition or thinning on an independent substream.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from ._rng import SeedLike, as_generator
from .errors import ValidationError
from .exploration import (
    ExplorationState,
    advance_exploration,
    conditional_urn_state,
    initial_exploration,
    neighbor_means,
)
from .fitness import FitnessSequence, check_concentration_event
from .generators import PATree, _attach_by_uniforms, partial_products, urn_betas
from .pointtree import age_label

STAGES = ("Y_vs_Yhat", "Yhat_vs_Vhat", "Vhat_vs_V")
BOUNDARY_CASES = ("M<=k", "M=k+1", "M>=k+2")
_MAX_POISSON_INVERSION = 10_000


# ------------------------------------------------------------ primitive couplers


def couple_bernoulli_pair(p: float, p_hat: float, u):
    """``(1[u <= p], 1[u <= p_hat])``; ``u`` may be an array of uniforms."""
    if np.ndim(u):
        u = np.asarray(u)
        return (u <= p).astype(np.int64), (u <= p_hat).astype(np.int64)
    return int(u <= p), int(u <= p_hat)


def _poisson_from_uniform(lam: np.ndarray, u: np.ndarray) -> np.ndarray:
    """``F^{-1}(1 - u)`` for Poisson(lam): zero exactly when ``u >= 1 - e^{-lam}``."""
    lam = np.asarray(lam, dtype=float)
    u = np.asarray(u, dtype=float)
    out = np.zeros(np.broadcast(lam, u).shape, dtype=np.int64)
    lam_b = np.broadcast_to(lam, out.shape)
    u_b = np.broadcast_to(u, out.shape)
    live = u_b < -np.expm1(-lam_b)
    if not np.any(live):
        return out
    lam_l = lam_b[live]
    level = 1.0 - u_b[live]
    pmf = np.exp(-lam_l)
    cdf = pmf.copy()
    k = np.zeros(lam_l.shape, dtype=np.int64)
    todo = cdf < level
    step = 0
    while np.any(todo) and step < _MAX_POISSON_INVERSION:
        step += 1
        pmf = pmf * lam_l / step
        cdf = cdf + pmf
        k[todo] = step
        todo &= cdf < level
    out[live] = k
    return out


def couple_bernoulli_poisson(p: float, u):
    """Maximal coupling of Bernoulli(p) and Poisson(p) from one uniform.

    ``u`` is a uniform in [0,1), an array of them, or a Generator to draw
    one from.
    """
    if not 0 <= p <= 1:
        raise ValidationError(f"must lie in [0, 1], got {p}", "p")
    if isinstance(u, np.random.Generator):
        u = u.random()
    if np.ndim(u):
        u = np.asarray(u, dtype=float)
        return (u <= p).astype(np.int64), _poisson_from_uniform(np.full(u.shape, p), u)
    return int(u <= p), int(_poisson_from_uniform(np.array(p), np.array(u)))


def couple_poisson_pair(lambda1: float, lambda2: float, seed: SeedLike, size: int | None = None):
    """Monotone coupling: the larger mean adds an independent Poisson of the gap."""
    if lambda1 < 0:
        raise ValidationError(f"must be nonnegative, got {lambda1}", "lambda1")
    if lambda2 < 0:
        raise ValidationError(f"must be nonnegative, got {lambda2}", "lambda2")
    rng = as_generator(seed)
    base = rng.poisson(min(lambda1, lambda2), size=size)
    extra = rng.poisson(abs(lambda1 - lambda2), size=size)
    if size is None:
        base, extra = int(base), int(extra)
    return (base, base + extra) if lambda2 >= lambda1 else (base + extra, base)


def _shift_poisson(v_hat: np.ndarray, mean_hat: np.ndarray, target: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Poisson(target) built from ``v_hat ~ Poisson(mean_hat)``.

    Adds Poisson(target - mean_hat) when the target is larger and thins
    binomially otherwise; either way ``P(differ) = 1 - exp(-|target - mean_hat|)``.
    """
    up = target >= mean_hat
    out = v_hat.copy()
    gap = np.where(up, target - mean_hat, 0.0)
    out += rng.poisson(gap)
    down = ~up & (v_hat > 0)
    if np.any(down):
        keep = target[down] / mean_hat[down]
        out[down] = rng.binomial(v_hat[down], keep)
    return out


# ------------------------------------------------------------ reports


@dataclass(eq=False)
class CouplingReport:
    n: int
    probe_kind: str
    replicates: int = 0
    stage_failures: dict = field(default_factory=lambda: {s: 0 for s in STAGES})
    total_failures: int = 0
    boundary_case: dict = field(default_factory=lambda: {b: 0 for b in BOUNDARY_CASES})
    clipped_means: int = 0
    concentration_event: bool | None = None
    root_beyond_window: int = 0
    skipped: int = 0

    @property
    def total_failure_rate(self) -> float:
        return self.total_failures / self.replicates if self.replicates else 0.0

    def stage_rate(self, stage: str) -> float:
        return self.stage_failures[stage] / self.replicates if self.replicates else 0.0

    def merge(self, other: "CouplingReport") -> "CouplingReport":
        if (self.n, self.probe_kind) != (other.n, other.probe_kind):
            raise ValidationError("cannot merge reports for different settings", "report")
        return CouplingReport(
            self.n,
            self.probe_kind,
            self.replicates + other.replicates,
            {s: self.stage_failures[s] + other.stage_failures[s] for s in STAGES},
            self.total_failures + other.total_failures,
            {b: self.boundary_case[b] + other.boundary_case[b] for b in BOUNDARY_CASES},
            self.clipped_means + other.clipped_means,
            self.concentration_event if self.concentration_event is not None else other.concentration_event,
            self.root_beyond_window + other.root_beyond_window,
            self.skipped + other.skipped,
        )

    def to_dict(self) -> dict:
        return {
            "n": self.n,
            "probe_kind": self.probe_kind,
            "replicates": self.replicates,
            "stage_failures": dict(self.stage_failures),
            "stage_rates": {s: self.stage_rate(s) for s in STAGES},
            "total_failures": self.total_failures,
            "total_failure_rate": self.total_failure_rate,
            "boundary_case": dict(self.boundary_case),
            "clipped_means": self.clipped_means,
            "concentration_event": self.concentration_event,
            "root_beyond_window": self.root_beyond_window,
            "skipped": self.skipped,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)


@dataclass(frozen=True)
class RootContext:
    """Root probe; ``u0`` fixes the uniform behind the root label and age."""

    u0: float | None = None


@dataclass(frozen=True, eq=False)
class ProbeContext:
    """A later probe: exploration state before the probe, the probe's age in
    the limit tree and (optionally) its gamma; by default the gamma is the
    probe's own ``Z`` from the conditional urn."""

    state: ExplorationState
    probe: int
    age: float
    zeta: float | None = None
    kind: str = "typeL"


@dataclass(frozen=True, eq=False)
class CoupledVectors:
    """One replicate's aligned vectors over indices ``start..n``."""

    start: int
    P: np.ndarray
    P_hat: np.ndarray
    lam: np.ndarray
    Y: np.ndarray
    Y_hat: np.ndarray
    V_hat: np.ndarray
    V: np.ndarray
    boundary: str
    clipped: int

    def failures(self) -> dict:
        return {
            "Y_vs_Yhat": bool(np.any(self.Y != self.Y_hat)),
            "Yhat_vs_Vhat": bool(np.any(self.Y_hat != self.V_hat)),
            "Vhat_vs_V": bool(np.any(self.V_hat != self.V)),
        }

    @property
    def total_failure(self) -> bool:
        return bool(np.any(self.Y != self.V))


def _bin_width(n: int, mu: float, ks: np.ndarray) -> np.ndarray:
    """``(k/n)^{1/(mu+1)} - ((k-1)/n)^{1/(mu+1)}``, the y^{1/mu} mass of bin k."""
    e = 1.0 / (mu + 1.0)
    return (ks / n) ** e - ((ks - 1) / n) ** e


def _couple_vectors(
    start: int, P: np.ndarray, P_hat: np.ndarray, lam: np.ndarray, boundary: str, rng: np.random.Generator
) -> CoupledVectors:
    clipped = int(np.count_nonzero(P_hat > 1.0))
    P_hat_b = np.minimum(P_hat, 1.0)
    u = rng.random(P.size)
    Y = (u <= P).astype(np.int64)
    Y_hat = (u <= P_hat_b).astype(np.int64)
    V_hat = _poisson_from_uniform(P_hat_b, u)
    V = _shift_poisson(V_hat, P_hat_b, lam, rng)
    return CoupledVectors(start, P, P_hat_b, lam, Y, Y_hat, V_hat, V, boundary, clipped)


def root_vectors(seq: FitnessSequence, u0: float, rng: np.random.Generator) -> CoupledVectors:
    """Coupled vectors for the uniformly chosen root at the first probe.

    At the first probe the urn is unconditioned, and the probe's mean
    vector only involves betas of indices ``>= k0``, so only those gammas
    are drawn. The first Poisson bin is widened down to the root's age.
    """
    n, mu, chi = seq.n, seq.mu, seq.chi
    k0 = min(n, max(1, math.ceil(n * u0)))
    if k0 == n:
        e = np.empty(0)
        ei = np.empty(0, dtype=np.int64)
        return CoupledVectors(n + 1, e, e, e, ei, ei, ei, ei, "M=k+1", 0)
    x, T = seq.x, seq.prefix_sums
    j = np.arange(k0, n + 1)
    shape_zt = T[j - 1] + j - 1
    # vertex 1 has beta 1 and, when x1 <= 0, no gamma at all
    Z = rng.standard_gamma(np.where(j >= 2, x[j], max(x[1], 1.0)))
    Zt = rng.standard_gamma(np.where(j >= 2, shape_zt, 1.0))
    B = Z / (Z + Zt)
    zeta = float(Z[0])
    if k0 == 1:
        B[0] = 1.0
        zeta = float(rng.standard_gamma(x[1])) if x[1] > 0 else 0.0
    # S_{k0}/S_{k-1} = prod_{i=k0+1}^{k-1} (1 - B_i)
    ratio = np.concatenate(([1.0], np.cumprod(1.0 - B[1:-1])))
    ks = np.arange(k0 + 1, n + 1)
    P = np.clip(ratio * B[0], 0.0, 1.0)
    P_hat = (k0 / ks) ** chi * zeta / ((mu + 1) * k0)
    scale = zeta * u0 ** (-1.0 / (mu + 1))
    lam = scale * _bin_width(n, mu, ks)
    lam[0] = scale * (((k0 + 1) / n) ** (1.0 / (mu + 1)) - u0 ** (1.0 / (mu + 1)))
    return _couple_vectors(k0 + 1, P, P_hat, lam, "M=k+1", rng)


def probe_vectors(seq: FitnessSequence, ctx: ProbeContext, rng: np.random.Generator) -> CoupledVectors:
    """Coupled vectors for a later probe with the boundary alignment of the
    closest age label ``M`` against the probe label ``q``."""
    n, mu, chi = seq.n, seq.mu, seq.chi
    state, q = ctx.state, ctx.probe
    if state.next_probe != q:
        raise ValidationError(f"state probes {state.next_probe}, not {q}", "probe")
    if not 0 < ctx.age <= 1:
        raise ValidationError(f"must lie in (0, 1], got {ctx.age}", "age")
    cond = conditional_urn_state(seq, state, rng)
    zeta = float(cond.Z[q]) if ctx.zeta is None else float(ctx.zeta)
    M = age_label(ctx.age, n, chi)
    start = min(M, q + 1)
    ks = np.arange(start, n + 1)
    P = np.zeros(ks.size)
    P_hat = np.zeros(ks.size)
    lam = np.zeros(ks.size)
    above = ks > q
    if q < n:
        P[above] = neighbor_means(cond, q)
        P_hat[above] = (q / ks[above]) ** chi * zeta / ((mu + 1) * q)
    scale = zeta * ctx.age ** (-1.0 / mu)
    from_M = ks > M
    lam[from_M] = scale * _bin_width(n, mu, ks[from_M])
    lam[ks == M] = scale * ((M / n) ** (1.0 / (mu + 1)) - ctx.age ** (1.0 / mu))
    if M <= q:
        boundary = "M<=k"
        low = ks <= q
        assert not np.any(P[low]) and not np.any(P_hat[low])
    elif M == q + 1:
        boundary = "M=k+1"
    else:
        boundary = "M>=k+2"
        gap = (ks > q) & (ks < M)
        assert not np.any(lam[gap])
    return _couple_vectors(start, P, P_hat, lam, boundary, rng)


def coupling_run(seq: FitnessSequence, probe_context, seed: SeedLike, replicates: int = 1) -> CouplingReport:
    """Run ``replicates`` independent coupled draws and count disagreements."""
    rng = as_generator(seed)
    if replicates < 1:
        raise ValidationError(f"must be positive, got {replicates}", "replicates")
    if isinstance(probe_context, RootContext):
        kind = "root"
    elif isinstance(probe_context, ProbeContext):
        kind = probe_context.kind
        if probe_context.state.n != seq.n:
            raise ValidationError("state and fitness sizes differ", "probe_context")
    else:
        raise ValidationError("expected RootContext or ProbeContext", "probe_context")
    report = CouplingReport(seq.n, kind)
    try:
        report.concentration_event = check_concentration_event(seq, 2.0 / 3.0)
    except ValidationError:
        report.concentration_event = None
    window = math.ceil(seq.n**seq.chi)
    for _ in range(replicates):
        if kind == "root":
            u0 = probe_context.u0 if probe_context.u0 is not None else rng.random()
            vec = root_vectors(seq, u0, rng)
            report.root_beyond_window += int(vec.start - 1 >= window)
        else:
            vec = probe_vectors(seq, probe_context, rng)
        report.replicates += 1
        for s, failed in vec.failures().items():
            report.stage_failures[s] += int(failed)
        report.total_failures += int(vec.total_failure)
        report.boundary_case[vec.boundary] += 1
        report.clipped_means += vec.clipped
    return report


def sample_probe_context(seq: FitnessSequence, kind: str, rng: np.random.Generator) -> ProbeContext | None:
    """Draw a tree and a probe of the requested type with a coupled age.

    The tree comes from the urn with the root's outgoing uniform shared
    with the type-L child's age, so the type-L probe's label and age are
    coupled as in the limit construction. A type-R probe is the root's
    first type-R child; its age is drawn from the limit intensity
    restricted to the child's label bin. Returns None when the needed
    probe does not exist or vertex 1 has been discovered.
    """
    if kind not in ("typeL", "typeR"):
        raise ValidationError(f"unknown probe kind {kind!r}", "kind")
    n, mu, chi = seq.n, seq.mu, seq.chi
    u0 = rng.random()
    k0 = min(n, max(1, math.ceil(n * u0)))
    if k0 == 1:
        return None
    a0 = u0**chi
    S = partial_products(urn_betas(seq, rng))
    u = rng.random(n - 1)
    u_l = u[k0 - 2]
    parent = np.zeros(n + 1, dtype=np.int64)
    parent[2:] = _attach_by_uniforms(S, u, np.arange(2, n + 1))
    tree = PATree.from_parents(parent, seq)
    state = advance_exploration(initial_exploration(n, k0), tree)
    if 1 in state.labels:
        return None
    if kind == "typeL":
        return ProbeContext(state, state.next_probe, u_l * a0, None, kind)
    if not any(state.types[v] == "R" for v in state.active):
        return None
    state = advance_exploration(state, tree)
    probe = state.next_probe
    if probe is None or state.types[probe] != "R" or 1 in state.labels:
        return None
    e = 1.0 / (mu + 1.0)
    lo = max((probe - 1) / n, u0) ** e
    hi = (probe / n) ** e
    age = (lo + rng.random() * (hi - lo)) ** ((mu + 1.0) * chi)
    return ProbeContext(state, probe, age, None, kind)
