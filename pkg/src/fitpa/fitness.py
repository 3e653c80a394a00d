"""Fitness distributions and realised fitness sequences."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Any, Mapping

import numpy as np

from ._rng import SeedLike, as_generator
from .errors import ValidationError

KINDS = ("point_mass", "uniform_interval", "discrete")


@dataclass(frozen=True)
class FitnessModel:
    """Fitness law pi together with the root attractiveness x1.

    ``params`` is kind-specific: ``(v,)`` for a point mass, ``(lo, hi)`` for a
    uniform interval, and ``(values, probs)`` (tuples) for a discrete law.
    """

    kind: str
    params: tuple
    x1: float
    mu: float
    kappa: float | None

    @property
    def chi(self) -> float:
        return self.mu / (self.mu + 1.0)

    def sample(self, size: int, rng: np.random.Generator) -> np.ndarray:
        if self.kind == "point_mass":
            return np.full(size, self.params[0], dtype=float)
        if self.kind == "uniform_interval":
            lo, hi = self.params
            return rng.uniform(lo, hi, size)
        values, probs = self.params
        idx = rng.choice(len(values), size=size, p=np.asarray(probs))
        return np.asarray(values, dtype=float)[idx]

    def quadrature(self, order: int = 64) -> tuple[np.ndarray, np.ndarray]:
        """Nodes and weights integrating against pi.

        Exact for atomic kinds; Gauss-Legendre of the given order on the
        uniform interval.
        """
        if self.kind == "point_mass":
            return np.array([self.params[0]], dtype=float), np.array([1.0])
        if self.kind == "discrete":
            values, probs = self.params
            return np.asarray(values, dtype=float), np.asarray(probs, dtype=float)
        lo, hi = self.params
        t, w = np.polynomial.legendre.leggauss(order)
        return 0.5 * (hi - lo) * t + 0.5 * (hi + lo), 0.5 * w

    def to_dict(self) -> dict[str, Any]:
        if self.kind == "point_mass":
            params: dict[str, Any] = {"value": self.params[0]}
        elif self.kind == "uniform_interval":
            params = {"lo": self.params[0], "hi": self.params[1]}
        else:
            params = {"values": list(self.params[0]), "probs": list(self.params[1])}
        return {"kind": self.kind, "params": params, "x1": self.x1}


def _positive(value: Any, name: str) -> float:
    try:
        v = float(value)
    except (TypeError, ValueError):
        raise ValidationError(f"expected a number, got {value!r}", name) from None
    if not math.isfinite(v) or v <= 0:
        raise ValidationError(f"must be positive and finite, got {value!r}", name)
    return v


def make_fitness_model(kind_spec: Mapping[str, Any] | str, x1: float | None = None, **params: Any) -> FitnessModel:
    """Build a model from ``{"kind", "params", "x1"}`` or from keyword form.

    >>> make_fitness_model("point_mass", 1.0, value=1.0).mu
    1.0
    """
    if isinstance(kind_spec, Mapping):
        kind = kind_spec.get("kind")
        params = dict(kind_spec.get("params") or {})
        if x1 is None:
            x1 = kind_spec.get("x1")
    else:
        kind = kind_spec
    if kind not in KINDS:
        raise ValidationError(f"unknown kind {kind!r}; expected one of {KINDS}", "kind")
    if x1 is None:
        raise ValidationError("root attractiveness is required", "x1")
    try:
        x1 = float(x1)
    except (TypeError, ValueError):
        raise ValidationError(f"expected a number, got {x1!r}", "x1") from None
    if not math.isfinite(x1) or x1 <= -1:
        raise ValidationError(f"must exceed -1, got {x1}", "x1")

    if kind == "point_mass":
        v = _positive(params.get("value", params.get("v")), "value")
        return FitnessModel(kind, (v,), x1, v, v)
    if kind == "uniform_interval":
        lo = _positive(params.get("lo"), "lo")
        hi = _positive(params.get("hi"), "hi")
        if not lo < hi:
            raise ValidationError(f"need lo < hi, got lo={lo}, hi={hi}", "hi")
        return FitnessModel(kind, (lo, hi), x1, 0.5 * (lo + hi), hi)

    values = params.get("values")
    probs = params.get("probs")
    if not values or probs is None or len(values) != len(probs):
        raise ValidationError("values and probs must be non-empty and of equal length", "probs")
    vals = tuple(_positive(v, "values") for v in values)
    ps = tuple(float(p) for p in probs)
    if any(p < 0 or not math.isfinite(p) for p in ps):
        raise ValidationError("probabilities must be nonnegative", "probs")
    if abs(math.fsum(ps) - 1.0) > 1e-12:
        raise ValidationError(f"probabilities sum to {math.fsum(ps)!r}, not 1", "probs")
    mu = math.fsum(v * p for v, p in zip(vals, ps))
    return FitnessModel(kind, (vals, ps), x1, mu, max(vals))


def chi(model: FitnessModel) -> float:
    return model.chi


@dataclass(frozen=True, eq=False)
class FitnessSequence:
    """Realised fitness ``x_1..x_n`` (stored 0-based in ``values``).

    ``mu`` is the mean of the law the tail was drawn from; the age scale
    ``(k/n)**chi`` and the concentration check both need it.
    """

    values: np.ndarray
    mu: float
    _T: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        vals = np.array(self.values, dtype=float)
        if vals.ndim != 1 or vals.size < 1:
            raise ValidationError("need at least one value", "values")
        if not vals[0] > -1:
            raise ValidationError(f"x1 must exceed -1, got {vals[0]}", "values")
        if vals.size > 1 and not np.all(vals[1:] > 0):
            raise ValidationError("x_i must be positive for i >= 2", "values")
        if not self.mu > 0:
            raise ValidationError("mean must be positive", "mu")
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)
        T = np.concatenate(([0.0], np.cumsum(vals)))
        T.setflags(write=False)
        object.__setattr__(self, "_T", T)

    @property
    def n(self) -> int:
        return int(self.values.size)

    @property
    def chi(self) -> float:
        return self.mu / (self.mu + 1.0)

    @property
    def prefix_sums(self) -> np.ndarray:
        """``T[m] = x_1 + ... + x_m`` with ``T[0] = 0``."""
        return self._T

    @cached_property
    def x(self) -> np.ndarray:
        """1-indexed view: ``x[i] = x_i``, ``x[0] = 0``."""
        out = np.concatenate(([0.0], self.values))
        out.setflags(write=False)
        return out

    @cached_property
    def is_integer(self) -> bool:
        return bool(np.all(self.values == np.round(self.values)) and self.values[0] >= 0)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["index", "value"])
        for i, v in enumerate(self.values, start=1):
            w.writerow([i, repr(float(v))])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str, mu: float) -> "FitnessSequence":
        rows = list(csv.DictReader(io.StringIO(text)))
        rows.sort(key=lambda r: int(r["index"]))
        if [int(r["index"]) for r in rows] != list(range(1, len(rows) + 1)):
            raise ValidationError("indices must be 1..n", "index")
        return cls(np.array([float(r["value"]) for r in rows]), mu)


def sample_fitness_sequence(model: FitnessModel, n: int, seed: SeedLike) -> FitnessSequence:
    if int(n) != n or n < 1:
        raise ValidationError(f"must be a positive integer, got {n!r}", "n")
    rng = as_generator(seed)
    tail = model.sample(int(n) - 1, rng)
    return FitnessSequence(np.concatenate(([model.x1], tail)), model.mu)


def default_phi(n: int, chi_: float) -> int:
    return max(1, min(n, math.ceil(n**chi_)))


def check_concentration_event(seq: FitnessSequence, alpha: float, phi_n: int | None = None) -> bool:
    """Check ``|sum_{h=2}^j x_h - (j-1) mu| <= j**alpha`` for ``j`` in ``[phi_n, n]``."""
    if not 0.5 < alpha < 1:
        raise ValidationError(f"must lie in (1/2, 1), got {alpha}", "alpha")
    n = seq.n
    if phi_n is None:
        phi_n = default_phi(n, seq.chi)
    if not 1 <= phi_n <= n:
        raise ValidationError(f"must lie in [1, {n}], got {phi_n}", "phi_n")
    j = np.arange(phi_n, n + 1)
    partial = seq.prefix_sums[j] - seq.prefix_sums[1]
    dev = np.abs(partial - (j - 1) * seq.mu)
    return bool(np.all(dev <= j.astype(float) ** alpha))
