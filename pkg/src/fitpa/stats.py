"""Canonical shapes, histograms and total variation distances."""

from __future__ import annotations

import csv
import io
from collections import Counter
from dataclasses import dataclass, field
from typing import Callable, Hashable, Iterable, Mapping

import numpy as np

from .errors import ValidationError
from .exploration import RootedNeighborhood


def canonical_code(nb: RootedNeighborhood | Mapping[tuple, object]) -> str:
    """Parenthesised canonical form of the rooted shape.

    A leaf is ``()``; an internal node wraps the sorted concatenation of its
    children's codes. Equal codes mean isomorphic rooted trees.
    """
    labels = nb.nodes if isinstance(nb, RootedNeighborhood) else nb
    if not labels:
        raise ValidationError("empty neighbourhood", "nb")
    kids: dict[tuple, list[str]] = {}
    for lab in sorted(labels, key=len, reverse=True):
        code = "(" + "".join(sorted(kids.pop(lab, ()))) + ")"
        if len(lab) == 1:
            return code
        kids.setdefault(lab[:-1], []).append(code)
    raise ValidationError("labels have no root", "nb")


def code_from_children(children: Mapping[Hashable, Iterable[Hashable]], root: Hashable) -> str:
    """Canonical code for a rooted tree given as a children map."""
    order = [root]
    i = 0
    while i < len(order):
        order.extend(children.get(order[i], ()))
        i += 1
    codes: dict[Hashable, str] = {}
    for v in reversed(order):
        codes[v] = "(" + "".join(sorted(codes[c] for c in children.get(v, ()))) + ")"
    return codes[root]


@dataclass(eq=False)
class EmpiricalDistribution:
    counts: Counter = field(default_factory=Counter)

    @property
    def total(self) -> int:
        return sum(self.counts.values())

    @classmethod
    def from_samples(cls, samples: Iterable[Hashable]) -> "EmpiricalDistribution":
        if isinstance(samples, np.ndarray):
            keys, cnt = np.unique(samples, return_counts=True)
            return cls(Counter({k.item(): int(c) for k, c in zip(keys, cnt)}))
        return cls(Counter(samples))

    def add(self, key: Hashable, count: int = 1) -> None:
        self.counts[key] += count

    def merge(self, other: "EmpiricalDistribution") -> "EmpiricalDistribution":
        return EmpiricalDistribution(self.counts + other.counts)

    def probs(self) -> dict:
        tot = self.total
        if tot == 0:
            raise ValidationError("empty distribution", "counts")
        return {k: c / tot for k, c in self.counts.items()}

    def mean(self) -> float:
        tot = self.total
        return sum(float(k) * c for k, c in self.counts.items()) / tot

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["key", "count"])
        for k in sorted(self.counts, key=lambda v: (not isinstance(v, (int, np.integer)), v)):
            w.writerow([k, self.counts[k]])
        return buf.getvalue()


def tv_distance(d1: EmpiricalDistribution, d2: EmpiricalDistribution) -> float:
    t1, t2 = d1.total, d2.total
    if not t1 or not t2:
        raise ValidationError("empty distribution", "counts")
    c1, c2 = d1.counts, d2.counts
    # integer arithmetic keeps identical and disjoint cases exact
    num = sum(abs(c1.get(k, 0) * t2 - c2.get(k, 0) * t1) for k in set(c1) | set(c2))
    return num / (2 * t1 * t2)


def tv_to_pmf(
    emp: EmpiricalDistribution,
    pmf: Callable[[np.ndarray], np.ndarray],
    k_max: int,
    k_min: int = 1,
) -> float:
    """Half L1 distance to ``pmf`` on ``[k_min, k_max]``, plus the unaccounted
    pmf tail and any empirical mass outside ``[k_min, k_max]``.

    ``pmf`` is called once on the integer array ``k_min..k_max``.
    """
    probs = emp.probs()
    ks = np.arange(k_min, k_max + 1)
    ref = np.asarray(pmf(ks), dtype=float)
    if np.any(ref < 0):
        raise ValidationError("pmf values must be nonnegative", "pmf")
    e = np.array([probs.get(int(k), 0.0) for k in ks])
    outside = sum(p for k, p in probs.items() if not k_min <= k <= k_max)
    tail = max(0.0, 1.0 - float(ref.sum()))
    return 0.5 * (float(np.abs(e - ref).sum()) + outside + tail)
