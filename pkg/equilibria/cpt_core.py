"""
CPT core
Prospects, value and weighting functions, CPT evaluation (decision-weight and
cumulative forms), regret, dominance predicates and the regret-direction constructor.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import Optional, Sequence

import numpy as np


PROB_TOL = 1e-12


class InvalidProspect(ValueError):
    pass


class PreconditionViolated(ValueError):
    pass


@dataclass(frozen=True)
class WeightingFunction:
    # "identity" | "prelec" | "dual"
    kind: str = "identity"
    alpha: float = 1.0
    # Only for kind == "dual": w(p) = 1 - base(1 - p)
    base: Optional["WeightingFunction"] = None

    def __post_init__(self):
        kind = str(self.kind).lower()
        object.__setattr__(self, "kind", kind)
        if kind == "prelec":
            if not (0.0 < float(self.alpha) <= 1.0):
                raise ValueError(f"prelec alpha must lie in (0, 1], got {self.alpha}")
            object.__setattr__(self, "alpha", float(self.alpha))
        elif kind == "dual":
            if self.base is None:
                raise ValueError("dual weighting needs a base function")
        elif kind != "identity":
            raise ValueError(f"unknown weighting kind: {self.kind!r}")

    @classmethod
    def identity(cls) -> "WeightingFunction":
        return cls("identity")

    @classmethod
    def prelec(cls, alpha: float) -> "WeightingFunction":
        return cls("prelec", alpha=alpha)

    @classmethod
    def dual(cls, base: "WeightingFunction") -> "WeightingFunction":
        return cls("dual", base=base)

    def __call__(self, p: float) -> float:
        p = float(p)
        # Endpoints are pinned so w(0) = 0 and w(1) = 1 hold exactly.
        if p <= 0.0:
            return 0.0
        if p >= 1.0:
            return 1.0
        if self.kind == "identity":
            return p
        if self.kind == "prelec":
            return math.exp(-((-math.log(p)) ** self.alpha))
        return 1.0 - self.base(1.0 - p)

    def many(self, p: np.ndarray) -> np.ndarray:
        """Vectorised evaluation with the same endpoint clamp as __call__."""
        p = np.asarray(p, dtype=float)
        if self.kind == "identity":
            return np.clip(p, 0.0, 1.0)
        if self.kind == "dual":
            return np.where(p <= 0.0, 0.0, np.where(p >= 1.0, 1.0, 1.0 - self.base.many(1.0 - p)))
        inner = np.clip(p, np.finfo(float).tiny, 1.0)
        out = np.exp(-((-np.log(inner)) ** self.alpha))
        out = np.where(p <= 0.0, 0.0, out)
        return np.where(p >= 1.0, 1.0, out)

    def describe(self) -> dict:
        if self.kind == "prelec":
            return {"kind": "prelec", "alpha": self.alpha}
        if self.kind == "dual":
            return {"kind": "dual", "base": self.base.describe()}
        return {"kind": "identity"}


@dataclass(frozen=True)
class ValueFunction:
    reference: float = 0.0
    # "identity" (v(x) = x - r) | "piecewise_power"
    kind: str = "identity"
    gain_exp: float = 1.0
    loss_exp: float = 1.0
    loss_aversion: float = 1.0

    def __post_init__(self):
        kind = str(self.kind).lower()
        object.__setattr__(self, "kind", kind)
        object.__setattr__(self, "reference", float(self.reference))
        if kind == "piecewise_power":
            if not (0.0 < self.gain_exp <= 1.0) or not (0.0 < self.loss_exp <= 1.0):
                raise ValueError("piecewise_power exponents must lie in (0, 1]")
            if self.loss_aversion <= 0.0:
                raise ValueError("loss_aversion must be positive")
        elif kind != "identity":
            raise ValueError(f"unknown value kind: {self.kind!r}")

    @classmethod
    def piecewise_power(
        cls, *, reference: float = 0.0, gain_exp: float, loss_exp: float, loss_aversion: float
    ) -> "ValueFunction":
        return cls(
            reference=reference,
            kind="piecewise_power",
            gain_exp=gain_exp,
            loss_exp=loss_exp,
            loss_aversion=loss_aversion,
        )

    def with_reference(self, reference: float) -> "ValueFunction":
        return ValueFunction(
            reference=reference,
            kind=self.kind,
            gain_exp=self.gain_exp,
            loss_exp=self.loss_exp,
            loss_aversion=self.loss_aversion,
        )

    def __call__(self, x: float) -> float:
        d = float(x) - self.reference
        if self.kind == "identity":
            return d
        if d >= 0.0:
            return d ** self.gain_exp
        return -self.loss_aversion * ((-d) ** self.loss_exp)

    def many(self, x: np.ndarray) -> np.ndarray:
        d = np.asarray(x, dtype=float) - self.reference
        if self.kind == "identity":
            return d
        gains = np.abs(d) ** self.gain_exp
        losses = -self.loss_aversion * np.abs(d) ** self.loss_exp
        return np.where(d >= 0.0, gains, losses)

    def describe(self) -> dict:
        if self.kind == "piecewise_power":
            return {
                "kind": "piecewise_power",
                "a": self.gain_exp,
                "b": self.loss_exp,
                "lambda": self.loss_aversion,
            }
        return {"kind": "identity"}


@dataclass(frozen=True)
class CptPreferences:
    value: ValueFunction = ValueFunction()
    weight_gain: WeightingFunction = WeightingFunction()
    weight_loss: WeightingFunction = WeightingFunction()

    @property
    def reference(self) -> float:
        return self.value.reference

    @classmethod
    def eut(cls, reference: float = 0.0) -> "CptPreferences":
        return cls(value=ValueFunction(reference=reference))

    @classmethod
    def prelec(cls, alpha: float, *, reference: float = 0.0) -> "CptPreferences":
        w = WeightingFunction.prelec(alpha)
        return cls(value=ValueFunction(reference=reference), weight_gain=w, weight_loss=w)

    def with_reference(self, reference: float) -> "CptPreferences":
        return CptPreferences(
            value=self.value.with_reference(reference),
            weight_gain=self.weight_gain,
            weight_loss=self.weight_loss,
        )

    @property
    def is_eut(self) -> bool:
        return (
            self.value.kind == "identity"
            and self.weight_gain.kind == "identity"
            and self.weight_loss.kind == "identity"
        )


@dataclass(frozen=True)
class Prospect:
    probs: tuple[float, ...]
    outcomes: tuple[float, ...]

    def __post_init__(self):
        probs = tuple(float(p) for p in self.probs)
        outcomes = tuple(float(z) for z in self.outcomes)
        if len(probs) != len(outcomes):
            raise InvalidProspect(f"length mismatch: {len(probs)} probs vs {len(outcomes)} outcomes")
        if not probs:
            raise InvalidProspect("empty prospect")
        if any(not math.isfinite(z) for z in outcomes):
            raise InvalidProspect("outcomes must be finite")
        if any(p < -PROB_TOL or not math.isfinite(p) for p in probs):
            raise InvalidProspect("negative probability")
        probs = tuple(0.0 if p < 0.0 else p for p in probs)
        if abs(math.fsum(probs) - 1.0) > PROB_TOL:
            raise InvalidProspect(f"probabilities sum to {math.fsum(probs)!r}, expected 1")
        object.__setattr__(self, "probs", probs)
        object.__setattr__(self, "outcomes", outcomes)

    @property
    def size(self) -> int:
        return len(self.probs)

    @property
    def support(self) -> tuple[int, ...]:
        return tuple(j for j, p in enumerate(self.probs) if p > 0.0)


@dataclass(frozen=True)
class DecisionWeights:
    # a: indices sorted so outcomes are descending (stable on original index)
    order: tuple[int, ...]
    # j_r: number of outcomes >= reference
    gain_count: int
    # pi_j, indexed by original position j
    weights: tuple[float, ...]
    is_gain: tuple[bool, ...]

    def gain_sum(self) -> float:
        return math.fsum(w for w, g in zip(self.weights, self.is_gain) if g)

    def loss_sum(self) -> float:
        return math.fsum(w for w, g in zip(self.weights, self.is_gain) if not g)


@dataclass(frozen=True)
class RegretDirection:
    delta: tuple[float, ...]
    from_index: int
    to_index: int

    def max_step(self, probs: Sequence[float]) -> float:
        return float(probs[self.from_index])

    def apply(self, probs: Sequence[float], eps: float) -> tuple[float, ...]:
        return tuple(float(p) + eps * d for p, d in zip(probs, self.delta))


class Dominance(str, Enum):
    X_STRICT = "x_strict"
    Y_STRICT = "y_strict"
    X_WEAK = "x_weak"
    Y_WEAK = "y_weak"
    EQUAL = "equal"
    NEITHER = "neither"


def _rank_weights(values_desc: Sequence[float], probs: Sequence[float], prefs: CptPreferences) -> tuple[list[float], int]:
    """Decision weights for outcomes already sorted in descending order (raw outcomes, not v)."""
    t = len(values_desc)
    r = prefs.reference
    gain_count = sum(1 for z in values_desc if z >= r)
    pi = [0.0] * t

    prev = 0.0
    for k in range(gain_count):
        cum = math.fsum(probs[: k + 1])
        cur = prefs.weight_gain(cum)
        pi[k] = cur - prev
        prev = cur

    nxt = 0.0
    for k in range(t - 1, gain_count - 1, -1):
        tail = math.fsum(probs[k:])
        cur = prefs.weight_loss(tail)
        pi[k] = cur - nxt
        nxt = cur

    return pi, gain_count


def _grouped(prospect: Prospect) -> tuple[list[float], list[float]]:
    groups: dict[float, list[float]] = {}
    for p, z in zip(prospect.probs, prospect.outcomes):
        groups.setdefault(z, []).append(p)
    values = sorted(groups, reverse=True)
    return values, [math.fsum(groups[z]) for z in values]


def decision_weights(prospect: Prospect, prefs: CptPreferences) -> DecisionWeights:
    order = tuple(sorted(range(prospect.size), key=lambda j: (-prospect.outcomes[j], j)))
    values = [prospect.outcomes[j] for j in order]
    probs = [prospect.probs[j] for j in order]
    pi_sorted, gain_count = _rank_weights(values, probs, prefs)

    weights = [0.0] * prospect.size
    is_gain = [False] * prospect.size
    for k, j in enumerate(order):
        weights[j] = pi_sorted[k]
        is_gain[j] = k < gain_count

    return DecisionWeights(order=order, gain_count=gain_count, weights=tuple(weights), is_gain=tuple(is_gain))


def cpt_value(prospect: Prospect, prefs: CptPreferences) -> float:
    """
    CPT value as a decision-weighted sum.

    Equal outcomes are pooled first (probabilities summed with fsum), so the
    result does not depend on how tied entries are ordered.
    """
    values, probs = _grouped(prospect)
    pi, _ = _rank_weights(values, probs, prefs)
    return math.fsum(w * prefs.value(z) for w, z in zip(pi, values))


def cpt_value_cumulative(prospect: Prospect, prefs: CptPreferences) -> float:
    """CPT value in the telescoped form: weighted cumulative probabilities times value increments."""
    order = sorted(range(prospect.size), key=lambda j: (-prospect.outcomes[j], j))
    z = [prospect.outcomes[j] for j in order]
    p = [prospect.probs[j] for j in order]
    v = [prefs.value(x) for x in z]
    t = len(z)
    r = prefs.reference
    gain_count = sum(1 for x in z if x >= r)

    terms = []
    for k in range(gain_count):
        upper = v[k + 1] if k + 1 < gain_count else 0.0
        terms.append(prefs.weight_gain(math.fsum(p[: k + 1])) * (v[k] - upper))
    for k in range(gain_count, t):
        lower = v[k - 1] if k > gain_count else 0.0
        terms.append(prefs.weight_loss(math.fsum(p[k:])) * (v[k] - lower))
    return math.fsum(terms)


def cpt_value_many(probs: np.ndarray, outcomes: Sequence[float], prefs: CptPreferences) -> np.ndarray:
    """
    CPT values for many probability vectors sharing one outcome profile.

    probs has shape (m, t); returns shape (m,).
    """
    probs = np.atleast_2d(np.asarray(probs, dtype=float))
    z = np.asarray(outcomes, dtype=float)
    values = np.unique(z)[::-1]
    # pool tied outcomes into one column per distinct value
    pooled = probs @ (z[:, None] == values[None, :]).astype(float)
    v = prefs.value.many(values)
    gain = values >= prefs.reference

    total = np.zeros(probs.shape[0])
    if gain.any():
        g = pooled[:, gain]
        cum = prefs.weight_gain.many(np.cumsum(g, axis=1))
        pi = np.diff(cum, axis=1, prepend=0.0)
        total += pi @ v[gain]
    if (~gain).any():
        l = pooled[:, ~gain]
        tail = prefs.weight_loss.many(np.cumsum(l[:, ::-1], axis=1))[:, ::-1]
        pi = tail - np.concatenate([tail[:, 1:], np.zeros((tail.shape[0], 1))], axis=1)
        total += pi @ v[~gain]
    return total


def regret(p: Sequence[float], x: Sequence[float], y: Sequence[float], prefs: CptPreferences) -> float:
    if len(x) != len(y) or len(p) != len(x):
        raise InvalidProspect("p, x and y must have equal lengths")
    return cpt_value(Prospect(tuple(p), tuple(x)), prefs) - cpt_value(Prospect(tuple(p), tuple(y)), prefs)


def regret_many(probs: np.ndarray, x: Sequence[float], y: Sequence[float], prefs: CptPreferences) -> np.ndarray:
    return cpt_value_many(probs, x, prefs) - cpt_value_many(probs, y, prefs)


def _support(p: Sequence[float]) -> list[int]:
    return [j for j, pj in enumerate(p) if float(pj) > 0.0]


def pointwise_dominates(p: Sequence[float], x: Sequence[float], y: Sequence[float]) -> Dominance:
    """
    Compare x and y on the support of p.

    *_STRICT: strictly better at every support index.
    *_WEAK: at least as good everywhere and strictly better somewhere.
    """
    if len(x) != len(y) or len(p) != len(x):
        raise InvalidProspect("p, x and y must have equal lengths")
    sup = _support(p)
    gt = sum(1 for j in sup if x[j] > y[j])
    lt = sum(1 for j in sup if x[j] < y[j])
    if gt == 0 and lt == 0:
        return Dominance.EQUAL
    if lt == 0:
        return Dominance.X_STRICT if gt == len(sup) else Dominance.X_WEAK
    if gt == 0:
        return Dominance.Y_STRICT if lt == len(sup) else Dominance.Y_WEAK
    return Dominance.NEITHER


def similarly_ranked(p: Sequence[float], x: Sequence[float], y: Sequence[float]) -> Optional[tuple[int, ...]]:
    """Permutation of the support sorting both x and y descending, or None."""
    if len(x) != len(y) or len(p) != len(x):
        raise InvalidProspect("p, x and y must have equal lengths")
    # ties in x are resolved by y, which is the only order that can work
    order = sorted(_support(p), key=lambda j: (-x[j], -y[j], j))
    for a, b in zip(order, order[1:]):
        if y[a] < y[b]:
            return None
    return tuple(order)


def regret_direction(p: Sequence[float], x: Sequence[float], y: Sequence[float]) -> RegretDirection:
    """
    Unit mass transfer along which regret V(p, x) - V(p, y) strictly decreases
    for every reference point. Depends only on the order structure of x and y.
    """
    t = len(p)
    ranked = similarly_ranked(p, x, y)

    if ranked is None:
        order = sorted(_support(p), key=lambda j: (-x[j], j))
        pair = None
        for u, j1 in enumerate(order):
            for j2 in order[u + 1:]:
                if x[j1] > x[j2] and y[j1] < y[j2]:
                    pair = (j1, j2)
                    break
            if pair is not None:
                break
        j_from, j_to = pair
    else:
        rel = pointwise_dominates(p, x, y)
        if rel != Dominance.NEITHER:
            raise PreconditionViolated(
                f"prospects are similarly ranked and pointwise comparable ({rel.value}); no regret direction"
            )
        # first adjacent sign change of x - y along the common order
        signed = [j for j in ranked if x[j] != y[j]]
        j_from = j_to = -1
        for a, b in zip(signed, signed[1:]):
            if (x[a] > y[a]) != (x[b] > y[b]):
                j_from, j_to = (a, b) if x[a] > y[a] else (b, a)
                break

    delta = [0.0] * t
    delta[j_from] = -1.0
    delta[j_to] = 1.0
    return RegretDirection(delta=tuple(delta), from_index=j_from, to_index=j_to)
