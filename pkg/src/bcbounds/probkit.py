"""Finite joint distributions over named variables.

Everything is dense numpy storage and base-2 logarithms. Variables are
referred to by name; a ``JointPmf`` keeps its axes in a fixed order and
every operation returns a new object.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

import numpy as np

NORM_TOL = 1e-12
# pre-clamp MI values below this are treated as genuine bugs, not rounding
CLAMP_TOL = 1e-10


class LabelError(KeyError):
    """A variable name is not part of the distribution."""


@dataclass(frozen=True)
class VarLabel:
    name: str
    cardinality: int

    def __post_init__(self):
        if self.cardinality < 1:
            raise ValueError(f"cardinality of {self.name!r} must be >= 1")


class JointPmf:
    """Dense probability mass function over an ordered list of named variables.

    ``mass[i0, i1, ...]`` is the probability that ``vars[0] = i0``,
    ``vars[1] = i1`` and so on. The array is copied and made read-only.
    """

    __slots__ = ("names", "mass")

    def __init__(self, names: Sequence[str], mass, normalize: bool = False):
        names = tuple(names)
        mass = np.array(mass, dtype=float)
        if len(set(names)) != len(names):
            raise ValueError(f"duplicate variable names in {names}")
        if mass.ndim != len(names):
            raise ValueError(
                f"mass has {mass.ndim} axes but {len(names)} variables were named"
            )
        if not np.all(np.isfinite(mass)):
            raise ValueError("mass contains non-finite entries")
        if np.any(mass < 0):
            raise ValueError(f"negative mass {mass.min():.3g}")
        total = mass.sum()
        if normalize:
            if total <= 0:
                raise ValueError("cannot normalize a zero measure")
            mass = mass / total
        elif abs(total - 1.0) > NORM_TOL:
            raise ValueError(f"mass sums to {total!r}, not 1 (tolerance {NORM_TOL})")
        mass.setflags(write=False)
        self.names = names
        self.mass = mass

    @property
    def cards(self) -> tuple[int, ...]:
        return tuple(self.mass.shape)

    @property
    def vars(self) -> tuple[VarLabel, ...]:
        return tuple(VarLabel(n, c) for n, c in zip(self.names, self.cards))

    def card(self, name: str) -> int:
        return self.mass.shape[self.axis(name)]

    def axis(self, name: str) -> int:
        try:
            return self.names.index(name)
        except ValueError:
            raise LabelError(f"unknown variable {name!r}; have {self.names}") from None

    def rename(self, mapping: Mapping[str, str]) -> "JointPmf":
        return JointPmf([mapping.get(n, n) for n in self.names], self.mass)

    def reorder(self, names: Sequence[str]) -> "JointPmf":
        if sorted(names) != sorted(self.names):
            raise LabelError(f"reorder needs a permutation of {self.names}")
        return JointPmf(names, np.transpose(self.mass, [self.axis(n) for n in names]))

    def __repr__(self):
        shape = ", ".join(f"{n}:{c}" for n, c in zip(self.names, self.cards))
        return f"JointPmf({shape})"


def _names(keep) -> list[str]:
    if isinstance(keep, str):
        return [keep]
    return [k.name if isinstance(k, VarLabel) else k for k in keep]


def marginalize(p: JointPmf, keep: Iterable) -> JointPmf:
    """Sum out every variable not in ``keep``; axes follow the order of ``keep``."""
    keep = _names(keep)
    if len(set(keep)) != len(keep):
        raise ValueError(f"repeated variable in keep={keep}")
    axes = [p.axis(n) for n in keep]
    drop = tuple(i for i in range(len(p.names)) if i not in axes)
    m = p.mass.sum(axis=drop)
    # remaining axes are in ascending original order; permute to match keep
    order = sorted(axes)
    m = np.transpose(m, [order.index(a) for a in axes])
    return JointPmf(keep, m, normalize=True)


def _entropy_of(mass: np.ndarray) -> float:
    q = mass[mass > 0]
    return float(-(q * np.log2(q)).sum())


def entropy(p: JointPmf, of: Iterable | None = None) -> float:
    """Shannon entropy in bits, optionally of the marginal on ``of``."""
    if of is None:
        return _entropy_of(p.mass)
    names = _names(of)
    if not names:
        return 0.0
    axes = [p.axis(n) for n in names]
    drop = tuple(i for i in range(len(p.names)) if i not in axes)
    return _entropy_of(p.mass.sum(axis=drop))


def cond_mutual_info_raw(p: JointPmf, a, b, c=()) -> float:
    """I(A;B|C) without the final clamp at zero."""
    a, b, c = _names(a), _names(b), _names(c)
    sa, sb, sc = set(a), set(b), set(c)
    if len(sa) != len(a) or len(sb) != len(b) or len(sc) != len(c):
        raise ValueError("repeated variable inside an argument set")
    if sa & sb or sa & sc or sb & sc:
        raise ValueError(f"argument sets overlap: A={a} B={b} C={c}")
    if not a or not b:
        return 0.0
    return (
        entropy(p, a + c)
        + entropy(p, b + c)
        - entropy(p, a + b + c)
        - entropy(p, c)
    )


def cond_mutual_info(p: JointPmf, a, b, c=()) -> float:
    """Conditional mutual information I(A;B|C) in bits, clamped at 0."""
    value = cond_mutual_info_raw(p, a, b, c)
    if value < -CLAMP_TOL:
        raise ArithmeticError(f"I({a};{b}|{c}) = {value:.3g} is materially negative")
    return max(value, 0.0)


def attach_channel(aux: JointPmf, ch, x: str = "X", y: str = "Y", z: str = "Z") -> JointPmf:
    """Append receiver outputs: mass(..., x, y, z) = mass(..., x) * p(y, z | x).

    ``X`` is moved to the position just before ``Y`` and ``Z``.
    """
    if aux.card(x) != ch.x_card:
        raise ValueError(
            f"shape mismatch: {x} has {aux.card(x)} symbols, channel expects {ch.x_card}"
        )
    others = [n for n in aux.names if n != x]
    m = aux.reorder(others + [x]).mass
    full = m[..., None, None] * ch.kernel
    return JointPmf(others + [x, y, z], full, normalize=True)


def product_pmf(*factors: JointPmf) -> JointPmf:
    """Independent product of pmfs over disjoint variable sets."""
    names: list[str] = []
    mass = np.ones(())
    for f in factors:
        names.extend(f.names)
        mass = np.multiply.outer(mass, f.mass)
    return JointPmf(names, mass, normalize=True)


def uniform_pmf(names: Sequence[str], cards: Sequence[int]) -> JointPmf:
    cards = tuple(cards)
    return JointPmf(names, np.full(cards, 1.0 / np.prod(cards)))


def point_pmf(names: Sequence[str], cards: Sequence[int], at: Sequence[int]) -> JointPmf:
    mass = np.zeros(tuple(cards))
    mass[tuple(at)] = 1.0
    return JointPmf(names, mass)


def random_pmf(names: Sequence[str], cards: Sequence[int], rng: np.random.Generator,
               alpha: float = 1.0) -> JointPmf:
    """Dirichlet(alpha) draw over the full product alphabet."""
    cards = tuple(cards)
    mass = rng.dirichlet(np.full(int(np.prod(cards)), alpha)).reshape(cards)
    return JointPmf(names, mass, normalize=True)


def random_deterministic_pmf(aux_names: Sequence[str], aux_cards: Sequence[int],
                             x_card: int, rng: np.random.Generator,
                             x: str = "X", alpha: float = 1.0) -> JointPmf:
    """Random p(aux) with X a random deterministic function of the auxiliaries."""
    aux_cards = tuple(aux_cards)
    n_aux = int(np.prod(aux_cards))
    p_aux = rng.dirichlet(np.full(n_aux, alpha))
    f = rng.integers(x_card, size=n_aux)
    mass = np.zeros((n_aux, x_card))
    mass[np.arange(n_aux), f] = p_aux
    return JointPmf(list(aux_names) + [x], mass.reshape(aux_cards + (x_card,)), normalize=True)


def is_deterministic(p: JointPmf, target: str = "X", given: Sequence[str] | None = None) -> bool:
    """True when every conditioning cell with positive mass has a single ``target`` value."""
    if given is None:
        given = [n for n in p.names if n != target]
    m = marginalize(p, list(given) + [target]).mass
    m = m.reshape(-1, m.shape[-1])
    return bool(np.all((m > 0).sum(axis=1) <= 1))
