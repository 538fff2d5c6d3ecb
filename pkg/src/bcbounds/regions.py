"""Rate polytopes in (R0, R1, R2) for the four outer bounds, and their geometry.

Each bound is described by a table of row templates: a coefficient triple
and a sum of conditional mutual-information terms for the right-hand side.
``min{a, b}`` terms are expanded into two rows. The tables are shared with
the optimizer, which compiles them to entropy coefficients.

Geometry is exact enumeration in three dimensions: every vertex is the
solution of three tight planes, rates are nonnegative throughout.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np

from .probkit import JointPmf, LabelError, cond_mutual_info

FEAS_SLACK = 1e-9
DEDUP_TOL = 1e-8
CONTAIN_SLACK = 1e-8


class UnboundedPolytopeError(ValueError):
    pass


@dataclass(frozen=True)
class MI:
    """I(a; b | c) over variable-name tuples."""

    a: tuple[str, ...]
    b: tuple[str, ...]
    c: tuple[str, ...] = ()

    def __str__(self):
        s = f"I({','.join(self.a)};{','.join(self.b)}"
        return s + (f"|{','.join(self.c)})" if self.c else ")")

    @property
    def variables(self) -> set[str]:
        return set(self.a) | set(self.b) | set(self.c)


def _mi(a: str, b: str, c: str = "") -> MI:
    split = lambda s: tuple(s.split(",")) if s else ()  # noqa: E731
    return MI(split(a), split(b), split(c))


class RowTemplate(NamedTuple):
    coeffs: tuple[float, float, float]
    terms: tuple[MI, ...]

    @property
    def tag(self) -> str:
        lhs = "+".join(f"R{i}" for i, c in enumerate(self.coeffs) if c) or "0"
        rhs = "+".join(str(t) for t in self.terms) or "0"
        return f"{lhs} <= {rhs}"


def _row(coeffs, *terms) -> RowTemplate:
    return RowTemplate(tuple(float(c) for c in coeffs), tuple(_mi(*t) for t in terms))


R0, R1, R2 = (1, 0, 0), (0, 1, 0), (0, 0, 1)
R01, R02, R012 = (1, 1, 0), (1, 0, 1), (1, 1, 1)
R12 = (0, 1, 1)

NJ_ROWS = (
    _row(R0, ("T", "Y", "W1")),
    _row(R0, ("T", "Z", "W2")),
    _row(R1, ("U", "Y", "W1")),
    _row(R2, ("V", "Z", "W2")),
    _row(R01, ("T,U", "Y", "W1")),
    _row(R01, ("U", "Y", "T,W1,W2"), ("T,W1", "Z", "W2")),
    _row(R02, ("T,V", "Z", "W2")),
    _row(R02, ("V", "Z", "T,W1,W2"), ("T,W2", "Y", "W1")),
    _row(R012, ("U", "Y", "T,V,W1,W2"), ("T,V,W1", "Z", "W2")),
    _row(R012, ("V", "Z", "T,U,W1,W2"), ("T,U,W2", "Y", "W1")),
    _row(R012, ("U", "Y", "T,V,W1,W2"), ("T,W2", "Y", "W1"), ("V", "Z", "T,W1,W2")),
    _row(R012, ("V", "Z", "T,U,W1,W2"), ("T,W1", "Z", "W2"), ("U", "Y", "T,W1,W2")),
)

# rows R1 <= I(U;Y|W1) and R2 <= I(V;Z|W2); redundant under the U'=(U,W), V'=(V,W),
# T'=W substitution because R0 >= 0 and the R0+R1 / R0+R2 rows carry the same rhs
NJ_REDUNDANT_TAGS = (NJ_ROWS[2].tag, NJ_ROWS[3].tag)


def _min_expanded(coeffs, *terms):
    """Rows for ``coeffs . R <= min{I(W;Y), I(W;Z)} + terms``."""
    return (
        _row(coeffs, ("W", "Y"), *terms),
        _row(coeffs, ("W", "Z"), *terms),
    )


BOUND2_ROWS = (
    *_min_expanded(R0),
    *_min_expanded(R01, ("U", "Y", "W")),
    *_min_expanded(R02, ("V", "Z", "W")),
    *_min_expanded(R012, ("U", "Y", "V,W"), ("V", "Z", "W")),
    *_min_expanded(R012, ("U", "Y", "W"), ("V", "Z", "U,W")),
)

UVW_ROWS = (
    *_min_expanded(R0),
    *_min_expanded(R01, ("U", "Y", "W")),
    *_min_expanded(R02, ("V", "Z", "W")),
    *_min_expanded(R012, ("X", "Y", "V,W"), ("V", "Z", "W")),
    *_min_expanded(R012, ("U", "Y", "W"), ("X", "Z", "U,W")),
)

UV_ROWS = (
    _row(R0),
    _row(R1, ("U", "Y")),
    _row(R2, ("V", "Z")),
    _row(R12, ("X", "Y", "V"), ("V", "Z")),
    _row(R12, ("U", "Y"), ("X", "Z", "U")),
)

TEMPLATES = {
    "nj": NJ_ROWS,
    "bound2": BOUND2_ROWS,
    "uvw": UVW_ROWS,
    "uv": UV_ROWS,
}

AUX_NAMES = {
    "nj": ("U", "V", "T", "W1", "W2"),
    "bound2": ("U", "V", "W"),
    "uvw": ("U", "V", "W"),
    "uv": ("U", "V"),
}


class Row(NamedTuple):
    coeffs: tuple[float, float, float]
    rhs: float
    tag: str


class RatePoint(NamedTuple):
    r0: float
    r1: float
    r2: float


@dataclass(frozen=True)
class Polytope3:
    """{r >= 0 : coeffs . r <= rhs for every row}."""

    rows: tuple[Row, ...]

    def __post_init__(self):
        rows = tuple(Row(tuple(float(c) for c in r[0]), float(r[1]), str(r[2])) for r in self.rows)
        for r in rows:
            if len(r.coeffs) != 3:
                raise ValueError(f"row {r.tag!r} needs three coefficients")
            if not np.isfinite(r.rhs) or not np.all(np.isfinite(r.coeffs)):
                raise ValueError(f"row {r.tag!r} is not finite")
            if min(r.coeffs) < 0:
                raise ValueError(f"row {r.tag!r} has a negative coefficient")
        object.__setattr__(self, "rows", rows)

    @property
    def A(self) -> np.ndarray:
        return np.array([r.coeffs for r in self.rows], dtype=float).reshape(-1, 3)

    @property
    def b(self) -> np.ndarray:
        return np.array([r.rhs for r in self.rows], dtype=float)

    @property
    def tags(self) -> tuple[str, ...]:
        return tuple(r.tag for r in self.rows)

    def rhs(self, tag: str) -> float:
        for r in self.rows:
            if r.tag == tag:
                return r.rhs
        raise KeyError(tag)

    def with_rows(self, *rows) -> "Polytope3":
        return Polytope3(self.rows + tuple(rows))

    def without(self, tags: Sequence[str]) -> "Polytope3":
        tags = set(tags)
        unknown = tags - set(self.tags)
        if unknown:
            raise KeyError(f"unknown row tags: {sorted(unknown)}")
        return Polytope3(tuple(r for r in self.rows if r.tag not in tags))

    def slice_r0_zero(self) -> "Polytope3":
        """Intersection with the plane R0 = 0."""
        return self.with_rows(Row((1.0, 0.0, 0.0), 0.0, "R0 <= 0"))


def evaluate_rows(kind: str, p: JointPmf) -> Polytope3:
    """Evaluate a row table on ``p`` (which must include Y and Z)."""
    templates = TEMPLATES[kind]
    needed = set(AUX_NAMES[kind]) | {"X", "Y", "Z"}
    missing = needed - set(p.names)
    if missing:
        raise LabelError(f"{kind} polytope needs variables {sorted(missing)}")
    cache: dict[MI, float] = {}
    rows = []
    for t in templates:
        rhs = 0.0
        for term in t.terms:
            if term not in cache:
                cache[term] = cond_mutual_info(p, term.a, term.b, term.c)
            rhs += cache[term]
        rows.append(Row(t.coeffs, rhs, t.tag))
    return Polytope3(tuple(rows))


def nj_polytope(p: JointPmf) -> Polytope3:
    return evaluate_rows("nj", p)


def bound2_polytope(p: JointPmf) -> Polytope3:
    return evaluate_rows("bound2", p)


def uvw_polytope(p: JointPmf) -> Polytope3:
    return evaluate_rows("uvw", p)


def uv_polytope(p: JointPmf) -> Polytope3:
    return evaluate_rows("uv", p)


def build_polytope(kind: str, p: JointPmf) -> Polytope3:
    if kind not in TEMPLATES:
        raise ValueError(f"unknown bound kind {kind!r}; expected one of {sorted(TEMPLATES)}")
    return evaluate_rows(kind, p)


def _check_bounded(P: Polytope3) -> None:
    A = P.A
    for j in range(3):
        if not np.any(A[:, j] > 0):
            raise UnboundedPolytopeError(f"R{j} is not capped by any row")


def vertices(P: Polytope3) -> list[RatePoint]:
    """All vertices of the polytope, sorted lexicographically."""
    _check_bounded(P)
    A = np.vstack([P.A, -np.eye(3)])
    b = np.concatenate([P.b, np.zeros(3)])
    idx = np.array(list(itertools.combinations(range(len(b)), 3)))
    M = A[idx]
    ok = np.abs(np.linalg.det(M)) > 1e-12
    M, rhs = M[ok], b[idx[ok]]
    pts = np.linalg.solve(M, rhs[..., None])[..., 0]
    feasible = np.all(pts @ P.A.T <= P.b + FEAS_SLACK, axis=1) & np.all(pts >= -FEAS_SLACK, axis=1)
    pts = np.maximum(pts[feasible], 0.0)
    pts = pts[np.lexsort(pts.T[::-1])]
    kept: list[np.ndarray] = []
    for q in pts:
        if all(np.max(np.abs(q - k)) > DEDUP_TOL for k in kept):
            kept.append(q)
    return [RatePoint(*map(float, q)) for q in kept]


def support_value(P: Polytope3, w) -> tuple[float, RatePoint]:
    """max of w . r over the polytope and the attaining vertex.

    Ties (within 1e-12) go to the lexicographically smallest vertex.
    """
    w = np.asarray(w, dtype=float)
    if w.shape != (3,) or np.any(w < 0) or not np.any(w > 0):
        raise ValueError(f"weight must be a nonzero nonnegative triple, got {w}")
    V = vertices(P)
    if not V:
        raise ValueError("polytope is empty")
    vals = np.array(V) @ w
    best = vals.max()
    # vertices are already sorted, so the first near-maximal one wins
    i = int(np.flatnonzero(vals >= best - 1e-12)[0])
    return float(vals[i]), V[i]


@dataclass(frozen=True)
class Containment:
    contained: bool
    violation: float
    vertex: RatePoint | None = None
    row: str | None = None

    def __bool__(self):
        return self.contained


def contains(outer: Polytope3, inner: Polytope3, slack: float = CONTAIN_SLACK) -> Containment:
    """Check inner is a subset of outer by testing inner's vertices on outer's rows."""
    _check_bounded(outer)
    V = vertices(inner)
    if not V:
        return Containment(True, -np.inf)
    pts = np.array(V)
    A = np.vstack([outer.A, -np.eye(3)])
    b = np.concatenate([outer.b, np.zeros(3)])
    tags = outer.tags + ("R0 >= 0", "R1 >= 0", "R2 >= 0")
    excess = pts @ A.T - b
    i, j = np.unravel_index(np.argmax(excess), excess.shape)
    worst = float(excess[i, j])
    return Containment(worst <= slack, worst, V[i], tags[j])


def same_vertices(P: Polytope3, Q: Polytope3, tol: float = DEDUP_TOL) -> bool:
    a, b = np.array(vertices(P)), np.array(vertices(Q))
    if a.shape != b.shape:
        return False
    if a.size == 0:
        return True
    d = np.max(np.abs(a[:, None, :] - b[None, :, :]), axis=2)
    return bool(np.all(d.min(axis=1) <= tol) and np.all(d.min(axis=0) <= tol))


def redundancy_check(P: Polytope3, tags: Sequence[str]) -> bool:
    """True iff dropping the named rows leaves the vertex set unchanged."""
    reduced = P.without(tags)
    try:
        return same_vertices(P, reduced)
    except UnboundedPolytopeError:
        return False
