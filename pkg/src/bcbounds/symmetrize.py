"""Mod-shift symmetrization of NJ auxiliaries and the substitution embeddings.

Starred ``W1`` and ``W2`` alphabets are flattened mixed-radix triples:

    W1star = (w1 * m1 + i) * m3 + k        W2star = (w2 * m2 + j) * m3 + k

where ``m1, m2, m3`` are the alphabet sizes of ``U, V, T`` and ``(i, j, k)``
are the shifts applied to them. Both starred variables carry the same ``k``;
cells with mismatched ``k`` are structural zeros.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .probkit import (
    JointPmf,
    LabelError,
    attach_channel,
    cond_mutual_info,
    is_deterministic,
    marginalize,
)
from .regions import (
    NJ_REDUNDANT_TAGS,
    Containment,
    bound2_polytope,
    contains,
    nj_polytope,
    redundancy_check,
    uv_polytope,
    uvw_polytope,
)

NJ_SOURCE = ("U", "V", "T", "W1", "W2", "X")
STAR_NAMES = ("Ustar", "Vstar", "Tstar", "W1star", "W2star", "X")
STAR_RENAME = dict(zip(STAR_NAMES, NJ_SOURCE))

MARGINAL_TOL = 1e-12
MI_TOL = 1e-9

# corruption modes for negative controls
CORRUPTIONS = ("skip_scale", "unshared_k", "hide_u_shift")


class PreconditionError(ValueError):
    pass


@dataclass(frozen=True)
class StarConstruction:
    source: JointPmf
    m1: int
    m2: int
    m3: int
    result: JointPmf

    def w1_index(self, w1, i, k):
        return (w1 * self.m1 + i) * self.m3 + k

    def w2_index(self, w2, j, k):
        return (w2 * self.m2 + j) * self.m3 + k


@dataclass
class Report:
    """Per-check worst absolute deviation and a pass flag."""

    tol: float
    deviations: dict[str, float] = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(d <= self.tol for d in self.deviations.values())

    @property
    def worst(self) -> float:
        return max(self.deviations.values(), default=0.0)

    def failures(self) -> dict[str, float]:
        return {k: v for k, v in self.deviations.items() if v > self.tol}


def _require(p: JointPmf, names) -> None:
    missing = set(names) - set(p.names)
    if missing:
        raise LabelError(f"missing variables {sorted(missing)}")


def star(source: JointPmf, corrupt: str | None = None) -> StarConstruction:
    """Build p(u*, v*, t*, w1*, w2*, x) by averaging all (i, j, k) shifts.

    ``corrupt`` builds a deliberately wrong construction for negative
    controls: ``"skip_scale"`` leaves the i = 0 shifts unscaled by 1/m1,
    ``"unshared_k"`` draws the shift stored in W2star independently of T's,
    ``"hide_u_shift"`` records i = 0 in W1star whatever shift U received.
    """
    if corrupt is not None and corrupt not in CORRUPTIONS:
        raise ValueError(f"unknown corruption {corrupt!r}")
    _require(source, NJ_SOURCE)
    src = source.reorder(NJ_SOURCE).mass
    m1, m2, m3, n1, n2, nx = src.shape
    out = np.zeros((m1, m2, m3, n1, m1, m3, n2, m2, m3, nx))
    scale = 1.0 / (m1 * m2 * m3)
    for i in range(m1):
        for j in range(m2):
            for k in range(m3):
                # shifted[u, v, t, ...] = source[(u+i)%m1, (v+j)%m2, (t+k)%m3, ...]
                shifted = np.roll(src, shift=(-i, -j, -k), axis=(0, 1, 2))
                c = scale
                if corrupt == "skip_scale" and i == 0:
                    c = scale * m1
                if corrupt == "hide_u_shift":
                    out[:, :, :, :, 0, k, :, j, k, :] += shifted * c
                elif corrupt == "unshared_k":
                    for k2 in range(m3):
                        out[:, :, :, :, i, k, :, j, k2, :] += shifted * (scale / m3)
                else:
                    out[:, :, :, :, i, k, :, j, k, :] = shifted * c
    mass = out.reshape(m1, m2, m3, n1 * m1 * m3, n2 * m2 * m3, nx)
    result = JointPmf(STAR_NAMES, mass, normalize=True)
    return StarConstruction(source.reorder(NJ_SOURCE), m1, m2, m3, result)


# label, starred variables, matching source variables, scale as (a, b, c) -> 1/(m1^a m2^b m3^c)
_IDENTITIES = (
    ("p(T*,W1*,X)", ["Tstar", "W1star", "X"], ["T", "W1", "X"], (1, 0, 1)),
    ("p(T*,W2*,X)", ["Tstar", "W2star", "X"], ["T", "W2", "X"], (0, 1, 1)),
    ("p(U*,W1*,X)", ["Ustar", "W1star", "X"], ["U", "W1", "X"], (1, 0, 1)),
    ("p(V*,W2*,X)", ["Vstar", "W2star", "X"], ["V", "W2", "X"], (0, 1, 1)),
    ("p(U*,T*,W1*,X)", ["Ustar", "Tstar", "W1star", "X"], ["U", "T", "W1", "X"], (1, 0, 1)),
    ("p(V*,T*,W2*,X)", ["Vstar", "Tstar", "W2star", "X"], ["V", "T", "W2", "X"], (0, 1, 1)),
    ("p(T*,W1*,W2*,X)", ["Tstar", "W1star", "W2star", "X"], ["T", "W1", "W2", "X"], (1, 1, 1)),
    ("p(U*,T*,W1*,W2*,X)", ["Ustar", "Tstar", "W1star", "W2star", "X"], ["U", "T", "W1", "W2", "X"], (1, 1, 1)),
    ("p(V*,T*,W1*,W2*,X)", ["Vstar", "Tstar", "W1star", "W2star", "X"], ["V", "T", "W1", "W2", "X"], (1, 1, 1)),
)

_SHIFTED = {"i": "U", "j": "V", "k": "T"}


def _unpacked_lhs(s: StarConstruction, starred) -> tuple[np.ndarray, list[str], float]:
    """Starred marginal with each starred W split into (w, shift, k) axes.

    When both starred W's are present the two k axes are merged onto their
    diagonal; the mass found off the diagonal is returned as a deviation.
    """
    m1, m2, m3 = s.m1, s.m2, s.m3
    lhs = marginalize(s.result, starred).mass
    shape, labels = [], []
    for name, size in zip(starred, lhs.shape):
        if name == "W1star":
            shape += [s.source.card("W1"), m1, m3]
            labels += ["W1", "i", "k1"]
        elif name == "W2star":
            shape += [s.source.card("W2"), m2, m3]
            labels += ["W2", "j", "k2"]
        else:
            shape.append(size)
            labels.append(name.removesuffix("star"))
    lhs = lhs.reshape(shape)
    off = 0.0
    if "k1" in labels and "k2" in labels:
        a1, a2 = labels.index("k1"), labels.index("k2")
        diag = np.diagonal(lhs, axis1=a1, axis2=a2)
        off = float(np.abs(lhs).sum() - np.abs(diag).sum())
        lhs = diag
        labels = [lab for lab in labels if lab not in ("k1", "k2")] + ["k"]
    else:
        labels = ["k" if lab in ("k1", "k2") else lab for lab in labels]
    return lhs, labels, off


def _identity_check(s: StarConstruction, starred, plain, powers) -> float:
    lhs, labels, off = _unpacked_lhs(s, starred)
    m = {"i": s.m1, "j": s.m2, "k": s.m3}
    shifts = [lab for lab in ("i", "j", "k") if lab in labels]
    base = marginalize(s.source, plain).mass
    rhs = np.zeros(base.shape + tuple(m[a] for a in shifts))
    for combo in np.ndindex(*(m[a] for a in shifts)):
        rolled = base
        for a, sh in zip(shifts, combo):
            var = _SHIFTED[a]
            if var in plain:
                # P(var = (v + sh) mod m) as a function of v
                rolled = np.roll(rolled, -sh, axis=plain.index(var))
        rhs[(Ellipsis,) + combo] = rolled
    rhs_labels = list(plain) + shifts
    rhs = np.transpose(rhs, [rhs_labels.index(lab) for lab in labels])
    scale = 1.0 / (s.m1 ** powers[0] * s.m2 ** powers[1] * s.m3 ** powers[2])
    return max(off, float(np.max(np.abs(lhs - scale * rhs))))


def verify_marginal_identities(s: StarConstruction) -> Report:
    """Check P(U*,V*,T*) uniformity and the nine shifted-marginal identities."""
    rep = Report(MARGINAL_TOL)
    uvt = marginalize(s.result, ["Ustar", "Vstar", "Tstar"]).mass
    rep.deviations["p(U*,V*,T*)"] = float(np.max(np.abs(uvt - 1.0 / (s.m1 * s.m2 * s.m3))))
    for label, starred, plain, powers in _IDENTITIES:
        rep.deviations[label] = _identity_check(s, starred, plain, powers)
    return rep


# the fourteen terms the construction must preserve, as (A, B, C) over source names
PRESERVED_TERMS = (
    (("T",), ("Y",), ("W1",)),
    (("T",), ("Z",), ("W2",)),
    (("U",), ("Y",), ("W1",)),
    (("V",), ("Z",), ("W2",)),
    (("T", "U"), ("Y",), ("W1",)),
    (("T", "V"), ("Z",), ("W2",)),
    (("T", "W1", "W2"), ("Y",), ()),
    (("T", "W1", "W2"), ("Z",), ()),
    (("T", "W2"), ("Y",), ("W1",)),
    (("T", "W1"), ("Z",), ("W2",)),
    (("U",), ("Y",), ("T", "W1", "W2")),
    (("V",), ("Z",), ("T", "W1", "W2")),
    (("U",), ("Y",), ("T", "V", "W1", "W2")),
    (("V",), ("Z",), ("T", "U", "W1", "W2")),
)


def _term_label(a, b, c) -> str:
    s = f"I({','.join(a)};{','.join(b)}"
    return s + (f"|{','.join(c)})" if c else ")")


def verify_mi_equalities(s: StarConstruction, ch) -> Report:
    """|I(starred) - I(source)| for every preserved term, channel attached to both."""
    src = attach_channel(s.source, ch)
    st = attach_channel(s.result.rename(STAR_RENAME), ch)
    rep = Report(MI_TOL)
    for a, b, c in PRESERVED_TERMS:
        lhs = cond_mutual_info(st, a, b, c)
        rhs = cond_mutual_info(src, a, b, c)
        rep.deviations[_term_label(a, b, c)] = abs(lhs - rhs)
    return rep


def embed_nj_in_bound2(p: JointPmf) -> JointPmf:
    """Relabel (T, W1, W2) as a single W; U, V and X are kept.

    W's index is the row-major flattening of (t, w1, w2).
    """
    _require(p, NJ_SOURCE)
    q = p.reorder(["U", "V", "T", "W1", "W2", "X"]).mass
    mu, mv, mt, n1, n2, nx = q.shape
    return JointPmf(["U", "V", "W", "X"], q.reshape(mu, mv, mt * n1 * n2, nx))


def lift_deterministic(p: JointPmf, u: str = "U", x: str = "X") -> JointPmf:
    """Make X a function of the auxiliaries by folding independent randomness into U.

    Q is uniform on [0, 1) quantized at every breakpoint of the conditional
    CDFs F(x | aux), so Q is independent of the auxiliaries and
    X = F^{-1}(Q | aux) reproduces p exactly. U is replaced by (U, Q) with
    index u * |Q| + q.
    """
    aux = [n for n in p.names if n != x]
    if u not in aux:
        raise LabelError(f"missing variable {u!r}")
    m = p.reorder(aux + [x]).mass
    aux_shape, nx = m.shape[:-1], m.shape[-1]
    flat = m.reshape(-1, nx)
    pa = flat.sum(axis=1)
    cond = np.divide(flat, pa[:, None], out=np.zeros_like(flat), where=pa[:, None] > 0)
    cdf = np.cumsum(cond, axis=1)
    cuts = np.unique(np.concatenate([[0.0, 1.0], cdf[pa > 0, :-1].ravel()]))
    cuts = cuts[(cuts >= 0.0) & (cuts <= 1.0)]
    # merge breakpoints closer than rounding noise
    cuts = cuts[np.concatenate([[True], np.diff(cuts) > 1e-15])]
    cuts[-1] = 1.0
    widths = np.diff(cuts)
    mids = 0.5 * (cuts[:-1] + cuts[1:])
    nq = len(widths)
    out = np.zeros((flat.shape[0], nq, nx))
    for a in np.flatnonzero(pa > 0):
        xs = np.minimum(np.searchsorted(cdf[a], mids, side="right"), nx - 1)
        out[a, np.arange(nq), xs] = pa[a] * widths
    # fold Q into U's axis
    ui = aux.index(u)
    out = out.reshape(aux_shape + (nq, nx))
    out = np.moveaxis(out, len(aux_shape), ui + 1)
    shape = list(aux_shape)
    shape[ui] *= nq
    return JointPmf(aux + [x], out.reshape(shape + [nx]), normalize=True).reorder(p.names)


def embed_bound2_in_nj(p: JointPmf) -> JointPmf:
    """U' = (U, W), V' = (V, W), T' = W with constant W1', W2'.

    Requires X to be a deterministic function of (U, V, W); use
    ``lift_deterministic`` first otherwise.
    """
    _require(p, ("U", "V", "W", "X"))
    if not is_deterministic(p, "X", ["U", "V", "W"]):
        raise PreconditionError(
            "X is not a deterministic function of (U, V, W); "
            "call lift_deterministic(p) to fold the randomness into U first"
        )
    q = p.reorder(["U", "V", "W", "X"]).mass
    mu, mv, mw, nx = q.shape
    out = np.zeros((mu * mw, mv * mw, mw, 1, 1, nx))
    for w in range(mw):
        # U' index u * |W| + w, V' index v * |W| + w
        out[w::mw, w::mw, w, 0, 0, :] = q[:, :, w, :]
    return JointPmf(NJ_SOURCE, out, normalize=True)


def embed_uv_in_uvw(p: JointPmf) -> JointPmf:
    """Add a constant W to a (U, V, X) distribution."""
    _require(p, ("U", "V", "X"))
    q = p.reorder(["U", "V", "X"]).mass
    return JointPmf(["U", "V", "W", "X"], q[:, :, None, :])


def embed_uvw_in_uv(p: JointPmf) -> JointPmf:
    """U' = (U, W), V' = (V, W), dropping W."""
    _require(p, ("U", "V", "W", "X"))
    q = p.reorder(["U", "V", "W", "X"]).mass
    mu, mv, mw, nx = q.shape
    out = np.zeros((mu * mw, mv * mw, nx))
    for w in range(mw):
        out[w::mw, w::mw, :] = q[:, :, w, :]
    return JointPmf(["U", "V", "X"], out, normalize=True)


@dataclass(frozen=True)
class RowMatch:
    """Row-by-row comparison of two polytopes that should share rows."""

    matched: bool
    max_deviation: float
    unmatched: tuple[str, ...] = ()


def match_rows(P, Q, tol: float = MI_TOL) -> RowMatch:
    """Pair every row of P with a distinct row of Q with equal coefficients and rhs."""
    free = list(Q.rows)
    worst = 0.0
    unmatched = []
    for r in P.rows:
        cands = [(abs(q.rhs - r.rhs), n) for n, q in enumerate(free) if q.coeffs == r.coeffs]
        if not cands:
            unmatched.append(r.tag)
            continue
        dev, n = min(cands)
        worst = max(worst, dev)
        free.pop(n)
    unmatched += [q.tag for q in free]
    return RowMatch(not unmatched and worst <= tol, worst, tuple(unmatched))


@dataclass(frozen=True)
class ReverseEmbeddingCheck:
    redundant: bool
    rows: RowMatch
    nj_contains_bound2: Containment
    bound2_contains_nj: Containment

    @property
    def passed(self) -> bool:
        return self.redundant and self.rows.matched and bool(self.nj_contains_bound2) \
            and bool(self.bound2_contains_nj)


def check_reverse_embedding(p: JointPmf, ch) -> ReverseEmbeddingCheck:
    """bound2 polytope of p against the NJ polytope of its (U,W),(V,W),W substitution."""
    b2 = bound2_polytope(attach_channel(p, ch))
    nj = nj_polytope(attach_channel(embed_bound2_in_nj(p), ch))
    redundant = redundancy_check(nj, NJ_REDUNDANT_TAGS)
    reduced = nj.without(NJ_REDUNDANT_TAGS)
    return ReverseEmbeddingCheck(
        redundant,
        match_rows(reduced, b2),
        contains(nj, b2),
        contains(b2, nj),
    )


def check_forward_embedding(p: JointPmf, ch) -> Containment:
    """NJ polytope of p inside the bound2 polytope of W = (T, W1, W2)."""
    nj = nj_polytope(attach_channel(p, ch))
    b2 = bound2_polytope(attach_channel(embed_nj_in_bound2(p), ch))
    return contains(b2, nj)


def check_uv_embeddings(p_uvw: JointPmf, p_uv: JointPmf, ch) -> tuple[Containment, Containment]:
    """Both directions of the private-message comparison, on the R0 = 0 slice.

    Returns (uv(embedded p_uvw) contains uvw(p_uvw) slice,
             uvw(embedded p_uv) slice contains uv(p_uv)).
    """
    uvw_slice = uvw_polytope(attach_channel(p_uvw, ch)).slice_r0_zero()
    uv_big = uv_polytope(attach_channel(embed_uvw_in_uv(p_uvw), ch))
    uv = uv_polytope(attach_channel(p_uv, ch))
    uvw_from_uv = uvw_polytope(attach_channel(embed_uv_in_uvw(p_uv), ch)).slice_r0_zero()
    return contains(uv_big, uvw_slice), contains(uvw_from_uv, uv)
