"""Support-function estimates of the outer-bound regions.

For a fixed auxiliary distribution the rate polytope is {r >= 0 : A r <= b},
so by LP duality its support value in direction w is

    min_k  y_k . b(q)          over the vertices y_k of {y >= 0 : A^T y >= w}.

The dual vertices depend only on the row table and on w, and every entry of
b(q) is a fixed linear combination of joint entropies. The objective is
therefore a minimum of finitely many entropy combinations of the joint pmf
q(aux, x); it is maximized by projected gradient ascent on the simplex with
a softmin whose temperature is annealed towards the exact minimum.
"""

from __future__ import annotations

import hashlib
import itertools
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from .channel import Channel
from .probkit import JointPmf, attach_channel
from .regions import AUX_NAMES, TEMPLATES, RatePoint, build_polytope, support_value

MAP_CUTOFF = 256
SAT_TOL = 5e-3
LOG_FLOOR = 1e-12

BOUND_KINDS = tuple(TEMPLATES)


class SpecError(ValueError):
    pass


@dataclass(frozen=True)
class AuxSpec:
    """Bound kind plus alphabet sizes of its auxiliaries."""

    bound_kind: str
    cards: tuple[tuple[str, int], ...]
    x_deterministic: bool = False

    def __post_init__(self):
        if self.bound_kind not in TEMPLATES:
            raise SpecError(f"unknown bound kind {self.bound_kind!r}")
        cards = dict(self.cards)
        names = AUX_NAMES[self.bound_kind]
        if set(cards) != set(names):
            raise SpecError(f"{self.bound_kind} needs cardinalities for {names}, got {sorted(cards)}")
        for n, c in cards.items():
            if int(c) != c or c < 1:
                raise SpecError(f"cardinality of {n} must be a positive integer, got {c}")
        object.__setattr__(self, "cards", tuple((n, int(cards[n])) for n in names))

    @classmethod
    def default(cls, bound_kind: str, x_card: int, x_deterministic: bool | None = None,
                **overrides: int) -> "AuxSpec":
        """Cardinality caps |W| = |X|+5, |U| = |V| = |X|+1 for bound2/uvw/uv.

        The nj kind has no cap; U, V, T get |X|+1 symbols and W1, W2 two.
        X is a function of the auxiliaries by default only for nj.
        """
        if bound_kind in ("uvw", "bound2"):
            cards = {"U": x_card + 1, "V": x_card + 1, "W": x_card + 5}
        elif bound_kind == "uv":
            cards = {"U": x_card + 1, "V": x_card + 1}
        elif bound_kind == "nj":
            cards = {"U": x_card + 1, "V": x_card + 1, "T": x_card + 1, "W1": 2, "W2": 2}
        else:
            raise SpecError(f"unknown bound kind {bound_kind!r}")
        unknown = set(overrides) - set(cards)
        if unknown:
            raise SpecError(f"{bound_kind} has no auxiliaries {sorted(unknown)}")
        cards.update(overrides)
        if x_deterministic is None:
            x_deterministic = bound_kind == "nj"
        return cls(bound_kind, tuple(cards.items()), x_deterministic)

    @property
    def aux_names(self) -> tuple[str, ...]:
        return tuple(n for n, _ in self.cards)

    @property
    def aux_cards(self) -> tuple[int, ...]:
        return tuple(c for _, c in self.cards)

    def card(self, name: str) -> int:
        return dict(self.cards)[name]

    def with_cards(self, **cards: int) -> "AuxSpec":
        merged = dict(self.cards)
        merged.update(cards)
        return replace(self, cards=tuple(merged.items()))

    def describe(self) -> str:
        mode = "det" if self.x_deterministic else "stoch"
        return f"{self.bound_kind}[{','.join(f'{n}={c}' for n, c in self.cards)};{mode}]"


@dataclass(frozen=True)
class OptimizerConfig:
    restarts: int = 20
    max_iters: int = 300
    step_init: float = 1e-2
    fd_step: float = 1e-5
    tol: float = 1e-8
    seed: int = 0
    # softmin temperatures in bits, coarse to fine
    temperatures: tuple[float, ...] = (3e-2, 1e-2, 3e-3, 1e-3, 3e-4, 1e-4, 1e-5)
    gradient: str = "analytic"
    map_cutoff: int = MAP_CUTOFF
    workers: int = 1

    def __post_init__(self):
        for name in ("restarts", "max_iters", "step_init", "fd_step", "tol", "workers"):
            if not getattr(self, name) > 0:
                raise SpecError(f"{name} must be positive")
        if self.tol < 1e-8:
            raise SpecError("tol must be at least 1e-8")
        if self.gradient not in ("analytic", "fd"):
            raise SpecError(f"gradient must be 'analytic' or 'fd', got {self.gradient!r}")


@dataclass(frozen=True)
class SupportRecord:
    weight: tuple[float, float, float]
    value: float
    point: RatePoint
    pmf: JointPmf = field(repr=False)
    digest: str
    restarts_to_best: int


@dataclass(frozen=True)
class RegionEstimate:
    spec: AuxSpec
    records: tuple[SupportRecord, ...]

    def values(self) -> np.ndarray:
        return np.array([r.value for r in self.records])


def digest(p: JointPmf) -> str:
    h = hashlib.sha256()
    h.update(repr((p.names, p.cards)).encode())
    h.update(np.ascontiguousarray(p.mass).tobytes())
    return h.hexdigest()[:16]


def project_simplex(v: np.ndarray) -> np.ndarray:
    """Euclidean projection onto {x >= 0, sum x = 1} (sort-based)."""
    n = v.size
    u = np.sort(v)[::-1]
    css = np.cumsum(u) - 1.0
    k = np.arange(1, n + 1)
    rho = np.nonzero(u - css / k > 0)[0][-1]
    theta = css[rho] / (rho + 1.0)
    return np.maximum(v - theta, 0.0)


def dual_vertices(A: np.ndarray, w: np.ndarray, tol: float = 1e-12) -> np.ndarray:
    """Vertices of {y >= 0 : A^T y >= w} for a 3-column row matrix A."""
    m = A.shape[0]
    found: list[np.ndarray] = []
    for size in (1, 2, 3):
        for S in itertools.combinations(range(m), size):
            for J in itertools.combinations(range(3), size):
                M = A[np.ix_(S, J)].T
                if abs(np.linalg.det(M)) < 1e-12:
                    continue
                yS = np.linalg.solve(M, w[list(J)])
                if np.any(yS < -tol):
                    continue
                y = np.zeros(m)
                y[list(S)] = np.maximum(yS, 0.0)
                if np.all(A.T @ y >= w - 1e-9):
                    found.append(y)
    if not found:
        raise SpecError("no dual vertex; is the weight nonzero and every rate capped?")
    Y = np.unique(np.round(np.array(found), 12), axis=0)
    return Y


class CompiledBound:
    """Entropy-coefficient form of a bound's row table for fixed cardinalities.

    Joint axes are (aux..., X, Y, Z). Each row's right-hand side is
    ``R @ h`` where ``h`` holds the entropies of the marginals listed in
    ``subsets``.
    """

    def __init__(self, spec: AuxSpec, ch: Channel):
        self.spec = spec
        self.ch = ch
        self.names = spec.aux_names + ("X", "Y", "Z")
        self.q_shape = spec.aux_cards + (ch.x_card,)
        axis = {n: i for i, n in enumerate(self.names)}
        templates = TEMPLATES[spec.bound_kind]
        subsets: dict[frozenset, int] = {}
        coef: list[dict[int, float]] = []

        def add(entry: dict, names, sign: float):
            key = frozenset(axis[n] for n in names)
            if not key:
                return
            idx = subsets.setdefault(key, len(subsets))
            entry[idx] = entry.get(idx, 0.0) + sign

        for t in templates:
            entry: dict[int, float] = {}
            for term in t.terms:
                add(entry, term.a + term.c, 1.0)
                add(entry, term.b + term.c, 1.0)
                add(entry, term.a + term.b + term.c, -1.0)
                add(entry, term.c, -1.0)
            coef.append(entry)
        self.subsets = [tuple(sorted(s)) for s in sorted(subsets, key=subsets.get)]
        R = np.zeros((len(templates), len(self.subsets)))
        for i, entry in enumerate(coef):
            for j, c in entry.items():
                R[i, j] = c
        self.R = R
        self.A = np.array([t.coeffs for t in templates])
        nd = len(self.names)
        self._drop = [tuple(a for a in range(nd) if a not in s) for s in self.subsets]
        # each subset is reduced from the smallest partial marginal that contains it:
        # 0 = q(aux, x), 1 = with Y, 2 = with Z, 3 = with both
        ya, za = nd - 2, nd - 1
        self._plan = []
        for s in self.subsets:
            src = (ya in s) + 2 * (za in s)
            src_axes = list(range(nd - 2)) + [a for a, bit in ((ya, 1), (za, 2)) if src & bit]
            drop = tuple(i for i, a in enumerate(src_axes) if a not in s)
            self._plan.append((src, drop))
        self._ky = ch.marginal_y()
        self._kz = ch.marginal_z()

    def combos(self, w) -> np.ndarray:
        """Entropy coefficient vectors whose minimum is the support value at w."""
        Y = dual_vertices(self.A, np.asarray(w, dtype=float))
        C = Y @ self.R
        return np.unique(np.round(C, 12), axis=0)

    def full(self, q: np.ndarray) -> np.ndarray:
        return q.reshape(self.q_shape)[..., None, None] * self.ch.kernel

    def entropies(self, q: np.ndarray) -> np.ndarray:
        F = self.full(q)
        h = np.empty(len(self.subsets))
        for i, drop in enumerate(self._drop):
            m = F.sum(axis=drop)
            m = m[m > 0]
            h[i] = -(m * np.log2(m)).sum()
        return h

    def value_and_grad(self, q: np.ndarray, C: np.ndarray, tau: float):
        """Softmin (temperature tau) of C @ h(q) and its gradient in q.

        Constant gradient offsets are dropped; they vanish under simplex projection.
        """
        Q = q.reshape(self.q_shape)
        srcs = (Q, Q[..., None] * self._ky, Q[..., None] * self._kz, self.full(q))
        h = np.empty(len(self.subsets))
        logs = []
        for i, (src, drop) in enumerate(self._plan):
            m = srcs[src].sum(axis=drop, keepdims=True) if drop else srcs[src]
            lm = np.log2(np.maximum(m, LOG_FLOOR))
            h[i] = -(m * np.where(m > 0, lm, 0.0)).sum()
            logs.append(lm)
        g = C @ h
        gmin = g.min()
        if tau > 0:
            e = np.exp(-(g - gmin) / tau)
            pi = e / e.sum()
            val = gmin - tau * math.log(e.sum())
        else:
            pi = (g == gmin).astype(float)
            pi /= pi.sum()
            val = gmin
        c = pi @ C
        G = [np.zeros(a.shape) for a in srcs]
        for ci, lm, (src, _) in zip(c, logs, self._plan):
            if ci != 0.0:
                G[src] -= ci * lm
        grad_q = (G[0] + (G[1] * self._ky).sum(axis=-1) + (G[2] * self._kz).sum(axis=-1)
                  + (G[3] * self.ch.kernel).sum(axis=(-2, -1)))
        return val, grad_q.ravel(), gmin

    def exact(self, q: np.ndarray, C: np.ndarray) -> float:
        return float((C @ self.entropies(q)).min())

    def pmf(self, q: np.ndarray) -> JointPmf:
        q = np.maximum(q, 0.0)
        return JointPmf(self.spec.aux_names + ("X",), q.reshape(self.q_shape), normalize=True)


def fd_gradient(fun, x: np.ndarray, step: float) -> np.ndarray:
    """Central differences of ``fun`` along each coordinate."""
    g = np.empty_like(x)
    for i in range(x.size):
        e = np.zeros_like(x)
        e[i] = step
        g[i] = (fun(x + e) - fun(x - e)) / (2 * step)
    return g


class _Lift:
    """Parameter vector -> joint q(aux, x); identity or a fixed deterministic map."""

    def __init__(self, n_aux: int, x_card: int, fmap: np.ndarray | None):
        self.n_aux, self.x_card, self.fmap = n_aux, x_card, fmap
        self.idx = None if fmap is None else np.arange(n_aux) * x_card + fmap

    @property
    def dim(self) -> int:
        return self.n_aux * self.x_card if self.fmap is None else self.n_aux

    def q(self, p: np.ndarray) -> np.ndarray:
        if self.idx is None:
            return p
        q = np.zeros(self.n_aux * self.x_card)
        q[self.idx] = p
        return q

    def pull(self, grad_q: np.ndarray) -> np.ndarray:
        return grad_q if self.idx is None else grad_q[self.idx]


def _ascend(cb: CompiledBound, C: np.ndarray, lift: _Lift, p0: np.ndarray,
            cfg: OptimizerConfig) -> np.ndarray:
    """Annealed-softmin projected gradient ascent from p0; returns the best iterate."""
    p = project_simplex(p0)
    best_p, best_val = p, cb.exact(lift.q(p), C)
    iters = max(1, cfg.max_iters // len(cfg.temperatures))

    def evaluate(x, tau):
        if cfg.gradient == "analytic":
            v, gq, _ = cb.value_and_grad(lift.q(x), C, tau)
            return v, lift.pull(gq)
        f = lambda z: cb.value_and_grad(lift.q(z), C, tau)[0]  # noqa: E731
        return f(x), fd_gradient(f, x, cfg.fd_step)

    for tau in cfg.temperatures:
        val, grad = evaluate(p, tau)
        step = cfg.step_init
        for _ in range(iters):
            accepted = False
            while step > 1e-14:
                cand = project_simplex(p + step * grad)
                cval, cgrad = evaluate(cand, tau)
                if cval >= val + 1e-4 * float(grad @ (cand - p)):
                    accepted = True
                    break
                step *= 0.5
            if not accepted:
                break
            gain = cval - val
            p, val, grad = cand, cval, cgrad
            step *= 2.0
            if gain < cfg.tol:
                break
        ex = cb.exact(lift.q(p), C)
        if ex > best_val:
            best_p, best_val = p, ex
    return best_p


def _candidate_maps(n_aux: int, x_card: int, cfg: OptimizerConfig) -> list[np.ndarray] | None:
    """Every map aux -> x when there are at most cfg.map_cutoff of them, else None."""
    if x_card ** n_aux <= cfg.map_cutoff:
        return [np.array(f) for f in itertools.product(range(x_card), repeat=n_aux)]
    return None


def _run_one(args):
    spec, ch, w, cfg, fmap, run, C = args
    cb = CompiledBound(spec, ch)
    n_aux = int(np.prod(spec.aux_cards))
    rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, run]))
    if fmap is not None and fmap.size == 0:
        # too many maps to enumerate: this run draws its own
        fmap = rng.integers(ch.x_card, size=n_aux)
    lift = _Lift(n_aux, ch.x_card, fmap)
    alpha = 10 ** rng.uniform(-1.0, 0.3)
    p0 = rng.dirichlet(np.full(lift.dim, alpha))
    p = _ascend(cb, C, lift, p0, cfg)
    pmf = cb.pmf(lift.q(p))
    poly = build_polytope(spec.bound_kind, attach_channel(pmf, ch))
    value, point = support_value(poly, w)
    return value, point, pmf


def _better(a, b) -> bool:
    """Order-independent comparison of (value, digest, run) candidates."""
    return (a[0], b[1], b[2]) > (b[0], a[1], a[2])


def maximize_support(ch: Channel, spec: AuxSpec, w, cfg: OptimizerConfig) -> SupportRecord:
    """Best support value of the region in direction w found by the multi-start search.

    The result is a lower bound on the true support value. Run ``r`` always
    uses the seed (cfg.seed, r), so more restarts never lower the result.
    """
    w = np.asarray(w, dtype=float)
    if w.shape != (3,) or np.any(w < 0) or not np.any(w > 0):
        raise SpecError(f"weight must be a nonzero nonnegative triple, got {w}")
    if spec.bound_kind == "uv" and w[1] == 0 and w[2] == 0:
        raise SpecError("uv region has R0 = 0; weight must involve R1 or R2")
    cb = CompiledBound(spec, ch)
    C = cb.combos(w)
    n_aux = int(np.prod(spec.aux_cards))
    maps = [None]
    if spec.x_deterministic:
        maps = _candidate_maps(n_aux, ch.x_card, cfg) or [np.empty(0, dtype=int)]
    jobs = []
    for mi, fmap in enumerate(maps):
        for r in range(cfg.restarts):
            # run ids are stable in r for each map: prefix-monotone in cfg.restarts
            run = mi * 1_000_003 + r
            jobs.append((spec, ch, w, cfg, fmap, run, C))
    if cfg.workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=cfg.workers) as ex:
            results = list(ex.map(_run_one, jobs, chunksize=max(1, len(jobs) // (4 * cfg.workers))))
    else:
        results = [_run_one(j) for j in jobs]
    best = None
    for (value, point, pmf), job in zip(results, jobs):
        cand = (value, digest(pmf), job[5], point, pmf, job[5] % 1_000_003 + 1)
        if best is None or _better(cand, best):
            best = cand
    value, dg, _, point, pmf, nbest = best
    return SupportRecord(tuple(float(x) for x in w), float(value), point, pmf, dg, nbest)


def trace_region(ch: Channel, spec: AuxSpec, weights: Sequence, cfg: OptimizerConfig) -> RegionEstimate:
    if len(weights) == 0:
        raise SpecError("need at least one weight")
    recs = [maximize_support(ch, spec, w, cfg) for w in weights]
    recs.sort(key=lambda r: r.weight)
    return RegionEstimate(spec, tuple(recs))


def default_fan() -> list[tuple[float, float, float]]:
    """Thirteen unit directions: axes, face diagonals, the space diagonal, (2,1,0) permutations."""
    raw = [(1, 0, 0), (0, 1, 0), (0, 0, 1),
           (1, 1, 0), (1, 0, 1), (0, 1, 1),
           (1, 1, 1)]
    raw += sorted(set(itertools.permutations((2, 1, 0))), reverse=True)
    return [tuple(float(x) for x in np.array(v) / np.linalg.norm(v)) for v in raw]


def private_fan(n: int = 9) -> list[tuple[float, float, float]]:
    """n unit directions (0, cos t, sin t) spread over the quarter circle."""
    out = []
    for k in range(n):
        t = 0.5 * math.pi * k / (n - 1)
        c, s = math.cos(t), math.sin(t)
        out.append((0.0, 0.0 if abs(c) < 1e-15 else c, 0.0 if abs(s) < 1e-15 else s))
    return out


@dataclass(frozen=True)
class ComparisonRow:
    weight: tuple[float, float, float]
    value_a: float
    value_b: float

    @property
    def diff(self) -> float:
        """value_a - value_b."""
        return self.value_a - self.value_b


def compare_bounds(ch: Channel, spec_a: AuxSpec, spec_b: AuxSpec, weights: Sequence,
                   cfg: OptimizerConfig, cfg_b: OptimizerConfig | None = None) -> list[ComparisonRow]:
    """Twin support values per weight; ``diff`` is A minus B."""
    cfg_b = cfg if cfg_b is None else cfg_b
    rows = []
    for w in weights:
        a = maximize_support(ch, spec_a, w, cfg).value
        b = a if (spec_b == spec_a and cfg_b == cfg) else maximize_support(ch, spec_b, w, cfg_b).value
        rows.append(ComparisonRow(tuple(float(x) for x in w), a, b))
    return rows


@dataclass(frozen=True)
class SaturationRow:
    weight: tuple[float, float, float]
    base: float
    enlarged: tuple[float, ...]

    @property
    def gap(self) -> float:
        """Largest enlarged - base over the enlarged specs."""
        return max(e - self.base for e in self.enlarged)


@dataclass(frozen=True)
class SaturationTable:
    rows: tuple[SaturationRow, ...]
    tol: float

    @property
    def passed(self) -> bool:
        return all(r.gap <= self.tol for r in self.rows)

    @property
    def max_gap(self) -> float:
        return max(r.gap for r in self.rows)


def cardinality_saturation(ch: Channel, base: AuxSpec, extra: Sequence[AuxSpec], weights: Sequence,
                           cfg: OptimizerConfig, tol: float = SAT_TOL) -> SaturationTable:
    """Support values for the base caps against enlarged alphabets, per weight."""
    for e in extra:
        if e.bound_kind != base.bound_kind:
            raise SpecError("enlarged specs must share the base bound kind")
        if any(e.card(n) < base.card(n) for n in base.aux_names):
            raise SpecError(f"{e.describe()} does not dominate {base.describe()}")
    rows = []
    for w in weights:
        b = maximize_support(ch, base, w, cfg).value
        es = tuple(b if e == base else maximize_support(ch, e, w, cfg).value for e in extra)
        rows.append(SaturationRow(tuple(float(x) for x in w), b, es))
    return SaturationTable(tuple(rows), tol)
