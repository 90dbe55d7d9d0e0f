"""Quasi-inverse arithmetic in finite-dimensional *-algebras.

Two concrete algebras are supported: full matrix algebras M_n(C) with the
operator norm, and group algebras C[G] of a finite group, normed through the
left regular representation.  Elements are thin wrappers around numpy
arrays; all operations return new objects.

The quasi-product ``a o b = a + b - ab`` satisfies ``1 - a o b = (1-a)(1-b)``
in the unitization, so quasi-inverses are computed by inverting ``1 - a``.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field

import numpy as np

from . import fingroup
from .errors import (
    ContextError,
    InvalidTrace,
    NotAQuasiInversePair,
    NotIdempotent,
    NotQuasiInvertible,
    PerturbationTooLarge,
    SeriesDiverges,
)

TOL_SING = 1e-10
TOL_IDEM = 1e-8
TOL_PAIR = 1e-10
TOL_CONCLUDE = 1e-8
TOL_TRACE = 1e-10


@dataclass(frozen=True, eq=False)
class AlgContext:
    kind: str  # "matrix" or "group"
    dimension: int
    group: fingroup.FiniteGroup | None = None

    @classmethod
    def matrix(cls, n: int) -> AlgContext:
        return cls("matrix", n)

    @classmethod
    def group_algebra(cls, group: fingroup.FiniteGroup) -> AlgContext:
        return cls("group", group.order, group)

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.dimension, self.dimension) if self.kind == "matrix" else (self.dimension,)

    def mul(self, x: np.ndarray, y: np.ndarray) -> np.ndarray:
        if self.kind == "matrix":
            return x @ y
        return fingroup.convolve(self.group, x, y)

    def star(self, x: np.ndarray) -> np.ndarray:
        if self.kind == "matrix":
            return x.conj().T
        return np.conj(x[self.group.inverses])

    def unit(self) -> np.ndarray:
        if self.kind == "matrix":
            return np.eye(self.dimension, dtype=complex)
        e = np.zeros(self.dimension, dtype=complex)
        e[self.group.identity] = 1.0
        return e

    def operator(self, x: np.ndarray) -> np.ndarray:
        """Faithful matrix image used for norms and inversion."""
        if self.kind == "matrix":
            return x
        return fingroup.lambda_matrix(x, self.group)

    def norm(self, x: np.ndarray) -> float:
        return float(np.linalg.norm(self.operator(x), 2))

    def inverse(self, x: np.ndarray) -> np.ndarray:
        """Two-sided inverse, raising NotQuasiInvertible if numerically singular."""
        M = self.operator(x)
        s = np.linalg.svd(M, compute_uv=False)
        threshold = TOL_SING * max(s[0], np.finfo(float).tiny)
        if s[-1] <= threshold:
            raise NotQuasiInvertible(float(s[-1]), float(threshold))
        if self.kind == "matrix":
            return np.linalg.inv(M)
        # in a finite-dimensional algebra a right inverse is two-sided
        return np.linalg.solve(M, self.unit())


@dataclass(frozen=True, eq=False)
class AlgElement:
    ctx: AlgContext
    data: np.ndarray = field(repr=False)

    def __post_init__(self):
        d = np.asarray(self.data, dtype=complex)
        if d.shape != self.ctx.shape:
            raise ContextError(f"element shape {d.shape} does not match context {self.ctx.shape}")
        object.__setattr__(self, "data", d)

    def _check(self, other: AlgElement) -> None:
        o = other.ctx
        if (o.kind, o.dimension, o.group) != (self.ctx.kind, self.ctx.dimension, self.ctx.group):
            raise ContextError("operands belong to different algebras")

    def __add__(self, other: AlgElement) -> AlgElement:
        self._check(other)
        return AlgElement(self.ctx, self.data + other.data)

    def __sub__(self, other: AlgElement) -> AlgElement:
        self._check(other)
        return AlgElement(self.ctx, self.data - other.data)

    def __neg__(self) -> AlgElement:
        return AlgElement(self.ctx, -self.data)

    def __mul__(self, other):
        if isinstance(other, AlgElement):
            self._check(other)
            return AlgElement(self.ctx, self.ctx.mul(self.data, other.data))
        return AlgElement(self.ctx, self.data * other)

    def __rmul__(self, s) -> AlgElement:
        return AlgElement(self.ctx, s * self.data)

    def star(self) -> AlgElement:
        return AlgElement(self.ctx, self.ctx.star(self.data))

    def norm(self) -> float:
        return self.ctx.norm(self.data)

    @classmethod
    def zero(cls, ctx: AlgContext) -> AlgElement:
        return cls(ctx, np.zeros(ctx.shape, dtype=complex))

    @classmethod
    def unit(cls, ctx: AlgContext) -> AlgElement:
        return cls(ctx, ctx.unit())


@dataclass(frozen=True, eq=False)
class UnitizedElement:
    """``scalar * 1 + body`` in the forced unitization."""

    scalar: complex
    body: AlgElement

    def __mul__(self, other: UnitizedElement) -> UnitizedElement:
        a, lam = self.body, self.scalar
        b, mu = other.body, other.scalar
        return UnitizedElement(lam * mu, a * b + lam * b + mu * a)

    def __add__(self, other: UnitizedElement) -> UnitizedElement:
        return UnitizedElement(self.scalar + other.scalar, self.body + other.body)

    def __sub__(self, other: UnitizedElement) -> UnitizedElement:
        return UnitizedElement(self.scalar - other.scalar, self.body - other.body)

    def norm(self) -> float:
        return abs(self.scalar) + self.body.norm()

    @classmethod
    def one(cls, ctx: AlgContext) -> UnitizedElement:
        return cls(1.0, AlgElement.zero(ctx))

    @classmethod
    def embed(cls, a: AlgElement) -> UnitizedElement:
        return cls(0.0, a)

    def one_minus(self) -> UnitizedElement:
        return UnitizedElement(1.0 - self.scalar, -self.body)


@dataclass(frozen=True, eq=False)
class TraceFunctional:
    """Weighted diagonal trace on M_n, or evaluation at the identity on C[G]."""

    ctx: AlgContext
    weights: np.ndarray | None = None

    @classmethod
    def normalized(cls, ctx: AlgContext) -> TraceFunctional:
        if ctx.kind == "matrix":
            return cls(ctx, np.full(ctx.dimension, 1.0 / ctx.dimension))
        return cls(ctx, None)

    def __call__(self, x: AlgElement) -> complex:
        if self.ctx.kind == "matrix":
            w = self.weights if self.weights is not None else np.full(self.ctx.dimension, 1.0 / self.ctx.dimension)
            return complex(np.dot(w, np.diag(x.data)))
        return complex(x.data[self.ctx.group.identity])

    def validate(self, trials: int = 8, seed: int = 0) -> None:
        """Raise InvalidTrace unless tracial and faithful on random elements."""
        if self.weights is not None and np.any(np.asarray(self.weights) <= 0):
            raise InvalidTrace("trace weights must be positive")
        rng = np.random.default_rng(seed)
        for _ in range(trials):
            a = random_element(self.ctx, rng)
            b = random_element(self.ctx, rng)
            gap = abs(self(a * b) - self(b * a))
            if gap > 1e-10 * a.norm() * b.norm():
                raise InvalidTrace(f"not tracial: |tau(ab) - tau(ba)| = {gap:.3e}")
            pos = self(a.star() * a)
            if pos.real < 0 or abs(pos.imag) > 1e-12 * (1 + abs(pos)):
                raise InvalidTrace("tau(x*x) is not a nonnegative real")
            if pos.real <= 1e-12 and a.norm() > 1e-6:
                raise InvalidTrace("not faithful on positives")


# ------------------------------------------------------------------ operations

def qprod(a: AlgElement, b: AlgElement) -> AlgElement:
    return a + b - a * b


def qinv_exact(a: AlgElement) -> AlgElement:
    """b = 1 - (1-a)^{-1}, the two-sided quasi-inverse."""
    ctx = a.ctx
    u = ctx.unit() - a.data
    return AlgElement(ctx, ctx.unit() - ctx.inverse(u))


def qinv_neumann(a: AlgElement, tol: float = 1e-12, max_terms: int = 100_000) -> AlgElement:
    """-(a + a^2 + ...), truncated once the geometric tail bound drops below ``tol``."""
    r = a.norm()
    if r >= 1:
        raise SeriesDiverges(r)
    total = AlgElement.zero(a.ctx)
    term = a
    n = 1
    while True:
        total = total - term
        if r ** (n + 1) / (1 - r) < tol or n >= max_terms:
            break
        term = term * a
        n += 1
    return total


def perturb_left_qinv(b: AlgElement, c_prime: AlgElement, tol: float = 1e-14) -> AlgElement:
    """Left quasi-inverse a of u = b o c' with a o u = 0, so that a o b o c' = 0."""
    u = qprod(b, c_prime)
    r = u.norm()
    if r >= 1:
        raise PerturbationTooLarge(r)
    return qinv_neumann(u, tol=tol)


def idempotent_defect(p: AlgElement) -> float:
    return (p * p - p).norm()


def range_projection(p: AlgElement) -> AlgElement:
    """Hermitian idempotent e with ep = p and pe = e: e = pp*(1 + (p-p*)(p*-p))^{-1}."""
    ctx = p.ctx
    pn = p.norm()
    defect = idempotent_defect(p)
    threshold = TOL_IDEM * (1 + pn * pn)
    if defect > threshold:
        raise NotIdempotent(defect, threshold)
    ps = p.star()
    d = p - ps
    z = ctx.unit() + ctx.mul(d.data, (-d).data)
    return AlgElement(ctx, ctx.mul((p * ps).data, ctx.inverse(z)))


@dataclass
class CertificateReport:
    pair_norm_defect: float
    p_idem_defect: float
    trace_of_e: float | None
    p_norm: float
    verdict: str
    tolerances: dict
    seed: int | None = None

    @property
    def passed(self) -> bool:
        return self.verdict == "pass"

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True)


def df_certify(
    a: AlgElement,
    b: AlgElement,
    tau: TraceFunctional,
    *,
    tol_pair: float = TOL_PAIR,
    tol_conclude: float = TOL_CONCLUDE,
    tol_trace: float = TOL_TRACE,
    seed: int | None = None,
    check_trace: bool = True,
) -> CertificateReport:
    """Replay the trace argument that a o b = 0 forces b o a = 0.

    p = b o a is idempotent, its range projection e satisfies tau(e) = tau(p) = 0,
    faithfulness gives e = 0 and then p = ep = 0.
    """
    if check_trace:
        tau.validate(seed=0 if seed is None else seed)
    pair = qprod(a, b).norm()
    if pair > tol_pair:
        raise NotAQuasiInversePair(pair, tol_pair)
    p = qprod(b, a)
    pn = p.norm()
    idem = idempotent_defect(p)
    tols = {"pair": tol_pair, "idempotent": TOL_IDEM, "trace": tol_trace, "conclude": tol_conclude}
    try:
        e = range_projection(p)
    except NotIdempotent:
        return CertificateReport(pair, idem, None, pn, "reject", tols, seed)
    te = tau(e)
    ok = abs(te) <= tol_trace and pn <= tol_conclude
    return CertificateReport(pair, idem, float(abs(te)), pn, "pass" if ok else "fail", tols, seed)


# ----------------------------------------------------------------- generators

def random_element(ctx: AlgContext, rng: np.random.Generator, scale: float = 1.0) -> AlgElement:
    z = rng.standard_normal(ctx.shape) + 1j * rng.standard_normal(ctx.shape)
    return AlgElement(ctx, scale * z / np.sqrt(2 * ctx.dimension))


def random_invertible(ctx: AlgContext, rng: np.random.Generator, max_cond: float = 1e3) -> AlgElement:
    while True:
        u = AlgElement.unit(ctx) + random_element(ctx, rng)
        if np.linalg.cond(ctx.operator(u.data)) <= max_cond:
            return u


def random_quasi_inverse_pair(ctx: AlgContext, rng: np.random.Generator) -> tuple[AlgElement, AlgElement]:
    """(a, b) = (1-u, 1-u^{-1}) for a random well-conditioned invertible u."""
    u = random_invertible(ctx, rng)
    one = AlgElement.unit(ctx)
    return one - u, AlgElement(ctx, ctx.unit() - ctx.inverse(u.data))


def random_idempotent(
    n: int, rng: np.random.Generator, max_cond: float = 100.0, rank: int | None = None
) -> np.ndarray:
    """s diag(I_k, 0) s^{-1} with cond(s) <= max_cond."""
    k = int(rng.integers(0, n + 1)) if rank is None else rank
    while True:
        s = np.eye(n) + 0.5 * (rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))) / np.sqrt(n)
        if np.linalg.cond(s) <= max_cond:
            break
    d = np.diag(np.r_[np.ones(k), np.zeros(n - k)])
    return s @ d @ np.linalg.inv(s)


def shift_truncation(n: int) -> np.ndarray:
    """Unilateral shift compressed to C^n: an isometry on the first n-1 basis vectors.

    On l^2(N) the shift V has V*V = 1 but VV* != 1, so 1 - V* and 1 - V form a
    one-sided quasi-inverse pair.  Every finite truncation is directly finite, so
    the defect only appears in the limit; this helper makes that visible.
    """
    return np.eye(n, k=-1)

