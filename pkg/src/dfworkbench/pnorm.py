"""p->p operator norms of convolution matrices and the l^p-side algebra X_p(G).

The p-norm of a general matrix is not computable in closed form, so every
estimate here is a bracket ``[lower, upper]``.  The lower bound is attained
by an explicit witness vector from a Boyd-type power iteration and the upper
bound is the Riesz-Thorin interpolation of the column-sum and row-sum norms.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field

import numpy as np

from . import fingroup
from .errors import ContextError, DomainError
from .fingroup import FiniteGroup, GroupAlgElement

MAX_ITER = 500
RESTARTS = 3


def conjugate_index(p: float) -> float:
    if p == 2:
        return 2.0
    p_ = np.longdouble(p)
    return float(p_ / (p_ - 1))


def lp_norm(x: np.ndarray, p: float, weight: float = 1.0) -> float:
    """(weight * sum |x|^p)^(1/p); weight = 1/n gives normalized counting measure."""
    a = np.abs(np.asarray(x))
    m = a.max(initial=0.0)
    if m == 0:
        return 0.0
    return float(m * (weight * np.sum((a / m) ** p)) ** (1.0 / p))


def _dual(y: np.ndarray, p: float) -> np.ndarray:
    """Unit vector d in l^q with <d, y> = ||y||_p."""
    a = np.abs(y)
    m = a.max()
    if m == 0:
        return np.zeros_like(y)
    phase = np.where(a > 0, y / np.where(a > 0, a, 1), 0)
    d = (a / m) ** (p - 1) * phase
    return d / lp_norm(d, conjugate_index(p))


@dataclass
class PNormBracket:
    p: float
    lower: float
    upper: float
    iterations: int
    witness: np.ndarray | None = field(default=None, repr=False)

    @property
    def width(self) -> float:
        return self.upper - self.lower

    def to_dict(self) -> dict:
        return {"p": self.p, "lower": self.lower, "upper": self.upper, "iterations": self.iterations}


def riesz_thorin_upper(M: np.ndarray, p: float) -> float:
    col = np.abs(M).sum(axis=0).max(initial=0.0)
    row = np.abs(M).sum(axis=1).max(initial=0.0)
    q = conjugate_index(p)
    return float(col ** (1.0 / p) * row ** (1.0 / q))


def _boyd(M: np.ndarray, p: float, x0: np.ndarray, tol: float) -> tuple[float, np.ndarray, int]:
    q = conjugate_index(p)
    MH = M.conj().T
    x = x0 / lp_norm(x0, p)
    best, best_x = lp_norm(M @ x, p), x
    it = 0
    for it in range(1, MAX_ITER + 1):
        y = M @ x
        if not np.any(y):
            break
        z = MH @ _dual(y, p)
        if lp_norm(z, q) <= np.real(np.vdot(x, z)) * (1 + 1e-15):
            break  # stationary point of the Boyd iteration
        x = _dual(z, q)
        val = lp_norm(M @ x, p)
        gain = val - best
        if val > best:
            best, best_x = val, x
        if gain < tol * max(best, 1.0):
            break
    return best, best_x, it


def pnorm_bracket(M: np.ndarray, p: float, tol: float = 1e-10, seed: int = 0) -> PNormBracket:
    """Certified bracket for ||M||_{p->p}."""
    if not (1 < p < np.inf):
        raise DomainError(f"p must lie in (1, inf), got {p}")
    M = np.asarray(M, dtype=complex)
    n = M.shape[1]
    if p == 2:
        u, s, vh = np.linalg.svd(M)
        return PNormBracket(2.0, float(s[0]), float(s[0]), 0, vh[0].conj())
    upper = riesz_thorin_upper(M, p)
    rng = np.random.default_rng(seed)
    starts = [np.ones(n, dtype=complex)]
    starts += [rng.standard_normal(n) + 1j * rng.standard_normal(n) for _ in range(RESTARTS)]
    lower, witness, iters = -1.0, None, 0
    for x0 in starts:
        val, x, it = _boyd(M, p, x0, tol)
        iters += it
        if val > lower:
            lower, witness = val, x
    # the witness value is exact; clip only floating noise above the interpolation bound
    lower = min(lower, upper)
    return PNormBracket(float(p), float(lower), float(upper), iters, witness)


def pf_p_norm(f: GroupAlgElement, p: float, tol: float = 1e-10, seed: int = 0) -> PNormBracket:
    return pnorm_bracket(fingroup.lambda_matrix(f), p, tol, seed)


@dataclass
class ComparisonReport:
    group: str
    p: float
    lhs: float
    rhs_bracket: list
    verdict: str
    seed: int | None = None
    trials: int | None = None

    @property
    def passed(self) -> bool:
        return self.verdict == "pass"

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True)


def herz_compare(f: GroupAlgElement, p: float, seed: int = 0, slack: float = 1e-9) -> ComparisonReport:
    """Exact ||lambda_2(f)|| against the p-norm bracket of lambda_p(f)."""
    M = fingroup.lambda_matrix(f)
    lhs = float(np.linalg.norm(M, 2))
    br = pnorm_bracket(M, p, seed=seed)
    verdict = "pass" if lhs <= br.upper + slack else "VIOLATION"
    return ComparisonReport(f.group.name, p, lhs, [br.lower, br.upper], verdict, seed)


def adjoint_duality_check(f: GroupAlgElement, p: float, seed: int = 0, slack: float = 1e-9) -> ComparisonReport:
    """||lambda_p(f)||_{p->p} equals ||lambda(f)^H||_{q->q}; the two brackets must meet."""
    M = fingroup.lambda_matrix(f)
    q = conjugate_index(p)
    bp = pnorm_bracket(M, p, seed=seed)
    bq = pnorm_bracket(M.conj().T, q, seed=seed)
    lo, hi = max(bp.lower, bq.lower), min(bp.upper, bq.upper)
    verdict = "pass" if lo <= hi + slack * max(1.0, hi) else "fail"
    return ComparisonReport(f.group.name, p, bq.lower, [bp.lower, bp.upper], verdict, seed)


# ----------------------------------------------------------------------- X_p

@dataclass(frozen=True, eq=False)
class XpElement:
    """Pair (g, T) with g in l^p(G) and T acting on l^p(G), compatible when T h = g*h."""

    group: FiniteGroup
    g: np.ndarray
    T: np.ndarray
    p: float

    def compatibility_defect(self) -> float:
        # T applied to the basis delta_y must equal g * delta_y
        ref = fingroup.lambda_matrix(self.g, self.group)
        scale = max(1.0, float(np.abs(ref).max(initial=0.0)))
        return float(np.abs(self.T - ref).max(initial=0.0) / scale)

    def norm(self) -> float:
        # the certified upper bound is the one pnorm_bracket reports; no power iteration needed
        if self.p == 2:
            upper = float(np.linalg.norm(self.T, 2))
        else:
            upper = riesz_thorin_upper(self.T, self.p)
        return max(lp_norm(self.g, self.p), upper)


def diag_p(f: GroupAlgElement, p: float) -> XpElement:
    return XpElement(f.group, f.coeffs.copy(), fingroup.lambda_matrix(f), p)


def xp_mul(x: XpElement, y: XpElement) -> XpElement:
    """(f, S)(g, T) = (S g, S T)."""
    if x.group is not y.group or x.p != y.p:
        raise ContextError("X_p elements over different groups or exponents")
    return XpElement(x.group, x.T @ y.g, x.T @ y.T, x.p)


# ---------------------------------------------------------------- Kunze-Stein

@dataclass
class KSReport:
    group: str
    p: float
    trials: int
    max_ratio: float
    verdict: str
    seed: int
    unnormalized_constant: float = 0.0

    @property
    def passed(self) -> bool:
        return self.verdict == "pass"

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True)


def _trial_pair(n: int, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    kind = rng.integers(0, 4)
    g = rng.standard_normal(n) + 1j * rng.standard_normal(n)
    h = rng.standard_normal(n) + 1j * rng.standard_normal(n)
    if kind == 1:  # nonnegative functions, where Young's inequality is tightest
        g, h = np.abs(g), np.abs(h)
    elif kind == 2:  # spikes
        g = np.zeros(n, complex)
        g[rng.integers(0, n)] = 1.0
    elif kind == 3:  # near-constant
        g = 1.0 + 0.01 * g
        h = 1.0 + 0.01 * h
    return g, h


def ks_ratio(group: FiniteGroup, g: np.ndarray, h: np.ndarray, p: float) -> float:
    """||g*h||_2 / (||g||_p ||h||_2) with normalized Haar measure on G."""
    n = group.order
    conv = fingroup.convolve(group, g, h) / n
    den = lp_norm(g, p, 1.0 / n) * lp_norm(h, 2, 1.0 / n)
    return lp_norm(conv, 2, 1.0 / n) / den if den > 0 else 0.0


def kunze_stein_check(group: FiniteGroup, p: float, trials: int, seed: int = 0, slack: float = 1e-9) -> KSReport:
    if not (1 <= p < 2):
        raise DomainError(f"Kunze-Stein exponent must satisfy 1 <= p < 2, got {p}")
    n = group.order
    idx = group.cayley[:, group.inverses]
    G = np.empty((trials, n), complex)
    H = np.empty((trials, n), complex)
    for t in range(trials):
        rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(t,)))
        G[t], H[t] = _trial_pair(n, rng)
    conv = np.einsum("txy,ty->tx", G[:, idx], H) / n
    def norm(X, r):
        return np.mean(np.abs(X) ** r, axis=1) ** (1.0 / r)

    ratios = norm(conv, 2) / (norm(G, p) * norm(H, 2))
    worst = float(ratios.max(initial=0.0))
    verdict = "pass" if worst <= 1 + slack else "fail"
    # under counting measure the same bound carries the factor n^(1 - 1/p); informational
    return KSReport(group.name, float(p), trials, worst, verdict, seed, float(n ** (1.0 - 1.0 / p)))
