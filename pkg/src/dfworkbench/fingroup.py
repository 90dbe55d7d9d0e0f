"""Finite groups given by Cayley tables, their group algebras and convolution spectra.

Group elements are the integers ``0..n-1``.  The multiplication table is a
dense ``(n, n)`` integer array with ``cayley[x, y] = x*y``.  Functions on the
group are complex vectors indexed by element.  The regular representation
uses the convention ``M[x, y] = f(x y^-1)`` so that ``M @ h`` is the
convolution ``f*h`` with respect to counting measure.
"""

from __future__ import annotations

import itertools
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np
from scipy.optimize import linear_sum_assignment

from .errors import NotAGroup, NumericalFailure, ParseError, TruncationError

EXHAUSTIVE_ASSOC_LIMIT = 64
SAMPLED_TRIPLES = 100_000


@dataclass(frozen=True, eq=False)
class FiniteGroup:
    order: int
    cayley: np.ndarray
    identity: int
    inverses: np.ndarray
    name: str = "G"

    def mul(self, x: int, y: int) -> int:
        return int(self.cayley[x, y])

    def inv(self, x: int) -> int:
        return int(self.inverses[x])

    @property
    def is_abelian(self) -> bool:
        return bool(np.array_equal(self.cayley, self.cayley.T))

    def center(self) -> np.ndarray:
        return np.flatnonzero(np.all(self.cayley == self.cayley.T, axis=1))

    def element_order(self, x: int) -> int:
        k, y = 1, x
        while y != self.identity:
            y = self.mul(y, x)
            k += 1
        return k

    def info(self) -> dict:
        return {
            "name": self.name,
            "order": self.order,
            "abelian": self.is_abelian,
            "center_size": int(self.center().size),
            "exponent": int(np.lcm.reduce([self.element_order(x) for x in range(self.order)])),
        }


def validate_table(
    cayley: np.ndarray, identity: int | None = None, *, seed: int = 0
) -> tuple[int, np.ndarray]:
    """Check the group axioms; return (identity, inverses) or raise NotAGroup."""
    n = cayley.shape[0]
    if cayley.shape != (n, n) or n == 0:
        raise NotAGroup("closure", f"table shape {cayley.shape} is not square")
    if cayley.min() < 0 or cayley.max() >= n:
        raise NotAGroup("closure", "entries must lie in 0..n-1")
    ref = np.arange(n)
    for r in range(n):
        if not np.array_equal(np.sort(cayley[r]), ref):
            raise NotAGroup("latin square", f"row {r} is not a permutation")
        if not np.array_equal(np.sort(cayley[:, r]), ref):
            raise NotAGroup("latin square", f"column {r} is not a permutation")

    if identity is None:
        hits = [e for e in range(n) if np.array_equal(cayley[e], ref) and np.array_equal(cayley[:, e], ref)]
        if not hits:
            raise NotAGroup("identity", "no two-sided identity element")
        identity = hits[0]
    elif not (np.array_equal(cayley[identity], ref) and np.array_equal(cayley[:, identity], ref)):
        raise NotAGroup("identity", f"element {identity} is not a two-sided identity")

    inverses = np.argmax(cayley == identity, axis=1)
    if not np.all(cayley[inverses, ref] == identity):
        bad = int(np.flatnonzero(cayley[inverses, ref] != identity)[0])
        raise NotAGroup("inverses", f"left and right inverse of {bad} differ")

    if n <= EXHAUSTIVE_ASSOC_LIMIT:
        left = cayley[cayley[:, :, None], ref[None, None, :]]
        right = cayley[ref[:, None, None], cayley[None, :, :]]
        bad = np.argwhere(left != right)
    else:
        rng = np.random.default_rng(seed)
        a, b, c = rng.integers(0, n, size=(3, SAMPLED_TRIPLES))
        mask = cayley[cayley[a, b], c] != cayley[a, cayley[b, c]]
        bad = np.stack([a[mask], b[mask], c[mask]], axis=1)
    if len(bad):
        x, y, z = (int(v) for v in bad[0])
        raise NotAGroup("associativity", f"({x}*{y})*{z} != {x}*({y}*{z})")
    return int(identity), inverses.astype(np.int64)


def from_table(cayley, identity: int | None = None, name: str = "G") -> FiniteGroup:
    table = np.asarray(cayley, dtype=np.int64)
    e, inv = validate_table(table, identity)
    table.setflags(write=False)
    inv.setflags(write=False)
    return FiniteGroup(order=table.shape[0], cayley=table, identity=e, inverses=inv, name=name)


# ---------------------------------------------------------------- constructors

def cyclic(n: int) -> FiniteGroup:
    if n < 1:
        raise NotAGroup("closure", "cyclic(n) needs n >= 1")
    r = np.arange(n)
    return from_table((r[:, None] + r[None, :]) % n, 0, name=f"cyclic({n})")


def dihedral(n: int) -> FiniteGroup:
    """Symmetries of the regular n-gon (order 2n).  Index e*n + k encodes r^k s^e."""
    if n < 1:
        raise NotAGroup("closure", "dihedral(n) needs n >= 1")
    idx = np.arange(2 * n)
    k, e = idx % n, idx // n
    k2 = (k[:, None] + np.where(e[:, None] == 0, 1, -1) * k[None, :]) % n
    e2 = e[:, None] ^ e[None, :]
    return from_table(e2 * n + k2, 0, name=f"dihedral({n})")


def symmetric(n: int) -> FiniteGroup:
    """Permutations of n points in lexicographic order; (s*t)(i) = s(t(i))."""
    if not 1 <= n <= 6:
        raise NotAGroup("closure", "symmetric(n) is limited to 1 <= n <= 6")
    perms = np.array(list(itertools.permutations(range(n))), dtype=np.int64)
    N = len(perms)
    comp = perms[np.arange(N)[:, None, None], perms[None, :, :]]  # comp[s, t] = s o t
    weights = n ** np.arange(n - 1, -1, -1)
    codes = perms @ weights  # increasing in lexicographic order
    table = np.searchsorted(codes, comp @ weights)
    return from_table(table, 0, name=f"symmetric({n})")


def heisenberg_mod(p: int) -> FiniteGroup:
    """Upper unitriangular 3x3 matrices over Z/p; (x,y,z)(x',y',z') = (x+x', y+y', z+z'+xy')."""
    if p < 2:
        raise NotAGroup("closure", "heisenberg_mod(p) needs p >= 2")
    idx = np.arange(p**3)
    x, y, z = idx // (p * p), (idx // p) % p, idx % p
    X = (x[:, None] + x[None, :]) % p
    Y = (y[:, None] + y[None, :]) % p
    Z = (z[:, None] + z[None, :] + x[:, None] * y[None, :]) % p
    return from_table(X * p * p + Y * p + Z, 0, name=f"heisenberg_mod({p})")


def product(*groups: FiniteGroup) -> FiniteGroup:
    if not groups:
        return cyclic(1)
    table = groups[0].cayley
    ident = groups[0].identity
    for g in groups[1:]:
        m = g.order
        table = table[:, None, :, None] * m + g.cayley[None, :, None, :]
        table = table.reshape(table.shape[0] * table.shape[1], -1)
        ident = ident * m + g.identity
    return from_table(table, ident, name="product(" + ",".join(g.name for g in groups) + ")")


def read_cayley_file(path: str | Path) -> FiniteGroup:
    """Parse the plain-text Cayley format: ``n``, then n rows, then optional ``identity k``."""
    lines = [ln.split("#", 1)[0].strip() for ln in Path(path).read_text().splitlines()]
    rows = [(i + 1, ln) for i, ln in enumerate(lines) if ln]
    if not rows:
        raise ParseError("empty Cayley file")
    lineno, head = rows[0]
    try:
        n = int(head)
    except ValueError:
        raise ParseError(f"first line must be the order, got {head!r}", row=lineno) from None
    if n < 1:
        raise ParseError("order must be positive", row=lineno)
    body = rows[1:]
    if len(body) < n:
        raise ParseError(f"expected {n} table rows, found {len(body)}", row=body[-1][0] if body else lineno)
    table = np.empty((n, n), dtype=np.int64)
    for r, (lineno, text) in enumerate(body[:n]):
        toks = text.split()
        if len(toks) != n:
            raise ParseError(f"expected {n} entries, found {len(toks)}", row=lineno)
        for c, tok in enumerate(toks):
            try:
                v = int(tok)
            except ValueError:
                raise ParseError(f"non-integer entry {tok!r}", row=lineno, col=c + 1) from None
            if not 0 <= v < n:
                raise ParseError(f"entry {v} outside 0..{n - 1}", row=lineno, col=c + 1)
            table[r, c] = v
    identity = None
    for lineno, text in body[n:]:
        m = re.fullmatch(r"identity\s+(\d+)", text)
        if not m:
            raise ParseError(f"unexpected trailing line {text!r}", row=lineno)
        identity = int(m.group(1))
        if identity >= n:
            raise ParseError(f"identity {identity} outside 0..{n - 1}", row=lineno)
    return from_table(table, identity, name=f"file({Path(path).name})")


def write_cayley_file(group: FiniteGroup, path: str | Path) -> None:
    rows = [str(group.order)] + [" ".join(map(str, r)) for r in group.cayley]
    rows.append(f"identity {group.identity}")
    Path(path).write_text("\n".join(rows) + "\n")


# ------------------------------------------------------------------ group specs

@dataclass(frozen=True)
class GroupSpec:
    kind: str
    args: tuple = ()

    def __str__(self) -> str:
        return f"{self.kind}(" + ",".join(str(a) for a in self.args) + ")"


ZOO: dict[str, GroupSpec] = {
    "Z2": GroupSpec("cyclic", (2,)),
    "Z6": GroupSpec("cyclic", (6,)),
    "D4": GroupSpec("dihedral", (4,)),
    "S3": GroupSpec("symmetric", (3,)),
    "S4": GroupSpec("symmetric", (4,)),
    "Heis3": GroupSpec("heisenberg_mod", (3,)),
}

_ALIASES = {"heisenberg": "heisenberg_mod", "from_file": "file"}


def parse_group_spec(text: str) -> GroupSpec:
    """Parse ``cyclic(6)``, ``product(cyclic(2),symmetric(3))``, ``file(path)`` or a zoo name."""
    text = text.strip()
    if text in ZOO:
        return ZOO[text]
    m = re.fullmatch(r"Z(\d+)", text)
    if m:
        return GroupSpec("cyclic", (int(m.group(1)),))
    m = re.fullmatch(r"([a-z_]+)\((.*)\)", text, flags=re.S)
    if not m:
        raise ParseError(f"cannot parse group spec {text!r}")
    kind = _ALIASES.get(m.group(1), m.group(1))
    inner = m.group(2).strip()
    if kind == "file":
        return GroupSpec("file", (inner,))
    if kind == "product":
        parts, depth, start = [], 0, 0
        for i, ch in enumerate(inner):
            depth += ch == "("
            depth -= ch == ")"
            if ch == "," and depth == 0:
                parts.append(inner[start:i])
                start = i + 1
        parts.append(inner[start:])
        return GroupSpec("product", tuple(parse_group_spec(p) for p in parts if p.strip()))
    if kind not in {"cyclic", "dihedral", "symmetric", "heisenberg_mod"}:
        raise ParseError(f"unknown group family {kind!r}")
    try:
        return GroupSpec(kind, (int(inner),))
    except ValueError:
        raise ParseError(f"{kind} expects one integer argument, got {inner!r}") from None


def build_group(spec: GroupSpec | str) -> FiniteGroup:
    if isinstance(spec, str):
        spec = parse_group_spec(spec)
    if spec.kind == "product":
        return product(*(build_group(s) for s in spec.args))
    if spec.kind == "file":
        return read_cayley_file(spec.args[0])
    ctor = {"cyclic": cyclic, "dihedral": dihedral, "symmetric": symmetric, "heisenberg_mod": heisenberg_mod}
    if spec.kind not in ctor:
        raise ParseError(f"unknown group family {spec.kind!r}")
    return ctor[spec.kind](*spec.args)


# --------------------------------------------------------------- group algebra

@dataclass(frozen=True, eq=False)
class GroupAlgElement:
    group: FiniteGroup
    coeffs: np.ndarray = field(repr=False)

    def __post_init__(self):
        c = np.asarray(self.coeffs, dtype=complex)
        if c.shape != (self.group.order,):
            raise ValueError(f"expected {self.group.order} coefficients, got shape {c.shape}")
        object.__setattr__(self, "coeffs", c)

    @classmethod
    def delta(cls, group: FiniteGroup, x: int | None = None, scale: complex = 1.0) -> GroupAlgElement:
        c = np.zeros(group.order, dtype=complex)
        c[group.identity if x is None else x] = scale
        return cls(group, c)

    def conv(self, other: GroupAlgElement) -> GroupAlgElement:
        return GroupAlgElement(self.group, convolve(self.group, self.coeffs, other.coeffs))

    def star(self) -> GroupAlgElement:
        return GroupAlgElement(self.group, np.conj(self.coeffs[self.group.inverses]))

    def __add__(self, other: GroupAlgElement) -> GroupAlgElement:
        return GroupAlgElement(self.group, self.coeffs + other.coeffs)

    def __sub__(self, other: GroupAlgElement) -> GroupAlgElement:
        return GroupAlgElement(self.group, self.coeffs - other.coeffs)


def _lambda_index(group: FiniteGroup) -> np.ndarray:
    # idx[x, y] = x * y^-1
    return group.cayley[:, group.inverses]


def lambda_matrix(f: GroupAlgElement | np.ndarray, group: FiniteGroup | None = None) -> np.ndarray:
    """Left-convolution matrix ``M[x, y] = f(x y^-1)`` (counting measure)."""
    if isinstance(f, GroupAlgElement):
        group, f = f.group, f.coeffs
    return np.asarray(f, dtype=complex)[_lambda_index(group)]


def convolve(group: FiniteGroup, f: np.ndarray, h: np.ndarray) -> np.ndarray:
    return lambda_matrix(f, group) @ np.asarray(h, dtype=complex)


def plancherel_trace(f: GroupAlgElement) -> complex:
    return complex(f.coeffs[f.group.identity])


def spectrum2(f: GroupAlgElement) -> np.ndarray:
    try:
        return np.linalg.eigvals(lambda_matrix(f))
    except np.linalg.LinAlgError as exc:
        raise NumericalFailure(str(exc)) from exc


def approx_eigen_witness(f: GroupAlgElement | np.ndarray, z: complex) -> tuple[np.ndarray, float]:
    """Unit vector minimising ``||M v - z v||`` and the attained residual."""
    M = lambda_matrix(f) if isinstance(f, GroupAlgElement) else np.asarray(f, dtype=complex)
    try:
        _, s, vh = np.linalg.svd(M - z * np.eye(M.shape[0]))
    except np.linalg.LinAlgError as exc:
        raise NumericalFailure(str(exc)) from exc
    return vh[-1].conj(), float(s[-1])


def z_circulant(f: Mapping[int, complex], n: int) -> np.ndarray:
    """Matrix of convolution by a finitely supported f on Z, wrapped onto Z/n."""
    if any(not -n / 2 < k < n / 2 for k in f):
        raise TruncationError(f"support {sorted(f)} does not fit in (-{n}/2, {n}/2)")
    col = np.zeros(n, dtype=complex)
    for k, v in f.items():
        col[k % n] += v
    r = np.arange(n)
    return col[(r[:, None] - r[None, :]) % n]


def truncated_Z_spectrum(f: Mapping[int, complex], n: int) -> np.ndarray:
    return np.linalg.eigvals(z_circulant(f, n))


def multiset_distance(a: Sequence[complex], b: Sequence[complex]) -> float:
    """Bottleneck-free matching distance: max |a_i - b_pi(i)| under the optimal assignment."""
    a = np.asarray(a, dtype=complex)
    b = np.asarray(b, dtype=complex)
    if a.shape != b.shape:
        return float("inf")
    cost = np.abs(a[:, None] - b[None, :])
    r, c = linear_sum_assignment(cost)
    return float(cost[r, c].max()) if len(r) else 0.0


def sort_spectrum(z: np.ndarray, decimals: int = 12) -> np.ndarray:
    """Lexicographic (re, im) order after rounding, for stable printing."""
    z = np.asarray(z, dtype=complex)
    re = np.round(z.real, decimals) + 0.0
    im = np.round(z.imag, decimals) + 0.0
    order = np.lexsort((im, re))
    return re[order] + 1j * im[order]


def random_element(group: FiniteGroup, rng: np.random.Generator, scale: float = 1.0) -> GroupAlgElement:
    c = rng.standard_normal(group.order) + 1j * rng.standard_normal(group.order)
    return GroupAlgElement(group, scale * c / np.sqrt(2 * group.order))
