"""Affine IFS data model: maps, systems, words, cylinders and enumeration."""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Callable, Iterator, Sequence

import numpy as np

from . import mat2
from ._threads import map_ordered
from .errors import BudgetExceeded, ParseError, SingularInput, ValidationError
from .mat2 import ScaledMat2, SingularData

DEFAULT_BUDGET = 2 ** 26
CONTRACTION_MARGIN = 1e-9
BLOCK_WORDS = 2 ** 18


class Word(tuple):
    """A finite word over {1..kappa}; symbols are 1-based like the maps' labels."""

    def __new__(cls, symbols: Sequence[int] = ()):
        syms = tuple(int(s) for s in symbols)
        if any(s < 1 for s in syms):
            raise ValueError(f"word symbols must be >= 1, got {syms}")
        return super().__new__(cls, syms)

    def __add__(self, other) -> "Word":
        return Word(tuple(self) + tuple(other))

    def __repr__(self) -> str:
        return "Word(" + "".join(str(s) if s < 10 else f"[{s}]" for s in self) + ")"

    @property
    def length(self) -> int:
        return len(self)

    @property
    def parent(self) -> "Word":
        """The word with its last symbol removed (the empty word is its own parent)."""
        return Word(self[:-1])

    def prefix(self, n: int) -> "Word":
        return Word(self[:n])

    def meet(self, other: Sequence[int]) -> "Word":
        """Longest common beginning of two words."""
        k = 0
        for x, y in zip(self, other):
            if x != y:
                break
            k += 1
        return Word(self[:k])

    def is_prefix_of(self, other: Sequence[int]) -> bool:
        return len(self) <= len(other) and tuple(other[: len(self)]) == tuple(self)


@dataclass(frozen=True)
class AffineMap:
    linear: np.ndarray
    translation: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "linear", mat2.as_mat2(self.linear))
        t = np.asarray(self.translation, dtype=float).reshape(-1)
        if t.shape != (2,) or not np.all(np.isfinite(t)):
            raise ValidationError("translation must be a finite 2-vector")
        object.__setattr__(self, "translation", t)

    def __call__(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return x @ self.linear.T + self.translation

    @property
    def singular(self) -> SingularData:
        return mat2.svd2(self.linear)

    def fixed_point(self) -> np.ndarray:
        return np.linalg.solve(np.eye(2) - self.linear, self.translation)


@dataclass(frozen=True)
class IfsSystem:
    maps: tuple
    alpha_bar: float = field(init=False)
    alpha_lower: float = field(init=False)

    def __post_init__(self):
        maps = tuple(self.maps)
        if len(maps) < 2:
            raise ValidationError(f"an IFS needs at least 2 maps, got {len(maps)}")
        a1s, a2s = [], []
        for i, m in enumerate(maps):
            if not isinstance(m, AffineMap):
                raise ValidationError(f"map #{i + 1} is not an AffineMap", index=i)
            d = mat2.det2(m.linear)
            if d == 0.0:
                raise ValidationError(f"map #{i + 1}: linear part is singular", index=i)
            s = mat2.svd2(m.linear)
            if not s.alpha1 < 1.0 - CONTRACTION_MARGIN:
                raise ValidationError(
                    f"map #{i + 1}: operator norm {s.alpha1:.6g} is not < 1 - {CONTRACTION_MARGIN:g}",
                    index=i,
                )
            a1s.append(s.alpha1)
            a2s.append(s.alpha2)
        object.__setattr__(self, "maps", maps)
        object.__setattr__(self, "alpha_bar", max(a1s))
        object.__setattr__(self, "alpha_lower", min(a2s))

    @classmethod
    def from_arrays(cls, linears, translations=None) -> "IfsSystem":
        linears = [np.asarray(a, dtype=float) for a in linears]
        if translations is None:
            translations = [np.zeros(2)] * len(linears)
        if len(translations) != len(linears):
            raise ValidationError("number of translations does not match number of maps")
        maps = []
        for i, (a, t) in enumerate(zip(linears, translations)):
            try:
                maps.append(AffineMap(a, t))
            except (SingularInput, ValidationError) as exc:
                raise ValidationError(f"map #{i + 1}: {exc}", index=i) from exc
        return cls(tuple(maps))

    @property
    def kappa(self) -> int:
        return len(self.maps)

    @property
    def linears(self) -> np.ndarray:
        return np.stack([m.linear for m in self.maps])

    @property
    def translations(self) -> np.ndarray:
        return np.stack([m.translation for m in self.maps])

    def with_translations(self, translations) -> "IfsSystem":
        return IfsSystem.from_arrays(self.linears, translations)

    def check_word(self, w: Sequence[int]) -> Word:
        w = Word(w)
        if any(s > self.kappa for s in w):
            raise ValueError(f"word {w!r} uses symbols outside 1..{self.kappa}")
        return w

    def to_config(self) -> dict:
        return {
            "maps": [
                {"A": m.linear.tolist(), "t": m.translation.tolist()} for m in self.maps
            ]
        }

    def radius_bound(self) -> float:
        """max|a_i|/(1 - alpha_bar): every point of E lies within this of the origin."""
        return float(np.max(np.linalg.norm(self.translations, axis=1))) / (1.0 - self.alpha_bar)


# ---------------------------------------------------------------------------
# configuration documents


def parse_config(document) -> tuple[list[np.ndarray], list[np.ndarray]]:
    """Parse a JSON config into lists of linear parts and translations (any d)."""
    if isinstance(document, (bytes, bytearray)):
        try:
            document = document.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise ParseError(f"config is not UTF-8: {exc}") from exc
    if isinstance(document, str):
        try:
            data = json.loads(document)
        except json.JSONDecodeError as exc:
            raise ParseError(f"invalid JSON: {exc}") from exc
    else:
        data = document
    if not isinstance(data, dict) or "maps" not in data:
        raise ParseError('config must be an object with a "maps" list')
    maps = data["maps"]
    if not isinstance(maps, list):
        raise ParseError('"maps" must be a list')
    linears, translations = [], []
    for i, m in enumerate(maps):
        if not isinstance(m, dict) or "A" not in m:
            raise ParseError(f'map #{i + 1}: expected an object with key "A"')
        try:
            a = np.array(m["A"], dtype=float)
            t = np.array(m.get("t", [0.0] * len(m["A"])), dtype=float)
        except (TypeError, ValueError) as exc:
            raise ParseError(f"map #{i + 1}: non-numeric entries ({exc})") from exc
        if a.ndim != 2 or a.shape[0] != a.shape[1]:
            raise ParseError(f'map #{i + 1}: "A" must be a square matrix')
        if t.shape != (a.shape[0],):
            raise ParseError(f'map #{i + 1}: "t" must have length {a.shape[0]}')
        if not (np.all(np.isfinite(a)) and np.all(np.isfinite(t))):
            raise ParseError(f"map #{i + 1}: non-finite entries")
        linears.append(a)
        translations.append(t)
    if linears and any(a.shape != linears[0].shape for a in linears):
        raise ParseError("all maps must have the same dimension")
    return linears, translations


def load_system(document) -> IfsSystem:
    linears, translations = parse_config(document)
    if len(linears) < 2:
        raise ValidationError(f"an IFS needs at least 2 maps, got {len(linears)}")
    for i, a in enumerate(linears):
        if a.shape != (2, 2):
            raise ParseError(f"map #{i + 1}: planar systems need 2x2 matrices")
    return IfsSystem.from_arrays(linears, translations)


def config_digest(sys: IfsSystem) -> str:
    import hashlib

    blob = json.dumps(sys.to_config(), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()


# ---------------------------------------------------------------------------
# cylinders


@dataclass(frozen=True)
class Cylinder:
    word: Word
    product: ScaledMat2
    offset: np.ndarray
    singular: SingularData

    def __call__(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return x @ self.product.matrix().T + self.offset


def _child(sys: IfsSystem, cyl: Cylinder, i: int) -> Cylinder:
    m = sys.maps[i - 1]
    offset = cyl.offset + cyl.product.apply(m.translation)
    prod = cyl.product @ m.linear
    return Cylinder(cyl.word + (i,), prod, offset, prod.svd())


def root_cylinder() -> Cylinder:
    p = ScaledMat2.identity()
    return Cylinder(Word(), p, np.zeros(2), p.svd())


def cylinder(sys: IfsSystem, w: Sequence[int]) -> Cylinder:
    w = sys.check_word(w)
    c = root_cylinder()
    for s in w:
        c = _child(sys, c, s)
    return c


def fixed_point(sys: IfsSystem, i: int) -> np.ndarray:
    return sys.maps[i - 1].fixed_point()


def word_endpoints(sys: IfsSystem, i: int) -> tuple[np.ndarray, np.ndarray]:
    """x_i = f_i(fixed point of map 1), y_i = f_i(fixed point of map kappa)."""
    if not 1 <= i <= sys.kappa:
        raise ValueError(f"index {i} outside 1..{sys.kappa}")
    m = sys.maps[i - 1]
    x = m(fixed_point(sys, 1))
    y = m(fixed_point(sys, sys.kappa))
    return x, y


def _check_budget(sys: IfsSystem, n: int, budget: int):
    if n < 0:
        raise ValueError("level must be nonnegative")
    requested = sys.kappa ** n
    if requested > budget:
        raise BudgetExceeded(
            f"level {n} has {requested} cylinders, above the budget {budget}",
            budget=budget,
            requested=requested,
        )
    return requested


def iter_level(sys: IfsSystem, n: int, budget: int = DEFAULT_BUDGET) -> Iterator[Cylinder]:
    """All cylinders of length n in lexicographic order (depth-first, prefix reuse)."""
    _check_budget(sys, n, budget)
    stack = [root_cylinder()]
    while stack:
        c = stack.pop()
        if len(c.word) == n:
            yield c
            continue
        for i in range(sys.kappa, 0, -1):
            stack.append(_child(sys, c, i))


def enumerate_level(sys: IfsSystem, n: int, visitor: Callable, initial=None,
                    budget: int = DEFAULT_BUDGET):
    """Fold ``visitor(acc, cylinder)`` over every word of length n."""
    acc = initial
    for c in iter_level(sys, n, budget):
        acc = visitor(acc, c)
    return acc


def stopping_set(sys: IfsSystem, t: float, r: float, budget: int = DEFAULT_BUDGET) -> list[Cylinder]:
    """Words w with phi^t(A_w) <= r < phi^t(A_{w^-}), in lexicographic order.

    Convention: phi^t of the empty word is 1, so r >= 1 returns the empty word.
    """
    from .pressure import log_phi

    if t < 0:
        raise ValueError("t must be nonnegative")
    if r >= 1.0:
        return [root_cylinder()]
    if r <= 0.0:
        raise ValueError("r must be positive")
    logr = math.log(r)
    out: list[Cylinder] = []
    stack = [root_cylinder()]
    visited = 0
    while stack:
        c = stack.pop()
        visited += 1
        if visited > budget:
            raise BudgetExceeded(f"stopping set exceeds the budget {budget}", budget=budget,
                                 requested=visited)
        if c.word and log_phi(c.singular.log_alpha1, c.singular.log_alpha2, t) <= logr:
            out.append(c)
            continue
        for i in range(sys.kappa, 0, -1):
            stack.append(_child(sys, c, i))
    return out


def project(sys: IfsSystem, w: Sequence[int], base=None) -> np.ndarray:
    """f_w(base); with the default base (fixed point of map 1) this lies in E."""
    if base is None:
        base = fixed_point(sys, 1)
    return cylinder(sys, w)(base)


# ---------------------------------------------------------------------------
# vectorised level products


def level_products(linears: np.ndarray, n: int):
    """Scaled products for all kappa**n words, in lexicographic order.

    Returns (mantissas, exponents, log|det|); the determinant logs are sums of
    the factors' values and stay accurate for nearly rank-one products.
    """
    k = linears.shape[0]
    mant = np.eye(2)[None].copy()
    exps = np.zeros(1, dtype=np.int64)
    ld = np.zeros(1)
    base, base_e = mat2.batch_normalize(np.asarray(linears, dtype=float))
    base_ld = mat2.log_abs_dets(linears)
    for _ in range(n):
        prod = np.einsum("pij,qjk->pqik", mant, base).reshape(-1, 2, 2)
        e = (exps[:, None] + base_e[None, :]).reshape(-1)
        mant, exps = mat2.batch_normalize(prod, e)
        ld = (ld[:, None] + base_ld[None, :]).reshape(-1)
    assert mant.shape[0] == k ** n
    return mant, exps, ld


def level_split(kappa: int, n: int, block_words: int = BLOCK_WORDS) -> tuple[int, int]:
    """Split a level into (prefix length, suffix length) with kappa**suffix <= block_words."""
    m = 0
    while m < n and kappa ** (m + 1) <= block_words:
        m += 1
    return n - m, m


def map_level_blocks(sys_or_linears, n: int, fn: Callable, budget: int = DEFAULT_BUDGET,
                     block_words: int = BLOCK_WORDS, threads: int | None = None) -> list:
    """Evaluate ``fn(start, mantissas, exponents, logdets)`` on consecutive blocks of level n.

    Blocks are prefix subtrees, so ``start`` is the lexicographic index of the
    first word in the block.  Results are returned in block order regardless
    of the number of worker threads.
    """
    linears = sys_or_linears.linears if isinstance(sys_or_linears, IfsSystem) else np.asarray(sys_or_linears)
    kappa = linears.shape[0]
    requested = kappa ** n
    if requested > budget:
        raise BudgetExceeded(
            f"level {n} has {requested} cylinders, above the budget {budget}",
            budget=budget, requested=requested,
        )
    plen, slen = level_split(kappa, n, block_words)
    suf_m, suf_e, suf_d = level_products(linears, slen)
    pre_m, pre_e, pre_d = level_products(linears, plen)
    size = kappa ** slen

    def block(p: int):
        prod = np.einsum("ij,njk->nik", pre_m[p], suf_m)
        mant, e = mat2.batch_normalize(prod, suf_e + pre_e[p])
        return fn(p * size, mant, e, suf_d + pre_d[p])

    return map_ordered(block, range(pre_m.shape[0]), threads)
