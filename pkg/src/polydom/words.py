"""Free-monoid words, positive symbols, and binomial weight tables.

Words over n generators are tuples of 1-based letters; the empty tuple is the
monoid identity. All iteration orders downstream are fixed by the graded
lexicographic order produced by enumerate_words.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from fractions import Fraction
from math import comb, isfinite
from typing import Callable, Dict, Iterator, List, Mapping, Sequence, Tuple, Union

from .config import ResourceCapError, Tolerances, default_tolerances

Letters = Tuple[int, ...]

Scalar = Union[int, float, Fraction]


class Word(Tuple[int, ...]):
    """A word in a free monoid; behaves as a tuple of 1-based letters."""

    __slots__ = ()

    def __new__(cls, letters: Sequence[int] = ()):
        return super().__new__(cls, tuple(int(x) for x in letters))

    @property
    def letters(self) -> Letters:
        return tuple(self)

    def degree(self) -> int:
        return len(self)

    def concat(self, other: "Word") -> "Word":
        return Word(tuple(self) + tuple(other))

    def __repr__(self) -> str:  # g0 for the identity, g1g2... otherwise
        if not self:
            return "Word(g0)"
        return "Word(" + "".join(f"g{j}" for j in self) + ")"


IDENTITY = Word(())


def graded_lex_key(word: Sequence[int]) -> Tuple[int, Tuple[int, ...]]:
    return (len(word), tuple(word))


def splits(word: Word) -> Iterator[Tuple[Word, Word]]:
    """All factorizations word = prefix * suffix, empty factors included."""
    for cut in range(len(word) + 1):
        yield Word(word[:cut]), Word(word[cut:])


def word_count(n: int, max_len: int) -> int:
    if n == 1:
        return max_len + 1
    return (n ** (max_len + 1) - 1) // (n - 1)


def enumerate_words(n: int, max_len: int, tol: Tolerances | None = None) -> List[Word]:
    """All words of length <= max_len in graded-lex order, identity first.

    Raises ResourceCapError when the count would exceed the configured cap;
    silent truncation is never performed.
    """
    if n < 1:
        raise ValueError(f"arity must be >= 1, got {n}")
    if max_len < 0:
        raise ValueError(f"max_len must be >= 0, got {max_len}")
    cap = (tol or default_tolerances()).word_cap
    total = word_count(n, max_len)
    if total > cap:
        raise ResourceCapError(
            f"enumerating {total} words exceeds the cap of {cap}"
        )
    out: List[Word] = []
    for length in range(max_len + 1):
        for letters in itertools.product(range(1, n + 1), repeat=length):
            out.append(Word(letters))
    return out


@dataclass(frozen=True)
class PositiveSymbol:
    """Truncated positive regular free holomorphic function in n letters.

    coeffs maps words to coefficients a_alpha. Regularity (zero constant
    term, nonnegative coefficients, strictly positive linear coefficients)
    is checked by validate_symbol, not at construction, so that degenerate
    symbols produced by scaling remain representable for evaluation.
    """

    arity: int
    coeffs: Mapping[Word, Scalar]
    max_degree: int

    def __post_init__(self):
        normalized = {Word(w): a for w, a in dict(self.coeffs).items()}
        object.__setattr__(self, "coeffs", normalized)

    def coeff(self, word: Sequence[int]) -> Scalar:
        return self.coeffs.get(Word(word), 0)

    def support(self) -> List[Word]:
        return sorted((w for w, a in self.coeffs.items() if a != 0), key=graded_lex_key)

    def degree(self) -> int:
        sup = self.support()
        return max((len(w) for w in sup), default=0)


def polyball_symbol(n: int) -> PositiveSymbol:
    """The symbol Z_1 + ... + Z_n (all linear coefficients one)."""
    return PositiveSymbol(n, {Word((j,)): 1 for j in range(1, n + 1)}, 1)


def validate_symbol(f: PositiveSymbol) -> List[str]:
    """Returns the list of violated regularity clauses; empty means valid."""
    violations: List[str] = []
    if f.arity < 1:
        violations.append(f"arity must be >= 1, got {f.arity}")
        return violations
    if f.max_degree < 1:
        violations.append(f"max_degree must be >= 1, got {f.max_degree}")
    for w, a in sorted(f.coeffs.items(), key=lambda kv: graded_lex_key(kv[0])):
        if any(j < 1 or j > f.arity for j in w):
            violations.append(f"letter out of range 1..{f.arity} in word {tuple(w)}")
        if len(w) == 0 and a != 0:
            violations.append("constant term nonzero")
        if isinstance(a, float) and not isfinite(a):
            violations.append(f"non-finite coefficient at word {tuple(w)}")
        elif a < 0:
            violations.append(f"negative coefficient at word {tuple(w)}")
        if len(w) > f.max_degree and a != 0:
            violations.append(f"coefficient beyond max_degree at word {tuple(w)}")
    for j in range(1, f.arity + 1):
        if not f.coeffs.get(Word((j,)), 0) > 0:
            violations.append(f"linear coefficient zero at generator {j}")
    return violations


def require_valid(f: PositiveSymbol) -> None:
    violations = validate_symbol(f)
    if violations:
        raise ValueError("invalid symbol: " + "; ".join(violations))


@dataclass(frozen=True)
class WeightTable:
    """Weights b_alpha^{(m)} indexed by words, with b at the identity = 1."""

    m: int
    entries: Mapping[Word, Scalar]
    exact: bool

    def __post_init__(self):
        object.__setattr__(self, "entries", dict(self.entries))

    def value(self, word: Sequence[int]) -> Scalar:
        return self.entries[Word(word)]


def weight_table(
    f: PositiveSymbol,
    m: int,
    max_len: int,
    exact: bool = False,
    tol: Tolerances | None = None,
) -> WeightTable:
    """Weights b_alpha^{(m)} for all |alpha| <= max_len.

    Dynamic programming over factorizations into nonempty blocks:
        c1[alpha] = a_alpha
        cp[alpha] = sum over alpha = beta.gamma (both nonempty) of a_beta * c(p-1)[gamma]
        b[alpha]  = sum_p cp[alpha] * C(p+m-1, m-1)
    In exact mode integer and Fraction coefficients are carried exactly
    (Python integers cannot overflow, so no fallback is ever needed);
    float mode checks finiteness of the result.
    """
    require_valid(f)
    if m < 1:
        raise ValueError(f"m must be >= 1, got {m}")
    words = enumerate_words(f.arity, max_len, tol)

    if exact:
        def conv(a: Scalar) -> Scalar:
            if isinstance(a, (int, Fraction)):
                return a
            return Fraction(a)
    else:
        def conv(a: Scalar) -> Scalar:
            return float(a)

    coeffs = {w: conv(a) for w, a in f.coeffs.items() if a != 0 and len(w) >= 1}
    deg_f = max((len(w) for w in coeffs), default=0)

    zero = 0 if exact else 0.0
    b: Dict[Word, Scalar] = {w: zero for w in words}
    b[IDENTITY] = 1 if exact else 1.0

    # c_prev holds c^{(p)} restricted to the enumerated words
    c_prev: Dict[Word, Scalar] = {w: coeffs[w] for w in words if w in coeffs}
    p = 1
    while c_prev and p <= max_len:
        weight = comb(p + m - 1, m - 1)
        for w, cval in c_prev.items():
            b[w] += cval * weight
        c_next: Dict[Word, Scalar] = {}
        for w in words:
            if len(w) < p + 1:
                continue
            acc = zero
            hit = False
            for cut in range(1, min(deg_f, len(w) - 1) + 1):
                head = Word(w[:cut])
                a = coeffs.get(head)
                if a is None:
                    continue
                cval = c_prev.get(Word(w[cut:]))
                if cval is None:
                    continue
                acc += a * cval
                hit = True
            if hit and acc != 0:
                c_next[w] = acc
        c_prev = c_next
        p += 1

    if not exact:
        bad = [w for w, v in b.items() if not isfinite(v)]
        if bad:
            raise OverflowError(
                f"weight accumulation overflowed at words {bad[:3]}; use exact mode"
            )
    return WeightTable(m=m, entries=b, exact=exact)


def scale_symbol_action(f: PositiveSymbol, r: Scalar) -> PositiveSymbol:
    """Coefficient scaling a_alpha -> a_alpha * r^{|alpha|}.

    Equivalent to replacing the operator tuple A by rA in every CP-map
    formula. r = 1 is the identity; r = 0 yields the zero symbol, which is
    not regular and is accepted only for evaluation purposes.
    """
    if not (0 <= r <= 1):
        raise ValueError(f"r must lie in [0, 1], got {r}")
    scaled = {w: a * r ** len(w) for w, a in f.coeffs.items()}
    return PositiveSymbol(f.arity, scaled, f.max_degree)


# --- noncommutative polynomials in letters Z_{i,j} ---------------------------

Letter = Tuple[int, int]  # (factor i, generator j), both 1-based
Monomial = Tuple[Letter, ...]


@dataclass(frozen=True)
class NCPolynomial:
    """Polynomial in noncommuting letters Z_{i,j}, stored as (coeff, monomial) terms."""

    terms: Tuple[Tuple[complex, Monomial], ...]

    def __post_init__(self):
        norm = tuple(
            (complex(c), tuple((int(i), int(j)) for (i, j) in mono))
            for c, mono in self.terms
        )
        object.__setattr__(self, "terms", norm)

    def evaluate(self, letter_value: Callable[[int, int], "object"], identity: "object"):
        """Evaluates the polynomial; letter_value(i, j) supplies Z_{i,j}."""
        result = None
        for c, mono in self.terms:
            prod = identity
            for (i, j) in mono:
                prod = prod @ letter_value(i, j)
            term = c * prod
            result = term if result is None else result + term
        if result is None:
            return 0 * identity
        return result

    def degree_profiles(self, k: int) -> List[Tuple[int, ...]]:
        """Per-term letter counts by factor, used for homogeneity checks."""
        profiles = []
        for _, mono in self.terms:
            counts = [0] * k
            for (i, _) in mono:
                counts[i - 1] += 1
            profiles.append(tuple(counts))
        return profiles

    def is_homogeneous(self, k: int) -> bool:
        profiles = self.degree_profiles(k)
        return len(set(profiles)) <= 1

    def max_degree(self) -> int:
        return max((len(mono) for _, mono in self.terms), default=0)


def commutator_polynomial(i: int, j1: int, j2: int) -> NCPolynomial:
    """Z_{i,j1} Z_{i,j2} - Z_{i,j2} Z_{i,j1}."""
    return NCPolynomial(
        (
            (1.0, ((i, j1), (i, j2))),
            (-1.0, ((i, j2), (i, j1))),
        )
    )
