"""Independent reference computations for the test suite.

Everything here is deliberately naive: exhaustive enumeration over ordered
factorizations, direct term-by-term summation, dense linear algebra on
vectorized matrices. None of it shares code paths with the library. The
library must agree with these oracles, never the other way around.
"""

from fractions import Fraction
from itertools import combinations, product
from math import comb

import numpy as np


# ---------------------------------------------------------------------------
# weights
# ---------------------------------------------------------------------------

def ordered_factorizations(word):
    """All ways to cut a word into nonempty contiguous pieces, as tuples."""
    word = tuple(word)
    L = len(word)
    if L == 0:
        yield ()
        return
    for parts in range(1, L + 1):
        for cuts in combinations(range(1, L), parts - 1):
            bounds = (0,) + cuts + (L,)
            yield tuple(word[bounds[t]:bounds[t + 1]] for t in range(parts))


def brute_weight(coeffs, word, m):
    """b_alpha^{(m)} by exhaustive enumeration.

    coeffs maps letter-tuples to coefficients of the symbol f; the weight is
    sum over ordered factorizations alpha = beta_1 ... beta_p of
    C(p+m-1, m-1) * a_{beta_1} * ... * a_{beta_p}. Exact when the
    coefficients are ints or Fractions.
    """
    word = tuple(word)
    if len(word) == 0:
        return Fraction(1) if _all_rational(coeffs) else 1.0
    lookup = {tuple(w): a for w, a in coeffs.items()}
    total = Fraction(0) if _all_rational(coeffs) else 0.0
    for pieces in ordered_factorizations(word):
        prod = Fraction(1) if _all_rational(coeffs) else 1.0
        ok = True
        for piece in pieces:
            a = lookup.get(piece)
            if a is None or a == 0:
                ok = False
                break
            prod *= a
        if ok:
            total += prod * comb(len(pieces) + m - 1, m - 1)
    return total


def _all_rational(coeffs):
    return all(isinstance(a, (int, Fraction)) for a in coeffs.values())


def convolve_weights(b1, b2, word):
    """(b1 * b2)_alpha = sum over splits alpha = beta.gamma of b1_beta b2_gamma."""
    word = tuple(word)
    total = None
    for t in range(len(word) + 1):
        term = b1[word[:t]] * b2[word[t:]]
        total = term if total is None else total + term
    return total


# ---------------------------------------------------------------------------
# CP map expressions by direct summation
# ---------------------------------------------------------------------------

def naive_defect(phi, p, X):
    """Delta^p(X) expanded binomially: sum_s (-1)^{|s|} prod C(p_i, s_i) Phi^s(X)."""
    X = np.asarray(X, dtype=np.complex128)
    total = np.zeros_like(X)
    ranges = [range(pi + 1) for pi in p]
    for s in product(*ranges):
        term = X
        for i, si in enumerate(s, start=1):
            for _ in range(si):
                term = phi.apply(i, term)
        sign = (-1) ** sum(s)
        weight = 1
        for pi, si in zip(p, s):
            weight *= comb(pi, si)
        total = total + sign * weight * term
    return total


def naive_weighted_series(phi, m, R, s_max):
    """Partial sum of the weighted series over the box 0 <= s_i <= s_max."""
    R = np.asarray(R, dtype=np.complex128)
    total = np.zeros_like(R)
    ranges = [range(s_max + 1)] * phi.k
    for s in product(*ranges):
        term = R
        for i, si in enumerate(s, start=1):
            for _ in range(si):
                term = phi.apply(i, term)
        weight = 1
        for mi, si in zip(m, s):
            weight *= comb(si + mi - 1, mi - 1)
        total = total + weight * term
    return total


def naive_cesaro(phi, p, X):
    """Multi-average of composed iterates by direct double-loop summation."""
    X = np.asarray(X, dtype=np.complex128)
    total = np.zeros_like(X)
    count = 0
    ranges = [range(pi) for pi in p]
    for s in product(*ranges):
        term = X
        for i, si in enumerate(s, start=1):
            for _ in range(si):
                term = phi.apply(i, term)
        total = total + term
        count += 1
    return total / count


def nested_limit_value(phi, q, X):
    """(id - Phi_k^{q_k}) o ... o (id - Phi_1^{q_1}) (X) via matricized powers."""
    from polydom.cpmap import unvec, vec

    d = phi.dim
    v = vec(np.asarray(X, dtype=np.complex128))
    for i in range(1, phi.k + 1):
        M = phi.matricize(i)
        v = v - np.linalg.matrix_power(M, q[i - 1]) @ v
    return unvec(v, d)


# ---------------------------------------------------------------------------
# torus sup for polynomial matrices
# ---------------------------------------------------------------------------

def torus_grid_sup(poly_matrix, k, grid):
    """max over a grid of T^k of the spectral norm of [q_st(z_1..z_k)].

    poly_matrix is a nested list of NCPolynomial; scalar evaluation sends
    letter (i, j) to the i-th torus coordinate (arities must be 1).
    """
    best = 0.0
    angles = [2.0 * np.pi * t / grid for t in range(grid)]
    rows = len(poly_matrix)
    cols = len(poly_matrix[0])
    for point in product(angles, repeat=k):
        z = [np.exp(1j * a) for a in point]
        mat = np.zeros((rows, cols), dtype=np.complex128)
        for r in range(rows):
            for c in range(cols):
                q = poly_matrix[r][c]
                val = 0.0 + 0.0j
                for coeff, mono in q.terms:
                    term = complex(coeff)
                    for (i, _j) in mono:
                        term *= z[i - 1]
                    val += term
                mat[r, c] = val
        best = max(best, float(np.linalg.norm(mat, 2)))
    return best


# ---------------------------------------------------------------------------
# frozen values
# ---------------------------------------------------------------------------

# Weights of f = Z1 + (1/2) Z2 + (1/3) Z1 Z2, computed by brute_weight and
# checked by hand before freezing, so a simultaneous drift of oracle and
# library cannot go unnoticed. Keys are (word, m). Hand derivation for
# (1,2), m=2: factorizations (1)(2) with p=2 pieces and (12) with p=1;
# weights C(p+1,1) give 3*(1/2) + 2*(1/3) = 13/6. For (1,1,2), m=1:
# (1)(1)(2) -> 1/2 and (1)(12) -> 1/3 (pieces (1,1) and (1,1,2) have zero
# coefficient), all with weight 1, so 5/6.
FROZEN_WEIGHTS = {
    ((), 1): Fraction(1),
    ((1,), 1): Fraction(1),
    ((2,), 1): Fraction(1, 2),
    ((1, 2), 1): Fraction(5, 6),
    ((1, 2), 2): Fraction(13, 6),
    ((1, 1, 2), 1): Fraction(5, 6),
    ((1, 1, 2), 2): Fraction(3),
    ((1, 2, 1, 2), 3): Fraction(31, 4),
}

GEOMETRIC_SERIES = {
    # (c, m) -> (1 - c^2)^{-m}, the weighted series of I for f=Z, A=cI
    (0.5, 1): 4.0 / 3.0,
    (0.5, 2): 16.0 / 9.0,
    (0.3, 3): (1.0 / (1.0 - 0.09)) ** 3,
}
