"""Completely positive map engine for commuting operator tuples.

Maps act as Phi_i(X) = sum_alpha a_{i,alpha} A_{i,alpha} X A_{i,alpha}^*,
where A_{i,alpha} is the word product of the i-th row of matrices. The
engine provides iterates, defect maps, certified weighted series, Cesaro
means, and the joint spectral radius.

vec convention is row-major throughout: vec(X)[d*r + c] = X[r, c], hence
vec(A X B) = (A kron B^T) vec(X) and the matricized map is
M_i = sum a_alpha (A_alpha kron conj(A_alpha)).
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from math import comb
from typing import Dict, Iterator, List, Optional, Sequence, Tuple

import numpy as np

from .config import DivergenceError, ResourceCapError, Tolerances, default_tolerances
from .words import PositiveSymbol, Word, polyball_symbol, require_valid

MultiDegree = Tuple[int, ...]


class CommutationError(ValueError):
    """Cross-factor commutation fails beyond tolerance."""


def multi_le(p: Sequence[int], m: Sequence[int]) -> bool:
    return len(p) == len(m) and all(a <= b for a, b in zip(p, m))


def multi_grid(m: Sequence[int]) -> Iterator[MultiDegree]:
    """All multi-degrees p with 0 <= p <= m, lexicographic."""
    return itertools.product(*(range(mi + 1) for mi in m))


def vec(X: np.ndarray) -> np.ndarray:
    return np.asarray(X).reshape(-1)


def unvec(v: np.ndarray, d: int) -> np.ndarray:
    return np.asarray(v).reshape(d, d)


def _as_complex(M) -> np.ndarray:
    A = np.array(M, dtype=np.complex128)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {A.shape}")
    if not np.all(np.isfinite(A.view(np.float64))):
        raise ValueError("matrix has non-finite entries")
    return A


def hermitize(X: np.ndarray) -> np.ndarray:
    return (X + X.conj().T) / 2


def is_hermitian(X: np.ndarray, rel: float = 1e-12) -> bool:
    X = np.asarray(X)
    return np.linalg.norm(X - X.conj().T) <= rel * (1.0 + np.linalg.norm(X))


class OperatorTuple:
    """k rows of d x d matrices A_{i,j}; rows commute entrywise across factors.

    Matrices within one row need not commute. Cross-factor commutation is
    checked at construction and violations raise CommutationError, unless
    check_commutation is disabled (used for map-level commutation checks on
    raw Kraus families).
    """

    def __init__(
        self,
        matrices: Sequence[Sequence[np.ndarray]],
        tol: Tolerances | None = None,
        check_commutation: bool = True,
    ):
        self.tol = tol or default_tolerances()
        rows = [tuple(_as_complex(Aij) for Aij in row) for row in matrices]
        if not rows or any(len(r) == 0 for r in rows):
            raise ValueError("need at least one matrix per factor")
        self.k = len(rows)
        self.arities = tuple(len(r) for r in rows)
        self.dim = rows[0][0].shape[0]
        for row in rows:
            for A in row:
                if A.shape[0] != self.dim:
                    raise ValueError("all matrices must share one dimension")
        for row in rows:
            for A in row:
                A.setflags(write=False)
        self.rows = tuple(rows)
        self._word_cache: Dict[Tuple[int, Tuple[int, ...]], np.ndarray] = {}
        if check_commutation:
            self._check_commutation()

    def _check_commutation(self) -> None:
        t = self.tol.tol_comm
        for s in range(self.k):
            for u in range(s + 1, self.k):
                for j, A in enumerate(self.rows[s]):
                    na = np.linalg.norm(A)
                    for l, B in enumerate(self.rows[u]):
                        nb = np.linalg.norm(B)
                        gap = np.linalg.norm(A @ B - B @ A)
                        if gap > t * na * nb:
                            raise CommutationError(
                                f"[A_{s+1},{j+1}, A_{u+1},{l+1}] has norm "
                                f"{gap:.3e} > {t:.1e}*{na:.3e}*{nb:.3e}"
                            )

    def matrix(self, i: int, j: int) -> np.ndarray:
        return self.rows[i - 1][j - 1]

    def word_product(self, i: int, word: Sequence[int]) -> np.ndarray:
        """A_{i,alpha} = A_{i,j1} ... A_{i,jp} for alpha = (j1..jp)."""
        key = (i, tuple(word))
        hit = self._word_cache.get(key)
        if hit is not None:
            return hit
        if not key[1]:
            out = np.eye(self.dim, dtype=np.complex128)
        else:
            out = self.word_product(i, key[1][:-1]) @ self.rows[i - 1][key[1][-1] - 1]
        out.setflags(write=False)
        self._word_cache[key] = out
        return out

    def conjugate(self, Y: np.ndarray, Yinv: np.ndarray | None = None) -> "OperatorTuple":
        """The tuple Y^{-1} A_{i,j} Y (same symbols act on it)."""
        Y = _as_complex(Y)
        Yi = np.linalg.inv(Y) if Yinv is None else _as_complex(Yinv)
        rows = [[Yi @ A @ Y for A in row] for row in self.rows]
        return OperatorTuple(rows, tol=self.tol, check_commutation=False)


@dataclass
class SeriesResult:
    """Truncated series value with a certified (or best-effort) tail bound."""

    value: np.ndarray
    tail_bound: float
    terms: Tuple[int, ...]
    certified: bool
    radii: Tuple[float, ...]


@dataclass
class _GeomCert:
    """Power-norm decay certificate for one matricized map M.

    Guarantees ||M^s||_2 <= growth * theta^s for all s >= 0. When
    nilpotent_power is set, M^s = 0 for every s >= nilpotent_power.
    """

    theta: float
    growth: float
    nilpotent_power: Optional[int]
    pow2_norms: Tuple[float, ...]  # upper bounds on ||M^(2^j)||, j = 0..J
    ok: bool

    def power_norm_bound(self, s: int) -> float:
        if self.nilpotent_power is not None and s >= self.nilpotent_power:
            return 0.0
        out = 1.0
        j = 0
        while s:
            if s & 1:
                if j < len(self.pow2_norms):
                    out *= self.pow2_norms[j]
                else:
                    out *= self.pow2_norms[-1] ** (2 ** (j - len(self.pow2_norms) + 1))
            s >>= 1
            j += 1
        return out


def _specnorm_upper(M: np.ndarray) -> float:
    """Rigorous-enough upper bound on the spectral norm."""
    n = M.shape[0]
    if n <= 1600:
        return float(np.linalg.norm(M, 2))
    one = float(np.abs(M).sum(axis=0).max())
    inf = float(np.abs(M).sum(axis=1).max())
    return float(np.sqrt(one * inf))


class CPMapTuple:
    """Symbols plus operators; the tuple of maps Phi_i = Phi_{f_i, A_i}."""

    def __init__(
        self,
        symbols: Sequence[PositiveSymbol],
        ops: OperatorTuple,
        validate: bool = True,
    ):
        symbols = tuple(symbols)
        if len(symbols) != ops.k:
            raise ValueError(f"{len(symbols)} symbols for {ops.k} operator rows")
        for i, f in enumerate(symbols):
            if f.arity != ops.arities[i]:
                raise ValueError(
                    f"symbol {i+1} has arity {f.arity}, operators have {ops.arities[i]}"
                )
            if validate:
                require_valid(f)
        self.symbols = symbols
        self.ops = ops
        self.tol = ops.tol
        self.k = ops.k
        self.dim = ops.dim
        self._matricized: Dict[int, np.ndarray] = {}
        self._certs: Dict[int, _GeomCert] = {}

    @classmethod
    def from_kraus(
        cls,
        families: Sequence[Sequence[np.ndarray]],
        tol: Tolerances | None = None,
        check: str = "maps",
    ) -> "CPMapTuple":
        """CP maps given by raw Kraus families; symbols implicitly Z_1+...+Z_n.

        check='maps' verifies commutation of the maps themselves
        (M_i M_j = M_j M_i), which is weaker than entrywise commutation;
        check='operators' requires the Kraus operators to commute across
        factors; check='none' skips verification.
        """
        ops = OperatorTuple(families, tol=tol, check_commutation=(check == "operators"))
        symbols = [polyball_symbol(n) for n in ops.arities]
        phi = cls(symbols, ops)
        if check == "maps":
            phi._check_map_commutation()
        return phi

    def _check_map_commutation(self) -> None:
        t = self.tol.tol_comm
        mats = [self.matricize(i) for i in range(1, self.k + 1)]
        for i in range(self.k):
            for j in range(i + 1, self.k):
                gap = np.linalg.norm(mats[i] @ mats[j] - mats[j] @ mats[i])
                scale = np.linalg.norm(mats[i]) * np.linalg.norm(mats[j])
                if gap > t * max(scale, 1.0):
                    raise CommutationError(
                        f"maps {i+1} and {j+1} do not commute: residual {gap:.3e}"
                    )

    # --- basic actions -------------------------------------------------

    def apply(self, i: int, X: np.ndarray, herm: Optional[bool] = None) -> np.ndarray:
        """Phi_i(X). Hermitian inputs get a symmetrized output."""
        X = np.asarray(X, dtype=np.complex128)
        if X.shape != (self.dim, self.dim):
            raise ValueError(f"X has shape {X.shape}, expected {(self.dim, self.dim)}")
        if herm is None:
            herm = is_hermitian(X)
        out = np.zeros_like(X)
        for w, a in self.symbols[i - 1].coeffs.items():
            if a == 0:
                continue
            Aw = self.ops.word_product(i, w)
            out += float(a) * (Aw @ X @ Aw.conj().T)
        return hermitize(out) if herm else out

    def apply_power(self, i: int, X: np.ndarray, s: int) -> np.ndarray:
        for _ in range(s):
            X = self.apply(i, X)
        return X

    def apply_multi(self, s: Sequence[int], X: np.ndarray) -> np.ndarray:
        """Phi_1^{s_1} o ... o Phi_k^{s_k} (X); order immaterial by commutation."""
        if len(s) != self.k:
            raise ValueError(f"multi-degree length {len(s)} != k = {self.k}")
        for i in range(self.k, 0, -1):
            X = self.apply_power(i, X, s[i - 1])
        return X

    def matricize(self, i: int) -> np.ndarray:
        cached = self._matricized.get(i)
        if cached is not None:
            return cached
        d2 = self.dim * self.dim
        if d2 > self.tol.max_vec_dim:
            raise ResourceCapError(
                f"matricizing needs a {d2} x {d2} matrix; cap is {self.tol.max_vec_dim}"
            )
        M = np.zeros((d2, d2), dtype=np.complex128)
        for w, a in self.symbols[i - 1].coeffs.items():
            if a == 0:
                continue
            Aw = self.ops.word_product(i, w)
            M += float(a) * np.kron(Aw, Aw.conj())
        self._matricized[i] = M
        return M

    # --- defect maps ----------------------------------------------------

    def defect(self, p: Sequence[int], X: np.ndarray) -> np.ndarray:
        """(id - Phi_1)^{p_1} o ... o (id - Phi_k)^{p_k} (X)."""
        if len(p) != self.k:
            raise ValueError(f"multi-degree length {len(p)} != k = {self.k}")
        Y = np.asarray(X, dtype=np.complex128)
        for i in range(1, self.k + 1):
            for _ in range(p[i - 1]):
                Y = Y - self.apply(i, Y)
        return Y

    def defect_grid(self, m: Sequence[int], X: np.ndarray) -> Dict[MultiDegree, np.ndarray]:
        """All defects Delta^p(X) for 0 <= p <= m via one incremental sweep."""
        if len(m) != self.k:
            raise ValueError(f"multi-degree length {len(m)} != k = {self.k}")
        grid: Dict[MultiDegree, np.ndarray] = {}
        grid[tuple([0] * self.k)] = np.asarray(X, dtype=np.complex128)
        for p in multi_grid(m):
            if p in grid:
                continue
            i = next(idx for idx, pi in enumerate(p) if pi > 0)
            prev = tuple(pi - (1 if idx == i else 0) for idx, pi in enumerate(p))
            Y = grid[prev]
            grid[p] = Y - self.apply(i + 1, Y)
        return grid

    # --- certified series -----------------------------------------------

    def _geom_cert(self, i: int) -> _GeomCert:
        cached = self._certs.get(i)
        if cached is not None:
            return cached
        M = self.matricize(i)
        d2 = M.shape[0]
        if d2 <= 400:
            jmax = 6
        elif d2 <= 1600:
            jmax = 5
        elif d2 <= 6400:
            jmax = 4
        else:
            jmax = 3
        norms: List[float] = []
        P = M
        eta = _specnorm_upper(P)
        norms.append(eta)
        best_theta = eta if eta < 1.0 else np.inf
        best_j = 0 if eta < 1.0 else -1
        nilpotent_power: Optional[int] = None
        if eta == 0.0:
            nilpotent_power = 1
        j = 0
        while j < jmax and nilpotent_power is None and not (best_j >= 0 and best_theta <= 0.2):
            P = P @ P
            j += 1
            eta = _specnorm_upper(P)
            norms.append(eta)
            if eta == 0.0:
                nilpotent_power = 2 ** j
                break
            theta = eta ** (1.0 / (2 ** j))
            if theta < best_theta:
                best_theta = theta
                best_j = j
        # structurally nilpotent maps annihilate exactly once 2^j reaches the
        # nilpotency index (at most d2); chase the collapse past the geometric
        # stopping rule so exact-sum paths get certified with a zero tail
        while nilpotent_power is None and d2 <= 400 and eta < 1.0 and 2 ** j < 2 * d2:
            P = P @ P
            j += 1
            eta = _specnorm_upper(P)
            norms.append(eta)
            if eta == 0.0:
                nilpotent_power = 2 ** j
            else:
                theta = eta ** (1.0 / (2 ** j))
                if theta < best_theta:
                    best_theta = theta
                    best_j = j
        if nilpotent_power is not None and nilpotent_power > 1:
            # squaring only brackets the index between consecutive powers of
            # two; bisect down to the minimal power (structural zeros are
            # exact, so the comparison is reliable)
            lo, hi = nilpotent_power // 2, nilpotent_power
            while hi - lo > 1:
                mid = (hi + lo) // 2
                if _specnorm_upper(np.linalg.matrix_power(M, mid)) == 0.0:
                    hi = mid
                else:
                    lo = mid
            nilpotent_power = hi
        if nilpotent_power is not None:
            cert = _GeomCert(0.0, 1.0, nilpotent_power, tuple(norms), True)
        elif best_j < 0:
            cert = _GeomCert(np.inf, np.inf, None, tuple(norms), False)
        else:
            t = 2 ** best_j
            theta = best_theta
            growth = 1.0
            stub = _GeomCert(theta, 1.0, None, tuple(norms), True)
            for b in range(t):
                growth = max(growth, stub.power_norm_bound(b) / theta ** b)
            cert = _GeomCert(theta, growth, None, tuple(norms), True)
        self._certs[i] = cert
        return cert

    def _radius_from_eigs(self, i: int) -> float:
        M = self.matricize(i)
        if M.shape[0] > 6400:
            cert = self._geom_cert(i)
            return float(np.sqrt(cert.theta)) if cert.ok else np.inf
        rho = float(np.max(np.abs(np.linalg.eigvals(M)), initial=0.0))
        return float(np.sqrt(rho))

    def _single_factor_series(
        self,
        i: int,
        m_i: int,
        X: np.ndarray,
        tail_target: float,
        budget: int,
        strict: bool,
    ) -> Tuple[np.ndarray, float, int, bool]:
        """sum_s C(s+m_i-1, m_i-1) Phi_i^s(X), truncated with a tail bound.

        Returns (value, tail_bound, terms_used, certified).
        """
        cert = self._geom_cert(i)
        herm = is_hermitian(X)
        total = np.zeros_like(np.asarray(X, dtype=np.complex128))
        term = np.asarray(X, dtype=np.complex128)
        xnorm = float(np.linalg.norm(term))
        if xnorm == 0.0:
            return total, 0.0, 0, True

        if cert.nilpotent_power is not None:
            s = 0
            while s < cert.nilpotent_power:
                total += comb(s + m_i - 1, m_i - 1) * term
                term = self.apply(i, term, herm=herm)
                s += 1
            return (hermitize(total) if herm else total), 0.0, s, True

        if cert.ok:
            theta, growth = cert.theta, cert.growth
            s = 0
            tail = float("inf")
            while True:
                total += comb(s + m_i - 1, m_i - 1) * term
                s += 1
                rho_w = (s + m_i) / (s + 1)
                if theta * rho_w < 1.0:
                    tail = (
                        growth
                        * xnorm
                        * comb(s + m_i - 1, m_i - 1)
                        * theta ** s
                        / (1.0 - theta * rho_w)
                    )
                    if tail <= tail_target:
                        return (hermitize(total) if herm else total), float(tail), s, True
                if s >= budget:
                    raise DivergenceError(
                        f"factor {i}: tail bound still {tail:.3e} after {s} terms "
                        f"(theta={theta:.6f}); raise the budget or shrink the instance"
                    )
                term = self.apply(i, term, herm=herm)
                if float(np.linalg.norm(term)) == 0.0:
                    # structural annihilation: the remaining terms are exactly 0
                    return (hermitize(total) if herm else total), 0.0, s, True

        if strict:
            raise DivergenceError(
                f"factor {i}: no geometric decay certificate found "
                f"(power norms {cert.pow2_norms}); radius may be >= 1"
            )
        # best effort: sum until increments stall or budget runs out
        s = 0
        stall = 0
        while s < budget:
            inc_norm = comb(s + m_i - 1, m_i - 1) * float(np.linalg.norm(term))
            total += comb(s + m_i - 1, m_i - 1) * term
            s += 1
            if inc_norm <= self.tol.series_tol * max(1.0, float(np.linalg.norm(total))):
                stall += 1
                if stall >= 3:
                    break
            else:
                stall = 0
            term = self.apply(i, term, herm=herm)
            if float(np.linalg.norm(term)) == 0.0:
                return (hermitize(total) if herm else total), 0.0, s, True
        return (hermitize(total) if herm else total), float("nan"), s, False

    def weighted_series(
        self,
        m: Sequence[int],
        R: np.ndarray,
        tol: float | None = None,
        strict: bool = True,
        budget: int = 20000,
    ) -> SeriesResult:
        """sum over s in Z_+^k of prod_i C(s_i+m_i-1, m_i-1) Phi^s(R).

        Evaluated stage by stage (the factors commute); the returned
        tail_bound certifies the Frobenius distance to the exact sum when
        certified is True. tol is interpreted relative to max(1, ||R||_F).
        """
        if len(m) != self.k:
            raise ValueError(f"multi-degree length {len(m)} != k = {self.k}")
        if any(mi < 1 for mi in m):
            raise ValueError(f"m must be >= 1 componentwise, got {tuple(m)}")
        tol = self.tol.series_tol if tol is None else float(tol)
        R = np.asarray(R, dtype=np.complex128)
        target = tol * max(1.0, float(np.linalg.norm(R)))

        radii = tuple(self.joint_spectral_radius(i, crosscheck=False) for i in range(1, self.k + 1))
        certs = [self._geom_cert(i) for i in range(1, self.k + 1)]
        if strict:
            bad = [i + 1 for i, r in enumerate(radii) if not (r <= 1.0 - self.tol.radius_margin)]
            bad += [i + 1 for i, c in enumerate(certs) if not c.ok]
            if bad:
                raise DivergenceError(
                    f"factors {sorted(set(bad))} have radius above "
                    f"{1.0 - self.tol.radius_margin} or no decay certificate"
                )

        # amplification of downstream stages: ||G_j|| <= growth_j (1-theta_j)^{-m_j}
        def amp(j: int) -> float:
            c = certs[j]
            if c.nilpotent_power is not None:
                return float(
                    sum(
                        comb(s + m[j] - 1, m[j] - 1) * c.power_norm_bound(s)
                        for s in range(c.nilpotent_power)
                    )
                )
            if not c.ok:
                return float("inf")
            return c.growth * (1.0 - c.theta) ** (-m[j])

        amps = [amp(j) for j in range(self.k)]
        value = R
        tail_total = 0.0
        terms: List[int] = []
        certified = True
        for idx in range(self.k):
            downstream = float(np.prod(amps[idx + 1:])) if idx + 1 < self.k else 1.0
            share = target / (self.k * max(downstream, 1e-300))
            value, tail, used, cert_ok = self._single_factor_series(
                idx + 1, m[idx], value, share, budget, strict
            )
            terms.append(used)
            certified = certified and cert_ok
            if cert_ok:
                tail_total += tail * downstream
            else:
                tail_total = float("nan")
        return SeriesResult(
            value=value,
            tail_bound=tail_total,
            terms=tuple(terms),
            certified=certified,
            radii=radii,
        )

    def iterated_sum(
        self,
        i: int,
        p: int,
        X: np.ndarray,
        budget: int = 20000,
        tol: float | None = None,
    ) -> SeriesResult:
        """Lambda_i^{[p]}(X) = sum_s C(s+p-1, p-1) Phi_i^s(X), certified."""
        if p < 1:
            raise ValueError(f"p must be >= 1, got {p}")
        tol = self.tol.series_tol if tol is None else float(tol)
        X = np.asarray(X, dtype=np.complex128)
        target = tol * max(1.0, float(np.linalg.norm(X)))
        r = self.joint_spectral_radius(i, crosscheck=False)
        cert = self._geom_cert(i)
        if cert.nilpotent_power is None and not (
            r <= 1.0 - self.tol.radius_margin and cert.ok
        ):
            raise DivergenceError(
                f"factor {i} radius {r:.6f} is above {1.0 - self.tol.radius_margin}"
            )
        value, tail, used, certified = self._single_factor_series(
            i, p, X, target, budget, strict=True
        )
        return SeriesResult(value, tail, (used,), certified, (r,))

    # --- means and radius ------------------------------------------------

    def cesaro_mean(self, p: Sequence[int], X: np.ndarray) -> np.ndarray:
        """(1 / prod p_i) sum_{0 <= s_i < p_i} Phi_k^{s_k} o ... o Phi_1^{s_1}(X)."""
        if len(p) != self.k:
            raise ValueError(f"multi-degree length {len(p)} != k = {self.k}")
        if any(pi < 1 for pi in p):
            raise ValueError(f"p must be >= 1 componentwise, got {tuple(p)}")
        Y = np.asarray(X, dtype=np.complex128)
        for i in range(1, self.k + 1):
            if p[i - 1] == 1:
                continue
            acc = np.zeros_like(Y)
            term = Y
            for s in range(p[i - 1]):
                acc += term
                if s + 1 < p[i - 1]:
                    term = self.apply(i, term)
            Y = acc / p[i - 1]
        return Y

    def radius_power_sequence(
        self, i: int, rel: float = 1e-6, max_iter: int = 2000
    ) -> Tuple[float, int]:
        """||Phi_i^s(I)||^{1/2s} iterated until relative stabilization."""
        X = np.eye(self.dim, dtype=np.complex128)
        prev = None
        s = 0
        while s < max_iter:
            X = self.apply(i, X)
            s += 1
            nrm = float(np.linalg.norm(X, 2))
            if nrm == 0.0:
                return 0.0, s  # exact annihilation (nilpotent tuple)
            est = nrm ** (1.0 / (2 * s))
            if prev is not None and abs(est - prev) <= rel * max(est, 1e-300):
                return est, s
            prev = est
            if not (1e-250 < nrm < 1e250):
                # the norm scale is running away faster than the Gelfand
                # estimate stabilizes; est carries the exponent trend and is
                # already within O(log(growth)/s) of the limit
                return est, s
        return prev if prev is not None else 0.0, s

    def joint_spectral_radius(self, i: int, crosscheck: bool = True) -> float:
        """sqrt of the spectral radius of the matricized map.

        With crosscheck=True the power sequence ||Phi^s(I)||^{1/2s} is run to
        stabilization and a gross disagreement raises ArithmeticError.
        """
        r = self._radius_from_eigs(i)
        if crosscheck:
            est, _ = self.radius_power_sequence(i, rel=self.tol.radius_crosscheck_rel)
            if abs(est - r) > 0.02 * max(r, est, 1e-9):
                raise ArithmeticError(
                    f"radius crosscheck failed for factor {i}: "
                    f"eig-based {r:.8f} vs power-sequence {est:.8f}"
                )
        return r
