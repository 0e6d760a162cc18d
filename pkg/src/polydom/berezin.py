"""Generalized and constrained Berezin kernels and transforms.

The kernel of a compatible tuple (f, m, A, R, Q) maps h to the family of
blocks sqrt(prod_i b_{i,beta_i}) R^{1/2} A_{1,beta_1}^* ... A_{k,beta_k}^*
indexed by the truncated Fock basis. Its Gram matrix reproduces the weighted
binomial series of R, and conjugation by it intertwines A^* with the
universal-model adjoints.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import scipy.sparse as sp

from .config import DivergenceError, Tolerances, default_tolerances
from .cpmap import CPMapTuple, OperatorTuple, hermitize
from .fock import (
    CompressedModel,
    ModelOperators,
    TruncatedFock,
    VarietySubspace,
    build_model,
    compress,
    variety_subspace,
)
from .words import NCPolynomial, PositiveSymbol, Word


def tuple_word_product(ops: OperatorTuple, alphas: Sequence[Sequence[int]]) -> np.ndarray:
    """A_{(alpha)} = A_{1,alpha_1} ... A_{k,alpha_k}."""
    out = np.eye(ops.dim, dtype=np.complex128)
    for i, w in enumerate(alphas, start=1):
        out = out @ ops.word_product(i, tuple(w))
    return out


def _scale_symbol_free(f: PositiveSymbol, t: float) -> PositiveSymbol:
    """Coefficient scaling a_alpha * t^{|alpha|} without the [0,1] clamp."""
    return PositiveSymbol(f.arity, {w: a * t ** len(w) for w, a in f.coeffs.items()}, f.max_degree)


@dataclass
class CompatibilityReport:
    ok: bool
    series_bound: float
    series_tail: float
    q_residuals: List[float]
    notes: List[str]


@dataclass
class CompatibleTuple:
    """(f, m, A, R, Q) with the boundedness and annihilation checks attached."""

    symbols: Tuple[PositiveSymbol, ...]
    m: Tuple[int, ...]
    ops: OperatorTuple
    R: np.ndarray
    polys: Tuple[NCPolynomial, ...] = ()

    def __post_init__(self):
        self.symbols = tuple(self.symbols)
        self.m = tuple(int(x) for x in self.m)
        self.R = hermitize(np.asarray(self.R, dtype=np.complex128))
        self.polys = tuple(self.polys)

    def phi(self) -> CPMapTuple:
        return CPMapTuple(self.symbols, self.ops)

    def verify(self) -> CompatibilityReport:
        notes: List[str] = []
        phi = self.phi()
        lam = np.linalg.eigvalsh(self.R)
        ok = True
        if lam[0] < -phi.tol.tol_psd * max(1.0, lam[-1]):
            ok = False
            notes.append(f"R has negative eigenvalue {lam[0]:.3e}")
        try:
            series = phi.weighted_series(self.m, self.R)
            bound = float(np.linalg.norm(series.value, 2)) + series.tail_bound
            tail = series.tail_bound
        except DivergenceError as e:
            ok = False
            bound, tail = float("inf"), float("inf")
            notes.append(str(e))
        q_res: List[float] = []
        eye = np.eye(self.ops.dim, dtype=np.complex128)
        for q in self.polys:
            val = q.evaluate(lambda i, j: self.ops.matrix(i, j), eye)
            r = float(np.linalg.norm(val, 2))
            q_res.append(r)
            if r > 1e-8 * max(1.0, float(np.linalg.norm(eye))):
                ok = False
                notes.append(f"constraint polynomial residual {r:.3e}")
        return CompatibilityReport(ok, bound, tail, q_res, notes)


@dataclass
class BerezinKernel:
    """K as a (fockdim * rank) x d matrix, fock index most significant."""

    K: np.ndarray
    fock: TruncatedFock
    rank: int
    R2: np.ndarray  # rank x d, coordinates of R^{1/2} on its range
    tail_bound: float
    certified: bool

    @property
    def d(self) -> int:
        return self.K.shape[1]

    def as_tensor(self) -> np.ndarray:
        return self.K.reshape(self.fock.dim, self.rank, self.d)

    def gram(self) -> np.ndarray:
        return hermitize(self.K.conj().T @ self.K)


def _kernel_tail_bound(
    phi: CPMapTuple,
    m: Sequence[int],
    R: np.ndarray,
    degree_cap: int,
) -> Tuple[float, bool]:
    """Bound on the PSD mass of kernel rows beyond the truncation box.

    Rows with |beta_i| > degree_cap contribute at most
    t^{-(degree_cap+1)} * || series of R for the factor-i symbol scaled by t ||
    for any t > 1 keeping that series convergent.
    """
    total = 0.0
    for i in range(1, phi.k + 1):
        cert = phi._geom_cert(i)
        if cert.nilpotent_power is not None and degree_cap + 1 >= cert.nilpotent_power:
            continue
        r_i = phi.joint_spectral_radius(i, crosscheck=False)
        if cert.nilpotent_power is not None:
            t = 4.0
        else:
            if not (r_i < 1.0 - phi.tol.radius_margin):
                return float("nan"), False
            t = min(((1.0 - phi.tol.radius_margin) / max(r_i, 1e-6)) ** 2, 64.0)
        contribution = None
        for _ in range(8):
            if t <= 1.0 + 1e-9:
                break
            scaled = list(phi.symbols)
            scaled[i - 1] = _scale_symbol_free(phi.symbols[i - 1], t)
            phi_t = CPMapTuple(scaled, phi.ops, validate=False)
            try:
                series = phi_t.weighted_series(m, R)
                contribution = t ** (-(degree_cap + 1)) * (
                    float(np.linalg.norm(series.value, 2)) + series.tail_bound
                )
                break
            except DivergenceError:
                t = 1.0 + (t - 1.0) / 2.0
        if contribution is None:
            return float("nan"), False
        total += contribution
    return total, True


def kernel(
    symbols: Sequence[PositiveSymbol],
    m: Sequence[int],
    ops: OperatorTuple,
    R: np.ndarray,
    degree_cap: int,
    prebuilt: Optional[Tuple[TruncatedFock, ModelOperators]] = None,
) -> BerezinKernel:
    """The generalized Berezin kernel truncated at per-factor degree degree_cap."""
    phi = CPMapTuple(symbols, ops)
    R = hermitize(np.asarray(R, dtype=np.complex128))
    d = ops.dim
    if R.shape != (d, d):
        raise ValueError(f"R has shape {R.shape}, operators have dimension {d}")
    lam, V = np.linalg.eigh(R)
    if lam[-1] <= 0.0 and not np.any(lam > 0.0):
        lam = np.zeros_like(lam)
    clip = phi.tol.eig_clip * max(float(lam[-1]), 1e-300)
    if float(lam[0]) < -phi.tol.tol_psd * max(1.0, float(lam[-1])):
        raise ValueError(f"R is not positive semidefinite (eigenvalue {lam[0]:.3e})")
    keep = lam > clip
    rank = int(np.count_nonzero(keep))
    R2 = (np.sqrt(lam[keep])[:, None] * V[:, keep].conj().T) if rank else np.zeros((0, d))

    fock, model = prebuilt if prebuilt is not None else build_model(symbols, m, degree_cap, tol=phi.tol)
    K = np.zeros((fock.dim * max(rank, 1), d), dtype=np.complex128)
    if rank > 0:
        for g in range(fock.dim):
            beta = fock.words_at(g)
            w = 1.0
            for i in range(fock.k):
                w *= float(fock.weights[i].value(beta[i]))
            adj = np.eye(d, dtype=np.complex128)
            for i, word in enumerate(beta, start=1):
                adj = adj @ ops.word_product(i, word).conj().T
            K[g * rank:(g + 1) * rank, :] = np.sqrt(w) * (R2 @ adj)
    tail, certified = _kernel_tail_bound(phi, m, R, degree_cap)
    return BerezinKernel(K=K, fock=fock, rank=rank, R2=R2, tail_bound=tail, certified=certified)


@dataclass
class ConstrainedKernel:
    """K_omega in coordinates of an orthonormal basis B of N_Q."""

    K: np.ndarray  # (dim_N * rank) x d
    base: BerezinKernel
    subspace: VarietySubspace
    model: ModelOperators
    compressed: CompressedModel
    range_residual: float

    @property
    def d(self) -> int:
        return self.K.shape[1]

    @property
    def rank(self) -> int:
        return self.base.rank

    def as_tensor(self) -> np.ndarray:
        return self.K.reshape(self.subspace.dim_N, self.rank, self.d)

    def gram(self) -> np.ndarray:
        return hermitize(self.K.conj().T @ self.K)


def constrained_kernel(
    omega: CompatibleTuple,
    degree_cap: int,
    prebuilt: Optional[Tuple[TruncatedFock, ModelOperators, VarietySubspace]] = None,
) -> ConstrainedKernel:
    """K_omega = (P_N tensor I) K, returned in N_Q coordinates.

    The range of the unconstrained kernel lies inside N_Q tensor R-bar when
    the constraints annihilate A; the measured leakage is reported as
    range_residual rather than silently projected away.
    """
    if prebuilt is not None:
        fock, model, sub = prebuilt
    else:
        fock, model = build_model(omega.symbols, omega.m, degree_cap)
        sub = variety_subspace(model, omega.polys)
    base = kernel(omega.symbols, omega.m, omega.ops, omega.R, degree_cap, prebuilt=(fock, model))
    rank = max(base.rank, 1)
    T = base.K.reshape(fock.dim, rank, base.d)
    B = sub.basis_N
    proj = np.einsum("na,nrd->ard", B.conj(), T)
    K = proj.reshape(B.shape[1] * rank, base.d)
    back = np.einsum("na,ard->nrd", B, proj)
    leak = float(np.linalg.norm((T - back).reshape(fock.dim * rank, base.d), 2))
    comp = compress(model, sub)
    return ConstrainedKernel(
        K=K, base=base, subspace=sub, model=model, compressed=comp, range_residual=leak
    )


def intertwine_check(kern: BerezinKernel, model: ModelOperators, ops: OperatorTuple) -> Dict[Tuple[int, int], Tuple[float, float]]:
    """Residuals ||K A_{i,j}^* - (W_{i,j}^* tensor I) K||, full and interior.

    The full residual concentrates on rows whose factor-i degree equals the
    truncation cap, where the model side is annihilated; interior rows are
    exact up to roundoff.
    """
    fock = kern.fock
    rank = max(kern.rank, 1)
    out: Dict[Tuple[int, int], Tuple[float, float]] = {}
    for (i, j, W) in model.all_W():
        lhs = kern.K @ ops.matrix(i, j).conj().T
        rhs = sp.kron(W.conj().T, sp.identity(rank, format="csr"), format="csr") @ kern.K
        diff = lhs - rhs
        full = float(np.linalg.norm(diff, 2))
        deg_i = fock.factor_degree_array(i - 1)
        interior_rows = np.repeat(deg_i < fock.degree_cap, rank)
        interior = float(np.linalg.norm(diff[interior_rows], 2)) if interior_rows.any() else 0.0
        out[(i, j)] = (full, interior)
    return out


def intertwine_check_constrained(ck: ConstrainedKernel, ops: OperatorTuple) -> Dict[Tuple[int, int], float]:
    """Residuals ||K_omega A_{i,j}^* - (S_{i,j}^* tensor I) K_omega||."""
    rank = max(ck.rank, 1)
    out: Dict[Tuple[int, int], float] = {}
    for (i, j), S in sorted(ck.compressed.S.items()):
        lhs = ck.K @ ops.matrix(i, j).conj().T
        rhs = np.kron(S.conj().T, np.eye(rank)) @ ck.K
        out[(i, j)] = float(np.linalg.norm(lhs - rhs, 2))
    return out


def transform(ck: ConstrainedKernel, chi: np.ndarray) -> np.ndarray:
    """B_omega[chi] = K_omega^* (chi tensor I) K_omega."""
    r = ck.subspace.dim_N
    chi = np.asarray(chi, dtype=np.complex128)
    if chi.shape != (r, r):
        raise ValueError(f"chi has shape {chi.shape}, expected {(r, r)}")
    T = ck.as_tensor()
    return np.einsum("apx,ab,bpy->xy", T.conj(), chi, T, optimize=True)


def model_word_value(comp: CompressedModel, alphas: Sequence[Sequence[int]]) -> np.ndarray:
    """S_{(alpha)} = S_{1,alpha_1} ... S_{k,alpha_k} on the compressed space."""
    keys = sorted(comp.S)
    k = max(i for (i, _) in keys)
    r = comp.basis.shape[1]
    out = np.eye(r, dtype=np.complex128)
    for i, w in enumerate(alphas, start=1):
        for j in w:
            out = out @ comp.S[(i, int(j))]
    return out


@dataclass
class SweepPoint:
    r: float
    gram_residual: float
    transforms: List[np.ndarray]


@dataclass
class SweepReport:
    points: List[SweepPoint]
    cauchy: List[List[float]]  # per chi, consecutive-diff norms
    notes: List[str]


def extended_transform_sweep(
    symbols: Sequence[PositiveSymbol],
    m: Sequence[int],
    ops: OperatorTuple,
    D_pos: np.ndarray,
    polys: Sequence[NCPolynomial],
    r_grid: Sequence[float],
    chis: Optional[Sequence[np.ndarray]] = None,
    degree_cap: int = 8,
) -> SweepReport:
    """Evaluates the r-parametrized constrained transform along r_grid.

    Each grid point uses the tuple (f, m, rA, Delta_{f,rA}^m(D_pos), Q); the
    Gram identity K*K = D_pos is reported per point and Cauchy differences
    of the transform values across the grid stand in for the r -> 1 limit.
    """
    symbols = tuple(symbols)
    m = tuple(m)
    polys = tuple(polys)
    k = len(symbols)
    for q in polys:
        if not q.is_homogeneous(k):
            raise ValueError("sweep requires homogeneous constraint polynomials")
    fock, model = build_model(symbols, m, degree_cap)
    sub = variety_subspace(model, polys)
    notes: List[str] = []
    if chis is None:
        chis = [np.eye(sub.dim_N, dtype=np.complex128)]
    points: List[SweepPoint] = []
    for r in r_grid:
        r = float(r)
        rows = [[r * A for A in row] for row in ops.rows]
        ops_r = OperatorTuple(rows, tol=ops.tol, check_commutation=False)
        phi_r = CPMapTuple(symbols, ops_r, validate=False)
        R_r = hermitize(phi_r.defect(m, D_pos))
        lam = np.linalg.eigvalsh(R_r)
        if lam[0] < -1e-9 * max(1.0, lam[-1]):
            notes.append(f"r={r}: defect not PSD (min eig {lam[0]:.3e})")
            R_r = R_r - lam[0] * np.eye(R_r.shape[0])
        omega = CompatibleTuple(symbols, m, ops_r, R_r, polys)
        ck = constrained_kernel(omega, degree_cap, prebuilt=(fock, model, sub))
        gram_res = float(np.linalg.norm(ck.gram() - D_pos, 2))
        vals = [transform(ck, chi) for chi in chis]
        points.append(SweepPoint(r=r, gram_residual=gram_res, transforms=vals))
    cauchy: List[List[float]] = []
    for ci in range(len(chis)):
        diffs = [
            float(np.linalg.norm(points[t + 1].transforms[ci] - points[t].transforms[ci], 2))
            for t in range(len(points) - 1)
        ]
        cauchy.append(diffs)
    return SweepReport(points=points, cauchy=cauchy, notes=notes)


# --- von Neumann style inequality checks -------------------------------------


@dataclass
class VNReport:
    verdict: str  # "PASS" | "FAILED" | "INCONCLUSIVE"
    lhs: float
    rhs: float
    factor: float
    details: Dict[str, object]


def vn_check_model(
    symbols: Sequence[PositiveSymbol],
    m: Sequence[int],
    ops: OperatorTuple,
    D_pos: np.ndarray,
    terms: Sequence[Tuple[np.ndarray, Sequence[Sequence[int]], Sequence[Sequence[int]]]],
    polys: Sequence[NCPolynomial] = (),
    degree_cap: int = 6,
    tol: float = 1e-8,
    stab_rel: float = 1e-6,
) -> VNReport:
    """Checks ||sum A_(alpha) D A_(beta)^* (x) C|| <= ||D|| ||sum S_(alpha) S_(beta)^* (x) C||.

    terms is a list of (C, alpha, beta) with C a q x q coefficient block and
    alpha, beta k-tuples of words. The model side is evaluated at three
    consecutive truncation degrees; since truncated norms only increase with
    the cap, an unstabilized right side yields INCONCLUSIVE, never PASS.
    """
    symbols = tuple(symbols)
    m = tuple(m)
    D_pos = hermitize(np.asarray(D_pos, dtype=np.complex128))
    d = ops.dim
    qdim = np.asarray(terms[0][0]).shape[0] if terms else 1
    lhs_mat = np.zeros((d * qdim, d * qdim), dtype=np.complex128)
    for C, alpha, beta in terms:
        C = np.atleast_2d(np.asarray(C, dtype=np.complex128))
        Aa = tuple_word_product(ops, alpha)
        Ab = tuple_word_product(ops, beta)
        lhs_mat += np.kron(Aa @ D_pos @ Ab.conj().T, C)
    lhs = float(np.linalg.norm(lhs_mat, 2))
    dnorm = float(np.linalg.norm(D_pos, 2))

    rhs_values: List[float] = []
    for cap in (degree_cap, degree_cap + 1, degree_cap + 2):
        _, model = build_model(symbols, m, cap)
        sub = variety_subspace(model, polys)
        comp = compress(model, sub)
        r = comp.basis.shape[1]
        rhs_mat = np.zeros((r * qdim, r * qdim), dtype=np.complex128)
        for C, alpha, beta in terms:
            C = np.atleast_2d(np.asarray(C, dtype=np.complex128))
            Sa = model_word_value(comp, alpha)
            Sb = model_word_value(comp, beta)
            rhs_mat += np.kron(Sa @ Sb.conj().T, C)
        rhs_values.append(float(np.linalg.norm(rhs_mat, 2)))
    rel_diffs = [
        abs(rhs_values[t + 1] - rhs_values[t]) / max(rhs_values[t + 1], 1e-300)
        for t in range(2)
    ]
    stabilized = all(x <= stab_rel for x in rel_diffs)
    rhs = rhs_values[-1]
    if not stabilized:
        verdict = "INCONCLUSIVE"
    elif lhs <= dnorm * rhs * (1.0 + tol):
        verdict = "PASS"
    else:
        verdict = "FAILED"
    return VNReport(
        verdict=verdict,
        lhs=lhs,
        rhs=rhs,
        factor=dnorm,
        details={"rhs_by_degree": rhs_values, "rel_diffs": rel_diffs, "stabilized": stabilized},
    )


def _power_norm_sum_sq(C: np.ndarray) -> Tuple[float, bool]:
    """sum_{s>=0} ||C^s||_2^2 with a submultiplicative tail certificate.

    Once n = ||C^s|| < 1, the remaining sum T obeys T <= n^2 (total-1+T)
    because ||C^{s+u}|| <= n ||C^u||, so T <= n^2 (total-1) / (1-n^2).
    """
    d = C.shape[0]
    P = np.eye(d, dtype=np.complex128)
    total = 0.0
    s = 0
    while s <= 100000:
        n = float(np.linalg.norm(P, 2))
        total += n * n
        s += 1
        if n == 0.0:
            return total, True
        if n < 1.0:
            tail = n * n * (total - 1.0) / (1.0 - n * n)
            if tail <= 1e-14 * max(total, 1.0):
                return total + tail, True
        P = P @ C
    return float("nan"), False


def vn_check_polydisc(
    C_ops: OperatorTuple,
    poly_matrix: Sequence[Sequence[NCPolynomial]],
    tol: float = 1e-8,
    base_grid: Optional[int] = None,
    max_rounds: int = 3,
) -> VNReport:
    """Checks ||[q_{s,t}(C)]|| <= sqrt(b) sup_{|z_i|=1} ||[q_{s,t}(z)]||.

    b = prod_i sum_s ||C_i^s||^2. The supremum is sampled on a torus grid
    and refined with the Lipschitz bound of the polynomial matrix; PASS is
    claimed only against the grid value (a lower bound of the sup), FAILED
    only against the Lipschitz-corrected upper bound.
    """
    k = C_ops.k
    if any(n != 1 for n in C_ops.arities):
        raise ValueError("polydisc mode needs one generator per factor")
    rows = len(poly_matrix)
    cols = len(poly_matrix[0])
    d = C_ops.dim
    lhs_mat = np.zeros((rows * d, cols * d), dtype=np.complex128)
    eye = np.eye(d, dtype=np.complex128)
    for s in range(rows):
        for t in range(cols):
            val = poly_matrix[s][t].evaluate(lambda i, j: C_ops.matrix(i, j), eye)
            lhs_mat[s * d:(s + 1) * d, t * d:(t + 1) * d] = val
    lhs = float(np.linalg.norm(lhs_mat, 2))

    b = 1.0
    certified = True
    for i in range(1, k + 1):
        val, ok = _power_norm_sum_sq(C_ops.matrix(i, 1))
        certified = certified and ok
        b *= val
    if not certified or not np.isfinite(b):
        return VNReport("INCONCLUSIVE", lhs, float("nan"), float("nan"),
                        {"reason": "power-norm sum not certified (radius >= 1?)"})
    factor = float(np.sqrt(b))

    # exponent table: coefficient block per commutative monomial degree
    blocks: Dict[Tuple[int, ...], np.ndarray] = {}
    for s in range(rows):
        for t in range(cols):
            for c, mono in poly_matrix[s][t].terms:
                e = [0] * k
                for (i, _) in mono:
                    e[i - 1] += 1
                key = tuple(e)
                if key not in blocks:
                    blocks[key] = np.zeros((rows, cols), dtype=np.complex128)
                blocks[key][s, t] += c
    lip = [
        sum(e[i] * float(np.linalg.norm(B, 2)) for e, B in blocks.items())
        for i in range(k)
    ]

    if base_grid is None:
        base_grid = {1: 4096, 2: 256, 3: 48}.get(k, 32)
    g = base_grid
    details: Dict[str, object] = {"b": b}
    for round_idx in range(max_rounds):
        axes = [np.exp(2j * np.pi * np.arange(g) / g) for _ in range(k)]
        mesh = np.meshgrid(*axes, indexing="ij")
        zpowers = {e: np.ones_like(mesh[0]) for e in blocks}
        for e in blocks:
            acc = np.ones_like(mesh[0])
            for i in range(k):
                if e[i]:
                    acc = acc * mesh[i] ** e[i]
            zpowers[e] = acc
        stack = np.zeros(mesh[0].shape + (rows, cols), dtype=np.complex128)
        for e, B in blocks.items():
            stack += zpowers[e][..., None, None] * B
        sups = np.linalg.norm(stack.reshape(-1, rows, cols), ord=2, axis=(1, 2))
        sup_grid = float(sups.max())
        h = np.pi / g  # max arc distance to nearest grid point per axis
        sup_upper = sup_grid + sum(L * h for L in lip)
        details.update({"grid": g, "sup_grid": sup_grid, "sup_upper": sup_upper})
        if lhs <= factor * sup_grid * (1.0 + tol):
            return VNReport("PASS", lhs, sup_grid, factor, details)
        if lhs > factor * sup_upper * (1.0 + tol):
            return VNReport("FAILED", lhs, sup_grid, factor, details)
        g *= 2
    return VNReport("INCONCLUSIVE", lhs, sup_grid, factor, details)
