"""Similarity solvers: embeddings, conjugations, defect equations, radii."""

import numpy as np
import pytest

from polydom.config import DivergenceError
from polydom.cone import membership
from polydom.cpmap import CPMapTuple, OperatorTuple, hermitize
from polydom.generate import generate, strict_contractions
from polydom.similarity import (
    cpmap_similarity,
    map_spectral_radius,
    model_embed,
    rota_conjugate,
    similarity_to_variety,
    solve_defect_equation,
    spectral_radius_equivalences,
    sznagy_solve,
)
from polydom.words import commutator_polynomial, polyball_symbol

from conftest import random_psd


def scalar_tuple(c, d=3):
    ops = OperatorTuple([[c * np.eye(d, dtype=np.complex128)]])
    return (polyball_symbol(1),), (1,), ops


def zero_tuple(d=3, k=2):
    rows = [[np.zeros((d, d), dtype=np.complex128)] for _ in range(k)]
    ops = OperatorTuple(rows)
    return tuple(polyball_symbol(1) for _ in range(k)), tuple(1 for _ in range(k)), ops


def coisometry_pair(seed, d=4):
    # [K1 K2] is a d x 2d co-isometry: K1 K1* + K2 K2* = I
    rng = np.random.default_rng(seed)
    G = rng.standard_normal((2 * d, 2 * d)) + 1j * rng.standard_normal((2 * d, 2 * d))
    U, _ = np.linalg.qr(G)
    V = U[:d, :]
    return V[:, :d], V[:, d:]


def mild_pd(seed, d, spread=3.0):
    rng = np.random.default_rng(seed)
    G = rng.standard_normal((d, d)) + 1j * rng.standard_normal((d, d))
    Q, _ = np.linalg.qr(G)
    lam = np.linspace(1.0, spread, d)
    return (Q * lam) @ Q.conj().T


# ---------------------------------------------------------------------------
# model embedding
# ---------------------------------------------------------------------------

def test_model_embed_zero_tuple_identity_R():
    symbols, m, ops = zero_tuple()
    cert = model_embed(symbols, m, ops, np.eye(3), degree_cap=4)
    assert cert.status == "PASS"
    assert abs(cert.cond - 1.0) <= 1e-10
    assert abs(cert.witnesses["a"] - 1.0) <= 1e-12
    assert abs(cert.witnesses["b"] - 1.0) <= 1e-12


def test_model_embed_pure_variety_is_isometric():
    inst = generate("nilpotent", 4, dim=5, ensure_cone=True)
    phi = CPMapTuple(inst.symbols, inst.ops)
    R = phi.defect(inst.m, np.eye(5))
    polys = (commutator_polynomial(1, 1, 2),)
    cert = model_embed(inst.symbols, inst.m, inst.ops, R, Q_polys=polys, degree_cap=6)
    assert cert.status == "PASS"
    assert abs(cert.cond - 1.0) <= 1e-8
    # Q = Y*Y is the identity here
    assert np.linalg.norm(cert.Q - np.eye(5), 2) <= 1e-8


@pytest.mark.parametrize("seed", range(3))
def test_model_embed_nilpotent_identity_R(seed):
    inst = generate("nilpotent", seed, dim=4)
    cert = model_embed(inst.symbols, inst.m, inst.ops, np.eye(4), degree_cap=6)
    assert cert.status == "PASS"
    for name, r in cert.residuals.items():
        if name.startswith("intertwine"):
            assert r <= 1e-10
    assert cert.cond <= cert.claimed_bound * (1.0 + 1e-8)


def test_model_embed_rejects_unbounded_below_series():
    symbols, m, ops = zero_tuple()
    R = np.diag([1.0, 0.0, 0.0]).astype(np.complex128)
    with pytest.raises(ValueError):
        model_embed(symbols, m, ops, R, degree_cap=4)


# ---------------------------------------------------------------------------
# strict conjugation
# ---------------------------------------------------------------------------

def test_rota_scalar_closed_form():
    c = 0.6
    symbols, m, ops = scalar_tuple(c)
    cert, T = rota_conjugate(symbols, m, ops)
    assert cert.status == "PASS"
    # P is a multiple of the identity, so T = A and the bound is geometric
    assert np.linalg.norm(cert.Q - np.eye(3) / (1 - c * c), 2) <= 1e-9
    assert np.linalg.norm(T.rows[0][0] - ops.rows[0][0], 2) <= 1e-12
    assert cert.witnesses["T_defect_min_eig"] > 0.0
    assert cert.cond <= cert.claimed_bound * (1.0 + 1e-8)


def test_rota_commuting_pair_product_bound():
    C = strict_contractions(5, k=2, dim=4, norm_cap=0.7)
    ops = OperatorTuple([[C[0]], [C[1]]])
    symbols = (polyball_symbol(1), polyball_symbol(1))
    cert, T = rota_conjugate(symbols, (1, 1), ops)
    assert cert.status == "PASS"
    # product of geometric sums of squared norms dominates the claim
    r2 = 0.7 ** 2
    assert cert.claimed_bound <= (1.0 / (1.0 - r2)) ** 2 + 1e-9
    assert cert.cond <= cert.claimed_bound * (1.0 + 1e-8)
    phi_T = CPMapTuple(symbols, T)
    rep = membership(phi_T, (1, 1), np.eye(4), with_purity=False)
    assert rep.member


@pytest.mark.parametrize("seed", range(3))
def test_rota_polynomial_instance_strict_and_variety(seed):
    inst = generate("commuting_polynomials", seed, target_radius=0.85)
    polys = (commutator_polynomial(1, 1, 2),)
    cert, T = rota_conjugate(inst.symbols, inst.m, inst.ops, Q_polys=polys)
    assert cert.status == "PASS"
    assert cert.witnesses["T_defect_min_eig"] > 0.0
    assert cert.cond <= cert.claimed_bound * (1.0 + 1e-8)


def test_rota_transitivity_under_conjugation():
    inst = generate("commuting_polynomials", 11, target_radius=0.8)
    xi = mild_pd(11, inst.ops.dim, spread=2.0)
    xi_inv = np.linalg.inv(xi)
    rows = [[xi @ M @ xi_inv for M in row] for row in inst.ops.rows]
    conj = OperatorTuple(rows)
    for ops in (inst.ops, conj):
        cert, _ = rota_conjugate(inst.symbols, inst.m, ops)
        assert cert.status == "PASS"


def test_rota_rejects_radius_one():
    symbols, m, ops = scalar_tuple(1.0)
    with pytest.raises(DivergenceError):
        rota_conjugate(symbols, m, ops)


# ---------------------------------------------------------------------------
# defect equation
# ---------------------------------------------------------------------------

def test_defect_equation_scalar():
    symbols, m, ops = scalar_tuple(0.5)
    sol = solve_defect_equation(symbols, m, ops, np.eye(3))
    assert sol.ok and sol.invertible
    assert np.linalg.norm(sol.X - np.eye(3) / 0.75, 2) <= 1e-10


def test_defect_equation_round_trip(rng):
    inst = generate("commuting_polynomials", 21, target_radius=0.7)
    phi = CPMapTuple(inst.symbols, inst.ops)
    R0 = random_psd(rng, 4) + 0.5 * np.eye(4)
    X0 = hermitize(phi.weighted_series(inst.m, R0, tol=1e-13).value)
    sol = solve_defect_equation(inst.symbols, inst.m, inst.ops, phi.defect(inst.m, X0))
    assert sol.ok
    assert np.linalg.norm(sol.X - X0, 2) <= 1e-8 * max(1.0, np.linalg.norm(X0, 2))


@pytest.mark.parametrize("seed", range(10))
def test_defect_equation_oracle_gap(seed, rng):
    inst = generate("commuting_polynomials", 100 + seed, target_radius=0.8)
    R = random_psd(rng, 4) + 0.3 * np.eye(4)
    sol = solve_defect_equation(inst.symbols, inst.m, inst.ops, R)
    assert sol.ok
    assert sol.oracle_rel_gap <= 1e-8
    assert sol.defect_residual <= 1e-8 * max(1.0, np.linalg.norm(R, 2))
    assert sol.membership_report.member


def test_defect_equation_rejects_singular_R():
    symbols, m, ops = scalar_tuple(0.5)
    with pytest.raises(ValueError):
        solve_defect_equation(symbols, m, ops, np.diag([1.0, 1.0, 0.0]))


def test_defect_equation_rejects_radius_one():
    symbols, m, ops = scalar_tuple(1.0)
    with pytest.raises(DivergenceError):
        solve_defect_equation(symbols, m, ops, np.eye(3))


# ---------------------------------------------------------------------------
# Cesaro fixed point
# ---------------------------------------------------------------------------

def test_sznagy_commuting_unitaries_immediate():
    rng = np.random.default_rng(31)
    G = rng.standard_normal((4, 4)) + 1j * rng.standard_normal((4, 4))
    W, _ = np.linalg.qr(G)
    rows = []
    for _ in range(2):
        phases = np.exp(1j * rng.uniform(0, 2 * np.pi, size=4))
        rows.append([(W * phases) @ W.conj().T])
    ops = OperatorTuple(rows)
    symbols = (polyball_symbol(1), polyball_symbol(1))
    cert, T = sznagy_solve(symbols, ops)
    assert cert.status == "PASS"
    assert np.linalg.norm(cert.Q - np.eye(4), 2) <= 1e-7
    for i, row in enumerate(T.rows):
        M = row[0]
        assert np.linalg.norm(M.conj().T @ M - np.eye(4), 2) <= 1e-7


@pytest.mark.parametrize("seed", range(3))
def test_sznagy_conjugated_unitaries(seed):
    inst = generate("conjugated_unitaries", seed, k=2, dim=5)
    cert, T = sznagy_solve(inst.symbols, inst.ops)
    assert cert.status == "PASS"
    for i in range(1, 3):
        assert cert.residuals[f"fixed_point_{i}"] <= 1e-7
    for row in T.rows:
        M = row[0]
        assert np.linalg.norm(M.conj().T @ M - np.eye(5), 2) <= 1e-7
    # Q must lie inside the common fixed space of the matricized maps
    if cert.witnesses["fixed_space_dim"] == 1.0:
        assert cert.residuals["nullspace_match"] <= 1e-6
    else:
        assert cert.witnesses["nullspace_projection_gap"] <= 1e-6


def test_sznagy_coisometry_row():
    K1, K2 = coisometry_pair(7)
    ops = OperatorTuple([[K1, K2]])
    cert, T = sznagy_solve([polyball_symbol(2)], ops)
    assert cert.status == "PASS"
    assert np.linalg.norm(cert.Q - np.eye(4), 2) <= 1e-7
    if cert.witnesses["fixed_space_dim"] == 1.0:
        assert cert.residuals["nullspace_match"] <= 1e-6
    T1, T2 = T.rows[0]
    assert np.linalg.norm(T1 @ T1.conj().T + T2 @ T2.conj().T - np.eye(4), 2) <= 1e-7


def test_sznagy_conjugated_coisometry_recovers_witness():
    K1, K2 = coisometry_pair(8)
    xi = mild_pd(8, 4, spread=2.5)
    xi_inv = np.linalg.inv(xi)
    ops = OperatorTuple([[xi @ K1 @ xi_inv, xi @ K2 @ xi_inv]])
    cert, T = sznagy_solve([polyball_symbol(2)], ops)
    assert cert.status == "PASS"
    W = xi @ xi.conj().T
    W = W / np.linalg.norm(W, 2)
    assert np.linalg.norm(cert.Q - W, 2) <= 1e-6
    T1, T2 = T.rows[0]
    assert np.linalg.norm(T1 @ T1.conj().T + T2 @ T2.conj().T - np.eye(4), 2) <= 1e-7


def test_sznagy_no_similarity_for_strict_contractions():
    C = strict_contractions(9, k=2, dim=4, norm_cap=0.6)
    ops = OperatorTuple([[C[0]], [C[1]]])
    cert, T = sznagy_solve([polyball_symbol(1), polyball_symbol(1)], ops)
    assert cert.status == "FAILED"
    assert T is None
    assert any("no similarity" in n for n in cert.notes)


# ---------------------------------------------------------------------------
# variety feasibility
# ---------------------------------------------------------------------------

def test_variety_feasibility_already_in_domain():
    inst = generate("nilpotent", 14, dim=4, ensure_cone=True)
    polys = (commutator_polynomial(1, 1, 2),)
    out = similarity_to_variety(inst.symbols, inst.m, inst.ops, Q_polys=polys)
    assert out.verdict == "found"
    assert out.membership_report is not None and out.membership_report.member
    assert all(r <= 1e-6 for r in out.variety_residuals)


def test_variety_feasibility_conjugated_instance():
    inst = generate("nilpotent", 15, dim=4, ensure_cone=True)
    xi = mild_pd(15, 4, spread=1.5)
    xi_inv = np.linalg.inv(xi)
    rows = [[xi @ M @ xi_inv for M in row] for row in inst.ops.rows]
    ops = OperatorTuple(rows)
    polys = (commutator_polynomial(1, 1, 2),)
    out = similarity_to_variety(inst.symbols, inst.m, ops, Q_polys=polys, budget=4000)
    assert out.verdict == "found"
    assert out.membership_report is not None and out.membership_report.member
    assert all(r <= 1e-6 for r in out.variety_residuals)


def test_variety_feasibility_radius_obstruction():
    rng = np.random.default_rng(40)
    G = rng.standard_normal((4, 4)) + 1j * rng.standard_normal((4, 4))
    U, _ = np.linalg.qr(G)
    ops = OperatorTuple([[1.2 * U]])
    out = similarity_to_variety((polyball_symbol(1),), (1,), ops, budget=60)
    assert out.verdict == "inconclusive"


def test_variety_feasibility_rejects_nonannihilating_constraint():
    # E12 and E23 are nilpotent but do not commute with each other
    A11 = np.zeros((4, 4), dtype=np.complex128)
    A12 = np.zeros((4, 4), dtype=np.complex128)
    A11[0, 1] = 1.0
    A12[1, 2] = 1.0
    ops = OperatorTuple([[A11, A12], [np.zeros((4, 4), dtype=np.complex128)]])
    symbols = (polyball_symbol(2), polyball_symbol(1))
    bad = commutator_polynomial(1, 1, 2)
    with pytest.raises(ValueError):
        similarity_to_variety(symbols, (1, 1), ops, Q_polys=(bad,))


# ---------------------------------------------------------------------------
# positive-map wrappers
# ---------------------------------------------------------------------------

def test_cpmap_strict_scalar():
    c = 0.7
    phi = CPMapTuple.from_kraus([[c * np.eye(3, dtype=np.complex128)]])
    cert = cpmap_similarity(phi, (1,), "strict")
    assert cert.status == "PASS"
    assert np.linalg.norm(cert.Q - np.eye(3) / (1 - c * c), 2) <= 1e-9
    assert abs(cert.witnesses["target_defect_min_eig"] - (1 - c * c)) <= 1e-8


def test_cpmap_strict_random_pair():
    rng = np.random.default_rng(44)
    M = rng.standard_normal((4, 4)) + 1j * rng.standard_normal((4, 4))
    C1 = M @ M + 0.3 * M
    C2 = 0.5 * M @ M @ M - M
    C1 = 0.8 * C1 / max(np.abs(np.linalg.eigvals(C1)))
    C2 = 0.7 * C2 / max(np.abs(np.linalg.eigvals(C2)))
    phi = CPMapTuple.from_kraus([[C1], [C2]])
    cert = cpmap_similarity(phi, (1, 1), "strict")
    assert cert.status == "PASS"
    assert cert.witnesses["target_defect_min_eig"] >= 1e-6


def test_cpmap_strict_rejects_radius_one():
    rng = np.random.default_rng(45)
    G = rng.standard_normal((3, 3)) + 1j * rng.standard_normal((3, 3))
    U, _ = np.linalg.qr(G)
    phi = CPMapTuple.from_kraus([[U]])
    with pytest.raises(ValueError):
        cpmap_similarity(phi, (1,), "strict")


def test_cpmap_pure_cone_nilpotent():
    inst = generate("nilpotent", 18, dim=4, ensure_cone=True)
    phi = CPMapTuple(inst.symbols, inst.ops)
    cert = cpmap_similarity(phi, inst.m, "pure_cone", degree_cap=6)
    assert cert.status == "PASS"
    assert cert.witnesses["target_member"] == 1.0
    assert cert.witnesses["target_pure"] == 1.0
    for name, r in cert.residuals.items():
        if name.startswith("similarity"):
            assert r <= 1e-7 * max(1.0, cert.witnesses["b"]) + 1e-8


def test_cpmap_pure_cone_rejects_degenerate_R():
    symbols, m, ops = zero_tuple()
    phi = CPMapTuple(symbols, ops)
    with pytest.raises(ValueError):
        cpmap_similarity(phi, m, "pure_cone", R=np.diag([1.0, 0.0, 0.0]))


def test_cpmap_unital_unitary_conjugation():
    rng = np.random.default_rng(46)
    G = rng.standard_normal((4, 4)) + 1j * rng.standard_normal((4, 4))
    U, _ = np.linalg.qr(G)
    phi = CPMapTuple.from_kraus([[U]])
    cert = cpmap_similarity(phi, (1,), "unital")
    assert cert.status == "PASS"
    assert cert.kind == "cpmap_similarity"
    assert np.linalg.norm(cert.Q - np.eye(4), 2) <= 1e-7


def test_cpmap_unknown_mode():
    symbols, m, ops = scalar_tuple(0.5)
    phi = CPMapTuple(symbols, ops)
    with pytest.raises(ValueError):
        cpmap_similarity(phi, m, "fastest")


# ---------------------------------------------------------------------------
# radius equivalences
# ---------------------------------------------------------------------------

def test_radius_report_nilpotent_exact_decay():
    inst = generate("nilpotent", 23, dim=4)
    rep = spectral_radius_equivalences(inst.symbols, inst.ops)
    assert rep.all_consistent
    for f in rep.factors:
        assert f.radius <= 1e-8
        assert f.decay[-1] == 0.0
        assert f.decays_to_zero


def test_radius_report_scalar_rates():
    c = 0.8
    symbols, _, ops = scalar_tuple(c)
    rep = spectral_radius_equivalences(symbols, ops, s_max=20)
    f = rep.factors[0]
    assert abs(f.radius - c) <= 1e-10
    for s, val in enumerate(f.decay, start=1):
        assert abs(val - c ** (2 * s)) <= 1e-12
    assert rep.all_consistent


def test_radius_report_unitary_stays_flat():
    rng = np.random.default_rng(47)
    G = rng.standard_normal((4, 4)) + 1j * rng.standard_normal((4, 4))
    U, _ = np.linalg.qr(G)
    ops = OperatorTuple([[U]])
    rep = spectral_radius_equivalences((polyball_symbol(1),), ops, s_max=24)
    f = rep.factors[0]
    assert abs(f.radius - 1.0) <= 1e-8
    assert not f.decays_to_zero
    assert rep.all_consistent


def test_radius_report_normal_instance_gelfand():
    rng = np.random.default_rng(48)
    rows = [
        [np.diag(0.9 * np.exp(1j * rng.uniform(0, 2 * np.pi, 4)) * rng.uniform(0.5, 1.0, 4))],
        [np.diag(0.8 * np.exp(1j * rng.uniform(0, 2 * np.pi, 4)) * rng.uniform(0.5, 1.0, 4))],
    ]
    ops = OperatorTuple(rows)
    symbols = (polyball_symbol(1), polyball_symbol(1))
    rep = spectral_radius_equivalences(symbols, ops, s_max=64)
    for f, row in zip(rep.factors, rows):
        want = float(np.max(np.abs(np.diag(row[0]))))
        assert abs(f.radius - want) <= 1e-8
        assert abs(f.gelfand[-1] - want) <= 1e-3
    assert rep.all_consistent


def test_map_radius_is_square_of_tuple_radius():
    inst = generate("commuting_polynomials", 30, target_radius=0.8)
    phi = CPMapTuple(inst.symbols, inst.ops)
    for i in range(1, phi.k + 1):
        eig = float(np.max(np.abs(np.linalg.eigvals(phi.matricize(i)))))
        assert abs(map_spectral_radius(phi, i) - eig) <= 1e-8
        assert abs(map_spectral_radius(phi, i) - phi.joint_spectral_radius(i) ** 2) <= 1e-12
