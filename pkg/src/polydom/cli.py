"""Batch command line front end.

One command per process: read a JSON problem spec, dispatch to the library,
emit one JSON report (stdout or --output). Exit codes: 0 when everything
passed, 2 when some check was inconclusive, 1 on failed certificates or
errors. Reports are canonical JSON, so identical inputs give identical bytes
apart from the wall_time field.
"""

from __future__ import annotations

import argparse
import sys
import time
from typing import Any, Dict, List, Optional, Sequence

import numpy as np
import scipy

from . import __version__
from .config import default_tolerances
from .cone import flat_equivalence, is_pure_element, membership, reconstruct
from .cpmap import CPMapTuple, OperatorTuple
from .berezin import (
    CompatibleTuple,
    constrained_kernel,
    intertwine_check,
    intertwine_check_constrained,
    kernel,
    transform,
    vn_check_model,
    vn_check_polydisc,
)
from .fock import build_model, compress, domain_check_model, variety_subspace
from .generate import FAMILIES, Instance, generate
from .jsonio import (
    ProblemSpec,
    canonical_json,
    digest,
    load_problem,
    matrix_from_json,
    matrix_to_json,
    poly_from_json,
    problem_to_json,
    sanitize,
)
from .similarity import (
    cpmap_similarity,
    model_embed,
    rota_conjugate,
    solve_defect_equation,
    spectral_radius_equivalences,
    sznagy_solve,
)
from .words import commutator_polynomial

_EXIT = {"PASS": 0, "INCONCLUSIVE": 2, "FAILED": 1}
_RANK = {"PASS": 0, "INCONCLUSIVE": 1, "FAILED": 2}


def _worst(statuses: Sequence[str]) -> str:
    return max(statuses, key=lambda s: _RANK[s]) if statuses else "PASS"


def _task_value(spec: ProblemSpec, args, key: str, flag: Optional[str], default):
    if flag is not None:
        v = getattr(args, flag, None)
        if v is not None:
            return v
    return spec.task.get(key, default)


def _default_R(spec: ProblemSpec, args) -> np.ndarray:
    obj = spec.task.get("R")
    if obj is not None:
        return matrix_from_json(obj)
    return np.eye(spec.ops.dim, dtype=np.complex128)


# --- command bodies ------------------------------------------------------------


def cmd_radius(spec: ProblemSpec, args) -> Dict[str, Any]:
    phi = CPMapTuple(spec.symbols, spec.ops)
    report = spectral_radius_equivalences(spec.symbols, spec.ops)
    radii = [phi.joint_spectral_radius(i) for i in range(1, phi.k + 1)]
    status = "PASS" if report.all_consistent else "FAILED"
    return {
        "status": status,
        "radii": radii,
        "equivalences": sanitize(report),
    }


def cmd_cone(spec: ProblemSpec, args) -> Dict[str, Any]:
    phi = CPMapTuple(spec.symbols, spec.ops)
    X = _default_R(spec, args)
    rep = membership(phi, spec.m, X)
    out: Dict[str, Any] = {"membership": sanitize(rep)}
    out["purity"] = sanitize(is_pure_element(phi, X))
    statuses = ["PASS"]
    if rep.member:
        rec = reconstruct(phi, spec.m, X)
        out["reconstruction"] = {
            "residual": rec.residual,
            "tail_bound": rec.series.tail_bound,
        }
        try:
            flat = flat_equivalence(phi, spec.m, X)
            out["flat"] = sanitize(flat)
            if not flat.consistent:
                statuses.append("FAILED")
        except ValueError as e:
            out["flat"] = {"skipped": str(e)}
    out["status"] = _worst(statuses)
    return out


def cmd_model(spec: ProblemSpec, args) -> Dict[str, Any]:
    D = int(_task_value(spec, args, "D", "trunc_degree", 6))
    fock, model = build_model(spec.symbols, spec.m, D)
    out: Dict[str, Any] = {"fock_dim": fock.dim, "degree_cap": D}
    dom = domain_check_model(model)
    out["domain_check"] = sanitize(dom)
    statuses = ["PASS" if dom.ok else "FAILED"]
    if spec.constraints:
        sub = variety_subspace(model, spec.constraints)
        comp = compress(model, sub)
        out["variety"] = {
            "dim_N": sub.dim_N,
            "invariance_residual_full": sub.invariance_residual_full,
            "invariance_residual_interior": sub.invariance_residual_interior,
            "q_residuals_full": sanitize(comp.q_residuals_full),
            "q_residuals_interior": sanitize(comp.q_residuals_interior),
        }
        tol = float(_task_value(spec, args, "tol", "tol", 1e-8))
        if any(r > tol for r in comp.q_residuals_interior):
            statuses.append("FAILED")
    out["status"] = _worst(statuses)
    return out


def cmd_kernel(spec: ProblemSpec, args) -> Dict[str, Any]:
    D = int(_task_value(spec, args, "D", "trunc_degree", 6))
    tol = float(_task_value(spec, args, "tol", "tol", 1e-8))
    R = _default_R(spec, args)
    kern = kernel(spec.symbols, spec.m, spec.ops, R, D)
    fock, model = build_model(spec.symbols, spec.m, D)
    inter = intertwine_check(kern, model, spec.ops)
    phi = CPMapTuple(spec.symbols, spec.ops)
    series = phi.weighted_series(spec.m, R, strict=False)
    gram_gap = float(np.linalg.norm(kern.gram() - series.value, 2))
    out: Dict[str, Any] = {
        "rank": kern.rank,
        "tail_bound": kern.tail_bound,
        "certified": kern.certified,
        "gram_vs_series": gram_gap,
        "intertwine": {f"{i},{j}": list(v) for (i, j), v in inter.items()},
    }
    statuses = ["PASS"]
    interior_bad = any(v[1] > tol for v in inter.values())
    if interior_bad or gram_gap > tol + 10.0 * (kern.tail_bound + series.tail_bound):
        statuses.append("FAILED")
    omega = CompatibleTuple(spec.symbols, spec.m, spec.ops, R, spec.constraints)
    ck = constrained_kernel(omega, D)
    cinter = intertwine_check_constrained(ck, spec.ops)
    out["constrained"] = {
        "dim_N": ck.subspace.dim_N,
        "range_leak": ck.range_residual,
        "intertwine": {f"{i},{j}": v for (i, j), v in cinter.items()},
    }
    chi_obj = spec.task.get("chi")
    if chi_obj is not None:
        chi = matrix_from_json(chi_obj)
    else:
        chi = np.eye(ck.subspace.dim_N, dtype=np.complex128)
    out["transform_of_chi"] = matrix_to_json(transform(ck, chi))
    out["status"] = _worst(statuses)
    return out


def cmd_rota(spec: ProblemSpec, args) -> Dict[str, Any]:
    tol = float(_task_value(spec, args, "tol", "tol", 1e-8))
    D = int(_task_value(spec, args, "D", "trunc_degree", 6))
    cert, T = rota_conjugate(spec.symbols, spec.m, spec.ops, spec.constraints, tol=tol)
    out: Dict[str, Any] = {"rota": sanitize(cert)}
    statuses = [cert.status]
    embed = model_embed(
        spec.symbols, spec.m, spec.ops, _default_R(spec, args),
        spec.constraints, degree_cap=D, tol=tol,
    )
    out["model_embed"] = sanitize(embed)
    statuses.append(embed.status)
    out["T"] = [[matrix_to_json(A) for A in row] for row in T.rows]
    out["status"] = _worst(statuses)
    return out


def cmd_solve(spec: ProblemSpec, args) -> Dict[str, Any]:
    tol = float(_task_value(spec, args, "tol", "tol", 1e-8))
    sol = solve_defect_equation(spec.symbols, spec.m, spec.ops, _default_R(spec, args), tol=tol)
    return {
        "status": "PASS" if sol.ok else "FAILED",
        "X": matrix_to_json(sol.X),
        "defect_residual": sol.defect_residual,
        "oracle_rel_gap": sol.oracle_rel_gap,
        "invertible": sol.invertible,
        "membership": sanitize(sol.membership_report),
        "tail_bound": sol.series.tail_bound,
    }


def cmd_sznagy(spec: ProblemSpec, args) -> Dict[str, Any]:
    tol = float(_task_value(spec, args, "tol", "tol", 1e-7))
    cert, T = sznagy_solve(spec.symbols, spec.ops, tol=tol)
    out = {"status": cert.status, "certificate": sanitize(cert)}
    if T is not None:
        out["T"] = [[matrix_to_json(A) for A in row] for row in T.rows]
    return out


def cmd_vn(spec: ProblemSpec, args) -> Dict[str, Any]:
    tol = float(_task_value(spec, args, "tol", "tol", 1e-8))
    mode = spec.task.get("mode", "model")
    if mode == "polydisc":
        pm_obj = spec.task.get("poly_matrix")
        if pm_obj is None:
            raise ValueError("polydisc mode needs task.poly_matrix")
        poly_matrix = [[poly_from_json(cell) for cell in row] for row in pm_obj]
        rep = vn_check_polydisc(spec.ops, poly_matrix, tol=tol)
    elif mode == "model":
        terms_obj = spec.task.get("terms")
        if terms_obj is None:
            raise ValueError("model mode needs task.terms")
        terms = [
            (
                matrix_from_json(t["coeff"]),
                [tuple(w) for w in t["alpha"]],
                [tuple(w) for w in t["beta"]],
            )
            for t in terms_obj
        ]
        D_obj = spec.task.get("D_pos")
        D_pos = matrix_from_json(D_obj) if D_obj else np.eye(spec.ops.dim)
        D = int(_task_value(spec, args, "D", "trunc_degree", 6))
        rep = vn_check_model(
            spec.symbols, spec.m, spec.ops, D_pos, terms,
            spec.constraints, degree_cap=D, tol=tol,
        )
    else:
        raise ValueError(f"unknown vn mode {mode!r}; expected model or polydisc")
    return {"status": rep.verdict, "report": sanitize(rep), "mode": mode}


def cmd_cpsim(spec: ProblemSpec, args) -> Dict[str, Any]:
    tol = float(_task_value(spec, args, "tol", "tol", 1e-7))
    D = int(_task_value(spec, args, "D", "trunc_degree", 6))
    mode = spec.task.get("mode", "strict")
    phi = CPMapTuple.from_kraus([list(row) for row in spec.ops.rows])
    R_obj = spec.task.get("R")
    R = matrix_from_json(R_obj) if R_obj else None
    cert = cpmap_similarity(phi, spec.m, mode, R=R, degree_cap=D, tol=tol)
    return {"status": cert.status, "certificate": sanitize(cert), "mode": mode}


def _instance_to_spec(inst: Instance) -> ProblemSpec:
    constraints = ()
    if inst.family in ("commuting_polynomials", "nilpotent"):
        cons = []
        for i, n in enumerate(inst.ops.arities, start=1):
            for j1 in range(1, n + 1):
                for j2 in range(j1 + 1, n + 1):
                    cons.append(commutator_polynomial(i, j1, j2))
        constraints = tuple(cons)
    task = {"family": inst.family, "seed": inst.seed}
    task.update({k: v for k, v in inst.params.items() if v is not None})
    return ProblemSpec(
        symbols=inst.symbols, m=inst.m, ops=inst.ops,
        constraints=constraints, task=task,
    )


def cmd_gen(args) -> Dict[str, Any]:
    kwargs: Dict[str, Any] = {}
    if args.dim is not None:
        kwargs["dim"] = args.dim
    if args.k is not None:
        kwargs["k"] = args.k
    if args.arities is not None:
        kwargs["arities"] = tuple(int(x) for x in args.arities.split(","))
    if args.m is not None:
        kwargs["m"] = tuple(int(x) for x in args.m.split(","))
    if args.family in ("commuting_polynomials", "polyball_random"):
        kwargs["target_radius"] = args.target_radius
    if args.family == "conjugated_unitaries":
        kwargs.pop("arities", None)
        kwargs.pop("m", None)
    if args.family == "polyball_random":
        kwargs.pop("k", None)
        if "arities" in kwargs:
            kwargs["n"] = int(kwargs.pop("arities")[0])
        if "m" in kwargs:
            kwargs["m"] = int(kwargs["m"][0])
    inst = generate(args.family, args.seed, **kwargs)
    return problem_to_json(_instance_to_spec(inst))


_COMMANDS = {
    "radius": cmd_radius,
    "cone": cmd_cone,
    "model": cmd_model,
    "kernel": cmd_kernel,
    "rota": cmd_rota,
    "solve": cmd_solve,
    "sznagy": cmd_sznagy,
    "vn": cmd_vn,
    "cpsim": cmd_cpsim,
}


def _emit(payload: Dict[str, Any], output: Optional[str]) -> None:
    text = canonical_json(sanitize(payload)) + "\n"
    if output:
        with open(output, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = argparse.ArgumentParser(
        prog="polydom",
        description="certified numerics for commuting operator tuples: radii, "
        "cones, truncated models, kernels, and similarity solvers",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name, fn in _COMMANDS.items():
        p = sub.add_parser(name, help=fn.__doc__)
        p.add_argument("--input", required=True, help="problem spec JSON path")
        p.add_argument("--output", help="report path (default stdout)")
        p.add_argument("--trunc-degree", type=int, dest="trunc_degree")
        p.add_argument("--tol", type=float)
        p.add_argument("--seed", type=int)
    g = sub.add_parser("gen", help="generate a seeded problem spec")
    g.add_argument("--family", required=True, choices=FAMILIES)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--target-radius", type=float, default=0.8, dest="target_radius")
    g.add_argument("--dim", type=int)
    g.add_argument("--k", type=int)
    g.add_argument("--arities", type=str, help="comma separated, e.g. 2,1")
    g.add_argument("--m", type=str, help="comma separated, e.g. 1,1")
    g.add_argument("--output")
    args = parser.parse_args(argv)

    t0 = time.perf_counter()
    if args.command == "gen":
        try:
            payload = cmd_gen(args)
        except Exception as e:  # noqa: BLE001 - CLI boundary
            sys.stderr.write(f"error: {e}\n")
            return 1
        _emit(payload, args.output)
        return 0

    try:
        spec, raw = load_problem(args.input)
        outputs = _COMMANDS[args.command](spec, args)
    except Exception as e:  # noqa: BLE001 - CLI boundary
        sys.stderr.write(f"error: {e}\n")
        return 1
    status = outputs.get("status", "PASS")
    report = {
        "task": args.command,
        "inputs_digest": digest(raw),
        "outputs": outputs,
        "tolerances": default_tolerances().as_dict(),
        "versions": {
            "polydom": __version__,
            "numpy": np.__version__,
            "scipy": scipy.__version__,
        },
        "wall_time": time.perf_counter() - t0,
    }
    _emit(report, args.output)
    return _EXIT.get(status, 1)


if __name__ == "__main__":
    sys.exit(main())
