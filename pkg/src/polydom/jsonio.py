"""Canonical JSON for problem specs and reports.

Floats are rendered with 17 significant digits (lossless for doubles) and
object keys are sorted, so identical data always produces identical bytes;
reports are diffable and digests are stable across runs.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np

from .cpmap import OperatorTuple
from .words import NCPolynomial, PositiveSymbol, Word


def _render(obj: Any, out: List[str]) -> None:
    if obj is None:
        out.append("null")
    elif obj is True:
        out.append("true")
    elif obj is False:
        out.append("false")
    elif isinstance(obj, str):
        out.append(json.dumps(obj, ensure_ascii=True))
    elif isinstance(obj, (int, np.integer)):
        out.append(str(int(obj)))
    elif isinstance(obj, (float, np.floating)):
        x = float(obj)
        if not np.isfinite(x):
            raise ValueError(f"non-finite float {x!r} cannot be serialized")
        out.append(format(x, ".17g"))
    elif isinstance(obj, dict):
        out.append("{")
        keys = sorted(obj.keys())
        for idx, key in enumerate(keys):
            if not isinstance(key, str):
                raise TypeError(f"object keys must be strings, got {key!r}")
            if idx:
                out.append(",")
            out.append(json.dumps(key, ensure_ascii=True))
            out.append(":")
            _render(obj[key], out)
        out.append("}")
    elif isinstance(obj, (list, tuple)):
        out.append("[")
        for idx, item in enumerate(obj):
            if idx:
                out.append(",")
            _render(item, out)
        out.append("]")
    else:
        raise TypeError(f"cannot serialize {type(obj).__name__}")


def canonical_json(obj: Any) -> str:
    out: List[str] = []
    _render(obj, out)
    return "".join(out)


def digest(obj: Any) -> str:
    return hashlib.sha256(canonical_json(obj).encode("ascii")).hexdigest()


# --- codecs --------------------------------------------------------------------


def matrix_to_json(M: np.ndarray) -> Dict[str, Any]:
    M = np.asarray(M, dtype=np.complex128)
    return {
        "shape": [int(M.shape[0]), int(M.shape[1])],
        "data": [[float(z.real), float(z.imag)] for z in M.reshape(-1)],
    }


def matrix_from_json(obj: Dict[str, Any]) -> np.ndarray:
    r, c = obj["shape"]
    flat = np.array([complex(re, im) for re, im in obj["data"]], dtype=np.complex128)
    if flat.size != r * c:
        raise ValueError(f"matrix payload has {flat.size} entries for shape {r}x{c}")
    return flat.reshape(r, c)


def symbol_to_json(f: PositiveSymbol, m: int) -> Dict[str, Any]:
    return {
        "arity": f.arity,
        "max_degree": f.max_degree,
        "m": int(m),
        "coeffs": [
            {"word": list(w.letters), "a": float(a)}
            for w, a in sorted(f.coeffs.items(), key=lambda kv: (len(kv[0]), kv[0]))
        ],
    }


def symbol_from_json(obj: Dict[str, Any]) -> Tuple[PositiveSymbol, int]:
    coeffs = {Word(tuple(t["word"])): float(t["a"]) for t in obj["coeffs"]}
    f = PositiveSymbol(
        arity=int(obj["arity"]),
        coeffs=coeffs,
        max_degree=int(obj["max_degree"]),
    )
    return f, int(obj["m"])


def poly_to_json(q: NCPolynomial) -> List[Dict[str, Any]]:
    return [
        {
            "coeff": [float(np.real(c)), float(np.imag(c))],
            "monomial": [[int(i), int(j)] for i, j in mono],
        }
        for c, mono in q.terms
    ]


def poly_from_json(obj: Sequence[Dict[str, Any]]) -> NCPolynomial:
    terms = tuple(
        (
            complex(t["coeff"][0], t["coeff"][1]),
            tuple((int(i), int(j)) for i, j in t["monomial"]),
        )
        for t in obj
    )
    return NCPolynomial(terms=terms)


@dataclass
class ProblemSpec:
    symbols: Tuple[PositiveSymbol, ...]
    m: Tuple[int, ...]
    ops: OperatorTuple
    constraints: Tuple[NCPolynomial, ...] = ()
    task: Dict[str, Any] = field(default_factory=dict)

    @property
    def k(self) -> int:
        return len(self.symbols)


def problem_to_json(spec: ProblemSpec) -> Dict[str, Any]:
    return {
        "k": spec.k,
        "arities": list(spec.ops.arities),
        "dim": spec.ops.dim,
        "symbols": [
            symbol_to_json(f, mi) for f, mi in zip(spec.symbols, spec.m)
        ],
        "operators": [
            [matrix_to_json(A) for A in row] for row in spec.ops.rows
        ],
        "constraints": [poly_to_json(q) for q in spec.constraints],
        "task": spec.task,
    }


def problem_from_json(obj: Dict[str, Any], check_commutation: bool = True) -> ProblemSpec:
    symbols: List[PositiveSymbol] = []
    ms: List[int] = []
    for s in obj["symbols"]:
        f, mi = symbol_from_json(s)
        symbols.append(f)
        ms.append(mi)
    if len(symbols) != int(obj["k"]):
        raise ValueError(f"k = {obj['k']} but {len(symbols)} symbols given")
    rows = [[matrix_from_json(a) for a in row] for row in obj["operators"]]
    ops = OperatorTuple(rows, check_commutation=check_commutation)
    if list(ops.arities) != [int(n) for n in obj["arities"]]:
        raise ValueError(
            f"arities field {obj['arities']} disagrees with operator rows {ops.arities}"
        )
    if ops.dim != int(obj["dim"]):
        raise ValueError(f"dim field {obj['dim']} disagrees with matrices ({ops.dim})")
    for f, row in zip(symbols, ops.rows):
        if f.arity != len(row):
            raise ValueError("symbol arity disagrees with its operator row")
    constraints = tuple(poly_from_json(q) for q in obj.get("constraints", []))
    return ProblemSpec(
        symbols=tuple(symbols),
        m=tuple(ms),
        ops=ops,
        constraints=constraints,
        task=dict(obj.get("task", {})),
    )


def load_problem(path: str) -> Tuple[ProblemSpec, Dict[str, Any]]:
    with open(path, "r", encoding="utf-8") as fh:
        raw = json.load(fh)
    return problem_from_json(raw), raw


def sanitize(obj: Any) -> Any:
    """Recursive conversion of numpy scalars/arrays, complex numbers, and
    dataclass payloads into plain JSON-ready structures."""
    if obj is None or isinstance(obj, (bool, str, int)):
        return obj
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        return x if np.isfinite(x) else repr(x)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, complex):
        return [sanitize(obj.real), sanitize(obj.imag)]
    if isinstance(obj, np.ndarray):
        if obj.ndim == 2:
            return matrix_to_json(obj)
        return [sanitize(v) for v in obj.tolist()]
    if isinstance(obj, dict):
        return {str(k): sanitize(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [sanitize(v) for v in obj]
    if hasattr(obj, "__dataclass_fields__"):
        return {
            name: sanitize(getattr(obj, name)) for name in obj.__dataclass_fields__
        }
    raise TypeError(f"cannot sanitize {type(obj).__name__}")
