"""Dense complex linear algebra and entropy primitives.

Matrices are plain ``numpy`` complex arrays. The ``as_*`` helpers validate an
array against the density / pure-state / unitary invariants and return it as a
read-only ``complex128`` array; everything downstream assumes validated input.

All entropies are in bits.
"""
from __future__ import annotations

from typing import Sequence

import numpy as np

HERMITIAN_TOL = 1e-10
TRACE_TOL = 1e-10
EIG_CLAMP = 1e-9
PURE_NORM_TOL = 1e-12
UNITARY_TOL = 1e-10

_dim_cap = 4096


class DimensionError(ValueError):
    pass


class InvalidStateError(ArithmeticError):
    """A matrix that should be a state is not one beyond round-off."""


def get_dim_cap() -> int:
    return _dim_cap


def set_dim_cap(cap: int) -> int:
    """Set the global cap on constructed matrix dimensions; returns the old cap."""
    global _dim_cap
    if cap < 1:
        raise ValueError("dimension cap must be positive")
    old, _dim_cap = _dim_cap, int(cap)
    return old


def check_dim(dim: int, what: str = "matrix") -> None:
    if dim > _dim_cap:
        raise DimensionError(f"{what} dimension {dim} exceeds cap {_dim_cap}")


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=complex)
    a.setflags(write=False)
    return a


def as_matrix(a) -> np.ndarray:
    a = np.asarray(a, dtype=complex)
    if a.ndim != 2:
        raise DimensionError(f"expected a 2-d matrix, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise ValueError("matrix has non-finite entries")
    return a


def as_density(rho) -> np.ndarray:
    """Validate ``rho`` as a density matrix."""
    rho = as_matrix(rho)
    if rho.shape[0] != rho.shape[1]:
        raise DimensionError(f"density matrix must be square, got {rho.shape}")
    if np.abs(rho - rho.conj().T).max() > HERMITIAN_TOL:
        raise InvalidStateError("density matrix is not Hermitian")
    if abs(np.trace(rho) - 1) > TRACE_TOL:
        raise InvalidStateError(f"density matrix has trace {np.trace(rho).real:.12g}")
    lmin = np.linalg.eigvalsh(hermitize(rho))[0]
    if lmin < -EIG_CLAMP:
        raise InvalidStateError(f"density matrix has eigenvalue {lmin:.3g}")
    return _frozen(rho)


def as_pure(psi) -> np.ndarray:
    psi = np.asarray(psi, dtype=complex).ravel()
    if abs(np.linalg.norm(psi) - 1) > PURE_NORM_TOL:
        raise InvalidStateError("pure state is not normalized")
    return _frozen(psi)


def as_unitary(u) -> np.ndarray:
    u = as_matrix(u)
    if u.shape[0] != u.shape[1]:
        raise DimensionError(f"unitary must be square, got {u.shape}")
    if np.abs(u.conj().T @ u - np.eye(u.shape[0])).max() > UNITARY_TOL:
        raise ValueError("matrix is not unitary")
    return _frozen(u)


def hermitize(h: np.ndarray) -> np.ndarray:
    return 0.5 * (h + np.swapaxes(h, -1, -2).conj())


def proj(psi) -> np.ndarray:
    """|psi><psi|."""
    psi = np.asarray(psi, dtype=complex).ravel()
    return np.outer(psi, psi.conj())


def basis(dim: int, i: int) -> np.ndarray:
    v = np.zeros(dim, dtype=complex)
    v[i] = 1
    return v


def maximally_mixed(dim: int) -> np.ndarray:
    return np.eye(dim, dtype=complex) / dim


def tensor(*ops) -> np.ndarray:
    """Kronecker product of the operands, left to right."""
    if not ops:
        raise ValueError("tensor needs at least one operand")
    rows = int(np.prod([np.shape(o)[0] for o in ops]))
    cols = int(np.prod([np.shape(o)[1] for o in ops]))
    check_dim(max(rows, cols), "tensor product")
    out = np.asarray(ops[0], dtype=complex)
    for o in ops[1:]:
        out = np.kron(out, np.asarray(o, dtype=complex))
    return out


def partial_trace(rho, dims: Sequence[int], keep: Sequence[int]) -> np.ndarray:
    """Trace out every factor of ``rho`` not listed in ``keep``.

    ``dims`` are the tensor-factor dimensions in order; kept factors stay in
    their original order. Works on stacks of matrices (leading batch axes).
    """
    rho = np.asarray(rho, dtype=complex)
    dims = [int(x) for x in dims]
    n = len(dims)
    total = int(np.prod(dims))
    if rho.shape[-2:] != (total, total):
        raise DimensionError(f"dims {dims} do not match matrix shape {rho.shape[-2:]}")
    keep = sorted(set(int(k) for k in keep))
    if any(k < 0 or k >= n for k in keep):
        raise DimensionError(f"keep indices {keep} out of range for {n} factors")
    batch = rho.shape[:-2]
    nb = len(batch)
    t = rho.reshape(batch + tuple(dims) + tuple(dims))
    row = list(range(nb, nb + n))
    col = list(range(nb + n, nb + 2 * n))
    for i in range(n):
        if i not in keep:
            col[i] = row[i]
    out_axes = list(range(nb)) + [row[k] for k in keep] + [col[k] for k in keep]
    kd = int(np.prod([dims[k] for k in keep])) if keep else 1
    out = np.einsum(t, list(range(nb)) + row + col, out_axes)
    return out.reshape(batch + (kd, kd))


def eigvals_clamped(rho: np.ndarray) -> np.ndarray:
    """Eigenvalues of a (stack of) density matrices with noise clamping."""
    lam = np.linalg.eigvalsh(hermitize(np.asarray(rho, dtype=complex)))
    if lam.size and lam.min() < -EIG_CLAMP:
        raise InvalidStateError(f"negative eigenvalue {lam.min():.3g}")
    return np.clip(lam, 0.0, None)


def shannon(p) -> np.ndarray:
    """Shannon entropy in bits along the last axis, with 0 log 0 = 0."""
    p = np.asarray(p, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.where(p > 0, -p * np.log2(np.where(p > 0, p, 1.0)), 0.0)
    return terms.sum(axis=-1)


def entropy_vn(rho) -> float:
    """Von Neumann entropy in bits.

    >>> entropy_vn(np.diag([0.5, 0.25, 0.25]))
    1.5
    """
    return float(shannon(eigvals_clamped(rho)))


def entropies_vn(rhos: np.ndarray) -> np.ndarray:
    """Batched ``entropy_vn`` over the leading axes; no input validation."""
    return shannon(eigvals_clamped(rhos))


def entropy_renyi2(rho) -> float:
    """Collision entropy -log2 Tr rho^2."""
    rho = np.asarray(rho, dtype=complex)
    purity = float(np.real(np.einsum("ij,ji->", rho, rho)))
    return float(-np.log2(purity))


def dephase(rho, dims: Sequence[int] | None = None, target: int | Sequence[int] | None = None) -> np.ndarray:
    """Completely dephase ``rho`` in the computational basis.

    Without ``dims`` the whole matrix is dephased. With ``dims`` only the
    factors in ``target`` lose their coherences.
    """
    rho = np.array(rho, dtype=complex)
    if dims is None:
        return np.diag(np.diag(rho))
    dims = [int(x) for x in dims]
    n = len(dims)
    if int(np.prod(dims)) != rho.shape[0]:
        raise DimensionError(f"dims {dims} do not match dimension {rho.shape[0]}")
    targets = range(n) if target is None else ([target] if np.isscalar(target) else list(target))
    t = rho.reshape(tuple(dims) * 2)
    for k in targets:
        if not 0 <= k < n:
            raise DimensionError(f"factor index {k} out of range for {n} factors")
        shape = [1] * (2 * n)
        shape[k] = dims[k]
        shape[n + k] = dims[k]
        t = t * np.eye(dims[k]).reshape(shape)
    return t.reshape(rho.shape)


def op_inf_norm(h) -> float:
    """Largest absolute eigenvalue of the Hermitian part of ``h``."""
    h = as_matrix(h)
    if h.shape[0] != h.shape[1]:
        raise DimensionError(f"operator norm needs a square matrix, got {h.shape}")
    return float(np.abs(np.linalg.eigvalsh(hermitize(h))).max())


def trace_distance(a, b) -> float:
    a = np.asarray(a, dtype=complex)
    b = np.asarray(b, dtype=complex)
    if a.shape != b.shape:
        raise DimensionError(f"shape mismatch {a.shape} vs {b.shape}")
    return float(0.5 * np.abs(np.linalg.eigvalsh(hermitize(a - b))).sum())


def matrix_to_json(a, kind: str | None = None) -> dict:
    a = np.asarray(a, dtype=complex)
    if a.ndim == 1:
        a = a.reshape(-1, 1)
    out: dict = {}
    if kind is not None:
        out["kind"] = kind
    out["rows"], out["cols"] = int(a.shape[0]), int(a.shape[1])
    out["data"] = [[float(z.real), float(z.imag)] for z in a.ravel()]
    return out


def matrix_from_json(obj: dict) -> np.ndarray:
    rows, cols = int(obj["rows"]), int(obj["cols"])
    data = obj["data"]
    if len(data) != rows * cols:
        raise DimensionError(f"matrix JSON has {len(data)} entries, expected {rows * cols}")
    a = np.array([complex(re, im) for re, im in data], dtype=complex).reshape(rows, cols)
    kind = obj.get("kind")
    if kind == "density":
        return as_density(a)
    if kind == "unitary":
        return as_unitary(a)
    if kind == "pure":
        return as_pure(a)
    return as_matrix(a)
