"""Unitary ensembles: Haar sampling, single-qudit Clifford groups, twirls.

Randomness is counter-based: every draw is keyed by ``(seed, stream)`` through
a Philox generator, so trial ``k`` of an experiment sees the same samples no
matter how trials are scheduled.
"""
from __future__ import annotations

from collections import deque
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from privcap.linalg import as_unitary, matrix_from_json, matrix_to_json

_MASK64 = (1 << 64) - 1


@dataclass(frozen=True)
class RngSeed:
    seed: int
    stream: int = 0

    def __post_init__(self):
        if not (0 <= self.seed <= _MASK64 and 0 <= self.stream <= _MASK64):
            raise ValueError("seed and stream must be 64-bit unsigned integers")

    def generator(self) -> np.random.Generator:
        return np.random.Generator(np.random.Philox(key=self.seed | (self.stream << 64)))

    def substream(self, index: int) -> "RngSeed":
        """Derive the seed for trial ``index`` of this stream."""
        return RngSeed(self.seed, (self.stream * 0x9E3779B97F4A7C15 + index + 1) & _MASK64)

    def to_json(self) -> list[int]:
        return [self.seed, self.stream]


def as_seed(seed: RngSeed | int | Sequence[int]) -> RngSeed:
    if isinstance(seed, RngSeed):
        return seed
    if isinstance(seed, (int, np.integer)):
        return RngSeed(int(seed))
    s, k = seed
    return RngSeed(int(s), int(k))


def _ginibre(d: int, rng: np.random.Generator) -> np.ndarray:
    return (rng.standard_normal((d, d)) + 1j * rng.standard_normal((d, d))) / np.sqrt(2)


def _qr_haar(z: np.ndarray) -> np.ndarray:
    # z: (..., d, d) Ginibre stack
    q, r = np.linalg.qr(z)
    diag = np.diagonal(r, axis1=-2, axis2=-1)
    return q * (diag / np.abs(diag))[..., None, :]


def haar_unitary(d: int, rng: RngSeed | int | Sequence[int]) -> np.ndarray:
    """Draw a Haar-random ``d x d`` unitary, deterministic in ``rng``."""
    if d < 2:
        raise ValueError("haar_unitary needs d >= 2")
    g = as_seed(rng).generator()
    return _qr_haar(_ginibre(d, g)[None])[0]


def haar_unitaries(d: int, count: int, seed: RngSeed | int, start: int = 0) -> np.ndarray:
    """Stack of ``count`` Haar unitaries; sample ``k`` is drawn from substream ``start + k``."""
    if d < 2:
        raise ValueError("haar_unitaries needs d >= 2")
    seed = as_seed(seed)
    z = np.stack([_ginibre(d, seed.substream(start + k).generator()) for k in range(count)])
    return _qr_haar(z) if count else np.zeros((0, d, d), dtype=complex)


def haar_state(d: int, rng: RngSeed | int | Sequence[int]) -> np.ndarray:
    """Unitarily invariant random pure state (normalized complex Gaussian)."""
    g = as_seed(rng).generator()
    v = g.standard_normal(d) + 1j * g.standard_normal(d)
    return v / np.linalg.norm(v)


@dataclass(frozen=True)
class UnitaryEnsemble:
    """A finite weighted set of ``d x d`` unitaries."""

    d: int
    kind: str
    unitaries: np.ndarray
    weights: np.ndarray
    seed: RngSeed | None = None
    m: int | None = None

    def __post_init__(self):
        u = np.asarray(self.unitaries, dtype=complex)
        w = np.asarray(self.weights, dtype=float)
        if u.ndim != 3 or u.shape[1:] != (self.d, self.d):
            raise ValueError(f"members must be {self.d}x{self.d}, got stack {u.shape}")
        if w.shape != (u.shape[0],) or np.any(w <= 0) or abs(w.sum() - 1) > 1e-12:
            raise ValueError("weights must be positive and sum to 1")
        err = np.abs(np.einsum("kji,kjl->kil", u.conj(), u) - np.eye(self.d)).max() if len(u) else 0.0
        if err > 1e-10:
            raise ValueError("ensemble member is not unitary")
        u.setflags(write=False)
        w.setflags(write=False)
        object.__setattr__(self, "unitaries", u)
        object.__setattr__(self, "weights", w)

    def __len__(self) -> int:
        return len(self.weights)

    @property
    def members(self) -> list[tuple[np.ndarray, float]]:
        return list(zip(self.unitaries, self.weights))

    def to_json(self) -> dict:
        out: dict = {"d": self.d, "kind": self.kind, "m": len(self)}
        if self.seed is not None:
            out["seed"] = self.seed.to_json()
        if self.kind == "explicit":
            out["members"] = [matrix_to_json(u, "unitary") for u in self.unitaries]
            if not np.allclose(self.weights, 1 / len(self)):
                out["weights"] = [float(w) for w in self.weights]
        return out

    @classmethod
    def from_json(cls, obj: dict) -> "UnitaryEnsemble":
        d, kind = int(obj["d"]), obj["kind"]
        if kind == "haar":
            return haar_ensemble(d, int(obj["m"]), as_seed(obj["seed"]))
        if kind == "clifford":
            return clifford_group(d)
        if kind == "explicit":
            members = [matrix_from_json(m) for m in obj["members"]]
            return explicit_ensemble(members, obj.get("weights"))
        raise ValueError(f"unknown ensemble kind {kind!r}")


def haar_ensemble(d: int, m: int, seed: RngSeed | int) -> UnitaryEnsemble:
    seed = as_seed(seed)
    return UnitaryEnsemble(d, "haar", haar_unitaries(d, m, seed), np.full(m, 1 / m), seed=seed, m=m)


def explicit_ensemble(members: Iterable, weights: Sequence[float] | None = None) -> UnitaryEnsemble:
    u = np.stack([as_unitary(m) for m in members])
    w = np.full(len(u), 1 / len(u)) if weights is None else np.asarray(weights, dtype=float)
    return UnitaryEnsemble(u.shape[1], "explicit", u, w)


# --- Clifford group -------------------------------------------------------

def _omega(d: int) -> complex:
    return np.exp(2j * np.pi / d)


def shift(d: int) -> np.ndarray:
    """X|j> = |j+1 mod d>."""
    return np.roll(np.eye(d, dtype=complex), 1, axis=0)


def clock(d: int, a: int = 1) -> np.ndarray:
    """Z^a|j> = omega^(a j)|j>."""
    return np.diag(_omega(d) ** ((a * np.arange(d)) % d))


def fourier(d: int) -> np.ndarray:
    j = np.arange(d)
    return _omega(d) ** (np.outer(j, j) % d) / np.sqrt(d)


def phase_gate(d: int) -> np.ndarray:
    j = np.arange(d)
    if d == 2:
        return np.diag([1, 1j])
    return np.diag(_omega(d) ** ((j * (j - 1) // 2) % d))


def canonical_phase(u: np.ndarray, tol: float = 1e-9) -> np.ndarray:
    """Rescale ``u`` so its first nonzero entry (row-major) is positive real."""
    flat = u.ravel()
    k = int(np.argmax(np.abs(flat) > tol))
    return u * (abs(flat[k]) / flat[k])


def _key(u: np.ndarray) -> tuple:
    return tuple(np.round(np.concatenate([u.real.ravel(), u.imag.ravel()]) * 1e7).astype(np.int64))


_CLIFFORD_CACHE: dict[int, UnitaryEnsemble] = {}


def clifford_group(d: int) -> UnitaryEnsemble:
    """Single-qudit Clifford group modulo phase, by closure over its generators.

    Breadth-first search from the identity, multiplying by the Fourier gate,
    the phase gate, X and Z until no new (phase-canonical) element appears.
    """
    if d not in (2, 3):
        raise ValueError(f"exact Clifford mode supports d in {{2, 3}}, got {d}")
    if d in _CLIFFORD_CACHE:
        return _CLIFFORD_CACHE[d]
    gens = [fourier(d), phase_gate(d), shift(d), clock(d)]
    start = np.eye(d, dtype=complex)
    seen = {_key(start): start}
    queue = deque([start])
    while queue:
        u = queue.popleft()
        for g in gens:
            v = canonical_phase(g @ u)
            k = _key(v)
            if k not in seen:
                seen[k] = v
                queue.append(v)
    group = np.stack(list(seen.values()))
    ens = UnitaryEnsemble(d, "clifford", group, np.full(len(group), 1 / len(group)))
    _CLIFFORD_CACHE[d] = ens
    return ens


def pauli_label(p: np.ndarray, tol: float = 1e-9) -> tuple[int, int] | None:
    """Return ``(a, b)`` if ``p`` is proportional to X^a Z^b, else None."""
    d = p.shape[0]
    for a in range(d):
        for b in range(d):
            q = np.linalg.matrix_power(shift(d), a) @ clock(d, b)
            overlap = np.trace(q.conj().T @ p) / d
            if abs(abs(overlap) - 1) < tol and np.abs(p - overlap * q).max() < tol:
                return a, b
    return None


def tensor_power_members(e: UnitaryEnsemble, n: int) -> tuple[np.ndarray, np.ndarray]:
    """All n-fold products V_1 (x) ... (x) V_n with their weights, lexicographic."""
    v, w = e.unitaries, e.weights
    for _ in range(1, n):
        k = v.shape[-1] * e.d
        v = np.einsum("tab,scd->tsacbd", v, e.unitaries).reshape(-1, k, k)
        w = np.outer(w, e.weights).ravel()
    return v, w


def random_density(dim: int, rng: RngSeed | int | Sequence[int], rank: int | None = None) -> np.ndarray:
    """Random density matrix G G^dag / Tr with G a dim x rank Ginibre matrix."""
    g = as_seed(rng).generator()
    k = dim if rank is None else rank
    z = g.standard_normal((dim, k)) + 1j * g.standard_normal((dim, k))
    rho = z @ z.conj().T
    return rho / np.trace(rho).real


def random_hermitian(dim: int, rng: RngSeed | int | Sequence[int]) -> np.ndarray:
    g = as_seed(rng).generator()
    z = g.standard_normal((dim, dim)) + 1j * g.standard_normal((dim, dim))
    return (z + z.conj().T) / 2


# --- second moments -------------------------------------------------------

def frame_potential(e: UnitaryEnsemble) -> float:
    """sum_jk w_j w_k |Tr(U_j^dag U_k)|^4."""
    flat = e.unitaries.reshape(len(e), -1)
    g = np.abs(flat.conj() @ flat.T) ** 4
    return float(e.weights @ g @ e.weights)


def swap_operator(d: int) -> np.ndarray:
    f = np.zeros((d * d, d * d), dtype=complex)
    for i in range(d):
        for j in range(d):
            f[i * d + j, j * d + i] = 1
    return f


def sym_antisym_projectors(d: int) -> tuple[np.ndarray, np.ndarray]:
    if d < 2:
        raise ValueError("projectors need d >= 2")
    eye, f = np.eye(d * d, dtype=complex), swap_operator(d)
    return (eye + f) / 2, (eye - f) / 2


def twirl_closed_form(m: np.ndarray, d: int) -> np.ndarray:
    """Haar / 2-design twirl of ``m`` in terms of the (anti)symmetric projectors."""
    ps, pa = sym_antisym_projectors(d)
    ds, da = d * (d + 1) / 2, d * (d - 1) / 2
    return np.trace(ps @ m) * ps / ds + np.trace(pa @ m) * pa / da


def twirl_terms(m: np.ndarray, unitaries: np.ndarray) -> np.ndarray:
    """Per-member (U^dag x U^dag) m (U x U), stacked along axis 0."""
    d = unitaries.shape[-1]
    uu = np.einsum("kab,kcd->kacbd", unitaries, unitaries).reshape(-1, d * d, d * d)
    return np.swapaxes(uu, -1, -2).conj() @ m @ uu


def second_moment_twirl(m, e: UnitaryEnsemble) -> np.ndarray:
    m = np.asarray(m, dtype=complex)
    if m.shape != (e.d ** 2, e.d ** 2):
        raise ValueError(f"twirl input must be {e.d ** 2}x{e.d ** 2}, got {m.shape}")
    return np.einsum("k,kij->ij", e.weights, twirl_terms(m, e.unitaries))


def s_operator(a: int, d: int) -> np.ndarray:
    """Twirled Z^a x Z^-a: identity for a = 0, else P_sym/(d+1) - P_anti/(d-1)."""
    if d < 2:
        raise ValueError("s_operator needs d >= 2")
    if a % d == 0:
        return np.eye(d * d, dtype=complex)
    ps, pa = sym_antisym_projectors(d)
    return ps / (d + 1) - pa / (d - 1)
