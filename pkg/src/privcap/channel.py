"""The random-phase channel N_d and the generic channel plumbing around it.

Register conventions
--------------------
* N_d takes input on ``A1 (x) A2`` (each of dimension ``d``). For ``n`` uses
  the input is ordered ``A1^n (x) A2^n``.
* A per-member output is ``W_V rho W_V^dag`` with ``W_V = P (I (x) V)``; Bob
  keeps ``A1`` and Eve keeps ``A2``. Both also get the label of ``V``.
* Dense outputs that include the label are ordered ``system (x) label``.
* A generic :class:`Channel` is just a linear map on dense matrices.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Callable, Iterator, Sequence

import numpy as np

from privcap.ensembles import UnitaryEnsemble
from privcap.linalg import (
    DimensionError,
    check_dim,
    entropies_vn,
    partial_trace,
    shannon,
    trace_distance,
)


def controlled_phase(d: int) -> np.ndarray:
    """P = sum_ij omega^(ij) |i><i| (x) |j><j|."""
    if d < 2:
        raise ValueError("controlled_phase needs d >= 2")
    i = np.arange(d)
    return np.diag(np.exp(2j * np.pi * (np.outer(i, i) % d).ravel() / d))


def z_string(x: Sequence[int], d: int) -> np.ndarray:
    """Z_{x1} (x) ... (x) Z_{xn} as a diagonal d^n x d^n matrix."""
    x = tuple(int(v) for v in x)
    if any(v < 0 or v >= d for v in x):
        raise ValueError(f"string {x} has a component outside 0..{d - 1}")
    return np.diag(z_diagonal(x, d))


def z_diagonal(x: Sequence[int], d: int) -> np.ndarray:
    n = len(x)
    j = np.array(list(itertools.product(range(d), repeat=n)), dtype=int).reshape(-1, n)
    return np.exp(2j * np.pi * ((j @ np.asarray(x, dtype=int)) % d) / d)


def strings(d: int, n: int) -> np.ndarray:
    """All x in [d]^n, lexicographic (matches the tensor-product basis order)."""
    return np.array(list(itertools.product(range(d), repeat=n)), dtype=int).reshape(-1, n)


@dataclass(frozen=True)
class CQState:
    """Block-diagonal state over a classical label: sum_k w_k rho_k (x) |k><k|."""

    weights: np.ndarray
    blocks: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float)
        b = np.asarray(self.blocks, dtype=complex)
        if b.ndim != 3 or b.shape[0] != w.shape[0] or b.shape[1] != b.shape[2]:
            raise DimensionError(f"bad cq-state shapes {w.shape}, {b.shape}")
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "blocks", b)

    @property
    def dim(self) -> int:
        return self.blocks.shape[1]

    def __len__(self) -> int:
        return len(self.weights)

    def trace(self) -> float:
        return float(self.weights @ np.einsum("kii->k", self.blocks).real)

    def conditional_entropy(self) -> float:
        """S(system | label) = sum_k w_k S(rho_k)."""
        return float(self.weights @ entropies_vn(self.blocks))

    def entropy(self) -> float:
        return float(shannon(self.weights)) + self.conditional_entropy()

    def average(self) -> np.ndarray:
        """The system marginal sum_k w_k rho_k."""
        return np.einsum("k,kij->ij", self.weights, self.blocks)

    def dense(self) -> np.ndarray:
        k, D = len(self), self.dim
        check_dim(k * D, "cq-state")
        out = np.zeros((D, k, D, k), dtype=complex)
        idx = np.arange(k)
        out[:, idx, :, idx] = self.weights[:, None, None] * self.blocks
        return out.reshape(D * k, D * k)


@dataclass(frozen=True)
class Channel:
    """A linear map from ``in_dim x in_dim`` to ``out_dim x out_dim`` matrices."""

    in_dim: int
    out_dim: int
    fn: Callable[[np.ndarray], np.ndarray]
    name: str = "channel"

    def __call__(self, rho) -> np.ndarray:
        rho = np.asarray(rho, dtype=complex)
        if rho.shape != (self.in_dim, self.in_dim):
            raise DimensionError(f"{self.name} expects {self.in_dim}x{self.in_dim} input, got {rho.shape}")
        return self.fn(rho)


@dataclass(frozen=True)
class StinespringIsometry:
    """Isometry ``A -> B (x) E`` stored as a ``(b_dim * e_dim, in_dim)`` matrix."""

    matrix: np.ndarray
    b_dim: int
    e_dim: int
    classical: int = 1
    name: str = "N"

    def __post_init__(self):
        u = np.asarray(self.matrix, dtype=complex)
        if u.shape[0] != self.b_dim * self.e_dim:
            raise DimensionError(f"isometry has {u.shape[0]} rows, expected {self.b_dim * self.e_dim}")
        object.__setattr__(self, "matrix", u)

    @property
    def in_dim(self) -> int:
        return self.matrix.shape[1]

    def isometry_error(self) -> float:
        u = self.matrix
        return float(np.abs(u.conj().T @ u - np.eye(self.in_dim)).max())

    def _kraus(self) -> np.ndarray:
        return self.matrix.reshape(self.b_dim, self.e_dim, self.in_dim)

    def joint(self, rho) -> np.ndarray:
        """U rho U^dag on B (x) E."""
        check_dim(self.b_dim * self.e_dim, "joint output")
        return self.matrix @ np.asarray(rho, dtype=complex) @ self.matrix.conj().T

    # Marginals contract the isometry directly, never forming the joint state.
    def channel(self) -> Channel:
        check_dim(self.b_dim, "channel output")
        k = self._kraus()
        return Channel(self.in_dim, self.b_dim,
                       lambda rho: np.einsum("bec,dec->bd", k @ rho, k.conj()), self.name)

    def complement(self) -> Channel:
        check_dim(self.e_dim, "complement output")
        k = self._kraus()
        return Channel(self.in_dim, self.e_dim,
                       lambda rho: np.einsum("bec,bfc->ef", k @ rho, k.conj()), self.name + "^c")


class FiniteVChannel:
    """N_d with the random unitary V drawn from a finite weighted ensemble."""

    def __init__(self, ensemble: UnitaryEnsemble):
        self.ensemble = ensemble
        self.d = ensemble.d

    def __repr__(self) -> str:
        return f"FiniteVChannel(d={self.d}, kind={self.ensemble.kind!r}, members={len(self.ensemble)})"

    @property
    def in_dim(self) -> int:
        return self.d * self.d

    def to_json(self) -> dict:
        return {"d": self.d, "ensemble": self.ensemble.to_json()}

    @classmethod
    def from_json(cls, obj: dict) -> "FiniteVChannel":
        ens = UnitaryEnsemble.from_json(obj["ensemble"])
        if ens.d != int(obj["d"]):
            raise ValueError("channel d does not match its ensemble")
        return cls(ens)

    def w_operators(self) -> np.ndarray:
        """Stack of W_V = P (I (x) V) over ensemble members."""
        eye = np.eye(self.d)
        iv = np.einsum("ab,kcd->kacbd", eye, self.ensemble.unitaries).reshape(-1, self.in_dim, self.in_dim)
        return np.diag(controlled_phase(self.d))[None, :, None] * iv

    # -- multi-use evaluation ------------------------------------------------

    def _tuple_chunks(self, n: int, chunk: int) -> Iterator[np.ndarray]:
        m = len(self.ensemble)
        total = m ** n
        for start in range(0, total, chunk):
            flat = np.arange(start, min(total, start + chunk))
            yield np.stack(np.unravel_index(flat, (m,) * n), axis=1)

    def iter_blocks(self, rho, n: int = 1, side: str = "B", chunk: int = 256) -> Iterator[tuple[np.ndarray, np.ndarray]]:
        """Yield ``(weights, blocks)`` over member tuples for n uses.

        ``side`` is ``"B"`` (Bob keeps A1^n) or ``"E"`` (Eve keeps A2^n).
        Tuples come in lexicographic order of member indices.
        """
        d, D = self.d, self.d ** n
        rho = np.asarray(rho, dtype=complex)
        if rho.shape != (D * D, D * D):
            raise DimensionError(f"{n}-use input must be {D * D}x{D * D}, got {rho.shape}")
        check_dim(D * D, "n-use input")
        phase = _controlled_phase_n(d, n)
        us, ws = self.ensemble.unitaries, self.ensemble.weights
        keep = [0] if side == "B" else [1]
        for idx in self._tuple_chunks(n, chunk):
            v = us[idx[:, 0]]
            w = ws[idx[:, 0]].copy()
            for k in range(1, n):
                v = np.einsum("tab,tcd->tacbd", v, us[idx[:, k]]).reshape(len(idx), d ** (k + 1), d ** (k + 1))
                w = w * ws[idx[:, k]]
            # W = P_n (I (x) V): columns of I (x) V, then row phases
            wv = np.einsum("ab,tcd->tacbd", np.eye(D), v).reshape(len(idx), D * D, D * D)
            wv = phase[None, :, None] * wv
            out = wv @ rho @ np.swapaxes(wv, -1, -2).conj()
            yield w, partial_trace(out, (D, D), keep)

    def apply(self, rho, n: int = 1) -> CQState:
        parts = list(self.iter_blocks(rho, n, "B"))
        return CQState(np.concatenate([p[0] for p in parts]), np.concatenate([p[1] for p in parts]))

    def apply_complement(self, rho, n: int = 1) -> CQState:
        parts = list(self.iter_blocks(rho, n, "E"))
        return CQState(np.concatenate([p[0] for p in parts]), np.concatenate([p[1] for p in parts]))

    # -- dense views ---------------------------------------------------------

    def isometry(self) -> StinespringIsometry:
        """U_d |psi> = sum_V sqrt(pr V) (W_V|psi>) (x) |V>_B (x) |V>_E, Bob = A1 V_B, Eve = A2 V_E."""
        d, m = self.d, len(self.ensemble)
        check_dim(d * m, "Stinespring output")
        w = self.w_operators().reshape(m, d, d, self.in_dim)
        iso = np.zeros((d, m, d, m, self.in_dim), dtype=complex)
        idx = np.arange(m)
        iso[:, idx, :, idx, :] = np.sqrt(self.ensemble.weights)[:, None, None, None] * w
        return StinespringIsometry(iso.reshape(d * m * d * m, self.in_dim), d * m, d * m, classical=m,
                                   name=f"N_{d}")

    def as_channel(self) -> Channel:
        """B-side map with the label register folded in (dense, ``A1 (x) V_B``)."""
        check_dim(self.d * len(self.ensemble), "channel output")
        return Channel(self.in_dim, self.d * len(self.ensemble), lambda r: self.apply(r).dense(), f"N_{self.d}")

    def as_complement(self) -> Channel:
        check_dim(self.d * len(self.ensemble), "channel output")
        return Channel(self.in_dim, self.d * len(self.ensemble),
                       lambda r: self.apply_complement(r).dense(), f"N_{self.d}^c")


def _controlled_phase_n(d: int, n: int) -> np.ndarray:
    """Diagonal of P^{(x) n} in the grouped order A1^n (x) A2^n."""
    s = strings(d, n)
    return np.exp(2j * np.pi * ((s @ s.T) % d) / d).ravel()


# -- generic channels --------------------------------------------------------

def identity_channel(dim: int) -> Channel:
    return Channel(dim, dim, lambda r: np.array(r, dtype=complex), "id")


def identity_isometry(dim: int) -> StinespringIsometry:
    return StinespringIsometry(np.eye(dim, dtype=complex), dim, 1, name="id")


def dephasing_isometry(dim: int) -> StinespringIsometry:
    """|i> -> |i>_B |i>_E: the completely dephasing channel and its complement."""
    u = np.zeros((dim * dim, dim), dtype=complex)
    for i in range(dim):
        u[i * dim + i, i] = 1
    return StinespringIsometry(u, dim, dim, name="deph")


def depolarizing_channel(dim: int) -> Channel:
    """Completely depolarizing map rho -> Tr(rho) I/dim."""
    return Channel(dim, dim, lambda r: np.trace(r) * np.eye(dim) / dim, "depol")


def dephasing_channel(dims: Sequence[int], target: int | Sequence[int] | None = None) -> Channel:
    from privcap.linalg import dephase

    dim = int(np.prod(dims))
    return Channel(dim, dim, lambda r: dephase(r, dims, target), "dephase")


def unitary_channel(u: np.ndarray) -> Channel:
    u = np.asarray(u, dtype=complex)
    return Channel(u.shape[1], u.shape[0], lambda r: u @ r @ u.conj().T, "unitary")


def choi(ch: Channel | FiniteVChannel) -> np.ndarray:
    """(ch (x) id)(|Phi><Phi|) with |Phi> maximally entangled; output ordered (out, ref)."""
    if isinstance(ch, FiniteVChannel):
        ch = ch.as_channel()
    n, k = ch.in_dim, ch.out_dim
    check_dim(n * k, "Choi matrix")
    out = np.zeros((k, n, k, n), dtype=complex)
    for i in range(n):
        for j in range(n):
            e = np.zeros((n, n), dtype=complex)
            e[i, j] = 1
            out[:, i, :, j] = ch(e)
    return out.reshape(k * n, k * n) / n


def channel_distance(a: Channel, b: Channel) -> float:
    """Trace distance between normalized Choi states."""
    if (a.in_dim, a.out_dim) != (b.in_dim, b.out_dim):
        raise DimensionError("channels act on different spaces")
    return trace_distance(choi(a), choi(b))


def compose(outer: Channel, inner: Channel) -> Channel:
    """outer o inner."""
    if inner.out_dim != outer.in_dim:
        raise DimensionError(f"cannot compose: inner outputs {inner.out_dim}, outer takes {outer.in_dim}")
    return Channel(inner.in_dim, outer.out_dim, lambda r: outer(inner(r)), f"{outer.name}o{inner.name}")


# -- flagged extension and its degrading map ----------------------------------
#
# For N with isometry A -> B E, the flagged channel M outputs reg_B (x) flag
# with reg_B of dimension max(|A|, |B|) (inputs and N-outputs are embedded in
# its leading coordinates). Its complement outputs reg_E (x) flag with
# reg_E = E plus one erasure level |e> = last basis vector.

def _flag_dims(iso: StinespringIsometry) -> tuple[int, int]:
    return max(iso.in_dim, iso.b_dim), iso.e_dim + 1


def _embed(rho: np.ndarray, dim: int) -> np.ndarray:
    out = np.zeros((dim, dim), dtype=complex)
    k = rho.shape[0]
    out[:k, :k] = rho
    return out


def flagged_isometry(iso: StinespringIsometry) -> StinespringIsometry:
    """Isometry of M(rho) = 1/2 [rho (x) |0><0| + N(rho) (x) |1><1|]."""
    rb, re = _flag_dims(iso)
    a = iso.in_dim
    check_dim(max(rb, re) * 2, "flagged channel output")
    u = np.zeros((rb, 2, re, 2, a), dtype=complex)
    # flag 0: input passes to Bob, Eve holds the erasure symbol
    u[:a, 0, re - 1, 0, :] = np.eye(a) / np.sqrt(2)
    # flag 1: N's own dilation
    un = iso.matrix.reshape(iso.b_dim, iso.e_dim, a)
    u[:iso.b_dim, 1, :iso.e_dim, 1, :] = un / np.sqrt(2)
    return StinespringIsometry(u.reshape(rb * 2 * re * 2, a), rb * 2, re * 2, name=f"M[{iso.name}]")


def flagged_channel(iso: StinespringIsometry) -> tuple[Channel, Channel]:
    """(M, M^c) for the flagged extension of the channel with dilation ``iso``."""
    f = flagged_isometry(iso)
    return f.channel(), f.complement()


def degrading_map(iso: StinespringIsometry) -> Channel:
    """D with D o M = M^c.

    Flip the flag; on the new flag 1 (old flag 0, which carries the input)
    apply N^c to the register, on the new flag 0 reset the register to |e>.
    Register content outside the input embedding is also sent to |e>, which
    keeps D trace preserving on its whole domain.
    """
    rb, re = _flag_dims(iso)
    a = iso.in_dim
    nc = iso.complement()
    erased = np.zeros((re, re), dtype=complex)
    erased[-1, -1] = 1

    def fn(sigma: np.ndarray) -> np.ndarray:
        t = sigma.reshape(rb, 2, rb, 2)
        s0, s1 = t[:, 0, :, 0], t[:, 1, :, 1]
        out = np.zeros((re, 2, re, 2), dtype=complex)
        out[:, 1, :, 1] = _embed(nc(s0[:a, :a]), re) + np.trace(s0[a:, a:]) * erased
        out[:, 0, :, 0] = np.trace(s1) * erased
        return out.reshape(2 * re, 2 * re)

    return Channel(2 * rb, 2 * re, fn, "D")


def flag_decoder(iso: StinespringIsometry) -> Channel:
    """L = N (x) Pi_0 + id (x) Pi_1 on M's output, so that L o M = N.

    Register content outside the relevant embedding is discarded into |0>.
    """
    rb, _ = _flag_dims(iso)
    a, b = iso.in_dim, iso.b_dim
    n = iso.channel()
    ground = np.zeros((b, b), dtype=complex)
    ground[0, 0] = 1

    def fn(sigma: np.ndarray) -> np.ndarray:
        t = sigma.reshape(rb, 2, rb, 2)
        s0, s1 = t[:, 0, :, 0], t[:, 1, :, 1]
        return n(s0[:a, :a]) + s1[:b, :b] + (np.trace(s0[a:, a:]) + np.trace(s1[b:, b:])) * ground

    return Channel(2 * rb, b, fn, "L")
