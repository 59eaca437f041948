"""Information quantities of N_d and the closed-form bounds around them."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from privcap.channel import (
    CQState,
    FiniteVChannel,
    StinespringIsometry,
    z_diagonal,
    strings,
)
from privcap.ensembles import RngSeed, as_seed, haar_state, tensor_power_members
from privcap.linalg import (
    as_pure,
    entropies_vn,
    entropy_vn,
    matrix_from_json,
    matrix_to_json,
    maximally_mixed,
    proj,
    shannon,
    tensor,
)

LOG2E = math.log2(math.e)
EULER_GAMMA = 0.57721566490153286061
# (1 - gamma) log2 e: the large-d limit of the (I/d) (x) |0><0| coherent information
ASYMPTOTE = (1 - EULER_GAMMA) * LOG2E


def harmonic(d: int) -> float:
    return math.fsum(1.0 / k for k in range(1, d + 1))


def avg_dephased_entropy_closed_form(d: int) -> float:
    """Haar average of S(dephased |phi><phi|) in bits: log2(e) (H_d - 1)."""
    if d < 2:
        raise ValueError("d must be >= 2")
    return LOG2E * (harmonic(d) - 1)


def closed_form_lower_bound(d: int) -> float:
    """Coherent information of N_d (Haar V) at the input (I/d) (x) |0><0|."""
    return math.log2(d) - avg_dephased_entropy_closed_form(d)


def privacy_upper_bound(d_a: int, q1: float) -> float:
    """1/2 (log2 d_A + Q1): ceiling on the private capacity."""
    if q1 < 0:
        raise ValueError("q1 must be non-negative")
    return 0.5 * (math.log2(d_a) + q1)


@dataclass(frozen=True)
class BoundValue:
    value: float
    kind: str  # lower_certificate | upper_closed_form | exact
    provenance: dict = field(default_factory=dict)


# -- coherent and Holevo information ------------------------------------------

def coherent_information(ch: FiniteVChannel | StinespringIsometry, rho, n: int = 1) -> float:
    """S(B|V) - S(E|V) for N_d (n uses), or S(B) - S(E) for an explicit dilation.

    Bob and Eve hold the same label, so the label entropies cancel and only
    per-member conditional entropies are summed.
    """
    if isinstance(ch, StinespringIsometry):
        rho = np.asarray(rho, dtype=complex)
        return entropy_vn(ch.channel()(rho)) - entropy_vn(ch.complement()(rho))
    total = 0.0
    for (wb, bb), (we, be) in zip(ch.iter_blocks(rho, n, "B"), ch.iter_blocks(rho, n, "E")):
        total += float(wb @ (entropies_vn(bb) - entropies_vn(be)))
    return total


def half_objective(iso: StinespringIsometry, rho) -> float:
    """1/2 [S(rho) + S(N(rho)) - S(N^c(rho))]."""
    rho = np.asarray(rho, dtype=complex)
    return 0.5 * (entropy_vn(rho) + entropy_vn(iso.channel()(rho)) - entropy_vn(iso.complement()(rho)))


def holevo_chi(probs: Sequence[float], states: Sequence) -> float:
    """S(sum p_i rho_i) - sum p_i S(rho_i); ``states`` may be matrices or CQStates."""
    probs = np.asarray(probs, dtype=float)
    if isinstance(states[0], CQState):
        w = states[0].weights
        if any(s.weights.shape != w.shape or np.abs(s.weights - w).max() > 1e-12 for s in states):
            raise ValueError("cq outputs must share their label distribution")
        avg = CQState(w, np.einsum("i,ikab->kab", probs, np.stack([s.blocks for s in states])))
        return avg.entropy() - float(probs @ [s.entropy() for s in states])
    rhos = np.stack([np.asarray(s, dtype=complex) for s in states])
    avg = np.einsum("i,iab->ab", probs, rhos)
    return entropy_vn(avg) - float(probs @ entropies_vn(rhos))


@dataclass(frozen=True)
class Ensemble:
    """Input ensemble {p_i, phi_i}."""

    probs: np.ndarray
    states: tuple

    def __post_init__(self):
        p = np.asarray(self.probs, dtype=float)
        if np.any(p <= 0) or abs(p.sum() - 1) > 1e-12 or len(p) != len(self.states):
            raise ValueError("ensemble probabilities must be positive, one per state, and sum to 1")
        object.__setattr__(self, "probs", p)
        object.__setattr__(self, "states", tuple(np.asarray(s, dtype=complex) for s in self.states))


def achievability_ensemble(d: int) -> Ensemble:
    """p_i = 1/d on |i><i| (x) I/d."""
    states = [tensor(proj(np.eye(d)[i]), maximally_mixed(d)) for i in range(d)]
    return Ensemble(np.full(d, 1 / d), tuple(states))


def private_information(ch: FiniteVChannel, e: Ensemble) -> float:
    """chi(N, E) - chi(N^c, E) with the V label kept in both outputs."""
    bob = [ch.apply(s) for s in e.states]
    eve = [ch.apply_complement(s) for s in e.states]
    return holevo_chi(e.probs, bob) - holevo_chi(e.probs, eve)


# -- standard-form inputs ------------------------------------------------------

@dataclass(frozen=True)
class StandardFormInput:
    """sum_x p_x |x><x| (x) |phi_x><phi_x| on A1^n (x) A2^n.

    ``shields`` has one row per string x (lexicographic order); rows with
    ``p_x = 0`` are placeholders and are ignored.
    """

    d: int
    n: int
    p: np.ndarray
    shields: np.ndarray

    def __post_init__(self):
        D = self.d ** self.n
        p = np.asarray(self.p, dtype=float)
        s = np.asarray(self.shields, dtype=complex)
        if p.shape != (D,) or s.shape != (D, D):
            raise ValueError(f"expected p of length {D} and {D} shields of dimension {D}")
        if np.any(p < 0) or abs(p.sum() - 1) > 1e-12:
            raise ValueError("p must be a probability vector")
        for x in np.flatnonzero(p > 0):
            as_pure(s[x])
        object.__setattr__(self, "p", p)
        object.__setattr__(self, "shields", s)

    def density(self) -> np.ndarray:
        D = self.d ** self.n
        out = np.zeros((D, D, D, D), dtype=complex)
        for x in np.flatnonzero(self.p > 0):
            out[x, :, x, :] = self.p[x] * proj(self.shields[x])
        return out.reshape(D * D, D * D)

    def to_json(self) -> dict:
        support = np.flatnonzero(self.p > 0)
        return {
            "d": self.d,
            "n": self.n,
            "p": [float(v) for v in self.p],
            "shields": [matrix_to_json(self.shields[x], "pure") for x in support],
        }

    @classmethod
    def from_json(cls, obj: dict) -> "StandardFormInput":
        d, n = int(obj["d"]), int(obj["n"])
        D = d ** n
        p = np.asarray(obj["p"], dtype=float)
        shields = np.zeros((D, D), dtype=complex)
        shields[:, 0] = 1
        for x, sj in zip(np.flatnonzero(p > 0), obj["shields"]):
            shields[x] = matrix_from_json(sj)
        return cls(d, n, p, shields)


def standard_form_input(s: StandardFormInput) -> np.ndarray:
    return s.density()


class StandardFormObjective:
    """Coherent information of N_d^{(x) n} restricted to standard-form inputs.

    For such inputs Bob's conditional state is diag(p) for every V, so
    S(B|V) = H(p); Eve's conditional state is
    sum_x p_x Z^x V |phi_x><phi_x| V^dag Z^-x.
    Evaluation is batched over parameter vectors.
    """

    def __init__(self, ch: FiniteVChannel, n: int = 1, support: np.ndarray | None = None):
        self.d, self.n = ch.d, n
        self.D = ch.d ** n
        self.support = np.arange(self.D) if support is None else np.asarray(support, dtype=int)
        self.v, self.w = tensor_power_members(ch.ensemble, n)
        zs = np.stack([z_diagonal(x, ch.d) for x in strings(ch.d, n)])
        self.z = zs[self.support]

    @property
    def n_params(self) -> int:
        k = len(self.support)
        return k + 2 * k * self.D

    def unpack(self, theta: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        theta = np.atleast_2d(theta)
        k, D = len(self.support), self.D
        logits = theta[:, :k]
        logits = logits - logits.max(axis=1, keepdims=True)
        p = np.exp(logits)
        p /= p.sum(axis=1, keepdims=True)
        re = theta[:, k:k + k * D].reshape(-1, k, D)
        im = theta[:, k + k * D:].reshape(-1, k, D)
        sh = re + 1j * im
        sh /= np.linalg.norm(sh, axis=2, keepdims=True)
        return p, sh

    def pack(self, p: np.ndarray, shields: np.ndarray) -> np.ndarray:
        p = np.asarray(p, dtype=float)[self.support]
        sh = np.asarray(shields, dtype=complex)[self.support]
        with np.errstate(divide="ignore"):
            logits = np.log(p)
        return np.concatenate([logits, sh.real.ravel(), sh.imag.ravel()])

    def project(self, theta: np.ndarray) -> np.ndarray:
        p, sh = self.unpack(theta)
        return self.pack_active(np.log(np.clip(p[0], 1e-300, None)), sh[0])

    def pack_active(self, logits: np.ndarray, sh: np.ndarray) -> np.ndarray:
        return np.concatenate([logits, sh.real.ravel(), sh.imag.ravel()])

    def values(self, theta: np.ndarray) -> np.ndarray:
        p, sh = self.unpack(theta)
        psi = np.einsum("tij,bxj->btxi", self.v, sh) * self.z[None, None]
        rho_e = np.einsum("btxi,bx,btxj->btij", psi, p, psi.conj())
        s_e = entropies_vn(rho_e) @ self.w
        return shannon(p) - s_e

    def __call__(self, theta: np.ndarray) -> float:
        return float(self.values(theta)[0])

    def to_input(self, theta: np.ndarray) -> StandardFormInput:
        p, sh = self.unpack(theta)
        full_p = np.zeros(self.D)
        full_p[self.support] = p[0]
        full_sh = np.zeros((self.D, self.D), dtype=complex)
        full_sh[:, 0] = 1
        full_sh[self.support] = sh[0]
        full_p /= full_p.sum()
        return StandardFormInput(self.d, self.n, full_p, full_sh)


@dataclass
class OptimizeResult:
    value: float
    input: StandardFormInput
    restarts: int
    seed: RngSeed
    iterations: list[int]
    restart_values: list[float]
    budget_exhausted: bool
    ensemble_kind: str

    @property
    def bound(self) -> BoundValue:
        return BoundValue(self.value, "lower_certificate",
                          {"ensemble": self.ensemble_kind, "seed": self.seed.to_json()})

    def to_json(self) -> dict:
        return {
            "value_bits": self.value,
            "kind": "lower_certificate",
            "restarts": self.restarts,
            "seed": self.seed.to_json(),
            "input": self.input.to_json(),
            "iterations": list(self.iterations),
            "restart_values": list(self.restart_values),
            "budget_exhausted": self.budget_exhausted,
            "ensemble": self.ensemble_kind,
        }


def _fd_gradient(obj: StandardFormObjective, theta: np.ndarray, h: float) -> np.ndarray:
    k = theta.size
    pts = np.repeat(theta[None], 2 * k, axis=0)
    idx = np.arange(k)
    pts[2 * idx, idx] += h
    pts[2 * idx + 1, idx] -= h
    vals = obj.values(pts)
    return (vals[0::2] - vals[1::2]) / (2 * h)


def _ascend(obj: StandardFormObjective, theta: np.ndarray, max_iter: int, h: float,
            rel_tol: float) -> tuple[np.ndarray, float, int, bool]:
    f = obj(theta)
    step = 1.0
    for it in range(1, max_iter + 1):
        g = _fd_gradient(obj, theta, h)
        gg = float(g @ g)
        if not np.isfinite(gg) or gg < 1e-24:
            return theta, f, it, True
        t = step
        while True:
            cand = obj.project(theta + t * g)
            fc = obj(cand)
            if fc >= f + 1e-4 * t * gg:
                break
            t *= 0.5
            if t < 1e-14:
                return theta, f, it, True
        improvement = fc - f
        theta, f = cand, fc
        step = min(2 * t, 1e3)
        if improvement <= rel_tol * max(abs(f), 1e-12):
            return theta, f, it, True
    return theta, f, max_iter, False


def optimize_coherent_info(ch: FiniteVChannel, restarts: int = 20, seed: RngSeed | int = 0, n: int = 1,
                           max_iter: int = 2000, init: StandardFormInput | None = None,
                           fd_step: float = 1e-5, rel_tol: float = 1e-9) -> OptimizeResult:
    """Multi-start projected gradient ascent over standard-form inputs.

    The returned value is achieved by the returned input, so it certifies a
    lower bound on the n-use coherent information; nothing is claimed about
    global optimality. ``init``, when given, seeds restart 0; its zero
    probability strings stay at zero and carry no shield parameters.
    """
    if restarts < 1:
        raise ValueError("restarts must be >= 1")
    seed = as_seed(seed)
    D = ch.d ** n
    best = None
    iterations, values = [], []
    exhausted = False
    for r in range(restarts):
        if r == 0 and init is not None:
            obj = StandardFormObjective(ch, n, np.flatnonzero(init.p > 0))
            theta0 = obj.pack(init.p, init.shields)
        else:
            obj = StandardFormObjective(ch, n)
            sub = seed.substream(r)
            g = sub.generator()
            logits = g.standard_normal(D)
            shields = np.stack([haar_state(D, sub.substream(x)) for x in range(D)])
            theta0 = obj.pack_active(logits, shields)
        theta, f, its, converged = _ascend(obj, theta0, max_iter, fd_step, rel_tol)
        exhausted |= not converged
        iterations.append(its)
        values.append(f)
        if best is None or f > best[0]:
            best = (f, obj.to_input(theta))
    value, sfi = best
    return OptimizeResult(value, sfi, restarts, seed, iterations, values, exhausted, ch.ensemble.kind)
