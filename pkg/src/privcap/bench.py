"""Experiment harness: each bound or identity becomes an :class:`ExperimentReport`.

Pass rule for a report with comparison ``op``, estimate ``e``, standard error
``s`` and bound ``b``::

    "<=":  e <= b + k*s + tol
    ">=":  e >= b - k*s - tol
    "=":   |e - b| <= k*s + tol

with ``k = n_sigma`` (3 by default) and ``tol = tol_abs`` (1e-10 by default).
Exact-mode reports have ``s = 0``.

Monte Carlo trials draw from per-trial substreams of the report seed and are
evaluated in fixed-size chunks, so the per-trial values (and therefore the
report) do not depend on how many threads ran them.
"""
from __future__ import annotations

import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from privcap.capacity import (
    ASYMPTOTE,
    achievability_ensemble,
    avg_dephased_entropy_closed_form,
    closed_form_lower_bound,
    coherent_information,
    half_objective,
    optimize_coherent_info,
    private_information,
)
from privcap.channel import (
    FiniteVChannel,
    StinespringIsometry,
    channel_distance,
    compose,
    degrading_map,
    flagged_channel,
    flagged_isometry,
    z_diagonal,
)
from privcap.ensembles import (
    RngSeed,
    UnitaryEnsemble,
    as_seed,
    clock,
    frame_potential,
    haar_state,
    haar_unitaries,
    random_density,
    random_hermitian,
    s_operator,
    tensor_power_members,
    twirl_terms,
)
from privcap.linalg import basis, dephase, maximally_mixed, op_inf_norm, proj, shannon, tensor

CHUNK = 2048


def passes(estimate: float, std_error: float, bound: float, comparison: str,
           n_sigma: float = 3.0, tol_abs: float = 1e-10) -> bool:
    slack = n_sigma * std_error + tol_abs
    if not all(map(math.isfinite, (estimate, std_error, bound))):
        return False
    if comparison == "<=":
        return estimate <= bound + slack
    if comparison == ">=":
        return estimate >= bound - slack
    if comparison == "=":
        return abs(estimate - bound) <= slack
    raise ValueError(f"unknown comparison {comparison!r}")


@dataclass
class ExperimentReport:
    name: str
    params: dict
    estimate: float
    std_error: float
    bound: float
    comparison: str
    seed: RngSeed | None = None
    wall_ms: int = 0
    n_sigma: float = 3.0
    tol_abs: float = 1e-10
    trivial: bool = False

    @property
    def passed(self) -> bool:
        return passes(self.estimate, self.std_error, self.bound, self.comparison, self.n_sigma, self.tol_abs)

    @property
    def status(self) -> str:
        if self.trivial:
            return "trivial-bound"
        return "pass" if self.passed else "fail"

    def to_json(self) -> dict:
        params = dict(self.params)
        params.setdefault("n_sigma", self.n_sigma)
        params.setdefault("tol_abs", self.tol_abs)
        return {
            "name": self.name,
            "params": params,
            "estimate": self.estimate,
            "std_error": self.std_error,
            "bound": self.bound,
            "comparison": self.comparison,
            "pass": self.passed,
            "status": self.status,
            "seed": None if self.seed is None else self.seed.to_json(),
            "wall_ms": self.wall_ms,
        }


class _Timer:
    def __enter__(self):
        self.t0 = time.perf_counter()
        return self

    def __exit__(self, *exc):
        self.ms = int(round(1000 * (time.perf_counter() - self.t0)))


def trial_values(chunk_fn: Callable[[int, int], np.ndarray], trials: int, threads: int = 1) -> np.ndarray:
    """Evaluate ``chunk_fn(start, stop)`` over fixed chunks and concatenate in trial order."""
    bounds = [(s, min(trials, s + CHUNK)) for s in range(0, trials, CHUNK)]
    if threads > 1 and len(bounds) > 1:
        with ThreadPoolExecutor(threads) as pool:
            parts = list(pool.map(lambda b: chunk_fn(*b), bounds))
    else:
        parts = [chunk_fn(*b) for b in bounds]
    return np.concatenate(parts) if parts else np.zeros(0)


def mean_and_stderr(values: np.ndarray) -> tuple[float, float]:
    n = len(values)
    mean = float(np.mean(values))
    se = float(np.std(values, ddof=1) / math.sqrt(n)) if n > 1 else 0.0
    return mean, se


def hamming(x: Sequence[int], y: Sequence[int]) -> int:
    return sum(int(a != b) for a, b in zip(x, y))


def _mode_name(mode) -> str:
    return mode if isinstance(mode, str) else mode.kind


# -- overlap and purity bounds --------------------------------------------------

def overlap_exact(x: Sequence[int], y: Sequence[int], phi_x, phi_y, d: int) -> float:
    """<phi_y|<phi_x| (x)_i S^{x_i - y_i} |phi_x>|phi_y>, one factor at a time.

    The 2n-register vector is ordered (copy 1 of A2^n, copy 2 of A2^n); the
    twirled operator for position i acts on registers (i, n + i).
    """
    n = len(x)
    t = np.kron(np.asarray(phi_x, dtype=complex), np.asarray(phi_y, dtype=complex)).reshape((d,) * (2 * n))
    for i in range(n):
        a = (x[i] - y[i]) % d
        if a == 0:
            continue
        s = s_operator(a, d).reshape(d, d, d, d)
        t = np.tensordot(s, t, axes=([2, 3], [i, n + i]))
        t = np.moveaxis(t, [0, 1], [i, n + i])
    bra = np.kron(np.asarray(phi_y, dtype=complex), np.asarray(phi_x, dtype=complex))
    return float(np.vdot(bra, t.ravel()).real)


def overlap_terms(unitaries: np.ndarray, x, y, phi_x, phi_y, d: int) -> np.ndarray:
    """Per-member Tr rho^x rho^y = |<phi_y| V^dag Z^(x-y) V |phi_x>|^2."""
    zx, zy = z_diagonal(x, d), z_diagonal(y, d)
    ax = zx[None] * np.einsum("tij,j->ti", unitaries, phi_x)
    ay = zy[None] * np.einsum("tij,j->ti", unitaries, phi_y)
    return np.abs(np.einsum("ti,ti->t", ay.conj(), ax)) ** 2


def _haar_tuples(d: int, n: int, seed: RngSeed, start: int, stop: int) -> np.ndarray:
    """V_1 (x) ... (x) V_n for trials start..stop; trial k uses substream k."""
    out = []
    for k in range(start, stop):
        us = haar_unitaries(d, n, seed.substream(k))
        v = us[0]
        for u in us[1:]:
            v = np.kron(v, u)
        out.append(v)
    return np.stack(out)


def verify_lemma2(d: int, n: int, x: Sequence[int], y: Sequence[int], shields, mode="exact",
                  trials: int = 10_000, seed: RngSeed | int = 0, threads: int = 1) -> ExperimentReport:
    """E_V Tr rho_E^{x,V} rho_E^{y,V} <= (d-1)^(-d_H(x, y)).

    ``mode`` is "exact" (tensor contraction with the twirl closed form),
    "haar" (Monte Carlo) or a :class:`UnitaryEnsemble` averaged exactly over
    its n-fold products.
    """
    seed = as_seed(seed)
    x, y = tuple(int(v) for v in x), tuple(int(v) for v in y)
    if len(x) != n or len(y) != n or any(not 0 <= v < d for v in x + y):
        raise ValueError("x and y must be strings of length n over 0..d-1")
    phi_x, phi_y = (np.asarray(s, dtype=complex) for s in shields)
    dh = hamming(x, y)
    bound = float((d - 1) ** -dh)
    with _Timer() as t:
        if mode == "exact":
            est, se = overlap_exact(x, y, phi_x, phi_y, d), 0.0
        elif mode == "haar":
            vals = trial_values(lambda a, b: overlap_terms(_haar_tuples(d, n, seed, a, b),
                                                           x, y, phi_x, phi_y, d), trials, threads)
            est, se = mean_and_stderr(vals)
        else:
            v, w = tensor_power_members(mode, n)
            est, se = float(w @ overlap_terms(v, x, y, phi_x, phi_y, d)), 0.0
    params = {"d": d, "n": n, "mode": _mode_name(mode), "x": list(x), "y": list(y), "d_H": dh}
    if mode == "haar":
        params["trials"] = trials
    return ExperimentReport("lemma2", params, est, se, bound, "<=", seed, t.ms, trivial=(d == 2))


def purity_exact(d: int, n: int, p: np.ndarray, shields: np.ndarray, xs: np.ndarray) -> float:
    total = 0.0
    support = np.flatnonzero(p > 0)
    for i in support:
        for j in support:
            total += p[i] * p[j] * overlap_exact(xs[i], xs[j], shields[i], shields[j], d)
    return total


def _purities(v: np.ndarray, p: np.ndarray, shields: np.ndarray, zs: np.ndarray) -> np.ndarray:
    psi = np.einsum("tij,xj->txi", v, shields) * zs[None]
    gram = np.einsum("txi,tyi->txy", psi.conj(), psi)
    return np.einsum("x,y,txy->t", p, p, np.abs(gram) ** 2)


def verify_lemma3_purity(d: int, n: int, p, shields, mode="exact", trials: int = 10_000,
                         seed: RngSeed | int = 0, threads: int = 1) -> ExperimentReport:
    """E_V Tr (rho_E^V)^2 <= 2^n sum_x p_x^2 for a standard-form input."""
    from privcap.channel import strings

    seed = as_seed(seed)
    p = np.asarray(p, dtype=float)
    shields = np.asarray(shields, dtype=complex)
    D = d ** n
    if p.shape != (D,) or shields.shape != (D, D):
        raise ValueError(f"need {D} probabilities and {D} shields of dimension {D}")
    if mode == "exact" and (n > 2 or d > 4):
        raise ValueError("exact purity is limited to n <= 2, d <= 4")
    xs = strings(d, n)
    zs = np.stack([z_diagonal(x, d) for x in xs])
    bound = float(2 ** n * np.sum(p ** 2))
    with _Timer() as t:
        if mode == "exact":
            est, se = purity_exact(d, n, p, shields, xs), 0.0
        elif mode == "haar":
            vals = trial_values(lambda a, b: _purities(_haar_tuples(d, n, seed, a, b), p, shields, zs),
                                trials, threads)
            est, se = mean_and_stderr(vals)
        else:
            v, w = tensor_power_members(mode, n)
            est, se = float(w @ _purities(v, p, shields, zs)), 0.0
    params = {"d": d, "n": n, "mode": _mode_name(mode)}
    if mode == "haar":
        params["trials"] = trials
    return ExperimentReport("lemma3_purity", params, est, se, bound, "<=", seed, t.ms)


# -- Haar averages ---------------------------------------------------------------

def dephased_entropies(d: int, seed: RngSeed, start: int, stop: int) -> np.ndarray:
    amps = np.stack([haar_state(d, seed.substream(k)) for k in range(start, stop)])
    return shannon(np.abs(amps) ** 2)


def verify_avg_dephased_entropy(d: int, trials: int = 100_000, seed: RngSeed | int = 0,
                                threads: int = 1) -> ExperimentReport:
    if trials < 1000:
        raise ValueError("need at least 1000 trials")
    seed = as_seed(seed)
    with _Timer() as t:
        vals = trial_values(lambda a, b: dephased_entropies(d, seed, a, b), trials, threads)
        est, se = mean_and_stderr(vals)
    return ExperimentReport("avg_dephased_entropy", {"d": d, "mode": "haar", "trials": trials},
                            est, se, avg_dephased_entropy_closed_form(d), "=", seed, t.ms)


def twirl_deviation(d: int, unitaries: np.ndarray, weights: np.ndarray | None = None) -> float:
    """max over a != 0 of the entrywise deviation of the (weighted) twirl from S^a."""
    worst = 0.0
    for a in range(1, d):
        m = np.kron(clock(d, a), clock(d, -a))
        terms = twirl_terms(m, unitaries)
        avg = terms.mean(axis=0) if weights is None else np.einsum("k,kij->ij", weights, terms)
        worst = max(worst, float(np.abs(avg - s_operator(a, d)).max()))
    return worst


def verify_twirl(d: int, mode="clifford", trials: int = 100_000, seed: RngSeed | int = 0,
                 threads: int = 1) -> ExperimentReport:
    """Twirl of Z^a (x) Z^-a against the projector closed form, all a != 0."""
    from privcap.ensembles import clifford_group

    seed = as_seed(seed)
    with _Timer() as t:
        if mode == "haar":
            us = trial_values(lambda a, b: haar_unitaries(d, b - a, seed, start=a), trials, threads)
            est = twirl_deviation(d, us)
            threshold = 5 * d * d / math.sqrt(trials)
        else:
            ens = clifford_group(d) if mode == "clifford" else mode
            est = twirl_deviation(d, ens.unitaries, ens.weights)
            threshold = 1e-10
    params = {"d": d, "mode": _mode_name(mode)}
    if mode == "haar":
        params["trials"] = trials
    return ExperimentReport("twirl", params, est, 0.0, threshold, "<=", seed if mode == "haar" else None, t.ms,
                            tol_abs=0.0)


def verify_frame_potential(e: UnitaryEnsemble) -> ExperimentReport:
    """Frame potential against 2. For a Haar sample the target includes the diagonal bias."""
    with _Timer() as t:
        fp = frame_potential(e)
        if e.kind == "haar":
            m = len(e)
            flat = e.unitaries.reshape(m, -1)
            g = np.abs(flat.conj() @ flat.T) ** 4
            np.fill_diagonal(g, np.nan)
            rows = np.nanmean(g, axis=1)
            se = float(2 * np.std(rows, ddof=1) / math.sqrt(m)) * (m - 1) / m
            target = 2 * (m - 1) / m + e.d ** 4 / m
        else:
            se, target = 0.0, 2.0
    params = {"d": e.d, "mode": e.kind, "members": len(e)}
    return ExperimentReport("frame_potential", params, fp, se, target, "=", e.seed, t.ms,
                            tol_abs=1e-9 if se == 0 else 1e-10)


# -- channel-level checks ----------------------------------------------------------

def verify_degradability(ch: FiniteVChannel | StinespringIsometry) -> ExperimentReport:
    """Choi distance between D o M and M^c."""
    if isinstance(ch, FiniteVChannel):
        if ch.d > 3 or len(ch.ensemble) > 24:
            raise ValueError("degradability check is limited to d <= 3 and at most 24 members")
        params = {"d": ch.d, "mode": ch.ensemble.kind, "members": len(ch.ensemble)}
        seed = ch.ensemble.seed
        iso = ch.isometry()
    else:
        params, seed, iso = {"channel": ch.name}, None, ch
    with _Timer() as t:
        m, mc = flagged_channel(iso)
        dist = channel_distance(compose(degrading_map(iso), m), mc)
    return ExperimentReport("degradability", params, dist, 0.0, 1e-9, "<=", seed, t.ms, tol_abs=0.0)


def verify_bilinear_bound(dim: int, trials: int = 1000, seed: RngSeed | int = 0) -> ExperimentReport:
    """max |<psi|H|phi>| - ||H||_inf over random Hermitian H and unit vectors."""
    seed = as_seed(seed)
    worst = -math.inf
    with _Timer() as t:
        for k in range(trials):
            sub = seed.substream(k)
            h = random_hermitian(dim, sub.substream(0))
            psi, phi = haar_state(dim, sub.substream(1)), haar_state(dim, sub.substream(2))
            worst = max(worst, abs(np.vdot(psi, h @ phi)) - op_inf_norm(h))
    return ExperimentReport("bilinear_bound", {"dim": dim, "trials": trials}, float(worst), 0.0, 1e-12, "<=",
                            seed, t.ms, tol_abs=0.0)


def verify_achievability(ch: FiniteVChannel) -> ExperimentReport:
    with _Timer() as t:
        est = private_information(ch, achievability_ensemble(ch.d))
    params = {"d": ch.d, "mode": ch.ensemble.kind, "members": len(ch.ensemble)}
    return ExperimentReport("achievability", params, est, 0.0, math.log2(ch.d), "=", ch.ensemble.seed, t.ms,
                            tol_abs=1e-9)


def verify_half_objective(iso: StinespringIsometry, trials: int = 100, seed: RngSeed | int = 0) -> ExperimentReport:
    """max |I_coh(M, rho) - 1/2 [S(rho) + S(N rho) - S(N^c rho)]| over random inputs."""
    seed = as_seed(seed)
    m = flagged_isometry(iso)
    worst = 0.0
    with _Timer() as t:
        for k in range(trials):
            rank = None if k % 2 == 0 else 1
            rho = random_density(iso.in_dim, seed.substream(k), rank)
            worst = max(worst, abs(coherent_information(m, rho) - half_objective(iso, rho)))
    return ExperimentReport("half_objective", {"channel": iso.name, "trials": trials}, worst, 0.0, 1e-9, "<=",
                            seed, t.ms, tol_abs=0.0)


def verify_dephasing_monotonicity(ch: FiniteVChannel, trials: int = 200, seed: RngSeed | int = 0,
                               n: int = 1) -> ExperimentReport:
    """min over random inputs of I_coh(dephase_A1(psi)) - I_coh(psi); must be >= -1e-9."""
    seed = as_seed(seed)
    D = ch.d ** n
    worst = math.inf
    with _Timer() as t:
        for k in range(trials):
            rank = None if k % 2 == 0 else 1
            rho = random_density(D * D, seed.substream(k), rank)
            gain = (coherent_information(ch, dephase(rho, (D, D), 0), n)
                    - coherent_information(ch, rho, n))
            worst = min(worst, gain)
    params = {"d": ch.d, "n": n, "mode": ch.ensemble.kind, "trials": trials}
    return ExperimentReport("dephasing_monotonicity", params, worst, 0.0, 0.0, ">=", seed, t.ms, tol_abs=1e-9)


def feasible_point_values(ch: FiniteVChannel) -> np.ndarray:
    """Per-member S(B_V) - S(E_V) at (I/d) (x) |0><0|."""
    from privcap.linalg import entropies_vn

    d = ch.d
    rho = tensor(maximally_mixed(d), proj(basis(d, 0)))
    (_, bb), = ch.iter_blocks(rho, 1, "B", chunk=len(ch.ensemble))
    (_, be), = ch.iter_blocks(rho, 1, "E", chunk=len(ch.ensemble))
    return entropies_vn(bb) - entropies_vn(be)


def verify_feasible_floor(ch: FiniteVChannel) -> ExperimentReport:
    """I_coh at (I/d) (x) |0><0| against log2 d - log2(e)(H_d - 1) (Haar) or the ceiling 1 (otherwise)."""
    with _Timer() as t:
        vals = feasible_point_values(ch)
        est = float(ch.ensemble.weights @ vals)
        if ch.ensemble.kind == "haar":
            se = mean_and_stderr(vals)[1]
            target, op = closed_form_lower_bound(ch.d), "="
        else:
            se, target, op = 0.0, 1.0, "<="
    params = {"d": ch.d, "mode": ch.ensemble.kind, "members": len(ch.ensemble)}
    return ExperimentReport("coherent_info_floor", params, est, se, target, op, ch.ensemble.seed, t.ms)


def verify_ceiling(ch: FiniteVChannel, restarts: int = 20, seed: RngSeed | int = 0, n: int = 1,
                   max_iter: int = 2000) -> ExperimentReport:
    """Best optimizer certificate against the n-use ceiling n."""
    seed = as_seed(seed)
    with _Timer() as t:
        res = optimize_coherent_info(ch, restarts, seed, n=n, max_iter=max_iter)
    params = {"d": ch.d, "n": n, "mode": ch.ensemble.kind, "restarts": restarts,
              "budget_exhausted": res.budget_exhausted, "asymptote": ASYMPTOTE}
    params["certificate"] = res.to_json()
    return ExperimentReport("optimize", params, res.value, 0.0, float(n), "<=", seed, t.ms, tol_abs=1e-6)


def verify_asymptote(d: int = 1024) -> ExperimentReport:
    with _Timer() as t:
        est = closed_form_lower_bound(d)
    return ExperimentReport("asymptote", {"d": d}, est, 0.0, ASYMPTOTE, "=", None, t.ms, tol_abs=1e-3)
