"""Command-line entry point: ``privcap <command> [flags]``.

Exit codes: 0 when every report passes, 1 when any report fails, 2 on usage
or I/O errors. Output is a JSON array (or CSV table) of reports; with the
same arguments and seed the bytes are identical from run to run. Wall-clock
timings break that, so they are only written when ``PRIVCAP_TIMING=1``.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import sys
from dataclasses import dataclass, field

import numpy as np

from privcap import __version__
from privcap import bench
from privcap.bench import ExperimentReport
from privcap.channel import FiniteVChannel, identity_isometry
from privcap.ensembles import (
    RngSeed,
    UnitaryEnsemble,
    clifford_group,
    haar_ensemble,
    haar_state,
    haar_unitaries,
    explicit_ensemble,
)
from privcap.linalg import InvalidStateError

COMMANDS = ("twirl-check", "lemma2", "lemma3", "avg-entropy", "coherent-info", "optimize",
            "degradability", "frame-potential", "report-all")
MODES = ("exact-clifford", "haar", "explicit")
SCALAR_TRIALS = 100_000
MATRIX_TRIALS = 10_000
EXPLICIT_MEMBERS = 4
FRAME_POTENTIAL_MEMBERS = 2000

REPORT_KEYS = ("name", "params", "estimate", "std_error", "bound", "comparison", "pass", "status", "seed",
               "wall_ms")


class UsageError(Exception):
    pass


@dataclass
class RunConfig:
    command: str
    seed: int
    d: int = 2
    n: int = 1
    trials: int | None = None
    restarts: int = 20
    mode: str | None = None
    out_format: str = "json"
    out_path: str | None = None
    threads: int = 1
    tol_overrides: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.command not in COMMANDS:
            raise UsageError(f"unknown command {self.command!r}")
        if self.mode is None:
            self.mode = "exact-clifford" if self.d in (2, 3) else "haar"
        if self.mode not in MODES:
            raise UsageError(f"unknown mode {self.mode!r}")
        if self.mode == "exact-clifford" and self.d not in (2, 3):
            raise UsageError("exact-clifford mode needs d in {2, 3}")
        if not 2 <= self.d <= 64:
            raise UsageError("--d must be between 2 and 64")
        if not 1 <= self.n <= 2:
            raise UsageError("--n must be 1 or 2")
        if self.trials is not None and self.trials < 1:
            raise UsageError("--trials must be positive")
        if self.restarts < 1:
            raise UsageError("--restarts must be positive")
        if self.threads < 1:
            raise UsageError("--threads must be positive")
        if not 0 <= self.seed < 2 ** 64:
            raise UsageError("--seed must be a 64-bit unsigned integer")
        if self.out_format not in ("json", "csv"):
            raise UsageError("--format must be json or csv")

    def as_dict(self) -> dict:
        return {
            "command": self.command, "d": self.d, "n": self.n, "trials": self.trials,
            "restarts": self.restarts, "mode": self.mode, "seed": self.seed, "format": self.out_format,
            "out": self.out_path, "threads": self.threads, "tol": dict(sorted(self.tol_overrides.items())),
        }


# -- serialization -----------------------------------------------------------------

def _fmt(obj) -> str:
    if isinstance(obj, (bool, np.bool_)) or obj is None:
        return json.dumps(None if obj is None else bool(obj))
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        return format(x, ".17g") if math.isfinite(x) else "null"
    if isinstance(obj, str):
        return json.dumps(obj)
    if isinstance(obj, dict):
        return "{" + ", ".join(f"{json.dumps(str(k))}: {_fmt(v)}" for k, v in obj.items()) + "}"
    if isinstance(obj, (list, tuple, np.ndarray)):
        return "[" + ", ".join(_fmt(v) for v in obj) + "]"
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def report_record(r: ExperimentReport, provenance: dict | None = None, timing: bool = False) -> dict:
    rec = r.to_json()
    if not timing:
        rec["wall_ms"] = 0
    if provenance is not None:
        rec["provenance"] = provenance
    return rec


def render(records: list[dict], fmt: str) -> str:
    if fmt == "json":
        if not records:
            return "[]\n"
        return "[\n" + ",\n".join(_fmt(rec) for rec in records) + "\n]\n"
    buf = io.StringIO()
    keys = list(REPORT_KEYS) + (["provenance"] if records and "provenance" in records[0] else [])
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(keys)
    for rec in records:
        row = []
        for k in keys:
            v = rec.get(k)
            if isinstance(v, (dict, list)):
                row.append(_fmt(v))
            elif isinstance(v, (bool, np.bool_)) or v is None:
                row.append(json.dumps(None if v is None else bool(v)))
            elif isinstance(v, float):
                row.append(_fmt(v))
            else:
                row.append(v)
        w.writerow(row)
    return buf.getvalue()


def emit(reports, fmt: str = "json", path: str | None = None, provenance: dict | None = None) -> str:
    """Serialize reports and write them to ``path`` (stdout when None)."""
    timing = os.environ.get("PRIVCAP_TIMING") == "1"
    text = render([report_record(r, provenance, timing) for r in reports], fmt)
    if path is None or path == "-":
        sys.stdout.write(text)
    else:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    return text


# -- command dispatch -------------------------------------------------------------

def _seed(cfg: RunConfig, stream: int) -> RngSeed:
    return RngSeed(cfg.seed, stream)


def _ensemble(cfg: RunConfig, members: int | None = None) -> UnitaryEnsemble:
    if cfg.mode == "exact-clifford":
        return clifford_group(cfg.d)
    if cfg.mode == "haar":
        return haar_ensemble(cfg.d, members or cfg.trials or MATRIX_TRIALS, _seed(cfg, 100))
    return explicit_ensemble(haar_unitaries(cfg.d, EXPLICIT_MEMBERS, _seed(cfg, 101)))


def _shields(cfg: RunConfig, count: int, stream: int) -> np.ndarray:
    dim = cfg.d ** cfg.n
    return np.stack([haar_state(dim, _seed(cfg, stream).substream(k)) for k in range(count)])


def _twirl(cfg):
    if cfg.mode == "haar":
        return bench.verify_twirl(cfg.d, "haar", cfg.trials or SCALAR_TRIALS, _seed(cfg, 1), cfg.threads)
    return bench.verify_twirl(cfg.d, "clifford" if cfg.mode == "exact-clifford" else _ensemble(cfg))


def _frame_potential(cfg):
    return bench.verify_frame_potential(_ensemble(cfg, cfg.trials or FRAME_POTENTIAL_MEMBERS))


def _lemma2(cfg):
    n = cfg.n
    x, y = (0,) * n, (1,) * n
    mode = {"exact-clifford": "exact", "haar": "haar"}.get(cfg.mode) or _ensemble(cfg)
    return bench.verify_lemma2(cfg.d, n, x, y, _shields(cfg, 2, 3), mode, cfg.trials or MATRIX_TRIALS,
                               _seed(cfg, 4), cfg.threads)


def _lemma3(cfg):
    D = cfg.d ** cfg.n
    p = _seed(cfg, 5).generator().dirichlet(np.ones(D))
    mode = {"exact-clifford": "exact", "haar": "haar"}.get(cfg.mode) or _ensemble(cfg)
    if mode == "exact" and cfg.d > 4:
        raise UsageError("exact lemma3 needs d <= 4")
    return bench.verify_lemma3_purity(cfg.d, cfg.n, p, _shields(cfg, D, 6), mode, cfg.trials or MATRIX_TRIALS,
                                      _seed(cfg, 7), cfg.threads)


def _avg_entropy(cfg):
    return bench.verify_avg_dephased_entropy(cfg.d, cfg.trials or SCALAR_TRIALS, _seed(cfg, 8), cfg.threads)


def _coherent_info(cfg):
    return bench.verify_feasible_floor(FiniteVChannel(_ensemble(cfg)))


def _optimize(cfg):
    ens = _ensemble(cfg, cfg.trials or 64)
    if cfg.n == 2 and len(ens) ** 2 > 10_000:
        raise UsageError("n = 2 optimization needs at most 100 ensemble members")
    return bench.verify_ceiling(FiniteVChannel(ens), cfg.restarts, _seed(cfg, 9), n=cfg.n)


def _degradability(cfg):
    ens = _ensemble(cfg, cfg.trials or EXPLICIT_MEMBERS)
    if cfg.d > 3 or len(ens) > 24:
        raise UsageError("degradability needs d <= 3 and at most 24 ensemble members")
    return bench.verify_degradability(FiniteVChannel(ens))


def _report_all(cfg):
    d = cfg.d
    exact = cfg.mode == "exact-clifford"
    out = [_twirl(cfg), _frame_potential(cfg), _lemma2(cfg), _lemma3(cfg), _avg_entropy(cfg)]
    deg_cfg = cfg if exact and d == 2 else RunConfig(**{**cfg.__dict__, "mode": "explicit"})
    out.append(_degradability(deg_cfg))
    out.append(bench.verify_degradability(identity_isometry(d)))
    out.append(_optimize(cfg))
    out.append(bench.verify_achievability(FiniteVChannel(_ensemble(cfg, 64))))
    out.append(bench.verify_feasible_floor(FiniteVChannel(haar_ensemble(d, MATRIX_TRIALS, _seed(cfg, 10)))))
    small = FiniteVChannel(explicit_ensemble(haar_unitaries(d, EXPLICIT_MEMBERS, _seed(cfg, 11))))
    out.append(bench.verify_half_objective(small.isometry(), 100, _seed(cfg, 12)))
    out.append(bench.verify_dephasing_monotonicity(FiniteVChannel(_ensemble(cfg, 64)), 200, _seed(cfg, 13)))
    out.append(bench.verify_bilinear_bound(d * d, 1000, _seed(cfg, 14)))
    out.append(bench.verify_asymptote(1024))
    return out


DISPATCH = {
    "twirl-check": _twirl,
    "lemma2": _lemma2,
    "lemma3": _lemma3,
    "avg-entropy": _avg_entropy,
    "coherent-info": _coherent_info,
    "optimize": _optimize,
    "degradability": _degradability,
    "frame-potential": _frame_potential,
    "report-all": _report_all,
}


def _failed(cfg: RunConfig, err: Exception) -> ExperimentReport:
    params = {"command": cfg.command, "error": f"{type(err).__name__}: {err}"}
    return ExperimentReport(cfg.command, params, math.nan, 0.0, math.nan, "=", RngSeed(cfg.seed))


def execute(cfg: RunConfig) -> list[ExperimentReport]:
    try:
        result = DISPATCH[cfg.command](cfg)
    except (InvalidStateError, np.linalg.LinAlgError, FloatingPointError) as err:
        return [_failed(cfg, err)]
    except ValueError as err:
        raise UsageError(str(err)) from err
    reports = result if isinstance(result, list) else [result]
    for r in reports:
        if "abs" in cfg.tol_overrides:
            r.tol_abs = cfg.tol_overrides["abs"]
        if "sigma" in cfg.tol_overrides:
            r.n_sigma = cfg.tol_overrides["sigma"]
    return reports


def run(cfg: RunConfig) -> int:
    reports = execute(cfg)
    provenance = {"command": cfg.command, "config": cfg.as_dict(), "version": __version__}
    try:
        emit(reports, cfg.out_format, cfg.out_path, provenance)
    except OSError as err:
        print(f"privcap: cannot write output: {err}", file=sys.stderr)
        return 2
    return 0 if all(r.passed for r in reports) else 1


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="privcap", description="Verify capacity bounds for the random-phase channel N_d.")
    p.add_argument("command", choices=COMMANDS)
    p.add_argument("--d", type=int, default=2)
    p.add_argument("--n", type=int, default=1)
    p.add_argument("--trials", type=int, default=None)
    p.add_argument("--restarts", type=int, default=20)
    p.add_argument("--mode", choices=MODES, default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", default=None)
    p.add_argument("--format", choices=("json", "csv"), default="json")
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--tol-abs", type=float, default=None)
    p.add_argument("--tol-sigma", type=float, default=None)
    return p


def parse_config(argv: list[str]) -> RunConfig:
    args = build_parser().parse_args(argv)
    seed = args.seed
    if seed is None:
        env = os.environ.get("PRIVCAP_SEED")
        if env is None:
            raise UsageError("a seed is required: pass --seed or set PRIVCAP_SEED")
        try:
            seed = int(env)
        except ValueError as err:
            raise UsageError(f"PRIVCAP_SEED is not an integer: {env!r}") from err
    tol = {}
    if args.tol_abs is not None:
        tol["abs"] = args.tol_abs
    if args.tol_sigma is not None:
        tol["sigma"] = args.tol_sigma
    return RunConfig(args.command, seed, args.d, args.n, args.trials, args.restarts, args.mode,
                     args.format, args.out, args.threads, tol)


def main(argv: list[str] | None = None) -> int:
    argv = sys.argv[1:] if argv is None else argv
    try:
        return run(parse_config(argv))
    except UsageError as err:
        print(f"privcap: {err}", file=sys.stderr)
        return 2
