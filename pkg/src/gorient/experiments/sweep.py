"""Single-population estimation sweeps over the true concentration."""
from __future__ import annotations

import csv
import io
import json
import math
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from ..density import Family
from ..errors import GOrientError
from ..estimator import EMConfig, em_vmf, em_vmf_hyperbolic, em_watson, ml_modified, ml_naive
from ..sampler import make_rng, sample_family, sample_uniform_sphere, wrap_to_fz
from ..symgroup import group_by_name, group_distance

METHODS = ("ml_naive", "ml_modified", "em_vmf", "em_vmf_hyperbolic", "em_watson")
RESULT_HEADER = (
    "method", "kappa_o", "trial", "inner_product", "dist_g", "kappa_hat", "wall_time_s", "converged",
)
DESK_KAPPAS = (1.0, 2.0, 5.0, 10.0, 20.0, 30.0, 40.0, 50.0, 80.0, 100.0)
DESK_TRIALS = 20
FULL_KAPPAS = tuple(float(k) for k in range(1, 101))
FULL_TRIALS = 100


@dataclass(frozen=True)
class SweepConfig:
    """What to simulate and which estimators to run.

    Every data family in ``data_families`` is crossed with every method; the
    EM methods fix their own fitted family, the two ML baselines fit the
    generating family. Method ids in the output are ``method@data_family``.
    """

    kappa_grid: tuple = DESK_KAPPAS
    trials: int = DESK_TRIALS
    n: int = 1000
    seed: int = 0
    data_families: tuple = ("vmf",)
    methods: tuple = METHODS
    group: str = "cubic"
    em_max_iters: int = 1000
    em_tol: float = 1e-8
    em_restarts: int = 3

    def __post_init__(self):
        grid = tuple(float(k) for k in self.kappa_grid)
        if not grid:
            raise ValueError("kappa_grid must not be empty")
        if any(b <= a for a, b in zip(grid, grid[1:])):
            raise ValueError("kappa_grid must be strictly increasing")
        if any(k < 0 for k in grid):
            raise ValueError("kappa_grid values must be >= 0")
        object.__setattr__(self, "kappa_grid", grid)
        if self.trials < 1:
            raise ValueError("trials must be >= 1")
        if self.n < 2:
            raise ValueError("n must be >= 2")
        fams = tuple(Family(f).value for f in self.data_families)
        if not fams:
            raise ValueError("need at least one data family")
        object.__setattr__(self, "data_families", fams)
        methods = tuple(self.methods)
        unknown = [m for m in methods if m not in METHODS]
        if unknown or not methods:
            raise ValueError(f"unknown methods {unknown}; choose from {METHODS}")
        object.__setattr__(self, "methods", methods)
        group_by_name(self.group)
        self.em_config()

    def em_config(self, seed=0) -> EMConfig:
        return EMConfig(max_iters=self.em_max_iters, tol=self.em_tol,
                        n_restarts=self.em_restarts, seed=seed)

    @classmethod
    def full_scale(cls, **kw):
        return cls(kappa_grid=FULL_KAPPAS, trials=FULL_TRIALS, **kw)


def run_method(method, x, g, data_family, cfg: EMConfig, rng):
    """Run one estimator; returns ``(model, converged)``."""
    if method == "ml_naive":
        return ml_naive(x, data_family), True
    if method == "ml_modified":
        return ml_modified(x, g, data_family, rng), True
    fit = {"em_vmf": em_vmf, "em_vmf_hyperbolic": em_vmf_hyperbolic, "em_watson": em_watson}[method]
    rep = fit(x, g, cfg, rng)
    return rep.model, rep.converged


def _fmt(v):
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return f"{v:.17g}"
    return str(v)


def sweep_rows(cfg: SweepConfig):
    """Yield result records as dicts, in deterministic order."""
    g = group_by_name(cfg.group)
    for fi, fam in enumerate(cfg.data_families):
        for ki, kappa in enumerate(cfg.kappa_grid):
            for trial in range(cfg.trials):
                rng = make_rng(cfg.seed, fi, ki, trial)
                mu_o = sample_uniform_sphere(1, rng)[0]
                x = wrap_to_fz(sample_family(fam, mu_o, kappa, cfg.n, rng), g)
                for mi, method in enumerate(cfg.methods):
                    mrng = make_rng(cfg.seed, fi, ki, trial, 1 + mi)
                    t0 = time.perf_counter()
                    try:
                        model, conv = run_method(method, x, g, fam, cfg.em_config(cfg.seed), mrng)
                        dist = group_distance(mu_o, model.mu, g)
                        inner, kappa_hat = math.cos(dist), model.kappa
                    except GOrientError:
                        dist = inner = kappa_hat = float("nan")
                        conv = False
                    yield {
                        "method": f"{method}@{fam}",
                        "kappa_o": kappa,
                        "trial": trial,
                        "inner_product": inner,
                        "dist_g": dist,
                        "kappa_hat": float(kappa_hat),
                        "wall_time_s": time.perf_counter() - t0,
                        "converged": bool(conv),
                    }


def format_rows(rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(RESULT_HEADER)
    for r in rows:
        w.writerow([_fmt(r[k]) for k in RESULT_HEADER])
    return buf.getvalue()


def read_rows(text):
    """Parse result CSV text back into typed dicts."""
    out = []
    for r in csv.DictReader(io.StringIO(text)):
        out.append({
            "method": r["method"],
            "kappa_o": float(r["kappa_o"]),
            "trial": int(r["trial"]),
            "inner_product": float(r["inner_product"]),
            "dist_g": float(r["dist_g"]),
            "kappa_hat": float(r["kappa_hat"]),
            "wall_time_s": float(r["wall_time_s"]),
            "converged": r["converged"] == "true",
        })
    return out


def _mean(vals):
    return math.fsum(vals) / len(vals) if vals else float("nan")


def summarize(rows):
    """Per ``(method, kappa_o)`` means over successful trials, in first-seen order."""
    groups = {}
    for r in rows:
        groups.setdefault((r["method"], r["kappa_o"]), []).append(r)
    out = []
    for (method, kappa), rs in groups.items():
        ok = [r for r in rs if math.isfinite(r["kappa_hat"])]
        mean_k = _mean([r["kappa_hat"] for r in ok])
        out.append({
            "method": method,
            "kappa_o": kappa,
            "trials": len(rs),
            "failed": len(rs) - len(ok),
            "mean_inner_product": _mean([r["inner_product"] for r in ok]),
            "mean_dist_g": _mean([r["dist_g"] for r in ok]),
            "mean_kappa_hat": mean_k,
            "kappa_bias": mean_k - kappa,
            "relative_kappa_bias": (mean_k - kappa) / kappa if kappa > 0 else float("nan"),
            "converged_fraction": _mean([float(r["converged"]) for r in rs]),
            "mean_wall_time_s": _mean([r["wall_time_s"] for r in rs]),
        })
    return out


def _json_safe(obj):
    if isinstance(obj, float) and not math.isfinite(obj):
        return None
    if isinstance(obj, dict):
        return {k: _json_safe(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_json_safe(v) for v in obj]
    return obj


def dump_json(obj) -> str:
    return json.dumps(_json_safe(obj), indent=2, sort_keys=True) + "\n"


def run_estimation_sweep(cfg: SweepConfig, out_path):
    """Write per-trial records to ``out_path`` (CSV) and a summary next to it (``.json``).

    The summary is computed from the CSV text as written, so it can be
    recomputed exactly from the file. Returns ``(csv_path, json_path)``.
    """
    out_path = Path(out_path)
    text = format_rows(sweep_rows(cfg))
    out_path.write_text(text)
    summary = {
        "kind": "estimation_sweep",
        "config": asdict(cfg),
        "seed": cfg.seed,
        "summary": summarize(read_rows(text)),
    }
    json_path = out_path.with_suffix(".json")
    json_path.write_text(dump_json(summary))
    return out_path, json_path
