"""Uni- versus bi-modal detection study with ROC summaries."""
from __future__ import annotations

import csv
import io
import math
import time
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np
from scipy.stats import rankdata

from ..cluster import KMeansMode, glrt_multimodal, glrt_threshold, kmeans_statistic
from ..density import Family
from ..errors import GOrientError
from ..estimator import EMConfig
from ..sampler import make_rng, sample_family, sample_uniform_sphere, wrap_to_fz
from ..symgroup import SymmetryGroup, group_by_name, group_distance
from .sweep import dump_json

ROC_METHODS = ("kmeans_naive", "kmeans_modified", "em_vmf", "em_watson")
ROC_HEADER = ("set", "label", "separation", "method", "statistic", "reject", "wall_time_s")


@dataclass(frozen=True)
class RocConfig:
    """Simulated detection study.

    Each set is bi-modal with probability ``p_bimodal``; a bi-modal set draws
    labels Bernoulli(1/2) between two means, the second redrawn until its
    group distance to the first exceeds ``min_separation``.
    """

    n_sets: int = 200
    n: int = 1000
    kappa: float = 50.0
    family: str = "vmf"
    seed: int = 0
    methods: tuple = ROC_METHODS
    group: str = "cubic"
    p_bimodal: float = 0.5
    min_separation: float = 0.0
    alpha_level: float = 0.05
    em_max_iters: int = 1000
    em_tol: float = 1e-8
    em_restarts: int = 3

    def __post_init__(self):
        if self.n_sets < 1 or self.n < 4:
            raise ValueError("need n_sets >= 1 and n >= 4")
        if not 0 <= self.p_bimodal <= 1:
            raise ValueError("p_bimodal must lie in [0, 1]")
        if not 0 < self.alpha_level < 1:
            raise ValueError("alpha_level must lie in (0, 1)")
        if not 0 <= self.min_separation < math.pi / 2:
            raise ValueError("min_separation must lie in [0, pi/2)")
        object.__setattr__(self, "family", Family(self.family).value)
        methods = tuple(self.methods)
        unknown = [m for m in methods if m not in ROC_METHODS]
        if unknown or not methods:
            raise ValueError(f"unknown methods {unknown}; choose from {ROC_METHODS}")
        object.__setattr__(self, "methods", methods)
        group_by_name(self.group)
        self.em_config()

    def em_config(self) -> EMConfig:
        return EMConfig(max_iters=self.em_max_iters, tol=self.em_tol,
                        n_restarts=self.em_restarts, seed=self.seed)


def simulate_set(label, n, kappa, family, g: SymmetryGroup, rng, min_separation=0.0):
    """One wrapped set; returns ``(x, means, separation)``.

    ``label`` 0 gives a single cluster, 1 two clusters with Bernoulli(1/2)
    membership.
    """
    mu1 = sample_uniform_sphere(1, rng)[0]
    if not label:
        return wrap_to_fz(sample_family(family, mu1, kappa, n, rng), g), mu1[None], float("nan")
    while True:
        mu2 = sample_uniform_sphere(1, rng)[0]
        sep = group_distance(mu1, mu2, g)
        if sep > min_separation:
            break
    z = rng.random(n) < 0.5
    x = np.empty((n, 4))
    x[z] = sample_family(family, mu1, kappa, int(z.sum()), rng)
    x[~z] = sample_family(family, mu2, kappa, int((~z).sum()), rng)
    return wrap_to_fz(x, g), np.stack([mu1, mu2]), sep


def score_set(method, x, g, family, cfg: EMConfig, rng, alpha_level=0.05):
    """Detection statistic of one method; returns ``(statistic, reject)``."""
    thr = glrt_threshold(alpha_level, 2)
    if method.startswith("kmeans"):
        mode = KMeansMode.NAIVE if method == "kmeans_naive" else KMeansMode.SYMMETRY_AWARE
        stat = kmeans_statistic(x, 2, mode, g, rng, family=family)
        return stat, stat > thr
    fit_family = Family.VMF if method == "em_vmf" else Family.WATSON
    res = glrt_multimodal(x, g, 2, fit_family, alpha_level, cfg, rng)
    return res.statistic, res.reject_h0


def roc_curve(scores, labels):
    """ROC points ``(fpr, tpr)`` over all score thresholds, and the AUC.

    The AUC is the Mann-Whitney probability that a positive outscores a
    negative, with ties counted one half.
    """
    scores = np.asarray(scores, dtype=float)
    labels = np.asarray(labels, dtype=bool)
    pos, neg = int(labels.sum()), int((~labels).sum())
    if pos == 0 or neg == 0:
        return [0.0, 1.0], [0.0, 1.0], float("nan")
    thr = np.unique(scores)[::-1]
    fpr = [0.0] + [float(np.sum(scores[~labels] >= t) / neg) for t in thr]
    tpr = [0.0] + [float(np.sum(scores[labels] >= t) / pos) for t in thr]
    ranks = rankdata(scores)
    auc = (ranks[labels].sum() - pos * (pos + 1) / 2) / (pos * neg)
    return fpr, tpr, float(auc)


def roc_rows(cfg: RocConfig):
    g = group_by_name(cfg.group)
    em_cfg = cfg.em_config()
    for s in range(cfg.n_sets):
        rng = make_rng(cfg.seed, s)
        label = int(rng.random() < cfg.p_bimodal)
        x, _, sep = simulate_set(label, cfg.n, cfg.kappa, cfg.family, g, rng, cfg.min_separation)
        for mi, method in enumerate(cfg.methods):
            mrng = make_rng(cfg.seed, s, 1 + mi)
            t0 = time.perf_counter()
            try:
                stat, reject = score_set(method, x, g, cfg.family, em_cfg, mrng, cfg.alpha_level)
            except GOrientError:
                stat, reject = float("nan"), False
            yield {"set": s, "label": label, "separation": sep, "method": method,
                   "statistic": float(stat), "reject": bool(reject),
                   "wall_time_s": time.perf_counter() - t0}


def _fmt(v):
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return f"{v:.17g}"
    return str(v)


def roc_summary(rows, methods):
    out = {}
    for m in methods:
        rs = [r for r in rows if r["method"] == m and math.isfinite(r["statistic"])]
        labels = [r["label"] == 1 for r in rs]
        fpr, tpr, auc = roc_curve([r["statistic"] for r in rs], labels)
        neg = [r for r in rs if r["label"] == 0]
        pos = [r for r in rs if r["label"] == 1]
        out[m] = {
            "auc": auc,
            "fpr": fpr,
            "tpr": tpr,
            "threshold_fpr": sum(r["reject"] for r in neg) / len(neg) if neg else float("nan"),
            "threshold_tpr": sum(r["reject"] for r in pos) / len(pos) if pos else float("nan"),
            "failed": sum(1 for r in rows if r["method"] == m) - len(rs),
        }
    return out


def run_roc(cfg: RocConfig, out_path):
    """Write per-set statistics (CSV) and ROC summaries (``.json``); returns both paths."""
    out_path = Path(out_path)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(ROC_HEADER)
    rows = list(roc_rows(cfg))
    for r in rows:
        w.writerow([_fmt(r[k]) for k in ROC_HEADER])
    out_path.write_text(buf.getvalue())
    summary = {
        "kind": "roc",
        "config": asdict(cfg),
        "seed": cfg.seed,
        "threshold": glrt_threshold(cfg.alpha_level, 2),
        "methods": roc_summary(rows, cfg.methods),
    }
    json_path = out_path.with_suffix(".json")
    json_path.write_text(dump_json(summary))
    return out_path, json_path
