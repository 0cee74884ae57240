"""Monte-Carlo experiments: estimation error frequencies across window sizes."""
from __future__ import annotations

import json
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .estimator import EstimatorConfig, PenaltyConfig, c_delta, estimate_all
from .lattice import Pattern, Window, pattern_key, pattern_matrix, matrix_keys, security_region
from .models import SpecificationModel, model_from_dict
from .sampler import SamplerConfig, sample_field

SCHEMA = 1


class ExperimentError(RuntimeError):
    pass


@dataclass(frozen=True)
class ExperimentSpec:
    model: dict
    sizes: tuple[str, ...]
    replicates: int = 10
    sampler: dict = field(default_factory=dict)
    penalty: dict = field(default_factory=dict)
    max_radius: int | None = None
    margin: int | None = None
    seed: int = 0
    epsilon: float = 0.5
    outputs: dict = field(default_factory=dict)

    def __post_init__(self):
        sizes = tuple(str(s) for s in self.sizes)
        object.__setattr__(self, "sizes", sizes)
        counts = [Window.parse(s).size for s in sizes]
        if not counts or any(b <= a for a, b in zip(counts, counts[1:])):
            raise ValueError("sizes must be non-empty and strictly increasing")
        if self.replicates < 1:
            raise ValueError("replicates must be >= 1")
        unknown = set(self.sampler) - {"sweeps", "thinning", "schedule", "boundary", "exact"}
        if unknown:
            raise ValueError(f"unknown sampler field {sorted(unknown)[0]!r}")
        unknown = set(self.penalty) - {"delta", "kappa"}
        if unknown:
            raise ValueError(f"unknown penalty field {sorted(unknown)[0]!r}")

    @classmethod
    def from_dict(cls, obj: dict) -> "ExperimentSpec":
        if obj.get("schema") != SCHEMA:
            raise ValueError(f"config field 'schema' must be {SCHEMA}")
        known = {"model", "sizes", "replicates", "sampler", "penalty", "max_radius", "margin",
                 "seed", "epsilon", "outputs"}
        unknown = set(obj) - known - {"schema"}
        if unknown:
            raise ValueError(f"unknown config field {sorted(unknown)[0]!r}")
        if "model" not in obj or "sizes" not in obj:
            raise ValueError("config needs 'model' and 'sizes'")
        return cls(**{k: v for k, v in obj.items() if k in known})

    @classmethod
    def load(cls, path: str | Path) -> "ExperimentSpec":
        try:
            obj = json.loads(Path(path).read_text())
        except json.JSONDecodeError as exc:
            raise ValueError(f"{path}:{exc.lineno}:{exc.colno}: {exc.msg}") from None
        return cls.from_dict(obj)

    def to_dict(self) -> dict:
        out = {"schema": SCHEMA}
        out.update(asdict(self))
        out["sizes"] = list(self.sizes)
        return out


# ---------------------------------------------------------------------------
# single replicate


def _penalty_for(model: SpecificationModel, spec: ExperimentSpec) -> PenaltyConfig:
    return PenaltyConfig(model.alphabet_size, model.dim, spec.penalty.get("delta"),
                         spec.penalty.get("kappa"), model.q_min)


def _sampler_for(spec: ExperimentSpec) -> tuple[SamplerConfig, str, bool]:
    s = spec.sampler
    cfg = SamplerConfig(int(s.get("sweeps", 1000)), int(s.get("thinning", 1)), spec.seed,
                        s.get("schedule", "raster"))
    return cfg, s.get("boundary", "periodic"), bool(s.get("exact", True))


def run_replicate(spec: ExperimentSpec, size_index: int, replicate: int) -> dict:
    """Sample, estimate and tally one replicate; errors are returned, not raised."""
    try:
        model = model_from_dict(spec.model)
        window = Window.parse(spec.sizes[size_index])
        scfg, boundary, exact = _sampler_for(spec)
        config = sample_field(model, window, scfg, boundary, size_index * 1_000_000 + replicate, exact)
        batch = estimate_all(config, EstimatorConfig(_penalty_for(model, spec), spec.max_radius, spec.margin))
        l_true = model.true_radii(config, batch.sites)
        return _tally(batch, l_true)
    except Exception as exc:          # recorded in the report
        return {"error": f"{type(exc).__name__}: {exc}"}


def _tally(batch, l_true: np.ndarray) -> dict:
    l_hat = batch.l_hat
    defined = l_true >= 1
    reach = defined & (l_true <= batch.r_max)
    out = {
        "sites": int(len(l_hat)),
        "excluded": int((~defined).sum()),
        "unreachable": int((defined & ~reach).sum()),
        "over": int((reach & (l_hat > l_true)).sum()),
        "under": int((reach & (l_hat < l_true)).sum()),
        "match": int((reach & (l_hat == l_true)).sum()),
        "R_n": int(batch.r_max),
        "region_size": int(batch.region.size),
        "outside_theory": bool(batch.outside_theory),
        "by_l_true": {},
    }
    for v in np.unique(l_true[reach]):
        sel = reach & (l_true == v)
        out["by_l_true"][str(int(v))] = {
            "sites": int(sel.sum()),
            "match": int((l_hat[sel] == v).sum()),
            "over": int((l_hat[sel] > v).sum()),
            "under": int((l_hat[sel] < v).sum()),
        }
    return out


# ---------------------------------------------------------------------------
# aggregation


def _binomial_se(k: int, n: int) -> float:
    if n == 0:
        return math.nan
    p = k / n
    return math.sqrt(p * (1 - p) / n)


def _fraction_stats(tallies: list[dict], key: str, denom_key: str = "scored") -> dict:
    k = sum(t[key] for t in tallies)
    n = sum(t[denom_key] for t in tallies)
    per = [t[key] / t[denom_key] for t in tallies if t[denom_key] > 0]
    between = float(np.std(per, ddof=1) / math.sqrt(len(per))) if len(per) > 1 else math.nan
    return {"fraction": k / n if n else math.nan, "count": k, "binomial_se": _binomial_se(k, n),
            "between_replicate_se": between}


def aggregate(tallies: list[dict]) -> dict:
    ok = [t for t in tallies if "error" not in t]
    for t in ok:
        t["scored"] = t["sites"] - t["excluded"]
    out = {"replicates_ok": len(ok), "errors": [t["error"] for t in tallies if "error" in t]}
    if not ok:
        return out
    out["sites_scored"] = sum(t["scored"] for t in ok)
    out["sites_excluded"] = sum(t["excluded"] for t in ok)
    for key in ("over", "under", "match", "unreachable"):
        out[key] = _fraction_stats(ok, key)
    out["replicates_with_over"] = sum(1 for t in ok if t["over"] > 0) / len(ok)
    out["replicates_with_under"] = sum(1 for t in ok if t["under"] > 0) / len(ok)
    out["R_n"] = sorted({t["R_n"] for t in ok})
    out["region_size"] = sorted({t["region_size"] for t in ok})
    out["outside_theory"] = any(t["outside_theory"] for t in ok)
    by = {}
    for t in ok:
        for v, c in t["by_l_true"].items():
            slot = by.setdefault(v, {"sites": 0, "match": 0, "over": 0, "under": 0, "_per": []})
            for k in ("sites", "match", "over", "under"):
                slot[k] += c[k]
            slot["_per"].append(c["match"] / c["sites"])
    for v, slot in by.items():
        per = slot.pop("_per")
        slot["match_fraction"] = slot["match"] / slot["sites"]
        slot["match_binomial_se"] = _binomial_se(slot["match"], slot["sites"])
        slot["match_between_replicate_se"] = (float(np.std(per, ddof=1) / math.sqrt(len(per)))
                                              if len(per) > 1 else math.nan)
    out["by_l_true"] = dict(sorted(by.items(), key=lambda kv: int(kv[0])))
    return out


def theorem_bound_shapes(delta: float, q_min: float, alphabet_size: int, dim: int,
                         region_sizes, epsilon: float = 0.5) -> dict:
    """Over- and underestimation bound shapes with the unspecified constant C(d) = 1."""
    c = c_delta(delta, q_min, dim, alphabet_size)
    rows = []
    for n in region_sizes:
        ln = math.log(n)
        tail = math.exp(-n ** (1 - epsilon))
        rows.append({
            "region_size": int(n),
            "overestimation_shape": ln ** ((dim + 1) / (2 * dim)) * math.exp(-c * math.sqrt(ln)) + tail,
            "underestimation_shape": tail,
        })
    out = {"c_delta": c, "epsilon": epsilon, "constant_C_d": 1.0, "label": "shape-only diagnostic",
           "per_size": rows}
    if c <= 0:
        out["warning"] = "outside consistency regime"
    return out


@dataclass
class ErrorReport:
    spec: dict
    penalty: dict
    per_size: list[dict]
    bounds: dict

    def as_dict(self) -> dict:
        return {"spec": self.spec, "penalty": self.penalty, "per_size": self.per_size,
                "bounds": self.bounds}

    def to_json(self) -> str:
        return json.dumps(_clean(self.as_dict()), indent=2, sort_keys=True) + "\n"

    def rows(self) -> list[list]:
        out = []
        for s in self.per_size:
            if "match" not in s:
                continue
            out.append([s["size"], s["replicates_ok"], s["sites_scored"],
                        s["over"]["fraction"], s["under"]["fraction"], s["match"]["fraction"],
                        s["unreachable"]["fraction"], s["over"]["binomial_se"],
                        s["under"]["binomial_se"], s["match"]["binomial_se"]])
        return out


def _clean(obj):
    """NaN is not valid JSON; write it as null."""
    if isinstance(obj, float) and math.isnan(obj):
        return None
    if isinstance(obj, dict):
        return {k: _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    return obj


def worker_count() -> int:
    env = os.environ.get("VNRF_THREADS")
    cap = os.cpu_count() or 1
    if env:
        try:
            cap = max(1, min(cap, int(env)))
        except ValueError:
            raise ExperimentError("VNRF_THREADS must be an integer") from None
    return cap


def run_experiment(spec: ExperimentSpec, workers: int | None = None) -> ErrorReport:
    model = model_from_dict(spec.model)
    pen = _penalty_for(model, spec)
    jobs = [(si, r) for si in range(len(spec.sizes)) for r in range(spec.replicates)]
    workers = worker_count() if workers is None else workers
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(workers) as pool:
            results = list(pool.map(run_replicate, [spec] * len(jobs), *zip(*jobs)))
    else:
        results = [run_replicate(spec, si, r) for si, r in jobs]
    per_size = []
    region_sizes = []
    for si, label in enumerate(spec.sizes):
        tallies = results[si * spec.replicates:(si + 1) * spec.replicates]
        agg = aggregate(tallies)
        if agg["replicates_ok"] == 0:
            raise ExperimentError(f"every replicate failed at size {label}: {agg['errors'][0]}")
        agg["size"] = label
        agg["sites_in_window"] = Window.parse(label).size
        per_size.append(agg)
        region_sizes.append(max(agg["region_size"]))
    bounds = theorem_bound_shapes(pen.delta, model.q_min, model.alphabet_size, model.dim,
                                  region_sizes, spec.epsilon)
    pdict = pen.as_dict()
    pdict["q_min_is_estimate"] = bool(model.q_min_is_estimate)
    return ErrorReport(spec.to_dict(), pdict, per_size, bounds)


def match_trend(report: ErrorReport, l_true: int = 2, k_se: float = 2.0) -> dict:
    """Is the exact-match fraction at ``l_true`` nondecreasing in n up to k pooled SEs?"""
    fr, se = [], []
    for s in report.per_size:
        slot = s.get("by_l_true", {}).get(str(l_true))
        if slot is None or max(s["R_n"]) < 2:
            continue
        fr.append(slot["match_fraction"])
        se.append(slot["match_binomial_se"])
    ok = all(b >= a - k_se * math.sqrt(sa ** 2 + sb ** 2)
             for a, b, sa, sb in zip(fr, fr[1:], se, se[1:]))
    return {"fractions": fr, "se": se, "nondecreasing": ok and len(fr) > 1,
            "vacuous": all(f == 0 for f in fr)}


# ---------------------------------------------------------------------------
# concentration of pattern frequencies


def concentration_study(model: SpecificationModel, sizes, replicates: int, eta: Pattern,
                        seed: int = 0) -> dict:
    """Standard deviation of N(eta)/|region| across replicates, and its log-log slope in |region|."""
    key = pattern_key(eta)
    stds, regions = [], []
    for si, n in enumerate(sizes):
        window = Window((int(n),)) if model.dim == 1 else Window.parse(str(n))
        freqs = []
        for r in range(replicates):
            cfg = sample_field(model, window, SamplerConfig(seed=seed), replicate=si * 1_000_000 + r)
            region = security_region(cfg.window, boundary=cfg.boundary)
            keys = matrix_keys(pattern_matrix(cfg, region.sites, eta.radius), cfg.alphabet_size)
            freqs.append(float(np.count_nonzero(keys == key)) / region.size)
        stds.append(float(np.std(freqs, ddof=1)))
        regions.append(region.size)
    slope = float(np.polyfit(np.log(regions), np.log(stds), 1)[0])
    return {"region_sizes": regions, "std": stds, "slope": slope}
