"""Experiment grid runner.

For each (L, n) cell: generate instances, estimate every policy's expected
weighted CCT over common realizations, divide by a per-instance reference
(the LP bound or the clairvoyant policy) and summarise the ratios.

Seed tree: ``[seed, 0, L, n, i]`` draws instance ``i`` of a cell and
``[seed, 1, L, n, i, r, stream]`` drives replication ``r`` (stream 0 for
volumes, 1 for random-order permutations).  Policies therefore share
volumes, and adding a policy leaves every other draw untouched.
"""
from __future__ import annotations

import csv
import hashlib
import io
import json
import math
import platform
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from . import __version__
from .bounds import ub_table
from .distributions import ConfigError, SizeSpec, spec_moments
from .lpbound import solve_lp
from .model import aggregate_loads, instance_to_json
from .simulator import (POLICY_NAMES, STREAM_RANDOM_ORDER, STREAM_VOLUMES, PhConfig,
                        completion_times, draw_volumes, make_policy)
from .workload import GenConfig, generate_instance

LP_MAX_COFLOWS = 16
HIST_WIDTH = 0.05


class CellError(RuntimeError):
    """A cell aborted; ``bundle`` points at the saved instance and seeds."""

    def __init__(self, msg, bundle=None):
        super().__init__(msg if bundle is None else f"{msg} (diagnostics: {bundle})")
        self.bundle = bundle


@dataclass(frozen=True)
class ExperimentConfig:
    cells: tuple[tuple[int, int], ...]
    size: SizeSpec
    num_instances: int = 100
    num_realizations: int = 1000
    policies: tuple[str, ...] = ("cl", "nc", "rr")
    reference: str = "lp"
    seed: int = 0
    structure: str = "synthetic"
    ph: PhConfig = field(default_factory=PhConfig)
    raw: bool = False

    def __post_init__(self):
        if self.num_instances < 1 or self.num_realizations < 1:
            raise ConfigError("num_instances and num_realizations must be >= 1")
        if not self.cells:
            raise ConfigError("empty cell grid")
        bad = [p for p in self.policies if p not in POLICY_NAMES]
        if bad:
            raise ConfigError(f"unknown policies {bad}; choose from {POLICY_NAMES}")
        if self.reference not in ("lp", "cl"):
            raise ConfigError("reference must be 'lp' or 'cl'")
        if self.reference == "lp":
            big = [c for c in self.cells if c[1] > LP_MAX_COFLOWS]
            if big:
                raise ConfigError(f"LP reference limited to n <= {LP_MAX_COFLOWS}; cells {big}")

    @classmethod
    def desk(cls, cells, size, **kw) -> "ExperimentConfig":
        """Reduced preset: 30 instances, 300 realizations."""
        kw.setdefault("num_instances", 30)
        kw.setdefault("num_realizations", 300)
        return cls(tuple(tuple(c) for c in cells), size, **kw)

    def to_json(self) -> dict:
        d = asdict(self)
        d["cells"] = [list(c) for c in self.cells]
        d["size"] = self.size.to_json()
        d["policies"] = list(self.policies)
        return d

    @classmethod
    def from_json(cls, obj: dict) -> "ExperimentConfig":
        obj = dict(obj)
        obj["cells"] = tuple(tuple(int(x) for x in c) for c in obj["cells"])
        obj["size"] = SizeSpec.from_json(obj["size"])
        if "policies" in obj:
            obj["policies"] = tuple(obj["policies"])
        if "ph" in obj:
            obj["ph"] = PhConfig(**obj["ph"])
        known = cls.__dataclass_fields__
        extra = set(obj) - set(known)
        if extra:
            raise ConfigError(f"unknown config keys {sorted(extra)}")
        return cls(**obj)

    def config_hash(self) -> str:
        blob = json.dumps(self.to_json(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]

    def with_overrides(self, **kw) -> "ExperimentConfig":
        return replace(self, **{k: v for k, v in kw.items() if v is not None})


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    text = path.read_text()
    if path.suffix == ".toml":
        if sys.version_info >= (3, 11):
            import tomllib
        else:
            import tomli as tomllib
        return ExperimentConfig.from_json(tomllib.loads(text))
    return ExperimentConfig.from_json(json.loads(text))


@dataclass(frozen=True)
class StatsRow:
    L: int
    n: int
    policy: str
    mean: float
    std: float
    q1: float
    q3: float
    ub: float | None = None


def quartiles(values) -> tuple[float, float, float]:
    """(Q1, median, Q3) by linear interpolation between order statistics (type 7)."""
    v = np.asarray(values, dtype=float)
    if v.size == 0:
        raise ValueError("quartiles of an empty sample")
    q = np.quantile(v, [0.25, 0.5, 0.75], method="linear")
    return float(q[0]), float(q[1]), float(q[2])


def summarize(L, n, policy, ratios, ub=None) -> StatsRow:
    r = np.asarray(ratios, dtype=float)
    q1, _, q3 = quartiles(r)
    std = float(r.std(ddof=1)) if r.size > 1 else 0.0
    return StatsRow(L, n, policy, float(r.mean()), std, q1, q3, ub)


def histogram(ratios, width: float = HIST_WIDTH):
    """(bin_lo, count) pairs on a grid anchored at 0; empty bins omitted."""
    idx = np.floor(np.asarray(ratios) / width + 1e-9).astype(int)
    keys, counts = np.unique(idx, return_counts=True)
    return [(round(k * width, 10), int(c)) for k, c in zip(keys, counts)]


@dataclass(eq=False)
class InstanceRecord:
    L: int
    n: int
    index: int
    reference: float
    costs: dict            # policy -> mean cost over replications
    se: dict               # policy -> standard error
    raw: dict | None = None  # policy -> per-replication costs

    def ratio(self, policy: str) -> float:
        return self.costs[policy] / self.reference


def instance_rng(seed, L, n, i):
    return np.random.default_rng([seed, 0, L, n, i])


def replication_rng(seed, L, n, i, r, stream):
    return np.random.default_rng([seed, 1, L, n, i, r, stream])


def _bundle(cfg: ExperimentConfig, L, n, i, inst, out_dir, err):
    if out_dir is None:
        return None
    path = Path(out_dir) / f"failure_L{L}_n{n}_i{i}.json"
    path.parent.mkdir(parents=True, exist_ok=True)
    payload = {"config": cfg.to_json(), "cell": [L, n], "instance_index": i,
               "instance_seed": [cfg.seed, 0, L, n, i], "error": repr(err),
               "instance": instance_to_json(inst) if inst is not None else None}
    path.write_text(json.dumps(payload, indent=1))
    return str(path)


def run_instance(cfg: ExperimentConfig, L: int, n: int, i: int, out_dir=None) -> InstanceRecord:
    inst = None
    try:
        gen = GenConfig(L, n, cfg.size, cfg.seed, cfg.structure)
        inst = generate_instance(gen, instance_rng(cfg.seed, L, n, i))
        w = inst.weights
        policies = list(dict.fromkeys(cfg.policies + (("cl",) if cfg.reference == "cl" else ())))
        pol = {p: make_policy(p, inst, cfg.ph) for p in policies}
        R = cfg.num_realizations
        costs = {p: np.empty(R) for p in policies}
        for r in range(R):
            vol = draw_volumes(inst, replication_rng(cfg.seed, L, n, i, r, STREAM_VOLUMES))[0]
            for p in policies:
                rng = replication_rng(cfg.seed, L, n, i, r, STREAM_RANDOM_ORDER) if p == "ro" else None
                costs[p][r] = w @ completion_times(inst, vol, pol[p], rng)
        if cfg.reference == "lp":
            sol = solve_lp(aggregate_loads(inst), w)
            ref = sol.objective
        else:
            ref = float(costs["cl"].mean())
        if not ref > 0:
            raise CellError(f"non-positive reference {ref}")
        mean = {p: float(c.mean()) for p, c in costs.items()}
        se = {p: float(c.std(ddof=1) / math.sqrt(R)) if R > 1 else 0.0 for p, c in costs.items()}
        return InstanceRecord(L, n, i, float(ref), mean, se, costs if cfg.raw else None)
    except (AssertionError, RuntimeError, ValueError, FloatingPointError) as err:
        raise CellError(f"cell ({L},{n}) instance {i} failed: {err!r}",
                        _bundle(cfg, L, n, i, inst, out_dir, err)) from err


def _task(args):
    return run_instance(*args)


@dataclass(eq=False)
class ExperimentResult:
    config: ExperimentConfig
    rows: list
    records: list
    histograms: dict  # (L, n, policy) -> [(bin_lo, count)]

    def row(self, L, n, policy) -> StatsRow:
        for r in self.rows:
            if (r.L, r.n, r.policy) == (L, n, policy):
                return r
        raise KeyError((L, n, policy))

    def stats_csv(self) -> str:
        buf = io.StringIO()
        wr = csv.writer(buf, lineterminator="\n")
        wr.writerow(["L", "n", "policy", "mean", "std", "q1", "q3", "ub"])
        for r in self.rows:
            wr.writerow([r.L, r.n, r.policy, _f(r.mean), _f(r.std), _f(r.q1), _f(r.q3),
                         "" if r.ub is None else _f(r.ub)])
        return buf.getvalue()

    def instances_csv(self) -> str:
        buf = io.StringIO()
        wr = csv.writer(buf, lineterminator="\n")
        wr.writerow(["L", "n", "instance", "policy", "cost", "se", "reference", "ratio"])
        for rec in self.records:
            for p in self.config.policies:
                wr.writerow([rec.L, rec.n, rec.index, p, _f(rec.costs[p]), _f(rec.se[p]),
                             _f(rec.reference), _f(rec.ratio(p))])
        return buf.getvalue()

    def raw_csv(self) -> str:
        buf = io.StringIO()
        wr = csv.writer(buf, lineterminator="\n")
        wr.writerow(["L", "n", "instance", "replication", "policy", "cost"])
        for rec in self.records:
            if rec.raw is None:
                continue
            for p in self.config.policies:
                for r, c in enumerate(rec.raw[p]):
                    wr.writerow([rec.L, rec.n, rec.index, r, p, _f(c)])
        return buf.getvalue()

    def histogram_csv(self) -> str:
        buf = io.StringIO()
        wr = csv.writer(buf, lineterminator="\n")
        wr.writerow(["L", "n", "policy", "bin_lo", "bin_hi", "count"])
        for (L, n, p), bins in self.histograms.items():
            for lo, c in bins:
                wr.writerow([L, n, p, _f(lo), _f(round(lo + HIST_WIDTH, 10)), c])
        return buf.getvalue()

    def metadata(self) -> dict:
        import numba
        import scipy
        return {
            "coflowd": __version__,
            "python": platform.python_version(),
            "numpy": np.__version__,
            "scipy": scipy.__version__,
            "numba": numba.__version__,
            "config": self.config.to_json(),
            "config_hash": self.config.config_hash(),
            "seed_tree": {"instance": "[seed, 0, L, n, i]",
                          "replication": "[seed, 1, L, n, i, r, stream]",
                          "streams": {"volumes": STREAM_VOLUMES, "random_order": STREAM_RANDOM_ORDER}},
            "quantiles": "type 7 (linear interpolation)",
            "std": "sample (ddof=1) over instances",
            "histogram_width": HIST_WIDTH,
            # normal sizes are resampled until positive, so the effective moments can differ
            "size_moments": {"nominal": [self.config.size.mean, self.config.size.cv],
                             "effective": list(_effective_moments(self.config.size))},
        }

    def write(self, out_dir) -> dict:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        files = {"stats": "stats.csv", "instances": "instances.csv",
                 "histograms": "histograms.csv", "metadata": "metadata.json"}
        (out / files["stats"]).write_text(self.stats_csv())
        (out / files["instances"]).write_text(self.instances_csv())
        (out / files["histograms"]).write_text(self.histogram_csv())
        (out / files["metadata"]).write_text(json.dumps(self.metadata(), indent=1, sort_keys=True) + "\n")
        if self.config.raw:
            files["raw"] = "raw.csv"
            (out / files["raw"]).write_text(self.raw_csv())
        return {k: str(out / v) for k, v in files.items()}


def _effective_moments(spec: SizeSpec) -> tuple[float, float]:
    """(mean, cv) of the sizes actually drawn."""
    m, sd = spec_moments(spec)
    return m, sd / m


def _f(x: float) -> str:
    return repr(float(x))


def cell_ub(cfg: ExperimentConfig, L: int) -> float | None:
    """4 * table-mode alpha bound for the cell's distribution, if one exists."""
    fam = cfg.size.family
    if fam in ("gamma", "normal", "pareto"):
        return 4.0 * ub_table(fam, L, cfg.size.cv)
    if fam == "fixed":
        return 4.0
    return None


def run_experiment(cfg: ExperimentConfig, out_dir=None, workers: int = 1,
                   progress=None) -> ExperimentResult:
    """Run every cell; output does not depend on ``workers``."""
    tasks = [(cfg, L, n, i, out_dir) for L, n in cfg.cells for i in range(cfg.num_instances)]
    if workers > 1:
        with ProcessPoolExecutor(workers) as ex:
            records = list(ex.map(_task, tasks, chunksize=max(1, len(tasks) // (4 * workers))))
    else:
        records = []
        for t in tasks:
            records.append(_task(t))
            if progress:
                progress(len(records), len(tasks))
    rows, hists = [], {}
    for L, n in cfg.cells:
        recs = [r for r in records if (r.L, r.n) == (L, n)]
        for p in cfg.policies:
            ratios = [r.ratio(p) for r in recs]
            rows.append(summarize(L, n, p, ratios, cell_ub(cfg, L) if p == "nc" else None))
            hists[(L, n, p)] = histogram(ratios)
    res = ExperimentResult(cfg, rows, records, hists)
    if out_dir is not None:
        res.write(out_dir)
    return res


def read_stats(path) -> list[StatsRow]:
    rows = []
    with open(path, newline="") as fh:
        for d in csv.DictReader(fh):
            rows.append(StatsRow(int(d["L"]), int(d["n"]), d["policy"], float(d["mean"]),
                                 float(d["std"]), float(d["q1"]), float(d["q3"]),
                                 float(d["ub"]) if d["ub"] else None))
    return rows


def format_report(rows) -> str:
    """Cell-per-line table with a mean/std/Q1/Q3 block per policy."""
    policies = list(dict.fromkeys(r.policy for r in rows))
    cells = list(dict.fromkeys((r.L, r.n) for r in rows))
    by = {(r.L, r.n, r.policy): r for r in rows}
    head = f"{'L':>4} {'n':>4} " + " ".join(f"{p.upper():^27}" for p in policies) + f" {'UB':>7}"
    sub = " " * 10 + " ".join(f"{'mean':>6} {'std':>6} {'Q1':>6} {'Q3':>6}" for _ in policies)
    lines = [head, sub]
    for L, n in cells:
        parts = []
        ub = None
        for p in policies:
            r = by.get((L, n, p))
            if r is None:
                parts.append(" " * 27)
                continue
            parts.append(f"{r.mean:6.2f} {r.std:6.2f} {r.q1:6.2f} {r.q3:6.2f}")
            ub = r.ub if r.ub is not None else ub
        lines.append(f"{L:>4} {n:>4} " + " ".join(parts) + (f" {ub:7.2f}" if ub is not None else ""))
    return "\n".join(lines)
