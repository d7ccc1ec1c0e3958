"""Experiment harness: batch solves over generated instance families, the
two reported parameter grids, and profile tables for the figures.

All outputs are plain CSV. Row order, float formatting, and instance seeds
are fixed functions of the configuration, so repeated runs with the same
seed produce byte-identical result files. Wall-clock measurements are kept
in a separate timings file because they can never be reproducible.
"""

from __future__ import annotations

import csv
import hashlib
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import detfun
from .graph import Graph, build_arc_map, enumerate_hc, gen_random_graph
from .inner import BarrierSpec, minimize_phase
from .outer import HC_FOUND, DipaParams, dipa_solve, initial_interior

FLOAT_FMT = "%.17g"

# sentinel thresholds that keep the surgery machinery from ever firing while
# staying inside the documented parameter ranges
SUPPRESS_DEFLATION = 1.0 - 1e-12
SUPPRESS_DELETION = 0.0


@dataclass(frozen=True)
class BenchSetting:
    """One column of a results table: a named solver configuration."""

    name: str
    mode: str = "ds"
    restore: str = "lp"
    deflation: float = 0.9
    deletion: float = 1e-5
    upper_log: bool = False
    drop_one_var: bool = False

    def params(self, time_limit: float, seed: int = 0) -> DipaParams:
        return DipaParams(
            mode=self.mode,
            restore=self.restore,
            deflation_threshold=self.deflation,
            deletion_threshold=self.deletion,
            upper_log=self.upper_log,
            drop_one_var=self.drop_one_var,
            time_limit=time_limit,
            seed=seed,
        )

    def params_hash(self) -> str:
        key = "|".join(
            str(v)
            for v in (
                self.mode,
                self.restore,
                repr(self.deflation),
                repr(self.deletion),
                self.upper_log,
                self.drop_one_var,
            )
        )
        return hashlib.sha1(key.encode()).hexdigest()[:12]


def grid_paper_def() -> tuple[BenchSetting, ...]:
    """Surgery enabled: interior-point restore {lp, qp} crossed with
    deflation threshold {0.9, 0.95}; deletion fixed at 1e-5."""
    out = []
    for restore in ("lp", "qp"):
        for thr in (0.9, 0.95):
            out.append(
                BenchSetting(
                    name=f"{restore}-{thr:g}",
                    restore=restore,
                    deflation=thr,
                )
            )
    return tuple(out)


def grid_paper_nodef() -> tuple[BenchSetting, ...]:
    """Surgery suppressed: upper-bound barrier crossed with the
    drop-one-variable option."""
    out = []
    for upper in (False, True):
        for drop in (False, True):
            bits = [b for b, on in (("ulog", upper), ("dropv", drop)) if on]
            out.append(
                BenchSetting(
                    name="-".join(bits) if bits else "plain",
                    deflation=SUPPRESS_DEFLATION,
                    deletion=SUPPRESS_DELETION,
                    upper_log=upper,
                    drop_one_var=drop,
                )
            )
    return tuple(out)


GRIDS = {
    "paper-def": grid_paper_def,
    "paper-nodef": grid_paper_nodef,
}


@dataclass
class BenchConfig:
    sizes: tuple = (20,)
    count: int = 50
    dmin: int = 3
    dmax: int = 6
    grid: str = "paper-def"
    seed: int = 100
    out_dir: str | None = None
    time_limit: float = 60.0
    workers: int = 1
    plant: bool = True

    def validate(self) -> None:
        if not self.sizes:
            raise ValueError("sizes must be nonempty")
        if self.count < 1:
            raise ValueError("count must be at least 1")
        if self.grid not in GRIDS:
            raise ValueError(f"unknown grid {self.grid!r}; choose from {sorted(GRIDS)}")

    def settings(self) -> tuple[BenchSetting, ...]:
        return GRIDS[self.grid]()

    def instance_seed(self, index: int) -> int:
        return self.seed + index


@dataclass
class BenchResult:
    solves: list = field(default_factory=list)
    timings: list = field(default_factory=list)
    results: list = field(default_factory=list)
    combos: list = field(default_factory=list)
    certificates: list = field(default_factory=list)

    def solved_count(self, n: int, setting: str) -> int:
        for row in self.results:
            if row["n"] == n and row["setting"] == setting:
                return row["solved"]
        raise KeyError((n, setting))


def _solve_job(task: tuple) -> dict:
    n, dmin, dmax, inst_seed, plant, setting, time_limit = task
    g = gen_random_graph(n, dmin, dmax, seed=inst_seed, plant=plant)
    params = setting.params(time_limit=time_limit, seed=inst_seed)
    t0 = time.monotonic()
    rep = dipa_solve(g, params)
    wall = time.monotonic() - t0
    cycle = "-".join(str(v) for v in rep.cycle.seq) if rep.cycle is not None else ""
    return {
        "graph_id": f"n{n}-s{inst_seed}",
        "n": n,
        "mode": setting.mode,
        "setting": setting.name,
        "params_hash": setting.params_hash(),
        "status": rep.status,
        "iterations": rep.iterations,
        "deflations": rep.deflations,
        "deletions": rep.deletions,
        "wall_time": wall,
        "cycle": cycle,
    }


def _write_csv(path: Path, header: tuple, rows: list) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow(row)


def _flush(result: BenchResult, out_dir: str | None) -> None:
    if out_dir is None:
        return
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    _write_csv(
        out / "solves.csv",
        ("graph_id", "n", "mode", "setting", "params_hash", "status",
         "iterations", "deflations", "deletions"),
        [
            (r["graph_id"], r["n"], r["mode"], r["setting"], r["params_hash"],
             r["status"], r["iterations"], r["deflations"], r["deletions"])
            for r in result.solves
        ],
    )
    _write_csv(
        out / "timings.csv",
        ("graph_id", "setting", "wall_time"),
        [
            (r["graph_id"], r["setting"], FLOAT_FMT % r["wall_time"])
            for r in result.timings
        ],
    )
    _write_csv(
        out / "results.csv",
        ("n", "setting", "solved", "total"),
        [(r["n"], r["setting"], r["solved"], r["total"]) for r in result.results],
    )
    _write_csv(
        out / "combos.csv",
        ("n", "combo", "solved", "total"),
        [(r["n"], r["combo"], r["solved"], r["total"]) for r in result.combos],
    )
    _write_csv(
        out / "certificates.csv",
        ("graph_id", "setting", "cycle"),
        [(r["graph_id"], r["setting"], r["cycle"]) for r in result.certificates],
    )


def run_bench(cfg: BenchConfig) -> BenchResult:
    """Solve every (size, setting, instance) cell of the configured grid and
    tabulate per-setting and combined solve counts.

    Results are gathered into a fixed order before any aggregation, so the
    output does not depend on worker scheduling. On interrupt, whatever has
    finished is flushed to the output directory before the exception
    propagates.
    """
    cfg.validate()
    settings = cfg.settings()
    tasks = []
    for n in cfg.sizes:
        for setting in settings:
            for i in range(cfg.count):
                tasks.append(
                    (n, cfg.dmin, cfg.dmax, cfg.instance_seed(i), cfg.plant,
                     setting, cfg.time_limit)
                )

    result = BenchResult()
    records: list = []
    try:
        if cfg.workers > 1:
            with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
                for rec in pool.map(_solve_job, tasks, chunksize=1):
                    records.append(rec)
        else:
            for task in tasks:
                records.append(_solve_job(task))
    except KeyboardInterrupt:
        _tabulate(result, records, cfg, settings)
        _flush(result, cfg.out_dir)
        raise

    _tabulate(result, records, cfg, settings)
    _flush(result, cfg.out_dir)
    return result


def _tabulate(result: BenchResult, records: list, cfg: BenchConfig, settings) -> None:
    order = {s.name: k for k, s in enumerate(settings)}
    records = sorted(
        records, key=lambda r: (r["n"], order[r["setting"]], r["graph_id"])
    )
    result.solves = records
    result.timings = records

    solved: dict = {}
    for r in records:
        key = (r["n"], r["setting"])
        solved.setdefault(key, set())
        if r["status"] == HC_FOUND:
            solved[key].add(r["graph_id"])
            result.certificates.append(r)

    result.results = []
    for n in cfg.sizes:
        for s in settings:
            result.results.append(
                {
                    "n": n,
                    "setting": s.name,
                    "solved": len(solved.get((n, s.name), ())),
                    "total": cfg.count,
                }
            )

    # a graph counts as solved by a combination when any member setting
    # solved it
    result.combos = []
    names = [s.name for s in settings]
    pairs = [
        (names[i], names[j])
        for i in range(len(names))
        for j in range(i + 1, len(names))
    ]
    for n in cfg.sizes:
        for a, b in pairs:
            union = solved.get((n, a), set()) | solved.get((n, b), set())
            result.combos.append(
                {"n": n, "combo": f"{a}+{b}", "solved": len(union), "total": cfg.count}
            )
        everything = set()
        for s in settings:
            everything |= solved.get((n, s.name), set())
        result.combos.append(
            {"n": n, "combo": "all", "solved": len(everything), "total": cfg.count}
        )


def neutral_point(g: Graph, mode: str = "ds") -> np.ndarray:
    """The barrier-only minimizer used as the common start of every profile."""
    m = build_arc_map(g)
    x = initial_interior(g, m, mode)
    from .nullspace import build_Z
    from .inner import PhaseContext

    z = build_Z(m, mode=mode)
    ctx = PhaseContext(
        z=z,
        f_bundle=lambda pt: detfun.value_grad_hess(pt, m, mode),
        f_value=lambda pt: detfun.value_only(pt, m, mode),
        grad_tol=1e-10,
        neutral=True,
    )
    res = minimize_phase(x, BarrierSpec(mu=math.inf), ctx)
    return res.x


def trace_paths(g: Graph, samples: int = 101, cap: int = 100000) -> list:
    """Objective profile along the straight segment from the neutral point to
    every Hamiltonian cycle of g.

    Returns (hc_id, t, f) tuples on a uniform t grid over [0, 1 - eps]; the
    last grid point stops just short of the vertex so the segment stays
    strictly interior.
    """
    if samples < 2:
        raise ValueError("need at least two sample points")
    m = build_arc_map(g)
    hcs = enumerate_hc(g, cap=cap)
    x0 = neutral_point(g, mode="ds")
    eps = 1e-6
    rows = []
    for hc_id, cert in enumerate(hcs):
        xs = np.zeros(len(m.arcs))
        for arc in cert.arcs():
            xs[m.index[arc]] = 1.0
        for j in range(samples):
            t = (1.0 - eps) * j / (samples - 1)
            xt = (1.0 - t) * x0 + t * xs
            rows.append((hc_id, t, detfun.f_minor(xt, m, validate=False)))
    return rows


def write_paths_csv(path, rows) -> None:
    _write_csv(
        Path(path),
        ("hc_id", "t", "f"),
        [(hc_id, FLOAT_FMT % t, FLOAT_FMT % f) for hc_id, t, f in rows],
    )


def trace_solve(g: Graph, params: DipaParams):
    """Run one traced solve; returns (report, csv_rows) where the final row
    carries the terminating status alongside the last objective value."""
    rep = dipa_solve(g, params)
    rows = [r.csv() for r in rep.trace]
    rows.append(
        ",".join(
            (
                str(rep.iterations),
                FLOAT_FMT % 0.0,
                FLOAT_FMT % (rep.f_final if rep.f_final is not None else math.nan),
                FLOAT_FMT % 0.0,
                FLOAT_FMT % 0.0,
                FLOAT_FMT % 0.0,
                rep.status,
                FLOAT_FMT % 0.0,
                FLOAT_FMT % 0.0,
                str(rep.deflations),
            )
        )
    )
    return rep, rows


def trace_header() -> str:
    from .outer import TraceRow

    return TraceRow.header()
