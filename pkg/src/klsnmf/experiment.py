"""Parameter sweeps over class subsets, aggregation and trace export."""
from __future__ import annotations

import json
import logging
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence

import numpy as np

from .data import (DataMatrix, SubsetSpec, choose_class_combinations, load_dense_matrix,
                   synth_blobs, take_classes)
from .errors import KLSNMFError, NumericalFailure
from .evaluation import assign_clusters, evaluate
from .factorization import SolverConfig, solve_klsnmf, solve_nmf_baseline
from .kernel import kernel_distance, rbf_kernel

__all__ = [
    "DEFAULT_GRID",
    "ExperimentSpec",
    "RunRecord",
    "CellStats",
    "ResultTable",
    "blob_centers",
    "derive_seed",
    "load_spec_data",
    "run_experiment",
    "baseline_compare",
    "emit_traces",
]

log = logging.getLogger(__name__)

DEFAULT_GRID = (0.001, 0.01, 0.1, 1.0, 10.0, 100.0, 1000.0)

KLSNMF = "klsnmf"
NMF = "nmf"
_METHOD_CODE = {KLSNMF: 1, NMF: 2}
_SUBSET_STREAM = 0x5B5E7


def derive_seed(base_seed: int, *key: int) -> int:
    """Stable 32-bit seed for a grid cell, independent of execution order."""
    ss = np.random.SeedSequence(entropy=int(base_seed), spawn_key=tuple(int(k) for k in key))
    return int(ss.generate_state(1, dtype=np.uint32)[0])


def blob_centers(m: int, separation: float) -> np.ndarray:
    """``m`` centers in ``m`` dimensions, pairwise ``separation`` apart."""
    return np.eye(m) * (separation / math.sqrt(2.0))


@dataclass
class ExperimentSpec:
    data_path: Optional[str] = None
    has_labels: bool = True
    blobs: Optional[dict] = None
    n_values: Optional[List[int]] = None
    subsets: int = 10
    lambdas: Sequence[float] = DEFAULT_GRID
    radii: Sequence[float] = DEFAULT_GRID
    seed: int = 0
    restarts: int = 1
    max_iterations: int = 500
    tol: float = 1e-6
    rescale: bool = False
    descent_guard: bool = True
    workers: int = 1
    out_dir: Optional[str] = None

    def __post_init__(self):
        if (self.data_path is None) == (self.blobs is None):
            raise KLSNMFError("give exactly one of data_path or blobs")
        if not self.lambdas or not self.radii:
            raise KLSNMFError("parameter grids must be nonempty")
        if self.subsets < 1 or self.restarts < 1:
            raise KLSNMFError("subsets and restarts must be >= 1")


@dataclass
class RunRecord:
    method: str
    N: int
    subset: int
    lam: Optional[float]
    radius: Optional[float]
    seed: int
    classes: List[int]
    status: str = "ok"
    reason: str = ""
    accuracy: Optional[float] = None
    nmi: Optional[float] = None
    purity: Optional[float] = None
    objective: Optional[float] = None
    n_iter: int = 0
    termination: str = ""
    kkt_w: Optional[float] = None
    kkt_g: Optional[float] = None
    orthogonality: Optional[float] = None
    guarded_steps: int = 0
    zero_rows: List[int] = field(default_factory=list)
    labels: List[int] = field(default_factory=list)
    seconds: float = 0.0
    median_iteration_seconds: float = 0.0
    trace: Optional[object] = field(default=None, repr=False, compare=False)

    TIMING_FIELDS = ("seconds", "median_iteration_seconds")

    def as_dict(self, timing: bool = True) -> dict:
        d = asdict(self)
        d.pop("trace")
        if not timing:
            for k in self.TIMING_FIELDS:
                d.pop(k)
        return d

    @property
    def cell(self):
        return (self.method, self.N, self.lam, self.radius)


@dataclass
class CellStats:
    n_runs: int
    n_failed: int
    mean: Dict[str, float]
    std: Dict[str, float]


_METRICS = ("accuracy", "nmi", "purity")


def _stats(records: List[RunRecord]) -> CellStats:
    ok = [r for r in records if r.status == "ok"]
    mean, std = {}, {}
    for m in _METRICS:
        vals = np.array([getattr(r, m) for r in ok], dtype=float)
        mean[m] = float(vals.mean()) if vals.size else float("nan")
        std[m] = float(vals.std()) if vals.size else float("nan")
    return CellStats(len(ok), len(records) - len(ok), mean, std)


def _grid_key(lam, radius):
    # baseline cells carry no grid values
    return (-math.inf if lam is None else lam, -math.inf if radius is None else radius)


class ResultTable:
    """Per-run records grouped into (method, N, lam, radius) cells."""

    def __init__(self, records: List[RunRecord]):
        self.records = sorted(records, key=_record_order)
        groups: Dict[tuple, List[RunRecord]] = {}
        for r in self.records:
            groups.setdefault(r.cell, []).append(r)
        self.cells: Dict[tuple, CellStats] = {key: _stats(rs) for key, rs in groups.items()}
        self._groups = groups

    def runs(self, cell) -> List[RunRecord]:
        return list(self._groups.get(cell, []))

    def methods(self):
        return sorted({c[0] for c in self.cells})

    def n_values(self, method=KLSNMF):
        return sorted({c[1] for c in self.cells if c[0] == method})

    def best(self, method: str, N: int):
        """Cell with the highest mean accuracy; ties go to higher mean NMI,
        then to the lexicographically smallest (lam, radius)."""
        cands = [(c, s) for c, s in self.cells.items()
                 if c[0] == method and c[1] == N and s.n_runs > 0]
        if not cands:
            return None
        ordered = sorted(cands, key=lambda cs: (-cs[1].mean["accuracy"], -cs[1].mean["nmi"],
                                                _grid_key(cs[0][2], cs[0][3])))
        return ordered[0]

    def write_jsonl(self, path, timing: bool = True):
        with open(path, "w") as fh:
            for r in self.records:
                fh.write(json.dumps(r.as_dict(timing=timing), sort_keys=True) + "\n")

    def summary(self) -> str:
        lines = []
        header = f"{'method':<8} {'N':>3} {'lambda':>8} {'radius':>8} {'runs':>4} " \
                 f"{'accuracy':>15} {'nmi':>15} {'purity':>15}"
        lines.append(header)
        lines.append("-" * len(header))

        def fmt(c, s):
            lam = "-" if c[2] is None else f"{c[2]:g}"
            rad = "-" if c[3] is None else f"{c[3]:g}"
            vals = " ".join(f"{100 * s.mean[m]:6.2f}+-{100 * s.std[m]:5.2f}" for m in _METRICS)
            fail = f" ({s.n_failed} failed)" if s.n_failed else ""
            return f"{c[0]:<8} {c[1]:>3} {lam:>8} {rad:>8} {s.n_runs:>4}   {vals}{fail}"

        for c in sorted(self.cells, key=lambda c: (c[0], c[1], _grid_key(c[2], c[3]))):
            lines.append(fmt(c, self.cells[c]))
        lines.append("")
        lines.append("best over grid")
        for method in self.methods():
            for N in self.n_values(method):
                b = self.best(method, N)
                if b is not None:
                    lines.append(fmt(*b))
        return "\n".join(lines) + "\n"


def _record_order(r: RunRecord):
    return (r.method, r.N, r.subset, _grid_key(r.lam, r.radius))


def load_spec_data(spec: ExperimentSpec) -> DataMatrix:
    if spec.data_path is not None:
        return load_dense_matrix(spec.data_path, has_labels=spec.has_labels)
    b = dict(spec.blobs)
    centers = b.get("centers")
    if centers is None:
        centers = blob_centers(int(b.get("clusters", 3)), float(b.get("separation", 10.0)))
    return synth_blobs(centers, int(b.get("per_cluster", 50)), float(b.get("noise_sd", 1.0)),
                       int(b.get("seed", spec.seed)))


def _subsets(spec: ExperimentSpec, data: DataMatrix, N: int):
    sub_seed = derive_seed(spec.seed, _SUBSET_STREAM, N)
    combos = choose_class_combinations(data, SubsetSpec(N, spec.subsets, sub_seed))
    return [(take_classes(data, c), [int(x) for x in c]) for c in combos]


def _fill(rec: RunRecord, truth, G, trace, seconds):
    part = assign_clusters(G)
    rep = evaluate(truth, part)
    rec.accuracy, rec.nmi, rec.purity = rep.accuracy, rep.nmi, rep.purity
    rec.objective = trace.final_objective
    rec.n_iter = trace.n_iter
    rec.termination = trace.reason
    rec.kkt_w, rec.kkt_g = trace.kkt_w, trace.kkt_g
    rec.orthogonality = trace.orthogonality
    rec.guarded_steps = trace.guarded_steps
    rec.zero_rows = list(part.flagged)
    rec.labels = [int(x) for x in part.labels]
    rec.seconds = seconds
    if trace.iteration_seconds:
        rec.median_iteration_seconds = float(np.median(trace.iteration_seconds))
    rec.trace = trace


def _klsnmf_cell(spec, N, s_idx, sub, classes, ri, radius, K, D):
    out = []
    for li, lam in enumerate(spec.lambdas):
        base = derive_seed(spec.seed, _METHOD_CODE[KLSNMF], N, s_idx, li, ri)
        rec = RunRecord(KLSNMF, N, s_idx, float(lam), float(radius), base, classes)
        tic = time.perf_counter()
        best = None
        try:
            for j in range(spec.restarts):
                seed = base if j == 0 else derive_seed(base, j)
                cfg = SolverConfig(k=N, lam=float(lam), max_iterations=spec.max_iterations,
                                   tol=spec.tol, seed=seed, descent_guard=spec.descent_guard)
                F, trace = solve_klsnmf(K, cfg, D=D)
                if best is None or trace.final_objective < best[1].final_objective:
                    best = (F, trace)
        except NumericalFailure as exc:
            rec.status, rec.reason = "failed", str(exc)
            log.warning("run N=%d subset=%d lam=%g radius=%g failed: %s", N, s_idx, lam, radius, exc)
            rec.trace = exc.trace
            out.append(rec)
            continue
        _fill(rec, sub.labels, best[0].G, best[1], time.perf_counter() - tic)
        out.append(rec)
    return out


def _sweep(spec: ExperimentSpec, data: DataMatrix) -> List[RunRecord]:
    n_values = spec.n_values or [data.n_classes]
    tasks = []
    for N in n_values:
        for s_idx, (sub, classes) in enumerate(_subsets(spec, data, N)):
            for ri, radius in enumerate(spec.radii):
                tasks.append((N, s_idx, sub, classes, ri, float(radius)))

    def work(task):
        N, s_idx, sub, classes, ri, radius = task
        K = rbf_kernel(sub, radius, rescale=spec.rescale)
        D = kernel_distance(K)
        return _klsnmf_cell(spec, N, s_idx, sub, classes, ri, radius, K, D)

    if spec.workers > 1:
        with ThreadPoolExecutor(spec.workers) as pool:
            chunks = list(pool.map(work, tasks))
    else:
        chunks = [work(t) for t in tasks]
    return [r for chunk in chunks for r in chunk]


def run_experiment(spec: ExperimentSpec, data: Optional[DataMatrix] = None) -> ResultTable:
    """Run KLS-NMF over every (N, subset, lam, radius) and aggregate.

    Each cell builds an RBF kernel on the subset, solves with ``k = N``,
    assigns clusters by row-wise argmax of ``G`` and scores them against
    the subset labels. Numerical failures are recorded, not raised.
    """
    if data is None:
        data = load_spec_data(spec)
    return ResultTable(_sweep(spec, data))


def _baseline_runs(spec: ExperimentSpec, data: DataMatrix) -> List[RunRecord]:
    out = []
    for N in spec.n_values or [data.n_classes]:
        for s_idx, (sub, classes) in enumerate(_subsets(spec, data, N)):
            seed = derive_seed(spec.seed, _METHOD_CODE[NMF], N, s_idx)
            rec = RunRecord(NMF, N, s_idx, None, None, seed, classes)
            if not sub.nonnegative:
                rec.status, rec.reason = "skipped", "data has negative entries"
                out.append(rec)
                continue
            cfg = SolverConfig(k=N, max_iterations=spec.max_iterations, tol=spec.tol, seed=seed)
            tic = time.perf_counter()
            try:
                _, G, trace = solve_nmf_baseline(sub, cfg)
            except NumericalFailure as exc:
                rec.status, rec.reason = "failed", str(exc)
                rec.trace = exc.trace
                out.append(rec)
                continue
            _fill(rec, sub.labels, G, trace, time.perf_counter() - tic)
            out.append(rec)
    return out


def baseline_compare(spec: ExperimentSpec, data: Optional[DataMatrix] = None) -> ResultTable:
    """The KLS-NMF sweep plus plain NMF on the raw data of the same subsets."""
    if data is None:
        data = load_spec_data(spec)
    return ResultTable(_sweep(spec, data) + _baseline_runs(spec, data))


def _trace_name(r: RunRecord) -> str:
    if r.lam is None:
        return f"{r.method}_N{r.N}_s{r.subset}.tsv"
    return f"{r.method}_N{r.N}_s{r.subset}_lam{r.lam:g}_r{r.radius:g}.tsv"


def emit_traces(table: ResultTable, out_dir) -> List[Path]:
    """Write ``iteration, objective, delta_w, delta_g`` per run as TSV files."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = []
    for r in table.records:
        if r.trace is None:
            continue
        path = out_dir / _trace_name(r)
        with open(path, "w") as fh:
            fh.write("iteration\tobjective\tdelta_w\tdelta_g\n")
            for t, f, dw, dg in r.trace.rows():
                fh.write(f"{t}\t{f!r}\t{dw!r}\t{dg!r}\n")
        paths.append(path)
    return paths
