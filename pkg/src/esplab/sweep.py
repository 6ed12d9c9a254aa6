"""Multi-seed parameter sweeps over (activation, input distribution, N, rho, leak).

Every trial draws its reservoir, inputs and initial state from a seed sequence
keyed by (seed, trial, cell hash), so a diagram does not depend on execution
order or on how many worker processes ran it.
"""

from __future__ import annotations

import csv
import dataclasses
import hashlib
import io
import itertools
import json
import logging
import math
import os
import statistics
import tempfile
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Callable, Optional, Sequence

import numpy as np

from .activations import ActivationSpec, Family
from .esp_harness import EspTestSpec, run_pair
from .reservoir import INPUT_DISTRIBUTIONS, ReservoirConfig

log = logging.getLogger(__name__)

PAPER_RHO_GRID = (0.5, 0.6, 0.7, 0.8, 0.9, 1.0, 2.0, 3.0, 4.0, 5.0)
PAPER_LEAK_GRID = (0.1, 0.3, 0.5, 0.7, 0.9)
PAPER_N_GRID = (1, 10, 50, 100, 500, 1000, 2000)
DESK_TRIALS, DESK_SEEDS = 20, (0, 1, 2)
PAPER_TRIALS, PAPER_SEEDS = 50, (0, 1, 2, 3, 4)
PAPER_SCALING_TRIALS = 1000


class GridError(ValueError):
    pass


@dataclass(frozen=True)
class SweepGrid:
    rho_values: tuple
    leak_values: tuple
    n_values: tuple
    activations: tuple
    distributions: tuple = ("gaussian",)
    trials_per_cell: int = DESK_TRIALS
    seeds: tuple = DESK_SEEDS
    horizon: int = 200
    threshold: float = 0.1
    extended_horizon: int = 2000
    extend: bool = False
    density: float = 0.1
    input_scaling: float = 1.0
    input_dim: int = 1

    def __post_init__(self):
        acts = tuple(a if isinstance(a, ActivationSpec) else ActivationSpec.of(a) for a in self.activations)
        object.__setattr__(self, "activations", acts)
        for name in ("rho_values", "leak_values", "n_values", "distributions", "seeds"):
            object.__setattr__(self, name, tuple(getattr(self, name)))
        for name in ("rho_values", "leak_values", "n_values", "activations", "distributions", "seeds"):
            if not getattr(self, name):
                raise GridError(f"grid axis {name!r} is empty")
        if self.trials_per_cell < 1:
            raise GridError("trials_per_cell must be >= 1")
        for d in self.distributions:
            if d not in INPUT_DISTRIBUTIONS:
                raise GridError(f"unknown distribution {d!r}")
        for r in self.rho_values:
            if not r > 0:
                raise GridError("rho values must be > 0")
        for a in self.leak_values:
            if not 0 < a <= 1:
                raise GridError("leak values must lie in (0, 1]")
        for n in self.n_values:
            if int(n) < 1:
                raise GridError("n values must be >= 1")
        if self.threshold <= 0 or not 1 <= self.horizon <= self.extended_horizon:
            raise GridError("need threshold > 0 and 1 <= horizon <= extended_horizon")

    def cells(self) -> list:
        return [
            Cell(act, dist, int(n), float(rho), float(leak))
            for act, dist, n, rho, leak in itertools.product(
                self.activations, self.distributions, self.n_values, self.rho_values, self.leak_values
            )
        ]

    def describe(self) -> dict:
        d = {f.name: getattr(self, f.name) for f in dataclasses.fields(self)}
        d["activations"] = [a.describe() for a in self.activations]
        return {k: list(v) if isinstance(v, tuple) else v for k, v in d.items()}

    def config_hash(self) -> str:
        blob = json.dumps(self.describe(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()


@dataclass(frozen=True)
class Cell:
    activation: ActivationSpec
    distribution: str
    n: int
    rho: float
    leak: float

    def key(self) -> dict:
        return {
            "activation": self.activation.name,
            "distribution": self.distribution,
            "n": self.n,
            "rho": self.rho,
            "leak": self.leak,
        }

    def hash64(self) -> int:
        blob = json.dumps(
            {**self.key(), "params": self.activation.describe()}, sort_keys=True, separators=(",", ":")
        )
        return int.from_bytes(hashlib.sha256(blob.encode()).digest()[:8], "little")


@dataclass(frozen=True)
class TrialOutcome:
    converged: bool
    convergence_time: Optional[int]
    final_distance: float
    diverged: bool
    seed: int
    trial: int


@dataclass(frozen=True)
class CellStats:
    convergence_fraction: float
    mean_convergence_time: Optional[float]
    median_convergence_time: Optional[float]
    mean_final_distance: float
    distance_std: float
    diverged_count: int
    converged_count: int
    unconverged_count: int
    all_seeds_converged: bool
    trials: int
    mean_unconverged_final_distance: Optional[float]

    @classmethod
    def aggregate(cls, outcomes: Sequence[TrialOutcome]) -> "CellStats":
        conv = [o for o in outcomes if o.converged]
        div = [o for o in outcomes if o.diverged and not o.converged]
        unconv = [o for o in outcomes if not o.converged and not o.diverged]
        times = [o.convergence_time for o in conv]
        finite = [o.final_distance for o in outcomes if math.isfinite(o.final_distance)]
        unconv_fd = [o.final_distance for o in unconv]
        total = len(outcomes)
        return cls(
            convergence_fraction=len(conv) / total,
            mean_convergence_time=statistics.fmean(times) if times else None,
            median_convergence_time=float(statistics.median(times)) if times else None,
            mean_final_distance=statistics.fmean(finite) if finite else math.inf,
            distance_std=statistics.pstdev(finite) if len(finite) > 1 else 0.0,
            diverged_count=len(div),
            converged_count=len(conv),
            unconverged_count=len(unconv),
            all_seeds_converged=len(conv) == total,
            trials=total,
            mean_unconverged_final_distance=statistics.fmean(unconv_fd) if unconv_fd else None,
        )


@dataclass
class PhaseDiagram:
    grid: SweepGrid
    cells: list  # [(Cell, CellStats)] in grid order
    metadata: dict = field(default_factory=dict)
    complete: bool = True

    def stats(self, activation=None, n=None, rho=None, leak=None, distribution=None) -> CellStats:
        """The unique cell matching the given coordinates."""
        hits = [
            s for c, s in self.cells
            if (activation is None or c.activation.family is Family.parse(activation))
            and (n is None or c.n == n)
            and (rho is None or c.rho == rho)
            and (leak is None or c.leak == leak)
            and (distribution is None or c.distribution == distribution)
        ]
        if len(hits) != 1:
            raise KeyError(f"{len(hits)} cells match the selection")
        return hits[0]

    def rows(self) -> list:
        g = self.grid
        out = []
        for cell, st in self.cells:
            out.append({
                **cell.key(),
                "seed_count": len(g.seeds),
                "trials": g.trials_per_cell,
                "convergence_fraction": st.convergence_fraction,
                "mean_conv_time": st.mean_convergence_time,
                "mean_final_distance": st.mean_final_distance,
                "all_seeds_converged": st.all_seeds_converged,
            })
        return out


# -- execution ---------------------------------------------------------------------


def _trial_seed(seed: int, trial: int, cell_hash: int) -> np.random.SeedSequence:
    return np.random.SeedSequence([int(seed), int(trial), cell_hash & 0xFFFFFFFF, cell_hash >> 32])


def _esp_spec(grid: SweepGrid, cell: Cell) -> EspTestSpec:
    cfg = ReservoirConfig(
        n=cell.n, rho_target=cell.rho, leak=cell.leak, density=grid.density,
        input_scaling=grid.input_scaling, input_dim=grid.input_dim,
    )
    return EspTestSpec(
        reservoir=cfg, activation=cell.activation, distribution=cell.distribution,
        horizon=grid.horizon, extended_horizon=grid.extended_horizon,
        threshold=grid.threshold, extend=grid.extend,
    )


def _run_block(args) -> list:
    """All trials of one (cell, seed); the unit of work handed to a worker."""
    grid, cell_index, seed = args
    cell = grid.cells()[cell_index]
    spec = _esp_spec(grid, cell)
    h = cell.hash64()
    out = []
    for trial in range(grid.trials_per_cell):
        r = run_pair(spec, _trial_seed(seed, trial, h))
        out.append(TrialOutcome(r.converged, r.convergence_time, r.final_distance, r.diverged, seed, trial))
    return out


def run_sweep(
    grid: SweepGrid,
    parallelism: int = 1,
    progress: Optional[Callable[[Cell, CellStats], None]] = None,
) -> PhaseDiagram:
    """Run every cell of the grid and aggregate per-cell statistics.

    An interrupt (KeyboardInterrupt) returns the cells finished so far with
    ``complete=False``.
    """
    cells = grid.cells()
    blocks = [(grid, i, s) for i in range(len(cells)) for s in grid.seeds]
    per_cell: dict = {i: [] for i in range(len(cells))}
    done_blocks: dict = {i: 0 for i in range(len(cells))}
    finished: dict = {}
    complete = True

    def collect(block, outcomes):
        i = block[1]
        per_cell[i].extend(outcomes)
        done_blocks[i] += 1
        if done_blocks[i] == len(grid.seeds):
            ordered = sorted(per_cell[i], key=lambda o: (o.seed, o.trial))
            finished[i] = CellStats.aggregate(ordered)
            if progress is not None:
                progress(cells[i], finished[i])

    try:
        if parallelism <= 1:
            for b in blocks:
                collect(b, _run_block(b))
        else:
            with ProcessPoolExecutor(max_workers=parallelism) as pool:
                for b, outcomes in zip(blocks, pool.map(_run_block, blocks)):
                    collect(b, outcomes)
    except KeyboardInterrupt:
        log.warning("sweep interrupted: %d of %d cells complete", len(finished), len(cells))
        complete = False

    chash = grid.config_hash()
    metadata = {
        "run_id": chash[:12],
        "config_hash": chash,
        "created": datetime.now(timezone.utc).isoformat(timespec="seconds"),
        "cells_total": len(cells),
        "cells_done": len(finished),
    }
    pairs = [(cells[i], finished[i]) for i in range(len(cells)) if i in finished]
    return PhaseDiagram(grid, pairs, metadata, complete and len(finished) == len(cells))


def scaling_run(
    activations: Sequence,
    n_values: Sequence[int] = PAPER_N_GRID,
    rho: float = 0.95,
    leak: float = 0.7,
    trials: int = DESK_TRIALS,
    seeds: Sequence[int] = (0,),
    distribution: str = "gaussian",
    parallelism: int = 1,
    **grid_kwargs,
) -> PhaseDiagram:
    """Convergence statistics per (activation, N) at fixed rho and leak."""
    grid = SweepGrid(
        rho_values=(rho,), leak_values=(leak,), n_values=tuple(n_values),
        activations=tuple(activations), distributions=(distribution,),
        trials_per_cell=trials, seeds=tuple(seeds), **grid_kwargs,
    )
    return run_sweep(grid, parallelism)


def extreme_rho_run(
    activation,
    rho_values: Sequence[float] = (1.0, 2.0, 5.0, 10.0, 20.0, 50.0, 100.0),
    leak: float = 0.7,
    n: int = 100,
    trials: int = DESK_TRIALS,
    seeds: Sequence[int] = (0,),
    distribution: str = "gaussian",
    parallelism: int = 1,
    **grid_kwargs,
) -> PhaseDiagram:
    """Convergence fraction per rho for one activation, far past rho = 1.

    Unbounded activations are allowed; their overflowing trials are counted as
    diverged.
    """
    spec = activation if isinstance(activation, ActivationSpec) else ActivationSpec.of(activation)
    if not spec.is_bounded:
        log.warning("%s is unbounded; divergent trials are expected at large rho", spec.name)
    grid = SweepGrid(
        rho_values=tuple(rho_values), leak_values=(leak,), n_values=(n,),
        activations=(spec,), distributions=(distribution,),
        trials_per_cell=trials, seeds=tuple(seeds), **grid_kwargs,
    )
    return run_sweep(grid, parallelism)


# -- emission -------------------------------------------------------------------------

CSV_COLUMNS = (
    "activation", "distribution", "n", "rho", "leak", "seed_count", "trials",
    "convergence_fraction", "mean_conv_time", "mean_final_distance", "all_seeds_converged",
)


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _jsonable(v):
    if isinstance(v, float) and not math.isfinite(v):
        return "inf" if v > 0 else ("-inf" if v < 0 else "nan")
    if isinstance(v, dict):
        return {k: _jsonable(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    return v


def _atomic_write(path: Path, text: str) -> Path:
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return path


def render_csv(diagram: PhaseDiagram) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for row in diagram.rows():
        w.writerow([_fmt(row[c]) for c in CSV_COLUMNS])
    return buf.getvalue()


def render_json(diagram: PhaseDiagram, include_timestamp: bool = False) -> str:
    meta = dict(diagram.metadata)
    if not include_timestamp:
        meta.pop("created", None)
    doc = {
        "metadata": meta,
        "complete": diagram.complete,
        "grid": diagram.grid.describe(),
        "cells": [
            {**cell.key(), "params": cell.activation.describe()["params"], **dataclasses.asdict(st)}
            for cell, st in diagram.cells
        ],
    }
    return json.dumps(_jsonable(doc), indent=2, sort_keys=True) + "\n"


def emit(diagram: PhaseDiagram, fmt: str, path, include_timestamp: bool = False) -> Path:
    """Write the diagram as CSV or JSON; the file appears whole or not at all.

    Output is byte-stable for identical diagrams: the wall-clock timestamp is
    left out unless ``include_timestamp`` is set.
    """
    if not diagram.cells:
        raise GridError("diagram has no cells to emit")
    path = Path(path)
    if not path.parent.is_dir():
        raise OSError(f"output directory {path.parent} does not exist")
    if fmt == "csv":
        text = render_csv(diagram)
    elif fmt == "json":
        text = render_json(diagram, include_timestamp)
    else:
        raise ValueError(f"unknown format {fmt!r}")
    return _atomic_write(path, text)


def emit_heatmaps(diagram: PhaseDiagram, out_dir, statistic: str = "fraction") -> list:
    """One ``rho,leak,value`` CSV per (activation, distribution, N).

    ``statistic`` is ``"fraction"`` (convergence fraction) or ``"all"``
    (1 if every trial of every seed converged, else 0).
    """
    if statistic not in ("fraction", "all"):
        raise ValueError("statistic must be 'fraction' or 'all'")
    out_dir = Path(out_dir)
    groups: dict = {}
    for cell, st in diagram.cells:
        groups.setdefault((cell.activation.name, cell.distribution, cell.n), []).append((cell, st))
    paths = []
    for (act, dist, n), items in groups.items():
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["rho", "leak", "value"])
        for cell, st in sorted(items, key=lambda p: (p[0].rho, p[0].leak)):
            value = st.convergence_fraction if statistic == "fraction" else float(st.all_seeds_converged)
            w.writerow([repr(cell.rho), repr(cell.leak), repr(value)])
        name = f"heatmap_{act}_{dist}_n{n}_{statistic}.csv"
        paths.append(_atomic_write(out_dir / name, buf.getvalue()))
    return paths
