"""Monte-Carlo evaluation protocol: trials, scoring, aggregation, smoothing."""

from __future__ import annotations

import json
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Sequence

import numpy as np

from .errors import ConfigError
from .geometry import DirectionGrid, HybridConfig, MicArray, build_direction_grid, build_hybrid
from .metrics import EnergyMap, score_map
from .modal import ModalBasis, svd_decompose, truncate
from .propagation import (ObservationBlock, RoomSpec, SceneSpec, draw_directions,
                          plane_wave_matrix, synthesize_scene)
from .solver import IrlsParams, recover, recover_joint

DEFAULT_FREQS = tuple(float(f) for f in np.linspace(200.0, 4000.0, 20))


@dataclass(frozen=True)
class ExperimentConfig:
    """Full specification of a Monte-Carlo sweep; the table is a pure function of it."""

    methods: tuple[str, ...] = ("sma", "joint", "modal-16")
    source_counts: tuple[int, ...] = (2, 10)
    distances_m: tuple[float, ...] = (2.5,)
    trials: int = 10
    freqs: tuple[float, ...] = DEFAULT_FREQS
    room: RoomSpec | None = RoomSpec((10.0, 8.0, 3.0), rt60=0.3, max_reflection_order=3)
    snr_db: float = 30.0
    master_seed: int = 0
    frames: int = 32
    min_separation_deg: float = 15.0
    grid_level: int = 3
    array_config: HybridConfig = field(default_factory=HybridConfig.default)
    solver: IrlsParams = field(default_factory=IrlsParams)
    modal_solver: IrlsParams | None = None
    activity: float = 1.0
    frame_hop_s: float = 0.0
    tail_rel: float = 0.0
    snap_to_grid: bool = False    # snap drawn directions to grid vertices (regression floor)

    def __post_init__(self):
        if not self.methods:
            raise ConfigError("methods list must not be empty")
        if not self.source_counts or not self.distances_m or not self.freqs:
            raise ConfigError("source_counts, distances_m and freqs must be non-empty")
        if self.trials < 1:
            raise ConfigError("trials must be >= 1")
        for m in self.methods:
            parse_method(m)

    @property
    def conditions(self) -> list[tuple[int, float]]:
        return [(n, d) for n in self.source_counts for d in self.distances_m]

    def cache_key(self) -> str:
        ac = self.array_config
        return json.dumps([ac.sma_count, ac.sma_radius_m,
                           [(l.count, l.spacing_m, l.offset, l.axis) for l in ac.lmas],
                           self.grid_level, list(self.freqs), sorted(set(self.methods))])

    @staticmethod
    def from_json(doc: str | dict) -> "ExperimentConfig":
        if isinstance(doc, str):
            try:
                doc = json.loads(doc)
            except json.JSONDecodeError as exc:
                raise ConfigError(f"invalid experiment config JSON: {exc}") from exc
        if not isinstance(doc, dict):
            raise ConfigError("experiment config must be a JSON object")
        room = None
        if not doc.get("free_field", False):
            rm = doc.get("room", {"dims_m": [10.0, 8.0, 3.0], "rt60_s": 0.3, "max_order": 3})
            room = RoomSpec(tuple(rm["dims_m"]), float(rm["rt60_s"]),
                            int(rm.get("max_order", 3)),
                            tuple(rm["array_center"]) if "array_center" in rm else None)
        solver = IrlsParams(**doc.get("solver", {}))
        modal_solver = IrlsParams(**doc["modal_solver"]) if "modal_solver" in doc else None
        array_config = (HybridConfig.from_json(doc["array"]) if "array" in doc
                        else HybridConfig.default())
        freqs = doc.get("freqs")
        if freqs is None and "band" in doc:
            b = doc["band"]
            freqs = np.linspace(float(b["start_hz"]), float(b["stop_hz"]), int(b["count"])).tolist()
        return ExperimentConfig(
            methods=tuple(doc.get("methods", ["sma", "joint", "modal-16"])),
            source_counts=tuple(int(n) for n in doc.get("source_counts", [2, 10])),
            distances_m=tuple(float(d) for d in doc.get("distances_m", [2.5])),
            trials=int(doc.get("trials", 10)),
            freqs=tuple(float(f) for f in freqs) if freqs else DEFAULT_FREQS,
            room=room,
            snr_db=float(doc.get("snr_db", 30.0)),
            master_seed=int(doc.get("master_seed", doc.get("seed", 0))),
            frames=int(doc.get("frames", 32)),
            min_separation_deg=float(doc.get("min_separation_deg", 15.0)),
            grid_level=int(doc.get("grid_level", 3)),
            array_config=array_config,
            solver=solver,
            modal_solver=modal_solver,
            activity=float(doc.get("activity", 1.0)),
            frame_hop_s=float(doc.get("frame_hop_s", 0.0)),
            tail_rel=float(doc.get("tail_rel", 0.0)),
            snap_to_grid=bool(doc.get("snap_to_grid", False)),
        )


def parse_method(name: str) -> tuple[str, int | None]:
    """Split a method string into (kind, modal rank)."""
    if name in ("sma", "sma_only"):
        return "sma", None
    if name == "joint":
        return "joint", None
    if name.startswith("modal-"):
        try:
            return "modal", int(name.split("-", 1)[1])
        except ValueError:
            pass
    raise ConfigError(f"unknown method {name!r} (expected sma | joint | modal-K)")


@dataclass
class ResultTable:
    rows: list[dict]
    aggregates: list[dict]

    ROW_FIELDS = ("method", "n_sources", "distance_m", "trial", "frequency",
                  "E", "angular_error_deg", "miss_rate", "ok")
    AGG_FIELDS = ("method", "n_sources", "distance_m", "frequency",
                  "E_mean", "E_stderr", "angular_error_deg_mean",
                  "angular_error_deg_stderr", "miss_rate_mean", "n_trials")


class _Workspace:
    """Per-frequency dictionaries and modal bases, built once per config."""

    def __init__(self, config: ExperimentConfig):
        self.grid: DirectionGrid = build_direction_grid(config.grid_level)
        self.array: MicArray = build_hybrid(config.array_config)
        self.n_sma = sum(1 for l in self.array.labels if l == "SMA")
        sma_positions = self.array.positions[: self.n_sma]
        self.sma = MicArray(sma_positions, self.array.labels[: self.n_sma], name="sma")
        modal_ranks = sorted({parse_method(m)[1] for m in config.methods
                              if parse_method(m)[0] == "modal"})
        self.H_full = {}
        self.H_sma = {}
        self.bases: dict[tuple[float, int], ModalBasis] = {}
        for f in config.freqs:
            self.H_full[f] = plane_wave_matrix(self.array, self.grid, f)
            self.H_sma[f] = plane_wave_matrix(self.sma, self.grid, f)
            if modal_ranks:
                full = svd_decompose(self.H_full[f])
                for K in modal_ranks:
                    if 1 <= K <= full.rank:       # invalid ranks surface as flagged rows
                        self.bases[(f, K)] = truncate(full, K)


@lru_cache(maxsize=4)
def _workspace_cached(key: str, config_json: str) -> _Workspace:
    del key
    return _Workspace(_CONFIG_REGISTRY[config_json])


_CONFIG_REGISTRY: dict[str, ExperimentConfig] = {}


def _workspace(config: ExperimentConfig) -> _Workspace:
    key = config.cache_key()
    _CONFIG_REGISTRY[key] = config
    return _workspace_cached(key, key)


def _cell_seed(config: ExperimentConfig, n_sources: int, distance: float, trial: int) -> list[int]:
    return [config.master_seed, n_sources, int(round(distance * 1000)), trial]


def run_trial(config: ExperimentConfig, condition: tuple[int, float], trial_index: int) -> list[dict]:
    """All rows for one (condition, trial) cell. Pure function of its arguments."""
    n_sources, distance = condition
    ws = _workspace(config)
    seed = _cell_seed(config, n_sources, distance, trial_index)
    rng = np.random.default_rng(np.random.SeedSequence(seed + [0xD1]))
    dirs = draw_directions(rng, n_sources, config.min_separation_deg,
                           room=config.room, distance=distance)
    if config.snap_to_grid:
        dirs = np.array([ws.grid.directions[ws.grid.nearest_vertex(d)] for d in dirs])
    scene = SceneSpec(
        n_sources=n_sources, distance_m=distance, room=config.room,
        frames=config.frames, snr_db=config.snr_db,
        activity=config.activity, frame_hop_s=config.frame_hop_s,
        tail_rel=config.tail_rel, min_separation_deg=config.min_separation_deg,
        directions=tuple(tuple(d) for d in dirs),
    )
    blocks = synthesize_scene(scene, ws.array, config.freqs, seed=seed)
    rows = []
    for block in blocks:
        for method in config.methods:
            kind, K = parse_method(method)
            row = {"method": method, "n_sources": n_sources, "distance_m": distance,
                   "trial": trial_index, "frequency": block.frequency,
                   "E": float("nan"), "angular_error_deg": float("nan"),
                   "miss_rate": float("nan"), "ok": False}
            try:
                if kind == "sma":
                    sub = ObservationBlock(block.frequency, block.snapshots[: ws.n_sma],
                                           block.truth_directions, block.truth_distances,
                                           block.seed)
                    sol = recover_joint(sub, ws.H_sma[block.frequency], config.solver)
                    sol.method = "sma"
                elif kind == "joint":
                    sol = recover_joint(block, ws.H_full[block.frequency], config.solver)
                else:
                    params = config.modal_solver or config.solver
                    sol = recover(block, ws.bases[(block.frequency, K)], ws.grid, params)
                emap = EnergyMap(ws.grid, sol.energy, label=method)
                E, err_deg, miss = score_map(emap, block.truth_directions)
                row.update(E=E, angular_error_deg=err_deg, miss_rate=miss, ok=True)
            except Exception:
                pass          # flagged row survives; the sweep must not abort
            rows.append(row)
    return rows


def _run_cell(args: tuple) -> list[dict]:
    config, condition, trial = args
    return run_trial(config, condition, trial)


def thread_budget() -> int:
    """Worker count from MODAL_SR_THREADS; 0 or unset means auto."""
    raw = os.environ.get("MODAL_SR_THREADS", "0")
    try:
        n = int(raw)
    except ValueError:
        n = 0
    if n <= 0:
        n = os.cpu_count() or 1
    return max(1, n)


def run_monte_carlo(config: ExperimentConfig) -> ResultTable:
    """Every (condition, trial) cell, merged by key; schedule-independent."""
    cells = [(config, cond, t) for cond in config.conditions for t in range(config.trials)]
    workers = min(thread_budget(), len(cells))
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            chunks = list(pool.map(_run_cell, cells))
    else:
        chunks = [_run_cell(c) for c in cells]
    rows = [r for chunk in chunks for r in chunk]
    rows.sort(key=lambda r: (r["method"], r["n_sources"], r["distance_m"],
                             r["trial"], r["frequency"]))
    return ResultTable(rows=rows, aggregates=aggregate(rows))


def aggregate(rows: list[dict]) -> list[dict]:
    """Mean and standard error per (method, condition, frequency) over trials."""
    groups: dict[tuple, list[dict]] = {}
    for r in rows:
        if not r["ok"]:
            continue
        groups.setdefault((r["method"], r["n_sources"], r["distance_m"], r["frequency"]), []).append(r)
    out = []
    for key in sorted(groups):
        rs = groups[key]
        E = np.array([r["E"] for r in rs])
        A = np.array([r["angular_error_deg"] for r in rs])
        miss = np.array([r["miss_rate"] for r in rs])
        n = len(rs)
        sem = (lambda x: float(x.std(ddof=1) / np.sqrt(n)) if n > 1 else 0.0)
        out.append({
            "method": key[0], "n_sources": key[1], "distance_m": key[2], "frequency": key[3],
            "E_mean": float(E.mean()), "E_stderr": sem(E),
            "angular_error_deg_mean": float(A.mean()), "angular_error_deg_stderr": sem(A),
            "miss_rate_mean": float(miss.mean()), "n_trials": n,
        })
    return out


def band_averages(table: ResultTable, metric: str = "E") -> dict[tuple, np.ndarray]:
    """Per-trial band averages keyed by (method, n_sources, distance).

    Each value is the vector over trials of the mean metric across
    frequencies, the unit used for paired method comparisons.
    """
    col = {"E": "E", "angular": "angular_error_deg", "miss": "miss_rate"}[metric]
    acc: dict[tuple, dict[int, list[float]]] = {}
    for r in table.rows:
        if not r["ok"]:
            continue
        key = (r["method"], r["n_sources"], r["distance_m"])
        acc.setdefault(key, {}).setdefault(r["trial"], []).append(r[col])
    return {key: np.array([np.mean(v) for _, v in sorted(trials.items())])
            for key, trials in acc.items()}


def moving_average(series: Sequence[tuple[float, float]], width: float) -> list[tuple[float, float]]:
    """Centered boxcar over all points within +-width/2; truncated at the ends."""
    if width <= 0:
        raise ValueError("window width must be positive")
    freqs = np.array([f for f, _ in series])
    if np.any(np.diff(freqs) < 0):
        raise ValueError("series must be sorted by frequency")
    vals = np.array([v for _, v in series])
    half = width / 2.0
    out = []
    for f in freqs:
        mask = np.abs(freqs - f) <= half + 1e-12
        out.append((float(f), float(vals[mask].mean())))
    return out


def figure_tables(table: ResultTable, smooth_hz: float = 200.0) -> dict[str, list[dict]]:
    """Smoothed per-distance metric curves, one table per report figure.

    Keys look like "fig4-dist2.5" (mismatch) and "fig5-dist2.5" (angular
    error); each row holds the smoothed band value per method.
    """
    out: dict[str, list[dict]] = {}
    for fig, metric in (("fig4", "E_mean"), ("fig5", "angular_error_deg_mean")):
        distances = sorted({a["distance_m"] for a in table.aggregates})
        for dist in distances:
            aggs = [a for a in table.aggregates if a["distance_m"] == dist]
            methods = sorted({a["method"] for a in aggs})
            freqs = sorted({a["frequency"] for a in aggs})
            rows = []
            smoothed = {}
            for method in methods:
                per_f: dict[float, list[float]] = {}
                for a in aggs:
                    if a["method"] == method:
                        per_f.setdefault(a["frequency"], []).append(a[metric])
                series = [(f, float(np.mean(per_f[f]))) for f in freqs if f in per_f]
                smoothed[method] = dict(moving_average(series, smooth_hz))
            for f in freqs:
                row = {"frequency": f}
                for method in methods:
                    row[method] = smoothed[method].get(f, float("nan"))
                rows.append(row)
            out[f"{fig}-dist{dist:g}"] = rows
    return out
