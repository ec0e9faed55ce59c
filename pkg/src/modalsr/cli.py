"""Command-line entry point: geometry, dictionary, modes, simulate, recover, evaluate, sweep."""

from __future__ import annotations

import argparse
import json
import os
import sys
import tempfile
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__
from .errors import ConfigError, NumericalError, RankDeficiencyError, SceneError, SfmxFormatError
from .experiments import (DEFAULT_FREQS, ExperimentConfig, ResultTable, figure_tables,
                          parse_method, run_monte_carlo)
from .geometry import HybridConfig, MicArray, build_direction_grid, build_hybrid
from .metrics import EnergyMap, score_map
from .modal import angle_sweep, svd_decompose, truncate
from .propagation import ObservationBlock, SceneSpec, plane_wave_matrix, synthesize_scene
from .sfmx import read_matrix, write_matrix
from .solver import IrlsParams, recover, recover_joint


def _fmt(value) -> str:
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _write_text(path: str | Path, text: str) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name, suffix=".tmp")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _csv(fieldnames: list[str], rows: list[dict], deterministic: bool) -> str:
    lines = []
    if not deterministic:
        lines.append(f"# generated {datetime.now(timezone.utc).isoformat()}")
    lines.append(",".join(fieldnames))
    for r in rows:
        lines.append(",".join(_fmt(r.get(k, "")) for k in fieldnames))
    return "\n".join(lines) + "\n"


def _load_json(path: str | None) -> dict:
    if path is None:
        return {}
    try:
        return json.loads(Path(path).read_text())
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}")
    except json.JSONDecodeError as exc:
        raise ConfigError(f"invalid JSON in {path}: {exc}")


def _parse_freqs(args) -> list[float]:
    if args.freqs:
        return [float(x) for x in args.freqs.split(",")]
    return list(DEFAULT_FREQS)


def _array_from_config(path: str | None) -> MicArray:
    doc = _load_json(path)
    cfg = HybridConfig.from_json(doc) if doc else HybridConfig.default()
    return build_hybrid(cfg)


def cmd_geometry(args) -> int:
    array = _array_from_config(args.config)
    rows = [{"x": float(p[0]), "y": float(p[1]), "z": float(p[2]), "label": l}
            for p, l in zip(array.positions, array.labels)]
    _write_text(args.out, _csv(["x", "y", "z", "label"], rows, args.deterministic))
    print(f"wrote {len(rows)} microphones to {args.out}")
    return 0


def cmd_dictionary(args) -> int:
    array = _array_from_config(args.config)
    grid = build_direction_grid(args.grid_level)
    freqs = _parse_freqs(args)
    mats = np.stack([plane_wave_matrix(array, grid, f).entries for f in freqs])
    out = Path(args.out)
    write_matrix(out, mats)
    meta = {"frequencies": freqs, "grid_level": args.grid_level,
            "array": {"mics": len(array)}, "dims": list(mats.shape)}
    _write_text(out.with_suffix(out.suffix + ".json"), json.dumps(meta, indent=2) + "\n")
    print(f"wrote {mats.shape} dictionary to {out}")
    return 0


def cmd_modes(args) -> int:
    hybrid = _array_from_config(args.config)
    n_sma = sum(1 for l in hybrid.labels if l == "SMA")
    sma = MicArray(hybrid.positions[:n_sma], hybrid.labels[:n_sma], name="sma")
    grid = build_direction_grid(args.grid_level)
    freqs = _parse_freqs(args)
    k_list = [int(k) for k in args.k_list.split(",")]
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    sigma_rows = []
    spectra = {}
    pattern_rows = []
    for f in freqs:
        basis = svd_decompose(plane_wave_matrix(hybrid, grid, f))
        spectra[f] = basis.sigma
        sigma_rows += [{"frequency": f, "index": i, "sigma": float(s)}
                       for i, s in enumerate(basis.sigma)]
        VK = truncate(basis, min(16, basis.rank)).V
        for k in range(VK.shape[1]):
            for q in range(VK.shape[0]):
                pattern_rows.append({"frequency": f, "direction_index": q, "mode_index": k,
                                     "re": float(VK[q, k].real), "im": float(VK[q, k].imag)})
    _write_text(out / "singular_values.csv",
                _csv(["frequency", "index", "sigma"], sigma_rows, args.deterministic))
    _write_text(out / "mode_patterns.csv",
                _csv(["frequency", "direction_index", "mode_index", "re", "im"],
                     pattern_rows, args.deterministic))

    sweep_rows = angle_sweep([sma, hybrid], grid, freqs, k_list)
    _write_text(out / "angle_sweep.csv",
                _csv(["array", "frequency", "K", "mean_angle_deg"], sweep_rows,
                     args.deterministic))

    if args.figures:
        from . import report

        report.save_angle_sweep(sweep_rows, out / "angle_sweep.png")
        report.save_singular_values(spectra, out / "singular_values.png")
        f0 = freqs[len(freqs) // 2]
        basis = svd_decompose(plane_wave_matrix(hybrid, grid, f0))
        report.save_mode_patterns(grid.directions, basis.V, out / f"modes_{f0:g}Hz.png")
    print(f"wrote modal analysis tables to {out}")
    return 0


def cmd_simulate(args) -> int:
    doc = _load_json(args.config)
    scene = SceneSpec.from_json(doc)
    if args.seed is not None:
        scene = SceneSpec.from_json({**doc, "seed": args.seed})
    array = _array_from_config(args.array_config)
    freqs = _parse_freqs(args)
    blocks = synthesize_scene(scene, array, freqs, seed=scene.seed)
    cube = np.stack([b.snapshots for b in blocks])
    out = Path(args.out)
    write_matrix(out.with_suffix(".sfmx"), cube)
    meta = {
        "frequencies": [b.frequency for b in blocks],
        "truth_directions": blocks[0].truth_directions.tolist(),
        "truth_distances": blocks[0].truth_distances.tolist(),
        "seed": scene.seed,
        "snr_db": scene.snr_db,
        "frames": scene.frames,
        "grid_level": args.grid_level,
        "free_field": scene.room is None,
        "array_config": args.array_config,
    }
    if scene.room is not None:
        meta["room"] = {"dims_m": list(scene.room.dimensions), "rt60_s": scene.room.rt60,
                        "max_order": scene.room.max_reflection_order}
    _write_text(out.with_suffix(".json"), json.dumps(meta, indent=2) + "\n")
    print(f"wrote {cube.shape} observations to {out.with_suffix('.sfmx')}")
    return 0


def _solver_params(args) -> IrlsParams:
    kw = {}
    if args.p is not None:
        kw["p_final"] = args.p
    if args.max_iters is not None:
        kw["max_iters"] = args.max_iters
    if args.grouping is not None:
        kw["grouping"] = args.grouping
    return IrlsParams(**kw)


def cmd_recover(args) -> int:
    inp = Path(args.input)
    meta = _load_json(str(inp.with_suffix(".json")))
    cube = read_matrix(inp.with_suffix(".sfmx"))
    freqs = meta["frequencies"]
    grid = build_direction_grid(int(meta.get("grid_level", args.grid_level)))
    array = _array_from_config(meta.get("array_config"))
    kind, K = parse_method(args.method if args.method != "modal" else f"modal-{args.modes}")
    params = _solver_params(args)
    n_sma = sum(1 for l in array.labels if l == "SMA")

    coeffs = []
    energies = []
    diags = []
    truth = np.asarray(meta["truth_directions"], dtype=float)
    dists = np.asarray(meta["truth_distances"], dtype=float)
    for fi, f in enumerate(freqs):
        block = ObservationBlock(f, cube[fi], truth, dists, int(meta.get("seed", 0)))
        if kind == "sma":
            sub = ObservationBlock(f, cube[fi][:n_sma], truth, dists, block.seed)
            H = plane_wave_matrix(MicArray(array.positions[:n_sma], array.labels[:n_sma],
                                           name="sma"), grid, f)
            sol = recover_joint(sub, H, params)
        elif kind == "joint":
            sol = recover_joint(block, plane_wave_matrix(array, grid, f), params)
        else:
            basis = truncate(svd_decompose(plane_wave_matrix(array, grid, f)), K)
            sol = recover(block, basis, grid, params)
        coeffs.append(sol.coefficients)
        energies.append(sol.energy)
        diags.append({"frequency": f, "iterations": sol.diagnostics.iterations,
                      "residual": sol.diagnostics.final_residual,
                      "psi": sol.diagnostics.psi, "converged": sol.diagnostics.converged})
    out = Path(args.out)
    write_matrix(out.with_suffix(".sfmx"), np.stack(coeffs))
    write_matrix(out.with_suffix(".energy.sfmx"), np.stack(energies))
    _write_text(out.with_suffix(".json"), json.dumps({
        "method": args.method if kind != "modal" else f"modal-{K}",
        "modes": K, "frequencies": freqs,
        "grid_level": int(meta.get("grid_level", args.grid_level)),
        "truth_directions": truth.tolist(),
        "diagnostics": diags,
    }, indent=2) + "\n")
    print(f"recovered {len(freqs)} frequencies to {out.with_suffix('.sfmx')}")
    return 0


def cmd_evaluate(args) -> int:
    sol_meta = _load_json(str(Path(args.solution).with_suffix(".json")))
    energies = read_matrix(Path(args.solution).with_suffix(".energy.sfmx"))
    grid = build_direction_grid(int(sol_meta["grid_level"]))
    truth = np.asarray(sol_meta["truth_directions"], dtype=float)
    rows = []
    for fi, f in enumerate(sol_meta["frequencies"]):
        emap = EnergyMap(grid, energies[fi], label=sol_meta["method"])
        E, err, miss = score_map(emap, truth)
        rows.append({"frequency": f, "method": sol_meta["method"], "E": E,
                     "angular_error_deg": err, "miss_rate": miss})
    _write_text(args.out, _csv(["frequency", "method", "E", "angular_error_deg", "miss_rate"],
                               rows, args.deterministic))
    print(f"wrote {len(rows)} evaluation rows to {args.out}")
    return 0


def cmd_sweep(args) -> int:
    doc = _load_json(args.config)
    config = ExperimentConfig.from_json(doc) if doc else ExperimentConfig()
    if args.seed is not None:
        config = ExperimentConfig.from_json({**doc, "master_seed": args.seed})
    table = run_monte_carlo(config)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    _write_text(out / "raw.csv", _csv(list(ResultTable.ROW_FIELDS), table.rows,
                                      args.deterministic))
    _write_text(out / "aggregate.csv", _csv(list(ResultTable.AGG_FIELDS), table.aggregates,
                                            args.deterministic))
    figures = figure_tables(table)
    for name, rows in figures.items():
        fields = list(rows[0].keys())
        _write_text(out / f"{name}.csv", _csv(fields, rows, args.deterministic))
        if args.figures:
            from . import report

            ylabel = "energy map mismatch" if name.startswith("fig4") else "angular error / deg"
            report.save_metric_curves(rows, out / f"{name}.png", ylabel, title=name)
    print(f"wrote sweep results ({len(table.rows)} rows) to {out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="modalsr",
        description="Sparse plane-wave sound-field reconstruction with SVD modal dictionaries",
    )
    parser.add_argument("--version", action="version", version=f"modalsr {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, out_required=True):
        p.add_argument("--config", help="JSON configuration file")
        p.add_argument("--out", required=out_required, help="output path")
        p.add_argument("--seed", type=int, default=None, help="master seed override")
        p.add_argument("--deterministic", action="store_true",
                       help="omit timestamp headers for byte-reproducible output")

    p = sub.add_parser("geometry", help="dump microphone positions as CSV")
    common(p)

    p = sub.add_parser("dictionary", help="write the plane-wave transfer dictionary (SFMX)")
    common(p)
    p.add_argument("--grid-level", type=int, default=3)
    p.add_argument("--freqs", help="comma-separated frequencies in Hz")

    p = sub.add_parser("modes", help="singular values, angle sweeps and mode patterns")
    common(p)
    p.add_argument("--grid-level", type=int, default=3)
    p.add_argument("--freqs", help="comma-separated frequencies in Hz")
    p.add_argument("--k-list", default="9,16,25")
    p.add_argument("--figures", action=argparse.BooleanOptionalAction, default=True)

    p = sub.add_parser("simulate", help="synthesize reverberant observations")
    common(p)
    p.add_argument("--array-config", help="hybrid array JSON (default: standard hybrid)")
    p.add_argument("--grid-level", type=int, default=3)
    p.add_argument("--freqs", help="comma-separated frequencies in Hz")

    p = sub.add_parser("recover", help="sparse recovery from simulated observations")
    common(p)
    p.add_argument("--input", required=True, help="simulate output prefix")
    p.add_argument("--method", required=True, choices=["sma", "joint", "modal"])
    p.add_argument("--modes", type=int, default=16, help="modal truncation rank K")
    p.add_argument("--p", type=float, default=None, help="final norm exponent")
    p.add_argument("--max-iters", type=int, default=None)
    p.add_argument("--grouping", choices=["joint", "per_frame"], default=None)
    p.add_argument("--grid-level", type=int, default=3)

    p = sub.add_parser("evaluate", help="score a recovered solution against its truth")
    common(p)
    p.add_argument("--solution", required=True, help="recover output prefix")

    p = sub.add_parser("sweep", help="Monte-Carlo sweep to figure-ready tables")
    common(p)
    p.add_argument("--figures", action=argparse.BooleanOptionalAction, default=True)
    return parser


_COMMANDS = {
    "geometry": cmd_geometry,
    "dictionary": cmd_dictionary,
    "modes": cmd_modes,
    "simulate": cmd_simulate,
    "recover": cmd_recover,
    "evaluate": cmd_evaluate,
    "sweep": cmd_sweep,
}


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return _COMMANDS[args.command](args)
    except (ConfigError, SceneError, SfmxFormatError, NumericalError,
            RankDeficiencyError, ValueError, OSError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


def entry() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entry()
