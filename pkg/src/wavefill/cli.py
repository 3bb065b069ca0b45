"""Command-line interface: build-grid, estimate, experiment, synth.

A single declarative run config (JSON or TOML) drives every command;
flags override it (--out, --seed, --threads, and dotted --set paths).
Artifacts are written atomically (temp file + rename) together with a
manifest echoing the effective config, the master seed, the seed
derivation scheme, tool version, and wall time.

Exit codes: 0 success, 2 config error, 3 runtime error.
"""
from __future__ import annotations

import argparse
import datetime
import json
import os
import sys
import tempfile
import time

from . import __version__
from .corruption import CorruptionPlan, inject, write_records
from .errors import ConfigError, WavefillError
from .evaluate import (
    CORRUPTION_STREAM,
    EVAL_RECTANGULAR,
    run_ablations,
    run_rtse_sweep,
    run_tse_sweep,
    run_wave_sensitivity,
)
from .grid import GridSpec, build_matrix, ground_truth_matrix, rasterize
from .matrix_io import read_matrix, sidecar_path, write_heatmap_pgm, write_matrix
from .seeds import derive_seed
from .solver import SolverConfig, solve
from .synthetic import SyntheticFieldSpec, generate_synthetic
from .trajectory import load_trajectories, write_trajectories

SEED_DERIVATION_DOC = (
    "child = splitmix64 chain over (master, stream, labels); "
    "streams: 1=penetration sampling, 2=corruption; see wavefill.seeds"
)


# ---------------------------------------------------------------- config


def _load_config_file(path: str) -> dict:
    if not os.path.exists(path):
        raise ConfigError("config", f"file not found: {path}")
    with open(path, "rb") as fh:
        raw = fh.read()
    if path.endswith(".toml"):
        return _parse_toml(raw, path)
    try:
        return json.loads(raw.decode("utf-8"))
    except json.JSONDecodeError:
        return _parse_toml(raw, path)


def _parse_toml(raw: bytes, path: str) -> dict:
    try:
        import tomllib  # py311+
    except ModuleNotFoundError:
        import tomli as tomllib
    try:
        return tomllib.loads(raw.decode("utf-8"))
    except Exception as exc:
        raise ConfigError("config", f"cannot parse {path} as JSON or TOML: {exc}") from None


def _apply_override(config: dict, dotted: str) -> None:
    if "=" not in dotted:
        raise ConfigError("--set", f"expected PATH=VALUE, got {dotted!r}")
    path, raw_value = dotted.split("=", 1)
    try:
        value = json.loads(raw_value)
    except json.JSONDecodeError:
        value = raw_value
    keys = path.split(".")
    node = config
    for key in keys[:-1]:
        node = node.setdefault(key, {})
        if not isinstance(node, dict):
            raise ConfigError(path, "override path crosses a non-object value")
    node[keys[-1]] = value


def _require(config: dict, key: str, path: str):
    if key not in config:
        raise ConfigError(f"{path}.{key}", "missing required field")
    return config[key]


class RunConfig:
    """Validated run configuration resolved to typed objects."""

    def __init__(self, raw: dict):
        self.raw = raw
        dataset = _require(raw, "dataset", "")
        sources = [k for k in ("csv", "synthetic", "matrix") if k in dataset]
        if len(sources) != 1:
            raise ConfigError("dataset", "exactly one of 'csv', 'synthetic', or 'matrix' required")
        self.source_kind = sources[0]
        src = dataset[self.source_kind]

        if self.source_kind == "matrix":
            # a previously built StateMatrix CSV (+ sidecar); grid and
            # domain come from the sidecar, only estimate accepts this
            self.matrix_path = _require(src, "path", "dataset.matrix")
            if not os.path.exists(self.matrix_path):
                raise ConfigError("dataset.matrix.path", f"file not found: {self.matrix_path}")
            solver = dict(raw.get("solver", {}))
            if "lambda" in solver:
                solver["lambda_"] = solver.pop("lambda")
            try:
                self.solver = SolverConfig(**solver)
            except (WavefillError, TypeError) as exc:
                raise ConfigError("solver", str(exc)) from None
            self.grid = None
            self.experiment = raw.get("experiment", {})
            self.output_dir = raw.get("output_dir", "out")
            self.seed = int(raw.get("seed", 0))
            self.heatmap_v_max_kmh = float(raw.get("heatmap_v_max_kmh", 120.0))
            return

        if self.source_kind == "synthetic":
            spec_keys = {
                "free_flow_speed_kmh", "jam_speed_kmh", "wave_speed_kmh",
                "wave_band_count", "wave_band_width_s", "wave_spacing_s",
                "noise_std_kmh", "seed",
            }
            try:
                self.field_spec = SyntheticFieldSpec(
                    **{k: v for k, v in src.items() if k in spec_keys}
                )
            except WavefillError as exc:
                raise ConfigError("dataset.synthetic", str(exc)) from None
            self.segment_length_m = float(_require(src, "segment_length_m", "dataset.synthetic"))
            self.window_length_s = float(_require(src, "window_length_s", "dataset.synthetic"))
            self.vehicle_count = int(_require(src, "vehicle_count", "dataset.synthetic"))
            self.entry_headway_s = float(_require(src, "entry_headway_s", "dataset.synthetic"))
        else:
            self.csv_path = _require(src, "path", "dataset.csv")
            if not os.path.exists(self.csv_path):
                raise ConfigError("dataset.csv.path", f"file not found: {self.csv_path}")
            self.csv_columns = _require(src, "columns", "dataset.csv")
            self.csv_units = src.get("units", {})
            self.segment_length_m = float(_require(src, "segment_length_m", "dataset.csv"))
            self.window_length_s = float(_require(src, "window_length_s", "dataset.csv"))

        grid = _require(raw, "grid", "")
        try:
            self.grid = GridSpec(
                segment_length_m=self.segment_length_m,
                window_length_s=self.window_length_s,
                ds_m=float(_require(grid, "ds_m", "grid")),
                dt_s=float(_require(grid, "dt_s", "grid")),
                wave_speed_kmh=grid.get("wave_speed_kmh"),
            )
        except WavefillError as exc:
            raise ConfigError("grid", str(exc)) from None

        solver = dict(raw.get("solver", {}))
        if "lambda" in solver:
            solver["lambda_"] = solver.pop("lambda")
        try:
            self.solver = SolverConfig(**solver)
        except (WavefillError, TypeError) as exc:
            raise ConfigError("solver", str(exc)) from None

        self.experiment = raw.get("experiment", {})
        self.output_dir = raw.get("output_dir", "out")
        self.seed = int(raw.get("seed", 0))
        self.heatmap_v_max_kmh = float(raw.get("heatmap_v_max_kmh", 120.0))

    def load_dataset(self):
        if self.source_kind == "matrix":
            raise ConfigError("dataset", "this command needs trajectory data, not a matrix file")
        if self.source_kind == "synthetic":
            ts, field = generate_synthetic(
                self.field_spec,
                self.segment_length_m,
                self.window_length_s,
                self.vehicle_count,
                self.entry_headway_s,
            )
            return ts, field
        ts = load_trajectories(
            self.csv_path,
            self.csv_columns,
            self.csv_units,
            segment_length_m=self.segment_length_m,
            window_length_s=self.window_length_s,
        )
        return ts, None


# ---------------------------------------------------------------- output


def atomic_write_bytes(path: str, data: bytes) -> None:
    directory = os.path.dirname(path) or "."
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


class ArtifactWriter:
    """Collects artifacts in the output directory via atomic renames."""

    def __init__(self, out_dir: str):
        self.out_dir = out_dir
        os.makedirs(out_dir, exist_ok=True)
        self.outputs: list[str] = []

    def path(self, name: str) -> str:
        self.outputs.append(name)
        return os.path.join(self.out_dir, name)

    def write_with(self, name: str, writer_fn) -> None:
        """Run writer_fn against a temp path, then rename into place."""
        final = self.path(name)
        directory = os.path.dirname(final) or "."
        fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-")
        os.close(fd)
        try:
            writer_fn(tmp)
            os.replace(tmp, final)
        except BaseException:
            if os.path.exists(tmp):
                os.unlink(tmp)
            raise

    def write_json(self, name: str, payload: dict) -> None:
        data = (json.dumps(payload, indent=2, sort_keys=True) + "\n").encode("utf-8")
        atomic_write_bytes(self.path(name), data)


def write_matrix_artifacts(writer: ArtifactWriter, name: str, matrix, v_max: float) -> None:
    """Matrix CSV + sidecar + heatmap, each moved into place atomically."""
    final_csv = os.path.join(writer.out_dir, f"{name}.csv")
    tmp_csv = final_csv + ".part"
    write_matrix(matrix, tmp_csv)
    os.replace(sidecar_path(tmp_csv), sidecar_path(final_csv))
    os.replace(tmp_csv, final_csv)
    writer.outputs.extend([f"{name}.csv", f"{name}.csv.json"])
    writer.write_with(f"{name}.pgm", lambda tmp: write_heatmap_pgm(matrix, tmp, v_max))


def _manifest(command: str, cfg: RunConfig, writer: ArtifactWriter, t0: float) -> dict:
    return {
        "tool": "wavefill",
        "version": __version__,
        "command": command,
        "config": cfg.raw,
        "master_seed": cfg.seed,
        "seed_derivation": SEED_DERIVATION_DOC,
        "outputs": sorted(set(writer.outputs)),
        "wall_time_s": time.perf_counter() - t0,
        "created_utc": datetime.datetime.now(datetime.timezone.utc).isoformat(),
    }


# ---------------------------------------------------------------- commands


def cmd_build_grid(cfg: RunConfig, threads: int) -> int:
    t0 = time.perf_counter()
    ts, _ = cfg.load_dataset()
    matrix = build_matrix(ts, cfg.grid)
    writer = ArtifactWriter(cfg.output_dir)
    write_matrix_artifacts(writer, "matrix", matrix, cfg.heatmap_v_max_kmh)
    writer.write_json("manifest.json", _manifest("build-grid", cfg, writer, t0))
    observed = int(matrix.observed.sum())
    print(f"matrix {matrix.shape[0]}x{matrix.shape[1]}, {observed} observed cells -> {cfg.output_dir}")
    return 0


def cmd_estimate(cfg: RunConfig, threads: int) -> int:
    t0 = time.perf_counter()
    if cfg.source_kind == "matrix":
        matrix = read_matrix(cfg.matrix_path)
    else:
        ts, _ = cfg.load_dataset()
        matrix = build_matrix(ts, cfg.grid)
    writer = ArtifactWriter(cfg.output_dir)

    per_type = int(cfg.experiment.get("corruption_per_type", 0))
    records = []
    if per_type > 0:
        plan = CorruptionPlan(
            count_type1=per_type,
            count_type2=per_type,
            seed=derive_seed(cfg.seed, CORRUPTION_STREAM, 0),
        )
        matrix, records = inject(matrix, plan)
        writer.write_with("corruption_records.csv", lambda tmp: write_records(records, tmp))
        write_matrix_artifacts(writer, "matrix_tampered", matrix, cfg.heatmap_v_max_kmh)

    result = solve(matrix, cfg.solver)
    L_est = matrix.filled_with(result.L_hat)
    S_est = matrix.filled_with(result.S_hat)
    write_matrix_artifacts(writer, "L_hat", L_est, cfg.heatmap_v_max_kmh)
    write_matrix_artifacts(writer, "S_hat", S_est, cfg.heatmap_v_max_kmh)
    if matrix.grid.is_oblique:
        rect = rasterize(L_est, matrix.grid.rectangular())
        write_matrix_artifacts(writer, "L_hat_rectangular", rect, cfg.heatmap_v_max_kmh)

    report = {
        "iterations": result.iterations,
        "converged": result.converged,
        "residual_trace": result.residual_trace,
        "wall_time_s": result.wall_time_s,
        "config": cfg.raw,
        "master_seed": cfg.seed,
        "corruption_injected_per_type": per_type,
    }
    writer.write_json("convergence_report.json", report)
    writer.write_json("manifest.json", _manifest("estimate", cfg, writer, t0))
    print(
        f"solved in {result.iterations} iterations "
        f"({'converged' if result.converged else 'iteration cap'}) -> {cfg.output_dir}"
    )
    return 0


def cmd_experiment(cfg: RunConfig, threads: int) -> int:
    t0 = time.perf_counter()
    exp = cfg.experiment
    mode = exp.get("mode")
    if mode not in ("tse", "rtse", "sensitivity", "ablation"):
        raise ConfigError("experiment.mode", f"expected tse|rtse|sensitivity|ablation, got {mode!r}")
    ts, _ = cfg.load_dataset()
    reps = int(exp.get("reps", 1))
    eval_mode = exp.get("eval_mode", EVAL_RECTANGULAR)
    detect = float(exp.get("detect_threshold_kmh", 10.0))

    if mode == "tse":
        grids = [cfg.grid]
        if exp.get("compare_rectangular", False) and cfg.grid.is_oblique:
            grids.append(cfg.grid.rectangular())
        report = run_tse_sweep(
            ts, grids, cfg.solver, [float(r) for r in exp.get("rates", [0.05])],
            reps, cfg.seed, eval_mode=eval_mode, threads=threads,
        )
    elif mode == "rtse":
        report = run_rtse_sweep(
            ts, cfg.grid, cfg.solver, float(exp.get("rate", 0.10)),
            [int(x) for x in exp.get("corruption_levels", [0, 10, 20, 30, 40, 50])],
            reps, cfg.seed, eval_mode=eval_mode, detect_threshold_kmh=detect, threads=threads,
        )
    elif mode == "sensitivity":
        report = run_wave_sensitivity(
            ts, cfg.grid, cfg.solver,
            [float(w) for w in exp.get("wave_speeds", [-10, -12, -14, -16, -18, -20, -22, -24])],
            reps, cfg.seed, rate=float(exp.get("rate", 0.05)),
            eval_mode=eval_mode, threads=threads,
        )
    else:
        report = run_ablations(
            ts, cfg.grid, cfg.solver, reps, cfg.seed,
            rate=float(exp.get("rate", 0.10)),
            corruption_per_type=int(exp.get("corruption_per_type", 30)),
            eval_mode=eval_mode, detect_threshold_kmh=detect, threads=threads,
        )

    writer = ArtifactWriter(cfg.output_dir)
    writer.write_with("report.csv", lambda tmp: report.write_csv(tmp))
    writer.write_with("report.json", lambda tmp: report.write_json(tmp))
    writer.write_json("manifest.json", _manifest("experiment", cfg, writer, t0))
    for s in report.scenarios:
        label = ", ".join(f"{k}={v}" for k, v in s.scenario.items())
        print(f"{label}: RMSE {s.rmse_mean:.2f} ± {s.rmse_std:.2f}  MAE {s.mae_mean:.2f} ± {s.mae_std:.2f}")
    return 0


def cmd_synth(cfg: RunConfig, threads: int) -> int:
    t0 = time.perf_counter()
    if cfg.source_kind != "synthetic":
        raise ConfigError("dataset", "synth requires a synthetic dataset block")
    ts, field = cfg.load_dataset()
    writer = ArtifactWriter(cfg.output_dir)
    writer.write_with("trajectories.csv", lambda tmp: write_trajectories(ts, tmp))
    truth = ground_truth_matrix(ts, cfg.grid)
    write_matrix_artifacts(writer, "ground_truth", truth, cfg.heatmap_v_max_kmh)
    field_doc = {
        "spec": {
            "free_flow_speed_kmh": field.spec.free_flow_speed_kmh,
            "jam_speed_kmh": field.spec.jam_speed_kmh,
            "wave_speed_kmh": field.spec.wave_speed_kmh,
            "wave_band_count": field.spec.wave_band_count,
            "wave_band_width_s": field.spec.wave_band_width_s,
            "wave_spacing_s": field.spec.wave_spacing_s,
            "noise_std_kmh": field.spec.noise_std_kmh,
            "seed": field.spec.seed,
        },
        "band_intervals_tau_s": [list(b) for b in field.band_intervals],
        "vehicles": ts.n_vehicles,
        "points": ts.n_points,
    }
    writer.write_json("field.json", field_doc)
    writer.write_json("manifest.json", _manifest("synth", cfg, writer, t0))
    print(f"{ts.n_vehicles} vehicles, {ts.n_points} points -> {cfg.output_dir}")
    return 0


COMMANDS = {
    "build-grid": cmd_build_grid,
    "estimate": cmd_estimate,
    "experiment": cmd_experiment,
    "synth": cmd_synth,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="wavefill",
        description="Traffic-speed field reconstruction from sparse trajectories",
    )
    parser.add_argument("--version", action="version", version=f"wavefill {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="run config (JSON or TOML)")
        p.add_argument("--out", help="output directory (overrides config)")
        p.add_argument("--seed", type=int, help="master seed (overrides config)")
        p.add_argument("--threads", type=int, default=1, help="repetition parallelism")
        p.add_argument(
            "--set",
            dest="overrides",
            action="append",
            default=[],
            metavar="PATH=VALUE",
            help="dotted config override, e.g. --set solver.lambda=0.04",
        )
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        raw = _load_config_file(args.config)
        for item in args.overrides:
            _apply_override(raw, item)
        if args.out:
            raw["output_dir"] = args.out
        if args.seed is not None:
            raw["seed"] = args.seed
        cfg = RunConfig(raw)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    try:
        return COMMANDS[args.command](cfg, max(1, args.threads))
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except WavefillError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
