"""Command-line interface for hologram synthesis and evaluation.

Subcommands: ``propagate`` (diffract an input image and report the kernel
regime), ``gs`` (alternating-projection baseline), ``gd`` (unfolded gradient
descent without a denoiser), ``unfold-train`` (train the learned denoiser
stages), ``unfold-infer`` (run the unfolded solver with trained weights),
and ``eval`` (aggregate a metrics CSV into per-method means).

Configuration is an INI-style file (``[section]`` headers over
``key = value`` lines) passed via ``--config``; every key has a flag of the
same name that overrides the file. Targets are resized to the configured
grid, solved, and written next to a ``method,image,psnr,ssim,wall_ms``
metrics row. Exit codes: 0 success, 2 configuration error, 3 data/I-O
error, 4 numeric failure.
"""

from __future__ import annotations

import argparse
import configparser
import os
import sys
import time
from dataclasses import dataclass

import numpy as np

from .data import imread_resized, imwrite_gray, list_images, to_uint8
from .errors import ConfigError, DataError, NumericError
from .fields import ComplexField
from .metrics import psnr as psnr_metric, ssim as ssim_metric
from .network import DEFAULT_CHANNELS
from .propagation import OpticalConfig, build_plan, propagate
from .solvers import DENOISER_NAMES, DenoiserKind, UnfoldConfig, gs_solve, hqs_unfold
from .training import TrainConfig, train
from .weights_io import load_weights, save_weights

__all__ = ["RunConfig", "Paths", "METRICS_HEADER", "main"]

METRICS_HEADER = "method,image,psnr,ssim,wall_ms"

# key -> (config-file section, parser, default); every key is also a flag
_KEYS = {
    "wavelength": ("optical", float, 520e-9),
    "pitch": ("optical", float, 8e-6),
    "width": ("optical", int, 1920),
    "height": ("optical", int, 1080),
    "distance": ("optical", float, 0.2),
    "stages": ("solver", int, 3),
    "step": ("solver", float, 1.0),
    "tv_weight": ("solver", float, 0.01),
    "denoiser": ("solver", str, "pcd"),
    "iters": ("solver", int, 50),
    "lr": ("train", float, 1e-4),
    "epochs": ("train", int, 30),
    "batch_size": ("train", int, 1),
    "val_fraction": ("train", float, 0.2),
    "channels": ("train", int, DEFAULT_CHANNELS),
    "input": ("paths", str, None),
    "out": ("paths", str, "."),
    "weights": ("paths", str, None),
    "metrics_csv": ("paths", str, None),
    "seed": ("run", int, 0),
}


@dataclass(frozen=True)
class Paths:
    """Resolved file locations for one command invocation."""

    input: str | None
    out: str
    weights: str | None
    metrics_csv: str


@dataclass(frozen=True)
class RunConfig:
    """Everything a command needs, merged from defaults, file, and flags."""

    optical: OpticalConfig
    solver: UnfoldConfig
    train: TrainConfig
    paths: Paths
    seed: int
    distance: float
    iters: int
    channels: int


# ---------------------------------------------------------------------------
# configuration resolution


def _read_config_file(path) -> dict:
    if not os.path.isfile(path):
        raise DataError(f"config file not found: {path}")
    parser = configparser.ConfigParser()
    try:
        parser.read(path)
    except configparser.Error as exc:
        raise ConfigError(f"cannot parse config file {path}: {exc}") from None
    values = {}
    for section in parser.sections():
        for key, raw in parser[section].items():
            spec = _KEYS.get(key)
            if spec is None or spec[0] != section:
                raise ConfigError(f"unknown config key [{section}] {key}")
            try:
                values[key] = spec[1](raw)
            except ValueError:
                raise ConfigError(f"bad value for [{section}] {key}: {raw!r}") from None
    return values


def resolve_config(args: argparse.Namespace) -> RunConfig:
    """Merge built-in defaults, the config file, and explicit flags."""
    values = {key: spec[2] for key, spec in _KEYS.items()}
    if args.config is not None:
        values.update(_read_config_file(args.config))
    for key in _KEYS:
        given = getattr(args, key, None)
        if given is not None:
            values[key] = given

    optical = OpticalConfig(
        wavelength=values["wavelength"],
        pitch=values["pitch"],
        width=values["width"],
        height=values["height"],
    )
    kind = DENOISER_NAMES.get(values["denoiser"])
    if kind is None:
        choices = ", ".join(sorted(DENOISER_NAMES))
        raise ConfigError(f"unknown denoiser {values['denoiser']!r}; choose one of {choices}")
    solver = UnfoldConfig(
        stages=values["stages"],
        step=values["step"],
        tv_weight=values["tv_weight"],
        denoiser_kind=kind,
    )
    train_cfg = TrainConfig(
        lr=values["lr"],
        epochs=values["epochs"],
        batch_size=values["batch_size"],
        seed=values["seed"],
        val_fraction=values["val_fraction"],
    )
    if values["iters"] < 1:
        raise ConfigError(f"iters must be >= 1, got {values['iters']}")
    out = values["out"]
    paths = Paths(
        input=values["input"],
        out=out,
        weights=values["weights"],
        metrics_csv=values["metrics_csv"] or os.path.join(out, "metrics.csv"),
    )
    return RunConfig(
        optical=optical,
        solver=solver,
        train=train_cfg,
        paths=paths,
        seed=values["seed"],
        distance=values["distance"],
        iters=values["iters"],
        channels=values["channels"],
    )


def _require_input_file(cfg: RunConfig) -> str:
    path = cfg.paths.input
    if path is None:
        raise ConfigError("an --input path is required for this command")
    if not os.path.isfile(path):
        raise DataError(f"input not found: {path}")
    return path


def _input_images(cfg: RunConfig) -> list[str]:
    """One target file, or every image in a target directory."""
    path = cfg.paths.input
    if path is None:
        raise ConfigError("an --input path is required for this command")
    if os.path.isdir(path):
        found = list_images(path)
        if not found:
            raise DataError(f"no images found in {path}")
        return found
    if os.path.isfile(path):
        return [path]
    raise DataError(f"input not found: {path}")


def _require_pcd_grid(cfg: RunConfig) -> None:
    h, w = cfg.optical.shape
    if h % 32 or w % 32:
        raise ConfigError(
            f"resolution {h}x{w} must be divisible by 32 with the learned denoiser"
        )


# ---------------------------------------------------------------------------
# commands


def cmd_propagate(cfg: RunConfig, phase_input: bool) -> None:
    path = _require_input_file(cfg)
    os.makedirs(cfg.paths.out, exist_ok=True)
    img = imread_resized(path, cfg.optical.shape)
    if phase_input:
        u = np.exp(1j * img * (2.0 * np.pi / 255.0))
    else:
        u = img.astype(np.complex128)
    plan = build_plan(cfg.optical, cfg.distance)
    out = propagate(ComplexField(u, cfg.optical.pitch), plan)
    amp = np.abs(out.data)
    peak = float(amp.max())
    imwrite_gray(
        os.path.join(cfg.paths.out, "amplitude.png"),
        amp * (255.0 / peak) if peak > 0 else amp,
    )
    phase = np.mod(np.angle(out.data), 2.0 * np.pi)
    imwrite_gray(os.path.join(cfg.paths.out, "phase.png"), phase * (255.0 / (2.0 * np.pi)))
    line = f"regime={plan.regime.value} z1={plan.near_limit:.4f} z2={plan.far_limit:.4f}"
    with open(os.path.join(cfg.paths.out, "propagate.txt"), "w") as fh:
        fh.write(line + "\n")
    print(line)


def _append_metrics(path: str, rows: list[str]) -> None:
    header_needed = not os.path.isfile(path)
    with open(path, "a") as fh:
        if header_needed:
            fh.write(METRICS_HEADER + "\n")
        for row in rows:
            fh.write(row + "\n")


def _run_solver(cfg: RunConfig, method: str, solve_phase) -> None:
    """Shared gs/gd/unfold-infer flow: solve, quantize, reconstruct, score."""
    paths = _input_images(cfg)
    os.makedirs(cfg.paths.out, exist_ok=True)
    plan = build_plan(cfg.optical, cfg.distance)
    pitch = cfg.optical.pitch
    rows = []
    for path in paths:
        target = imread_resized(path, cfg.optical.shape)
        start = time.perf_counter()
        phase = solve_phase(target, plan)
        wall_ms = (time.perf_counter() - start) * 1e3
        # the modulator gets 8-bit levels; reconstruct what it will display
        levels = to_uint8(phase * (255.0 / (2.0 * np.pi)))
        phase_q = levels.astype(np.float64) * (2.0 * np.pi / 255.0)
        field = ComplexField(np.exp(1j * phase_q), pitch)
        rec = np.abs(propagate(field, plan).data)
        denom = float(np.sum(rec * rec))
        scale = float(np.sum(rec * target)) / denom if denom > 0 else 1.0
        scaled = scale * rec
        psnr_v = psnr_metric(target, scaled)
        ssim_v = ssim_metric(target, scaled)
        name = os.path.basename(path)
        stem = os.path.splitext(name)[0]
        imwrite_gray(os.path.join(cfg.paths.out, f"{stem}.{method}.hologram.png"), levels)
        imwrite_gray(os.path.join(cfg.paths.out, f"{stem}.{method}.reconstruction.png"), scaled)
        rows.append(f"{method},{name},{psnr_v:.2f},{ssim_v:.4f},{wall_ms:.1f}")
        print(rows[-1])
    _append_metrics(cfg.paths.metrics_csv, rows)


def cmd_gs(cfg: RunConfig) -> None:
    def solve(target, plan):
        holo, _ = gs_solve(target, plan, cfg.iters, seed=cfg.seed)
        return holo.phase

    _run_solver(cfg, "gs", solve)


def cmd_gd(cfg: RunConfig) -> None:
    # gradient descent is the unfolded loop with the denoiser disabled
    gd_cfg = UnfoldConfig(
        stages=cfg.solver.stages, step=cfg.solver.step, denoiser_kind=DenoiserKind.NONE
    )

    def solve(target, plan):
        holo, _ = hqs_unfold(target, plan, gd_cfg, seed=cfg.seed)
        return holo.phase

    _run_solver(cfg, "gd", solve)


def cmd_unfold_infer(cfg: RunConfig) -> None:
    if cfg.paths.weights is None:
        raise ConfigError("weights required: pass --weights with a trained file")
    if cfg.solver.denoiser_kind is not DenoiserKind.PCD:
        raise ConfigError("unfold-infer uses the learned denoiser; set denoiser = pcd")
    _require_pcd_grid(cfg)
    if not os.path.isfile(cfg.paths.weights):
        raise DataError(f"weights file not found: {cfg.paths.weights}")
    weights = load_weights(cfg.paths.weights)
    if len(weights) != cfg.solver.stages:
        raise ConfigError(
            f"weights hold {len(weights)} stages but the config asks for {cfg.solver.stages}"
        )

    def solve(target, plan):
        holo, _ = hqs_unfold(target, plan, cfg.solver, weights, seed=cfg.seed)
        return holo.phase

    _run_solver(cfg, "unfold-infer", solve)


def cmd_unfold_train(cfg: RunConfig) -> None:
    path = cfg.paths.input
    if path is None:
        raise ConfigError("an --input dataset directory is required")
    if not os.path.isdir(path):
        raise DataError(f"input directory not found: {path}")
    if cfg.solver.denoiser_kind is not DenoiserKind.PCD:
        raise ConfigError("unfold-train requires denoiser = pcd")
    _require_pcd_grid(cfg)
    os.makedirs(cfg.paths.out, exist_ok=True)
    plan = build_plan(cfg.optical, cfg.distance)
    log_path = os.path.join(cfg.paths.out, "train_log.csv")
    weights = train(
        path, plan, cfg.train, cfg.solver, channels=cfg.channels, log_path=log_path
    )
    weights_path = cfg.paths.weights or os.path.join(cfg.paths.out, "weights.cghw")
    save_weights(weights, weights_path)
    print(f"wrote {weights_path} and {log_path}")


def cmd_eval(cfg: RunConfig) -> None:
    path = cfg.paths.input or cfg.paths.metrics_csv
    if not os.path.isfile(path):
        raise DataError(f"metrics CSV not found: {path}")
    with open(path) as fh:
        lines = [ln.strip() for ln in fh if ln.strip()]
    groups: dict[str, list[tuple[float, float, float]]] = {}
    malformed = 0
    for line in lines:
        if line == METRICS_HEADER:
            continue
        cells = line.split(",")
        try:
            if len(cells) != 5:
                raise ValueError(line)
            triple = (float(cells[2]), float(cells[3]), float(cells[4]))
        except ValueError:
            malformed += 1
            continue
        groups.setdefault(cells[0], []).append(triple)
    if not groups:
        raise DataError(f"no valid metric rows in {path}")
    print("method,count,mean_psnr,mean_ssim,mean_wall_ms")
    for method in sorted(groups):
        vals = np.asarray(groups[method])
        means = vals.mean(axis=0)
        print(f"{method},{len(vals)},{means[0]:.2f},{means[1]:.4f},{means[2]:.1f}")
    if malformed:
        print(f"warning: skipped {malformed} malformed rows", file=sys.stderr)


# ---------------------------------------------------------------------------
# entry point


_COMMAND_HELP = {
    "propagate": "diffract an input image and write amplitude, phase, and a regime sidecar",
    "gs": "alternating-projection baseline: hologram, reconstruction, metrics row",
    "gd": "unfolded gradient descent without a denoiser",
    "unfold-train": "train the learned denoiser stages on an image directory",
    "unfold-infer": "run the unfolded solver with trained weights",
    "eval": "aggregate a metrics CSV into per-method means",
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="holograd", description=__doc__.split("\n")[0])
    sub = parser.add_subparsers(dest="command", required=True)
    parsers = {}
    for name, help_text in _COMMAND_HELP.items():
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", default=None, help="INI config file; flags override it")
        for key, (section, typ, _) in _KEYS.items():
            flag = "--" + key.replace("_", "-")
            p.add_argument(flag, type=typ, default=None, help=f"[{section}] {key}")
        parsers[name] = p
    parsers["propagate"].add_argument(
        "--phase-input",
        action="store_true",
        help="treat the input PNG as a phase map (255 levels over 2*pi)",
    )
    return parser


_COMMANDS = {
    "gs": cmd_gs,
    "gd": cmd_gd,
    "unfold-train": cmd_unfold_train,
    "unfold-infer": cmd_unfold_infer,
    "eval": cmd_eval,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = resolve_config(args)
        if args.command == "propagate":
            cmd_propagate(cfg, args.phase_input)
        else:
            _COMMANDS[args.command](cfg)
        return 0
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (DataError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except NumericError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
