"""Command-line entry point ``grip``.

Exit codes: 0 success, 1 invariant violation, 2 missing or invalid input.
"""
from __future__ import annotations

import functools
import json
import sys
import warnings
from pathlib import Path

import click

from . import io as gio
from . import pipeline as pl
from .config import ABLATIONS, load_config, parse_sensors
from .exceptions import (ConfigError, EmptySet, FlatSignal, GripError, LayoutMismatch, LengthMismatch,
                         MissingContext, MissingTpose, SequenceTooShort, ShapeMismatch)
from .fixtures import KINDS

EXIT_OK, EXIT_INVARIANT, EXIT_INPUT = 0, 1, 2
_INPUT_ERRORS = (MissingContext, MissingTpose, ConfigError, LayoutMismatch, ShapeMismatch,
                 LengthMismatch, gio.FormatError, FlatSignal, SequenceTooShort, EmptySet,
                 FileNotFoundError, IsADirectoryError, PermissionError)


def exit_code_for(exc):
    if isinstance(exc, _INPUT_ERRORS):
        return EXIT_INPUT
    if isinstance(exc, GripError):
        return EXIT_INVARIANT
    if isinstance(exc, (ValueError, KeyError, TypeError)):
        return EXIT_INPUT
    return EXIT_INVARIANT


def _sensors_type(ctx, param, value):
    if value is None:
        return None
    try:
        parse_sensors(value)
    except ConfigError as exc:
        raise click.BadParameter(str(exc)) from None
    return value


def common_options(fn):
    """``--config --seed --sensors --ablation --segment-frames``, merged into a config."""

    @click.option("--config", "config_path", type=click.Path(dir_okay=False), default=None,
                  help="JSON configuration file.")
    @click.option("--seed", type=int, default=None, help="Random seed (overrides the config).")
    @click.option("--sensors", callback=_sensors_type, default=None,
                  help="IMU count 2..6, optionally with +pressure, e.g. 4+pressure.")
    @click.option("--ablation", type=click.Choice(ABLATIONS), default=None,
                  help="State-difference blocks given to the controller.")
    @click.option("--segment-frames", type=int, default=None, help="Evaluation segment length.")
    @functools.wraps(fn)
    def wrapper(config_path, seed, sensors, ablation, segment_frames, **kw):
        try:
            cfg = load_config(config_path).with_overrides(
                seed=seed, sensors=sensors, ablation=ablation, segment_frames=segment_frames)
        except Exception as exc:  # noqa: BLE001
            _fail(exc)
        try:
            return fn(cfg=cfg, **kw)
        except click.exceptions.Exit:
            raise
        except click.ClickException:
            raise
        except Exception as exc:  # noqa: BLE001
            _fail(exc)

    return wrapper


def _fail(exc):
    click.echo(f"error: {type(exc).__name__}: {exc}", err=True)
    sys.exit(exit_code_for(exc))


def _write(path, text):
    if path is None or path == "-":
        click.echo(text, nl=False)
    else:
        gio.write_text(path, text)


def _load_terrain(path):
    if path is None:
        return None
    from .dyn.terrain import Terrain

    return Terrain.load(path)


def _load_model(path):
    if path is None:
        return None
    from .dyn.model import HumanoidModel

    return HumanoidModel.load(path)


@click.group()
@click.version_option(package_name="artifact", prog_name="grip")
def main():
    """Sparse-sensor motion reconstruction with a physics-based tracker."""


@main.command()
@click.argument("kind", type=click.Choice(KINDS))
@click.option("--out", "-o", type=click.Path(dir_okay=False), default=None, help="Output file (stdout if omitted).")
@click.option("--raw", is_flag=True, help="Write a raw device bundle instead of a calibrated sequence.")
@click.option("--frames", type=int, default=None, help="Motion frames after the T-pose prefix.")
@click.option("--offsets", default=None, help="Comma-separated per-device lags to plant, in frames.")
@common_options
def fixture(cfg, kind, out, raw, frames, offsets):
    """Generate a deterministic synthetic fixture with ground truth."""
    if raw:
        if offsets:
            raise click.UsageError("--offsets applies to calibrated sequences only")
        _write(out, gio.raw_to_text(pl.fixture_raw(kind, cfg, frames), subject=f"fixture-{kind}-{cfg.seed}"))
        return
    planted = None
    if offsets:
        try:
            planted = [int(x) for x in offsets.split(",")]
        except ValueError:
            raise click.BadParameter("offsets must be integers", param_hint="--offsets") from None
    _write(out, gio.sequence_to_text(pl.fixture_sequence(kind, cfg, frames, planted)))


@main.command()
@click.argument("raw", type=click.Path(dir_okay=False))
@click.option("--out", "-o", type=click.Path(dir_okay=False), default=None)
@common_options
def calibrate(cfg, raw, out):
    """Calibrate a raw device bundle into a sequence file."""
    seq = pl.calibrate_raw(gio.load_raw(raw), cfg)
    _write(out, gio.sequence_to_text(seq))


@main.command()
@click.argument("seq", type=click.Path(dir_okay=False))
@click.option("--out", "-o", type=click.Path(dir_okay=False), default=None, help="Offsets report (JSON).")
@click.option("--apply", "apply_to", type=click.Path(dir_okay=False), default=None,
              help="Also write the synchronised, trimmed sequence here.")
@common_options
def sync(cfg, seq, out, apply_to):
    """Estimate per-device time offsets against the MoCap reference."""
    data = gio.load_sequence(seq)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        report, res, usable = pl.sync_sequence(data, cfg)
    for w in caught:
        click.echo(f"warning: {w.message}", err=True)
    _write(out, json.dumps(report.to_dict()) + "\n")
    if apply_to:
        gio.save_sequence(pl.apply_sync(data, res, usable), apply_to)
    if report.flat:
        _fail(FlatSignal(f"flat streams: {', '.join(report.flat)}"))


@main.command()
@click.argument("seq", type=click.Path(dir_okay=False))
@click.option("--out", "-o", type=click.Path(dir_okay=False), default=None)
@click.option("--oracle", "mode", flag_value="oracle", default=True, help="Replay ground truth (default).")
@click.option("--checkpoint", type=click.Path(dir_okay=False), default=None, help="Network checkpoint.")
@common_options
def estimate(cfg, seq, out, mode, checkpoint):
    """Kinematic estimates per frame, from the oracle or a checkpoint."""
    data = gio.load_sequence(seq)
    net = None
    if checkpoint:
        from .kinnet import load_checkpoint

        if not Path(checkpoint).exists():
            raise FileNotFoundError(f"no such checkpoint: {checkpoint}")
        net = load_checkpoint(checkpoint)
    est = pl.estimate_sequence(data, cfg, net)
    _write(out, gio.estimate_to_text(est, source="checkpoint" if net is not None else "oracle"))


@main.command()
@click.argument("seq", type=click.Path(dir_okay=False))
@click.argument("est", type=click.Path(dir_okay=False))
@click.option("--out", "-o", type=click.Path(dir_okay=False), default=None)
@click.option("--model", type=click.Path(dir_okay=False), default=None, help="Humanoid model file.")
@click.option("--terrain", type=click.Path(dir_okay=False), default=None, help="Terrain file.")
@click.option("--policy", type=click.Choice(["fixture", "passive"]), default="fixture",
              help="fixture: PD toward the estimated rotations; passive: zero torques.")
@common_options
def simulate(cfg, seq, est, out, model, terrain, policy):
    """Closed-loop physics tracking of the estimates."""
    data = gio.load_sequence(seq)
    kin = gio.load_estimate(est)
    roll = pl.simulate_sequence(data, kin, cfg, _load_model(model), _load_terrain(terrain), policy)
    meta = {"policy": policy, "ablation": cfg.ablation, "sensors": cfg.sensors, "seed": cfg.seed}
    _write(out, gio.rollout_to_text(roll, meta))
    if roll.fall_frames:
        click.echo(f"falls at frames {roll.fall_frames}; recovered {len(roll.recoveries)} times", err=True)


@main.command()
@click.argument("pred", type=click.Path(dir_okay=False))
@click.argument("gt", type=click.Path(dir_okay=False))
@click.option("--out", "-o", type=click.Path(dir_okay=False), default=None)
@click.option("--terrain", type=click.Path(dir_okay=False), default=None)
@common_options
def evaluate(cfg, pred, gt, out, terrain):
    """Segment-averaged metric report of PRED (rollout, estimate or sequence) against GT."""
    for p in (pred, gt):
        if not Path(p).exists():
            raise FileNotFoundError(f"no such file: {p}")
    gt_seq = gio.load_sequence(gt)
    fmt = gio.file_format(pred)
    rollouts = None
    if fmt == gio.ROLLOUT_FORMAT:
        prediction = gio.load_rollout(pred)
        rollouts = [prediction]
    elif fmt == gio.ESTIMATE_FORMAT:
        prediction = gio.load_estimate(pred)
    elif fmt == gio.SEQUENCE_FORMAT:
        prediction = gio.load_sequence(pred)
    else:
        raise gio.FormatError(f"cannot evaluate a {fmt!r} file")
    report = pl.evaluate_prediction(prediction, gt_seq, _load_terrain(terrain), cfg, rollouts)
    _write(out, report.dumps())


if __name__ == "__main__":  # pragma: no cover
    main()
