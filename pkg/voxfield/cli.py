"""Command-line interface for the :mod:`voxfield` toolkit."""

from __future__ import annotations

import logging
import os
import sys
import typing as typ
from contextlib import contextmanager
from pathlib import Path

from cyclopts import App, Parameter

from . import commands, config
from .commands._shared import with_overrides
from .errors import NumericalError, ValidationError
from .utils import normalise_root, resolve_under

ROOT_ENV_VAR = "VOXFIELD_ROOT"
DEFAULT_LOG_LEVEL = "WARNING"
_GLOBAL_FLAGS: typ.Final[tuple[str, ...]] = ("--root", "--log-level")

_OUT_PARAMETER = Parameter(
    name="out", help="Write the JSON report to this file instead of stdout."
)
OutOption = typ.Annotated[Path | None, _OUT_PARAMETER]

_SPLIT_PARAMETER = Parameter(
    name="split", help="Restrict the cameras to the train or holdout split."
)
SplitOption = typ.Annotated[
    typ.Literal["train", "holdout"] | None, _SPLIT_PARAMETER
]

_CAMERA_PARAMETER = Parameter(name="camera", help="Camera name; may repeat.")
CameraOption = typ.Annotated[list[str] | None, _CAMERA_PARAMETER]

_WORKERS_PARAMETER = Parameter(name="workers", help="Rendering threads.")
WorkersOption = typ.Annotated[int | None, _WORKERS_PARAMETER]

app = App(help="Fit, render and evaluate sparse voxel neural fields.")


def _flag_value(tokens: typ.Sequence[str], index: int) -> tuple[str, str, int]:
    """Return ``(flag, value, next_index)`` for the global flag at ``index``."""
    current = tokens[index]
    flag, equals, value = current.partition("=")
    if equals:
        step = 1
    else:
        try:
            value = tokens[index + 1]
        except IndexError as err:
            message = f"{flag} requires a value"
            raise SystemExit(message) from err
        step = 2
    if not value or value.startswith("-"):
        message = f"{flag} requires a value"
        raise SystemExit(message)
    return flag, value, index + step


def _extract_global_options(
    tokens: typ.Sequence[str],
) -> tuple[dict[str, str], list[str]]:
    """Split ``--root`` and ``--log-level`` from CLI tokens.

    Both flags accept ``--flag value`` and ``--flag=value``; the last
    occurrence wins.
    """
    found: dict[str, str] = {}
    remainder: list[str] = []
    index = 0
    while index < len(tokens):
        current = tokens[index]
        if current.partition("=")[0] in _GLOBAL_FLAGS:
            flag, value, index = _flag_value(tokens, index)
            found[flag] = value
            continue
        remainder.append(current)
        index += 1
    return found, remainder


def _configure_logging(level: str) -> None:
    """Configure the root logger once for this invocation."""
    resolved = logging.getLevelName(level.upper())
    if not isinstance(resolved, int):
        message = f"--log-level: unknown level {level!r}"
        raise SystemExit(message)
    logging.basicConfig(
        level=resolved,
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
        force=True,
    )


@contextmanager
def _root_env(value: Path) -> typ.Iterator[None]:
    """Temporarily set :data:`ROOT_ENV_VAR` to ``value``."""
    previous = os.environ.get(ROOT_ENV_VAR)
    os.environ[ROOT_ENV_VAR] = str(value)
    try:
        yield
    finally:
        if previous is None:
            os.environ.pop(ROOT_ENV_VAR, None)
        else:
            os.environ[ROOT_ENV_VAR] = previous


def _dispatch_and_print(tokens: typ.Sequence[str]) -> int:
    """Execute the Cyclopts app and print command results."""
    try:
        result = app(tokens)
    except SystemExit as err:
        code = err.code
        if code is None:
            return 0
        if isinstance(code, int):
            return code
        print(code, file=sys.stderr)
        return 1
    if isinstance(result, int):
        return result
    if result is not None:
        print(result)
    return 0


def main(argv: typ.Sequence[str] | None = None) -> int:
    """Entry point for ``python -m voxfield.cli``."""
    try:
        if argv is None:
            argv = sys.argv[1:]
        options, remaining = _extract_global_options(list(argv))
        _configure_logging(options.get("--log-level", DEFAULT_LOG_LEVEL))
        root = normalise_root(options.get("--root", os.environ.get(ROOT_ENV_VAR)))
        if not remaining:
            _dispatch_and_print(remaining)  # Print usage message
            return 1
        try:
            configuration = config.load_configuration(root)
        except config.ConfigurationError as exc:
            print(f"Configuration error: {exc}", file=sys.stderr)
            return 1
        with _root_env(root), config.use_configuration(configuration):
            try:
                return _dispatch_and_print(remaining)
            except NumericalError as exc:
                print(f"Numerical error: {exc}", file=sys.stderr)
                return 2
            except ValidationError as exc:
                print(f"Error: {exc}", file=sys.stderr)
                return 1
    except SystemExit as err:
        print(err.code, file=sys.stderr)
        return 1
    except KeyboardInterrupt:
        print("\nOperation cancelled by user.", file=sys.stderr)
        return 130
    except Exception as exc:  # noqa: BLE001 - fallback guard for CLI entry point
        print(f"Unexpected error: {exc}", file=sys.stderr)
        return 1


def _active() -> config.VoxfieldConfig:
    """Return the active configuration, loading it for direct app calls."""
    try:
        return config.current_configuration()
    except config.ConfigurationNotLoadedError:
        return config.load_configuration(os.environ.get(ROOT_ENV_VAR))


def _path(value: Path) -> Path:
    return resolve_under(normalise_root(os.environ.get(ROOT_ENV_VAR)), value)


def _optional_path(value: Path | None) -> Path | None:
    return None if value is None else _path(value)


def _render_settings(
    n_uniform: int | None, n_importance: int | None, workers: int | None
) -> config.RenderConfig:
    return with_overrides(
        _active().render,
        n_uniform=n_uniform,
        n_importance=n_importance,
        workers=workers,
    )


@app.command
def synth(
    output: Path,
    *,
    scene: Path | None = None,
    raw_feature_dim: int = 0,
    feature_dim: int | None = None,
    virtual: bool = True,
    width: int | None = None,
    height: int | None = None,
    seed: int = 0,
) -> str:
    """Write a synthetic box scene, its targets and manifest into ``output``.

    Without ``--scene`` the built-in desk scene is used.
    """
    return commands.synth.run(
        _path(output),
        commands.synth.Options(
            scene=_optional_path(scene),
            raw_feature_dim=raw_feature_dim,
            feature_dim=feature_dim,
            virtual=virtual,
            width=width,
            height=height,
            seed=seed,
        ),
    )


@app.command
def fit(
    manifest: Path,
    output: Path,
    *,
    steps: int | None = None,
    seed: int | None = None,
    nerf_distill: bool | None = None,
    virtual: bool | None = None,
    feature_distill: bool | None = None,
    decoder: typ.Literal["identity", "learned"] | None = None,
    w_rgb: float | None = None,
    w_ssim: float | None = None,
    w_depth: float | None = None,
    w_density: float | None = None,
    w_nerf: float | None = None,
    w_found: float | None = None,
) -> str:
    """Fit a scene and write the checkpoint and loss history into ``output``."""
    return commands.fit.run(
        _path(manifest),
        _path(output),
        commands.fit.Options(
            configuration=_active().fit,
            steps=steps,
            seed=seed,
            nerf_distill=nerf_distill,
            virtual=virtual,
            feature_distill=feature_distill,
            decoder=decoder,
            weights=commands.fit.WeightOverrides(
                w_rgb=w_rgb,
                w_ssim=w_ssim,
                w_depth=w_depth,
                w_density=w_density,
                w_nerf=w_nerf,
                w_found=w_found,
            ),
        ),
    )


@app.command
def render(
    checkpoint: Path,
    manifest: Path,
    output: Path,
    *,
    camera: CameraOption = None,
    split: SplitOption = None,
    n_uniform: int | None = None,
    n_importance: int | None = None,
    workers: WorkersOption = None,
) -> str:
    """Render RGB, depth, opacity and feature images for scene cameras."""
    return commands.render.run(
        _path(checkpoint),
        _path(manifest),
        _path(output),
        commands.render.Options(
            configuration=_render_settings(n_uniform, n_importance, workers),
            cameras=tuple(camera or ()),
            split=split,
        ),
    )


@app.command(name="eval")
def evaluate(
    predictions: Path,
    manifest: Path,
    *,
    depth_gt: typ.Literal["sparse", "dense"] | None = None,
    split: SplitOption = None,
    max_depth: float | None = None,
    out: OutOption = None,
) -> str:
    """Score rendered predictions against the scene targets as JSON."""
    settings = with_overrides(_active().eval, max_depth=max_depth)
    return commands.evaluate.run(
        _path(manifest),
        _path(predictions),
        commands.evaluate.Options(
            configuration=settings,
            depth_gt=depth_gt,
            split=split,
            out=_optional_path(out),
        ),
    )


@app.command
def occupancy(
    checkpoint: Path,
    manifest: Path,
    output: Path,
    *,
    threshold: float | None = None,
    out: OutOption = None,
) -> str:
    """Extract occupancy grids and report their IoU against ground truth."""
    return commands.occupancy.run(
        _path(checkpoint),
        _path(manifest),
        _path(output),
        commands.occupancy.Options(
            configuration=_active().eval,
            threshold=threshold,
            out=_optional_path(out),
        ),
    )


@app.command
def query(
    checkpoint: Path,
    manifest: Path,
    embedding: Path,
    output: Path,
    *,
    camera: str | None = None,
    n_uniform: int | None = None,
    n_importance: int | None = None,
    workers: WorkersOption = None,
) -> str:
    """Render a feature view and write its similarity heat map."""
    return commands.query.run(
        _path(checkpoint),
        _path(manifest),
        _path(embedding),
        _path(output),
        commands.query.Options(
            configuration=_render_settings(n_uniform, n_importance, workers),
            camera=camera,
        ),
    )


@app.command
def gradcheck(
    *,
    suite: list[str] | None = None,
    fixtures: int | None = None,
    step: float | None = None,
    tolerance: float | None = None,
) -> str:
    """Compare tape gradients with finite differences for every suite."""
    options = with_overrides(
        commands.gradcheck.Options(suites=tuple(suite or ())),
        fixtures=fixtures,
        step=step,
        tolerance=tolerance,
    )
    return commands.gradcheck.run(options)


__all__ = ["app", "main"]

if __name__ == "__main__":  # pragma: no cover - convenience entry point
    raise SystemExit(main())
