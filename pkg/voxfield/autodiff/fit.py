"""Per-scene fitting of the lifting, fusion, rendering and decoding pipeline.

Every step lifts each training camera's frustum into world points, fuses
them into the frozen cell pattern, adds the per-cell residual parameters,
convolves both grids, appends pooled fine features to the coarse grid and
renders every camera at half resolution before decoding to full-size RGB.
"""

from __future__ import annotations

import dataclasses as dc
import logging
import typing as typ

import numpy as np

from voxfield.errors import ConfigError, ShapeError
from voxfield.frustum import (
    DepthFrustum,
    LiftedPoints,
    bin_deltas,
    flat_density_logits,
    flat_logits,
    lift_image,
    make_bins,
    predict_frustum,
)
from voxfield.objectives.losses import (
    VirtualView,
    loss_density_entropy,
    loss_depth,
    loss_feature,
    loss_nerf_distill,
    loss_rgb,
    total_loss,
)
from voxfield.renderer import Decoder, DecoderMode, SamplingPlan, render_image
from voxfield.voxelgrid import (
    ConvStack,
    DualOctree,
    build,
    convolve_octree,
    downsample_concat,
)

from . import ops
from .optim import (
    OptimizerState,
    Parameter,
    ParameterRole,
    adam_step,
    zero_grads,
)
from .tape import Tape, Variable, value_of

if typ.TYPE_CHECKING:
    from voxfield.autodiff.ops import Array
    from voxfield.config import FitConfig
    from voxfield.frustum import DepthBins
    from voxfield.geometry import Camera, Contraction
    from voxfield.objectives.losses import LossReport
    from voxfield.tensor_io.manifest import CameraSpec, SceneData
    from voxfield.voxelgrid.grid import SparseGrid

LOGGER = logging.getLogger(__name__)

RENDER_FACTOR: typ.Final[int] = 2
INITIAL_DENSITY_LOGIT: typ.Final[float] = -10.0
RGB_CHANNELS: typ.Final[int] = 3


def downsample(image: np.ndarray, factor: int = RENDER_FACTOR) -> np.ndarray:
    """Average ``factor x factor`` pixel blocks of ``image[H, W, ...]``."""
    height, width = image.shape[:2]
    if height % factor or width % factor:
        raise ShapeError.mismatch(
            f"image divisible by {factor}", (factor, factor), (height, width)
        )
    blocks = image.reshape(
        height // factor, factor, width // factor, factor, *image.shape[2:]
    )
    return blocks.mean(axis=(1, 3))


def downsample_depth(depth: np.ndarray, factor: int = RENDER_FACTOR) -> np.ndarray:
    """Average the positive depths of each block; blocks without any stay ``0``."""
    valid = (depth > 0.0).astype(np.float64)
    totals = downsample(np.where(valid > 0.0, depth, 0.0), factor)
    counts = downsample(valid, factor)
    return np.where(counts > 0.0, totals / np.maximum(counts, 1e-12), 0.0)


@dc.dataclass(frozen=True, slots=True, eq=False)
class VirtualTarget:
    """A translated render-resolution camera and its distilled targets.

    ``rgb`` keeps the full target size; ``depth`` matches the render size.
    """

    camera: Camera
    rgb: np.ndarray
    depth: np.ndarray


@dc.dataclass(slots=True, eq=False)
class CameraHead:
    """Trainable depth logits and fixed targets of one training camera.

    ``rgb`` keeps the full target size because the decoder upsamples; the
    depth and feature targets match the render resolution.
    """

    name: str
    camera: Camera
    coarse_logits: Parameter
    fine_logits: Parameter
    pixel_features: np.ndarray
    rgb: np.ndarray
    depth: np.ndarray | None = None
    dense_depth: np.ndarray | None = None
    feature: np.ndarray | None = None
    virtual: tuple[VirtualTarget, ...] = ()

    def parameters(self) -> list[Parameter]:
        """Return the two logit tensors."""
        return [self.coarse_logits, self.fine_logits]


@dc.dataclass(slots=True, eq=False)
class GridPayload:
    """Per-cell feature and density residuals added after fusion."""

    features: Parameter
    density_logit: Parameter

    @classmethod
    def initial(cls, name: str, grid: SparseGrid) -> GridPayload:
        """Return zero feature residuals and a near-zero density residual."""
        return cls(
            features=Parameter(
                np.zeros((len(grid), grid.width)),
                name=f"{name}.features",
                role=ParameterRole.VOXEL_FEATURE,
            ),
            density_logit=Parameter(
                np.full(len(grid), INITIAL_DENSITY_LOGIT),
                name=f"{name}.density_logit",
                role=ParameterRole.VOXEL_DENSITY_LOGIT,
            ),
        )

    def parameters(self) -> list[Parameter]:
        """Return the residual tensors."""
        return [self.features, self.density_logit]

    def apply(self, grid: SparseGrid) -> SparseGrid:
        """Return ``grid`` with residual features and ``softplus`` density added."""
        return grid.with_payload(
            features=ops.add(grid.features, self.features),
            density=ops.add(grid.density, ops.softplus(self.density_logit)),
        )

    def remap(
        self, old: SparseGrid, new: SparseGrid, state: OptimizerState
    ) -> GridPayload:
        """Carry residuals of cells present in both patterns over to ``new``."""
        rows, found = old.lookup(new.keys)
        keep = np.where(found, rows, -1)
        features = np.zeros((len(new), self.features.value.shape[1]))
        features[found] = self.features.value[rows[found]]
        density = np.full(len(new), INITIAL_DENSITY_LOGIT)
        density[found] = self.density_logit.value[rows[found]]
        for param in self.parameters():
            state.resize(param.label, keep, len(new))
        return GridPayload(
            features=Parameter(
                features, name=self.features.label, role=ParameterRole.VOXEL_FEATURE
            ),
            density_logit=Parameter(
                density,
                name=self.density_logit.label,
                role=ParameterRole.VOXEL_DENSITY_LOGIT,
            ),
        )


@dc.dataclass(slots=True, eq=False)
class FieldModel:
    """Every trainable tensor of a fit plus the frozen cell pattern."""

    heads: list[CameraHead]
    bins: DepthBins
    contraction: Contraction
    pattern: DualOctree
    fine_payload: GridPayload
    coarse_payload: GridPayload
    fine_stack: ConvStack
    coarse_stack: ConvStack
    decoder: Decoder
    fine_beta: float = 1.5
    density_floor: float = 1e-8

    def parameters(self) -> list[Parameter]:
        """Return all parameters in a fixed order."""
        params: list[Parameter] = []
        for head in self.heads:
            params.extend(head.parameters())
        params.extend(self.fine_payload.parameters())
        params.extend(self.coarse_payload.parameters())
        params.extend(self.fine_stack.parameters())
        params.extend(self.coarse_stack.parameters())
        params.extend(self.decoder.parameters())
        return params

    def frustum(self, head: CameraHead) -> DepthFrustum:
        """Predict both depth stages of ``head``."""
        return predict_frustum(
            head.coarse_logits,
            head.fine_logits,
            self.bins,
            head.pixel_features,
            beta=self.fine_beta,
        )

    def lift(self) -> tuple[list[DepthFrustum], LiftedPoints]:
        """Return every head's frustum and the concatenated lifted points."""
        frustums = [self.frustum(head) for head in self.heads]
        points = LiftedPoints.concat(
            [
                lift_image(head.camera, frustum)
                for head, frustum in zip(self.heads, frustums, strict=True)
            ]
        )
        return frustums, points

    def fuse(self, points: LiftedPoints, *, pattern: DualOctree | None) -> DualOctree:
        """Pool ``points`` at the model's levels, into ``pattern`` when given."""
        return build(
            points,
            self.contraction,
            self.pattern.fine.level,
            self.pattern.coarse.level,
            self.density_floor,
            pattern=pattern,
        )

    def field(self, points: LiftedPoints) -> DualOctree:
        """Return the rendering octree for lifted ``points``."""
        fused = self.fuse(points, pattern=self.pattern)
        adjusted = DualOctree(
            fine=self.fine_payload.apply(fused.fine),
            coarse=self.coarse_payload.apply(fused.coarse),
        )
        convolved = convolve_octree(adjusted, self.fine_stack, self.coarse_stack)
        return downsample_concat(convolved)

    def current_field(self) -> DualOctree:
        """Return the detached rendering octree for the current parameters."""
        _, points = self.lift()
        return self.field(points).detached()

    def rebuild(self, state: OptimizerState) -> None:
        """Replace the cell pattern by the cells the current lift occupies."""
        _, points = self.lift()
        fresh = self.fuse(points, pattern=None).detached()
        self.fine_payload = self.fine_payload.remap(
            self.pattern.fine, fresh.fine, state
        )
        self.coarse_payload = self.coarse_payload.remap(
            self.pattern.coarse, fresh.coarse, state
        )
        LOGGER.info(
            "rebuilt cell pattern: %d -> %d fine, %d -> %d coarse",
            len(self.pattern.fine),
            len(fresh.fine),
            len(self.pattern.coarse),
            len(fresh.coarse),
        )
        self.pattern = fresh


@dc.dataclass(frozen=True, slots=True)
class HistoryEntry:
    """Loss components recorded before the update of ``step``."""

    step: int
    report: LossReport


@dc.dataclass(slots=True, eq=False)
class FitResult:
    """Outcome of :func:`fit`."""

    model: FieldModel
    optimizer: OptimizerState
    history: list[HistoryEntry]
    octree: DualOctree
    config: FitConfig


def _require(value: np.ndarray | None, spec: CameraSpec, what: str) -> np.ndarray:
    if value is None:
        message = f"camera {spec.name!r} has no {what} target but the fit needs one"
        raise ConfigError(message)
    return value


def _check_image(image: np.ndarray, camera: Camera, what: str) -> None:
    if image.shape[:2] != (camera.height, camera.width):
        raise ShapeError.mismatch(what, (camera.height, camera.width), image.shape)


def _initial_head(
    scene: SceneData,
    spec: CameraSpec,
    bins: DepthBins,
    config: FitConfig,
) -> CameraHead:
    full = spec.to_camera()
    camera = full.scaled(1.0 / RENDER_FACTOR)
    rgb = _require(scene.read_target(spec, "rgb"), spec, "rgb")
    _check_image(rgb, full, f"{spec.name} rgb")
    channels = [downsample(rgb)]
    feature = None
    if config.enable_feature_distill:
        wide = _require(scene.read_target(spec, "feature"), spec, "feature")
        _check_image(wide, full, f"{spec.name} feature")
        feature = downsample(wide)
        channels.append(feature)
    depth = None
    if config.weights.w_depth > 0.0:
        sparse = _require(scene.read_target(spec, "depth_sparse"), spec, "sparse depth")
        _check_image(sparse, full, f"{spec.name} sparse depth")
        depth = downsample_depth(sparse)
    dense_depth = None
    virtual: tuple[VirtualTarget, ...] = ()
    if config.enable_nerf_distill:
        dense = _require(scene.read_target(spec, "depth_dense"), spec, "dense depth")
        _check_image(dense, full, f"{spec.name} dense depth")
        dense_depth = downsample_depth(dense)
        if config.enable_virtual:
            virtual = tuple(
                VirtualTarget(
                    camera=full.translated(entry.offset).scaled(1.0 / RENDER_FACTOR),
                    rgb=scene.read(entry.rgb),
                    depth=downsample_depth(scene.read(entry.depth)),
                )
                for entry in spec.virtual
            )
    shape = (camera.height, camera.width)
    coarse = np.broadcast_to(flat_density_logits(bins), (*shape, len(bins))).copy()
    pixel_features = np.concatenate(channels, axis=-1)
    trial = predict_frustum(
        coarse,
        np.zeros((*shape, scene.manifest.bins.fine_bins)),
        bins,
        pixel_features,
        beta=config.fine_beta,
    )
    return CameraHead(
        name=spec.name,
        camera=camera,
        coarse_logits=Parameter(
            coarse,
            name=f"{spec.name}.depth_logit1",
            role=ParameterRole.DEPTH_LOGIT_STAGE1,
        ),
        fine_logits=Parameter(
            flat_logits(bin_deltas(trial.fine_t)),
            name=f"{spec.name}.depth_logit2",
            role=ParameterRole.DEPTH_LOGIT_STAGE2,
        ),
        pixel_features=pixel_features,
        rgb=rgb,
        depth=depth,
        dense_depth=dense_depth,
        feature=feature,
        virtual=virtual,
    )


def initialise_model(
    scene: SceneData, config: FitConfig, rng: np.random.Generator
) -> FieldModel:
    """Build the initial model from the training cameras of ``scene``.

    Raises :class:`ConfigError` when an enabled loss lacks its targets.
    """
    manifest = scene.manifest
    specs = manifest.split("train")
    if not specs:
        message = "the manifest has no training cameras"
        raise ConfigError(message)
    contraction = manifest.contraction.build()
    bins = make_bins(
        manifest.bins.t_near,
        manifest.bins.t_far,
        manifest.bins.depth_bins,
        inner=contraction.horizontal_extent,
        alpha=contraction.alpha,
    )
    heads = [_initial_head(scene, spec, bins, config) for spec in specs]
    if config.enable_nerf_distill and config.enable_virtual:
        if not any(head.virtual for head in heads):
            message = "virtual-view targets are enabled but no camera lists any"
            raise ConfigError(message)
    widths = {head.pixel_features.shape[-1] for head in heads}
    if len(widths) != 1:
        message = f"training cameras disagree on feature width: {sorted(widths)}"
        raise ConfigError(message)
    width = widths.pop()
    empty = DualOctree.empty(
        manifest.octree.fine_level, manifest.octree.coarse_level, width
    )
    model = FieldModel(
        heads=heads,
        bins=bins,
        contraction=contraction,
        pattern=empty,
        fine_payload=GridPayload.initial("fine", empty.fine),
        coarse_payload=GridPayload.initial("coarse", empty.coarse),
        fine_stack=ConvStack.near_identity("fine", width, config.conv_layers, rng),
        coarse_stack=ConvStack.near_identity("coarse", width, config.conv_layers, rng),
        decoder=(
            Decoder.learned(3 * width)
            if config.decoder == DecoderMode.LEARNED
            else Decoder.identity()
        ),
        fine_beta=config.fine_beta,
        density_floor=config.density_floor,
    )
    _, points = model.lift()
    model.pattern = model.fuse(points, pattern=None).detached()
    model.fine_payload = GridPayload.initial("fine", model.pattern.fine)
    model.coarse_payload = GridPayload.initial("coarse", model.pattern.coarse)
    LOGGER.info(
        "initialised %d camera(s), %d fine and %d coarse cell(s), width %d",
        len(heads),
        len(model.pattern.fine),
        len(model.pattern.coarse),
        width,
    )
    return model


def _average(terms: list[Array]) -> Array | None:
    if not terms:
        return None
    stacked = ops.concat([ops.reshape(term, (1,)) for term in terms], axis=0)
    return ops.mean(stacked)


def _virtual_views(
    model: FieldModel,
    octree: DualOctree,
    head: CameraHead,
    plan: SamplingPlan,
    config: FitConfig,
    rng: np.random.Generator,
) -> list[VirtualView]:
    count = min(config.virtual_per_step, len(head.virtual))
    if count == 0:
        return []
    chosen = np.sort(rng.choice(len(head.virtual), size=count, replace=False))
    views: list[VirtualView] = []
    for index in chosen:
        target = head.virtual[int(index)]
        output = render_image(
            octree, model.contraction, target.camera, plan, model.decoder, rng=rng
        )
        views.append(
            VirtualView(
                rgb=output.rgb_image,
                depth=output.depth_image,
                target_rgb=target.rgb,
                target_depth=target.depth,
            )
        )
    return views


def evaluate(
    model: FieldModel, config: FitConfig, rng: np.random.Generator
) -> LossReport:
    """Run one forward pass over every training camera and combine the losses."""
    frustums, points = model.lift()
    octree = model.field(points)
    plan = SamplingPlan(
        t_near=model.bins.near,
        t_far=model.bins.far,
        uniform_samples=config.n_uniform,
        importance_samples=config.n_importance,
        jitter=config.jitter,
    )
    weights = config.weights
    terms: dict[str, list[Array]] = {
        "rgb": [],
        "depth": [],
        "density": [],
        "nerf": [],
        "found": [],
    }
    for head, frustum in zip(model.heads, frustums, strict=True):
        output = render_image(
            octree, model.contraction, head.camera, plan, model.decoder, rng=rng
        )
        terms["rgb"].append(loss_rgb(output.rgb_image, head.rgb, weights.w_ssim))
        terms["density"].append(loss_density_entropy(output.opacity_image))
        if head.depth is not None:
            mask = head.depth > 0.0
            terms["depth"].append(loss_depth(output.depth_image, head.depth, mask))
            terms["depth"].append(loss_depth(frustum.coarse_depth, head.depth, mask))
        if head.dense_depth is not None:
            views = _virtual_views(model, octree, head, plan, config, rng)
            terms["nerf"].append(
                loss_nerf_distill(
                    output.depth_image, head.dense_depth, views, weights.w_ssim
                )
            )
        if head.feature is not None:
            channels = head.feature.shape[-1]
            rendered = ops.getitem(
                output.feature_image,
                (..., slice(RGB_CHANNELS, RGB_CHANNELS + channels)),
            )
            terms["found"].append(loss_feature(rendered, head.feature))
    components: dict[str, Array] = {}
    for name, items in terms.items():
        average = _average(items)
        if average is not None:
            components[name] = average
    return total_loss(components, weights)


def fit(scene: SceneData, config: FitConfig) -> FitResult:
    """Fit the scene for ``config.steps`` Adam steps.

    The history holds one entry per step with the losses measured before
    that step's update; with zero steps it holds the initial evaluation.
    The run is deterministic for a given seed.
    """
    rng = np.random.default_rng(config.seed)
    model = initialise_model(scene, config, rng)
    state = OptimizerState(
        lr=config.lr,
        beta1=config.beta1,
        beta2=config.beta2,
        eps=config.eps,
        clip_norm=config.clip_norm,
    )
    history: list[HistoryEntry] = []
    if config.steps == 0:
        history.append(HistoryEntry(step=0, report=evaluate(model, config, rng)))
    for step in range(config.steps):
        if config.rebuild_every and step and step % config.rebuild_every == 0:
            model.rebuild(state)
        params = model.parameters()
        zero_grads(params)
        with Tape() as tape:
            report = evaluate(model, config, rng)
            objective = report.objective
            if not isinstance(objective, Variable):
                message = "the objective does not depend on any parameter"
                raise ConfigError(message)
            tape.backward(objective)
        adam_step(state, params)
        history.append(HistoryEntry(step=step, report=report))
        if step % config.log_every == 0 or step == config.steps - 1:
            LOGGER.info(
                "step %d/%d: total %.6g (rgb %.4g, depth %.4g, density %.4g)",
                step + 1,
                config.steps,
                report.total,
                report.l_rgb,
                report.l_depth,
                report.l_density,
            )
    octree = model.current_field()
    LOGGER.debug("final field has feature width %d", octree.feature_width)
    return FitResult(
        model=model,
        optimizer=state,
        history=history,
        octree=octree,
        config=config,
    )


def parameter_values(model: FieldModel) -> dict[str, np.ndarray]:
    """Return a copy of every parameter value keyed by name."""
    return {param.label: value_of(param).copy() for param in model.parameters()}
