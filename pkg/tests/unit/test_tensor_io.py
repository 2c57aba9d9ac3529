"""Tests for tensor, image, archive and manifest I/O."""

from __future__ import annotations

import importlib
import json
import typing as typ

import msgspec
import numpy as np
import pytest

from voxfield.errors import (
    CheckpointError,
    ManifestValidationError,
    ShapeError,
    TensorFormatError,
    TensorIOError,
    TensorTruncationError,
)
from voxfield.tensor_io import (
    dump_manifest,
    export_ppm,
    import_ppm,
    load_manifest,
    open_scene,
    read_archive,
    read_tensor,
    write_archive,
    write_tensor,
)
from voxfield.tensor_io.vxt import MAGIC

if typ.TYPE_CHECKING:
    from pathlib import Path


def test_scalar_f32_file_layout(tmp_path: Path) -> None:
    """A scalar is stored as a one-element rank-one tensor."""
    path = tmp_path / "zero.vxt"
    write_tensor(path, np.float32(0.0))
    data = path.read_bytes()
    assert len(data) == 18
    assert data == MAGIC + bytes((1, 1)) + (1).to_bytes(8, "little") + bytes(4)
    restored = read_tensor(path)
    assert restored.dtype == np.float32
    np.testing.assert_array_equal(restored, [0.0])


def test_u8_payload_size(tmp_path: Path) -> None:
    """A ``2x3`` byte tensor stores six payload bytes after its header."""
    path = tmp_path / "mask.vxt"
    write_tensor(path, np.zeros((2, 3), dtype=np.uint8))
    assert len(path.read_bytes()) == 4 + 2 + 2 * 8 + 6
    assert read_tensor(path).shape == (2, 3)


@pytest.mark.parametrize("rank", [1, 2, 3, 4, 5])
@pytest.mark.parametrize("dtype", [np.float32, np.float64, np.uint8])
def test_round_trip_is_bit_identical(
    tmp_path: Path, dtype: type[np.generic], rank: int
) -> None:
    """Every supported dtype and rank survives a write and read unchanged."""
    shape = (4, 3, 2, 3, 2)[:rank]
    rng = np.random.default_rng(rank)
    values = rng.uniform(0.0, 255.0, size=shape).astype(dtype)
    path = tmp_path / "values.vxt"
    write_tensor(path, values)
    restored = read_tensor(path)
    assert restored.dtype == dtype
    assert restored.shape == shape
    assert restored.tobytes() == values.tobytes()


def test_bad_magic_is_a_format_error(tmp_path: Path) -> None:
    """Files not starting with the magic are rejected."""
    path = tmp_path / "bad.vxt"
    path.write_bytes(b"XXXX" + bytes(14))
    with pytest.raises(TensorFormatError) as excinfo:
        read_tensor(path)
    assert excinfo.value.path == path


def test_short_payload_is_a_truncation_error(tmp_path: Path) -> None:
    """A payload shorter than the header declares is truncated."""
    path = tmp_path / "short.vxt"
    header = MAGIC + bytes((1, 1)) + (100).to_bytes(8, "little")
    path.write_bytes(header + bytes(50 * 4))
    with pytest.raises(TensorTruncationError):
        read_tensor(path)


def test_trailing_bytes_are_a_format_error(tmp_path: Path) -> None:
    """Extra payload bytes are rejected."""
    path = tmp_path / "long.vxt"
    write_tensor(path, np.zeros(2, dtype=np.float32))
    path.write_bytes(path.read_bytes() + b"\x00")
    with pytest.raises(TensorFormatError, match="trailing"):
        read_tensor(path)


def test_missing_file_is_an_io_error(tmp_path: Path) -> None:
    """Unreadable paths raise the I/O error carrying the path."""
    with pytest.raises(TensorIOError):
        read_tensor(tmp_path / "absent.vxt")


@pytest.mark.parametrize(
    "tensor",
    [np.zeros((2, 2), dtype=np.int32), np.zeros((1,) * 6, dtype=np.float32)],
)
def test_unsupported_tensors_are_rejected(tmp_path: Path, tensor: np.ndarray) -> None:
    """Only f32, f64 and u8 tensors of rank one to five are written."""
    with pytest.raises(ShapeError):
        write_tensor(tmp_path / "bad.vxt", tensor)


def test_white_pixel_ppm_bytes(tmp_path: Path) -> None:
    """A white pixel is a fixed header plus three full bytes."""
    path = export_ppm(np.ones((1, 1, 3)), tmp_path / "white.ppm")
    assert path.read_bytes() == b"P6\n1 1\n255\n\xff\xff\xff"


def test_half_grey_rounds_up(tmp_path: Path) -> None:
    """Half intensity rounds half up to 128."""
    path = export_ppm(np.full((1, 1, 3), 0.5), tmp_path / "grey.ppm")
    assert path.read_bytes()[-3:] == bytes((128, 128, 128))


def test_ppm_round_trip_within_one_level(tmp_path: Path) -> None:
    """Re-imported images match within one quantisation level."""
    image = np.random.default_rng(2).uniform(size=(2, 2, 3))
    restored = import_ppm(export_ppm(image, tmp_path / "image.ppm"))
    assert np.max(np.abs(restored - image)) <= 1.0 / 255.0


def test_ppm_comments_are_skipped(tmp_path: Path) -> None:
    """Header comments are ignored on import."""
    path = tmp_path / "comment.ppm"
    path.write_bytes(b"P6\n# made by hand\n1 1\n255\n\x00\x80\xff")
    np.testing.assert_allclose(import_ppm(path)[0, 0], [0.0, 128 / 255, 1.0])


def test_ppm_rejects_other_shapes(tmp_path: Path) -> None:
    """Only ``(H, W, 3)`` images are exported."""
    with pytest.raises(ShapeError):
        export_ppm(np.zeros((2, 2)), tmp_path / "flat.ppm")


class _Meta(msgspec.Struct, frozen=True):
    step: int
    label: str


def test_archive_round_trip(tmp_path: Path) -> None:
    """Archives restore metadata and every tensor."""
    tensors = {"fine/features": np.arange(6.0).reshape(2, 3), "keys": np.ones(2)}
    write_archive(tmp_path, kind="demo", metadata=_Meta(3, "x"), tensors=tensors)
    metadata, restored = read_archive(tmp_path, kind="demo", metadata_type=_Meta)
    assert metadata == _Meta(3, "x")
    np.testing.assert_array_equal(restored["fine/features"], tensors["fine/features"])
    assert (tmp_path / "fine_features.vxt").exists()


def test_archive_rejects_other_kinds(tmp_path: Path) -> None:
    """Reading an archive of the wrong kind fails."""
    write_archive(tmp_path, kind="demo", metadata=_Meta(0, ""), tensors={})
    with pytest.raises(CheckpointError, match="expected a 'checkpoint'"):
        read_archive(tmp_path, kind="checkpoint", metadata_type=_Meta)


def test_archive_rejects_colliding_names(tmp_path: Path) -> None:
    """Names that sanitise to one file name are refused."""
    tensors = {"a/b": np.ones(1), "a_b": np.ones(1)}
    with pytest.raises(CheckpointError, match="collide"):
        write_archive(tmp_path, kind="demo", metadata=_Meta(0, ""), tensors=tensors)


def _manifest_document(**bins: float) -> dict[str, object]:
    return {
        "cameras": [
            {
                "name": "front",
                "width": 4,
                "height": 2,
                "fx": 2.0,
                "fy": 2.0,
                "cx": 2.0,
                "cy": 1.0,
                "rgb": "front_rgb.vxt",
                "depth_dense": "front_depth.vxt",
            }
        ],
        "bins": {"t_near": 0.5, "t_far": 10.0, **bins},
    }


def _write_manifest(tmp_path: Path, document: dict[str, object]) -> Path:
    path = tmp_path / "manifest.json"
    path.write_text(json.dumps(document))
    return path


def test_manifest_structs_import_and_accept_keywords() -> None:
    """Required fields may follow defaulted ones when given by keyword."""
    module = importlib.import_module("voxfield.tensor_io.manifest")
    camera = module.CameraSpec(
        name="front",
        width=4,
        height=2,
        fx=2.0,
        fy=2.0,
        cx=2.0,
        cy=1.0,
        rgb="front_rgb.vxt",
    )
    assert camera.rgb == "front_rgb.vxt"
    np.testing.assert_array_equal(camera.to_camera().t_wc, np.eye(4))


def test_manifest_defaults(tmp_path: Path) -> None:
    """Omitted settings fall back to their documented defaults."""
    manifest = load_manifest(_write_manifest(tmp_path, _manifest_document()))
    assert manifest.contraction.alpha == 0.8
    assert manifest.bins.depth_bins == 64
    assert manifest.bins.fine_bins == 16
    assert manifest.octree.fine_level == 9
    camera = manifest.camera("front").to_camera()
    np.testing.assert_array_equal(camera.t_wc, np.eye(4))
    assert manifest.split("holdout") == ()


def test_manifest_rejects_inverted_depth_range(tmp_path: Path) -> None:
    """``t_far`` below ``t_near`` names ``t_far``."""
    document = _manifest_document()
    document["bins"] = {"t_near": 5.0, "t_far": 2.0}
    with pytest.raises(ManifestValidationError) as excinfo:
        load_manifest(_write_manifest(tmp_path, document))
    assert excinfo.value.field == "t_far"


def test_manifest_reports_missing_fields(tmp_path: Path) -> None:
    """A camera without an RGB target names the field."""
    document = _manifest_document()
    cameras = typ.cast("list[dict[str, object]]", document["cameras"])
    del cameras[0]["rgb"]
    with pytest.raises(ManifestValidationError) as excinfo:
        load_manifest(_write_manifest(tmp_path, document))
    assert excinfo.value.field == "rgb"


def test_manifest_reports_bad_camera_intrinsics(tmp_path: Path) -> None:
    """Camera validation failures keep the camera field name."""
    document = _manifest_document()
    cameras = typ.cast("list[dict[str, object]]", document["cameras"])
    cameras[0]["fx"] = -1.0
    with pytest.raises(ManifestValidationError) as excinfo:
        load_manifest(_write_manifest(tmp_path, document))
    assert excinfo.value.field == "fx"


def test_manifest_unknown_camera(tmp_path: Path) -> None:
    """Looking up an unknown camera lists the known names."""
    manifest = load_manifest(_write_manifest(tmp_path, _manifest_document()))
    with pytest.raises(ManifestValidationError, match="front"):
        manifest.camera("rear")


def test_manifest_round_trip_and_targets(tmp_path: Path) -> None:
    """Dumped manifests reload identically and resolve their targets."""
    manifest = load_manifest(_write_manifest(tmp_path, _manifest_document()))
    path = dump_manifest(manifest, tmp_path / "again.json")
    assert load_manifest(path) == manifest
    write_tensor(tmp_path / "front_depth.vxt", np.full((2, 4), 3.0, dtype=np.float32))
    scene = open_scene(path)
    spec = scene.manifest.camera("front")
    depth = scene.read_target(spec, "depth_dense")
    assert depth is not None
    assert depth.shape == (2, 4)
    assert scene.read_target(spec, "semantic_mask") is None
