"""Upsampling decoders from rendered feature images to RGB."""

from __future__ import annotations

import dataclasses as dc
import enum
import typing as typ

import numpy as np

from voxfield.autodiff import ops
from voxfield.autodiff.optim import Parameter, ParameterRole
from voxfield.autodiff.tape import value_of
from voxfield.errors import ShapeError

if typ.TYPE_CHECKING:
    from voxfield.autodiff.ops import Array

UPSAMPLE: typ.Final[int] = 2
RGB_CHANNELS: typ.Final[int] = 3


class DecoderMode(enum.StrEnum):
    """Available decoder architectures."""

    IDENTITY = "identity"
    LEARNED = "learned"


def upsample_nearest(image: object, factor: int = UPSAMPLE) -> Array:
    """Repeat every pixel of ``image[H, W, C]`` into a ``factor`` square."""
    height, width = value_of(image).shape[:2]
    rows = np.repeat(np.arange(height), factor)
    cols = np.repeat(np.arange(width), factor)
    return ops.getitem(image, (rows[:, None], cols[None, :]))


def pixel_shuffle(image: object, factor: int = UPSAMPLE) -> Array:
    """Rearrange ``(H, W, 3 * f * f)`` channels into a ``(fH, fW, 3)`` image."""
    height, width, channels = value_of(image).shape
    out = channels // (factor * factor)
    blocks = ops.reshape(image, (height, width, out, factor, factor))
    ordered = ops.transpose(blocks, (0, 3, 1, 4, 2))
    return ops.reshape(ordered, (height * factor, width * factor, out))


@dc.dataclass(slots=True)
class Decoder:
    """Either the fixed identity path or one learned 3x3 convolution."""

    mode: DecoderMode = DecoderMode.IDENTITY
    weight: Parameter | None = None
    bias: Parameter | None = None

    @classmethod
    def identity(cls) -> Decoder:
        """Return the parameter-free decoder."""
        return cls()

    @classmethod
    def learned(cls, width: int) -> Decoder:
        """Return a zero-initialised learned decoder for ``width`` channels."""
        outputs = RGB_CHANNELS * UPSAMPLE * UPSAMPLE
        return cls(
            mode=DecoderMode.LEARNED,
            weight=Parameter(
                np.zeros((3, 3, width, outputs)),
                name="decoder.weight",
                role=ParameterRole.DECODER,
            ),
            bias=Parameter(
                np.zeros(outputs), name="decoder.bias", role=ParameterRole.DECODER
            ),
        )

    def parameters(self) -> list[Parameter]:
        """Return the trainable parameters, if any."""
        return [param for param in (self.weight, self.bias) if param is not None]

    def __call__(self, feature_image: object) -> Array:
        """Decode ``feature_image[H, W, C]`` into ``(2H, 2W, 3)`` RGB."""
        return decode(feature_image, self)


def decode(feature_image: object, decoder: Decoder | None = None) -> Array:
    """Turn a rendered feature image into an RGB image at twice the size.

    The identity path clamps the first three channels to ``[0, 1]`` and
    repeats pixels; the learned path convolves to twelve channels,
    rearranges them into 2x2 blocks and applies a sigmoid.
    """
    shape = value_of(feature_image).shape
    if len(shape) != 3 or shape[-1] < RGB_CHANNELS:
        raise ShapeError.mismatch("decoder input", (-1, -1, RGB_CHANNELS), shape)
    chosen = decoder if decoder is not None else Decoder.identity()
    if chosen.mode is DecoderMode.IDENTITY:
        rgb = ops.clip(ops.getitem(feature_image, (..., slice(0, 3))), 0.0, 1.0)
        return upsample_nearest(rgb)
    if chosen.weight is None or chosen.bias is None:
        message = "learned decoder is missing its parameters"
        raise ShapeError(message)
    expected = value_of(chosen.weight).shape[2]
    if shape[-1] != expected:
        raise ShapeError.mismatch("decoder input width", (expected,), shape[-1:])
    logits = ops.conv2d(feature_image, chosen.weight, chosen.bias, padding=1)
    return ops.sigmoid(pixel_shuffle(logits))
