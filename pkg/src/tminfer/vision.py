"""Turn raw images into the normalized square tensors the network expects.

Mirrors the canvas-capture path of the original frontend: center-crop to a
square, bilinear resize with half-pixel centers, then map bytes to [-1, 1].
"""

from __future__ import annotations

import io
import time
from dataclasses import dataclass, field

import numpy as np
from PIL import Image, UnidentifiedImageError

from .errors import CorruptImage, InvalidValue, NotSquare, UnsupportedFormat

__all__ = [
    "Frame",
    "decode_image",
    "center_crop_square",
    "resize_bilinear",
    "normalize",
    "preprocess",
]


@dataclass(frozen=True)
class Frame:
    width: int
    height: int
    pixels: bytes  # row-major 8-bit RGB, 3 bytes per pixel
    source_id: str = ""
    captured_at: float = field(default_factory=time.monotonic)

    def __post_init__(self):
        if len(self.pixels) != self.width * self.height * 3:
            raise InvalidValue(
                f"frame {self.width}x{self.height} needs "
                f"{self.width * self.height * 3} bytes, got {len(self.pixels)}"
            )

    def as_array(self) -> np.ndarray:
        return np.frombuffer(self.pixels, dtype=np.uint8).reshape(
            self.height, self.width, 3
        )


def decode_image(data: bytes, format_hint: str | None = None,
                 source_id: str = "") -> Frame:
    """Decode PNG or JPEG bytes into an 8-bit RGB frame.

    Alpha is dropped, grayscale is expanded to three channels.
    """
    try:
        img = Image.open(io.BytesIO(data))
        if img.format not in ("PNG", "JPEG"):
            raise UnsupportedFormat(f"unsupported image format: {img.format}")
        img = img.convert("RGB")
        img.load()
    except UnidentifiedImageError as exc:
        if format_hint in ("png", "jpeg", "jpg"):
            raise CorruptImage(str(exc)) from exc
        raise UnsupportedFormat(str(exc)) from exc
    except (OSError, SyntaxError) as exc:
        raise CorruptImage(str(exc)) from exc
    return Frame(img.width, img.height, img.tobytes(), source_id=source_id)


def center_crop_square(frame: Frame) -> Frame:
    side = min(frame.width, frame.height)
    if side == frame.width == frame.height:
        return frame
    ox = (frame.width - side) // 2
    oy = (frame.height - side) // 2
    arr = frame.as_array()[oy:oy + side, ox:ox + side]
    return Frame(side, side, np.ascontiguousarray(arr).tobytes(),
                 source_id=frame.source_id, captured_at=frame.captured_at)


def _bilinear(arr: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    in_h, in_w = arr.shape[:2]
    src = arr.astype(np.float32)

    def axis_coords(out_n, in_n):
        # half-pixel centers, edge-clamped
        c = (np.arange(out_n, dtype=np.float64) + 0.5) * (in_n / out_n) - 0.5
        c = np.clip(c, 0.0, in_n - 1)
        lo = np.floor(c).astype(np.int64)
        hi = np.minimum(lo + 1, in_n - 1)
        frac = (c - lo).astype(np.float32)
        return lo, hi, frac

    y0, y1, fy = axis_coords(out_h, in_h)
    x0, x1, fx = axis_coords(out_w, in_w)
    top = src[y0][:, x0] * (1 - fx)[None, :, None] + src[y0][:, x1] * fx[None, :, None]
    bot = src[y1][:, x0] * (1 - fx)[None, :, None] + src[y1][:, x1] * fx[None, :, None]
    out = top * (1 - fy)[:, None, None] + bot * fy[:, None, None]
    return np.clip(np.rint(out), 0, 255).astype(np.uint8)


def resize_bilinear(frame: Frame, side: int) -> Frame:
    if side < 1:
        raise InvalidValue(f"target side must be >= 1, got {side}")
    if frame.width == side and frame.height == side:
        return frame
    out = _bilinear(frame.as_array(), side, side)
    return Frame(side, side, out.tobytes(),
                 source_id=frame.source_id, captured_at=frame.captured_at)


def normalize(frame: Frame) -> np.ndarray:
    """Map 8-bit RGB to float32 in [-1, 1]: v/127.5 - 1."""
    if frame.width != frame.height:
        raise NotSquare(f"frame is {frame.width}x{frame.height}")
    arr = frame.as_array().astype(np.float32)
    return (arr / np.float32(127.5) - np.float32(1.0)).astype(np.float32)


def preprocess(frame: Frame, image_size: int) -> np.ndarray:
    return normalize(resize_bilinear(center_crop_square(frame), image_size))
