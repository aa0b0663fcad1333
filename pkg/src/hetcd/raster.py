"""Raster, mask, and label I/O.

Rasters live on disk as a pair of files: a plain-text ``.hdr`` header with one
``key=value`` per line, and a raw float32 little-endian pixel-interleaved
``.bin`` payload next to it. Masks are binary PGM (P5).
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

BAND_ROLES = ("optical", "sar_intensity", "stacked_log", "label")
HEADER_KEYS = ("width", "height", "bands", "dtype", "interleave", "byteorder", "band_roles")


class RasterFormatError(ValueError):
    """Raised for malformed headers, payloads, or masks."""


@dataclass(frozen=True)
class RasterHeader:
    width: int
    height: int
    bands: int
    band_roles: tuple[str, ...]
    dtype: str = "float32"
    interleave: str = "band-interleaved-by-pixel"
    byteorder: str = "little"

    def __post_init__(self):
        for name in ("width", "height", "bands"):
            value = getattr(self, name)
            if not isinstance(value, (int, np.integer)) or value < 1:
                raise RasterFormatError(f"{name} must be a positive integer, got {value!r}")
        if self.dtype != "float32":
            raise RasterFormatError(f"unsupported dtype {self.dtype!r}")
        if self.interleave != "band-interleaved-by-pixel":
            raise RasterFormatError(f"unsupported interleave {self.interleave!r}")
        if self.byteorder != "little":
            raise RasterFormatError(f"unsupported byteorder {self.byteorder!r}")
        if len(self.band_roles) != self.bands:
            raise RasterFormatError(
                f"band_roles has {len(self.band_roles)} entries for {self.bands} bands")
        for role in self.band_roles:
            if role not in BAND_ROLES:
                raise RasterFormatError(f"unknown band role {role!r}")

    @property
    def nbytes(self) -> int:
        return self.width * self.height * self.bands * 4

    def to_text(self) -> str:
        lines = [
            f"width={self.width}",
            f"height={self.height}",
            f"bands={self.bands}",
            f"dtype={self.dtype}",
            f"interleave={self.interleave}",
            f"byteorder={self.byteorder}",
            "band_roles=" + ",".join(self.band_roles),
        ]
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "RasterHeader":
        values: dict[str, str] = {}
        for lineno, line in enumerate(text.splitlines(), 1):
            if not line.strip():
                continue
            if "=" not in line:
                raise RasterFormatError(f"header line {lineno}: expected key=value")
            key, value = line.split("=", 1)
            key = key.strip()
            if key not in HEADER_KEYS:
                raise RasterFormatError(f"header line {lineno}: unknown key {key!r}")
            if key in values:
                raise RasterFormatError(f"header line {lineno}: duplicate key {key!r}")
            values[key] = value.strip()
        missing = [k for k in HEADER_KEYS if k not in values]
        if missing:
            raise RasterFormatError(f"header missing keys: {', '.join(missing)}")
        try:
            width, height, bands = (int(values[k]) for k in ("width", "height", "bands"))
        except ValueError as exc:
            raise RasterFormatError(f"non-integer dimension in header: {exc}") from None
        roles = tuple(r.strip() for r in values["band_roles"].split(",")) if values["band_roles"] else ()
        return cls(width=width, height=height, bands=bands, band_roles=roles,
                   dtype=values["dtype"], interleave=values["interleave"],
                   byteorder=values["byteorder"])


@dataclass
class Raster:
    """A ``height x width x bands`` float32 grid tagged with per-band roles."""

    data: np.ndarray
    band_roles: tuple[str, ...]
    header: RasterHeader = field(init=False)

    def __post_init__(self):
        data = np.asarray(self.data)
        if data.ndim == 2:
            data = data[:, :, None]
        if data.ndim != 3:
            raise RasterFormatError(f"raster data must be 2-D or 3-D, got shape {data.shape}")
        self.data = np.ascontiguousarray(data, dtype=np.float32)
        self.band_roles = tuple(self.band_roles)
        h, w, b = self.data.shape
        self.header = RasterHeader(width=w, height=h, bands=b, band_roles=self.band_roles)
        self.validate()

    @property
    def width(self) -> int:
        return self.header.width

    @property
    def height(self) -> int:
        return self.header.height

    @property
    def bands(self) -> int:
        return self.header.bands

    def band(self, index: int) -> np.ndarray:
        return self.data[:, :, index]

    def validate(self) -> None:
        if not np.all(np.isfinite(self.data)):
            raise RasterFormatError("raster contains NaN or Inf")
        for i, role in enumerate(self.band_roles):
            if role == "sar_intensity" and np.any(self.data[:, :, i] < 0):
                raise RasterFormatError(f"band {i} (sar_intensity) has negative values")

    def window(self, x0: int, y0: int, x1: int, y1: int) -> "Raster":
        return Raster(self.data[y0:y1, x0:x1, :], self.band_roles)


def data_path_for(header_path: str | os.PathLike) -> Path:
    return Path(header_path).with_suffix(".bin")


def load_raster(header_path: str | os.PathLike) -> Raster:
    """Load a raster from its ``.hdr`` path; the payload is the sibling ``.bin``."""
    header_path = Path(header_path)
    header = RasterHeader.from_text(header_path.read_text(encoding="utf-8"))
    payload_path = data_path_for(header_path)
    if not payload_path.exists():
        raise RasterFormatError(f"missing data file {payload_path}")
    raw = payload_path.read_bytes()
    if len(raw) != header.nbytes:
        raise RasterFormatError(
            f"{payload_path}: expected {header.nbytes} bytes, found {len(raw)}")
    data = np.frombuffer(raw, dtype="<f4").reshape(header.height, header.width, header.bands)
    return Raster(data.astype(np.float32), header.band_roles)


def save_raster(raster: Raster, header_path: str | os.PathLike) -> None:
    raster.validate()
    header_path = Path(header_path)
    payload = raster.data.astype("<f4", copy=False).tobytes(order="C")
    data_path_for(header_path).write_bytes(payload)
    header_path.write_text(raster.header.to_text(), encoding="utf-8", newline="\n")


def label_raster(labels: np.ndarray) -> Raster:
    """Wrap a 2-D integer label grid as a single-band ``label`` raster."""
    return Raster(np.asarray(labels, dtype=np.float32), ("label",))


@dataclass
class Mask:
    """Per-pixel boolean change mask, ``values[row, col]``."""

    values: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values, dtype=bool)
        if values.ndim != 2 or values.shape[0] < 1 or values.shape[1] < 1:
            raise RasterFormatError(f"mask must be a non-empty 2-D grid, got shape {values.shape}")
        self.values = values

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape

    @property
    def height(self) -> int:
        return self.values.shape[0]

    @property
    def width(self) -> int:
        return self.values.shape[1]


def _pgm_tokens(raw: bytes, count: int) -> tuple[list[bytes], int]:
    """Read ``count`` whitespace-separated header tokens, skipping ``#`` comments."""
    tokens: list[bytes] = []
    pos = 0
    while len(tokens) < count:
        while pos < len(raw) and raw[pos:pos + 1].isspace():
            pos += 1
        if pos < len(raw) and raw[pos:pos + 1] == b"#":
            while pos < len(raw) and raw[pos:pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        start = pos
        while pos < len(raw) and not raw[pos:pos + 1].isspace():
            pos += 1
        if start == pos:
            raise RasterFormatError("truncated PGM header")
        tokens.append(raw[start:pos])
    # exactly one whitespace byte separates the header from the payload
    return tokens, pos + 1


def load_mask(path: str | os.PathLike, expected_shape: tuple[int, int] | None = None) -> Mask:
    """Read a P5 PGM; bytes >= 128 mean change."""
    raw = Path(path).read_bytes()
    tokens, offset = _pgm_tokens(raw, 4)
    if tokens[0] != b"P5":
        raise RasterFormatError(f"{path}: not a binary PGM (magic {tokens[0]!r})")
    try:
        width, height, maxval = (int(t) for t in tokens[1:])
    except ValueError:
        raise RasterFormatError(f"{path}: malformed PGM header") from None
    if maxval != 255:
        raise RasterFormatError(f"{path}: maxval must be 255, got {maxval}")
    if width < 1 or height < 1:
        raise RasterFormatError(f"{path}: degenerate PGM dimensions {width}x{height}")
    payload = raw[offset:offset + width * height]
    if len(payload) != width * height:
        raise RasterFormatError(f"{path}: truncated PGM payload")
    if expected_shape is not None and (height, width) != tuple(expected_shape):
        raise RasterFormatError(
            f"{path}: mask is {height}x{width}, expected {expected_shape[0]}x{expected_shape[1]}")
    pixels = np.frombuffer(payload, dtype=np.uint8).reshape(height, width)
    return Mask(pixels >= 128)


def save_mask(mask: Mask, path: str | os.PathLike) -> None:
    values = np.asarray(mask.values, dtype=bool)
    if values.ndim != 2 or 0 in values.shape:
        raise RasterFormatError(f"cannot write degenerate mask of shape {values.shape}")
    h, w = values.shape
    header = f"P5\n{w} {h}\n255\n".encode("ascii")
    Path(path).write_bytes(header + np.where(values, 255, 0).astype(np.uint8).tobytes())
