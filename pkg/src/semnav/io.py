"""Binary PGM (P5) export and import for similarity maps and masks."""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .belief_map import SimilarityMap


def to_pixels(data) -> np.ndarray:
    """Scores in [0, 1] -> uint8 via round-half-up of score*255; boolean masks -> 0/255."""
    arr = data.scores if isinstance(data, SimilarityMap) else np.asarray(data)
    if arr.ndim != 2:
        raise ValueError(f"expected a 2D map, got shape {arr.shape}")
    if arr.dtype == bool:
        return np.where(arr, 255, 0).astype(np.uint8)
    arr = np.asarray(arr, dtype=np.float64)
    if not np.isfinite(arr).all():
        raise ValueError("map contains non-finite values")
    return np.floor(np.clip(arr, 0.0, 1.0) * 255.0 + 0.5).astype(np.uint8)


def export_map(data, path: str | Path) -> Path:
    """Write a map or mask as an 8-bit grayscale PGM, row 0 first."""
    path = Path(path)
    px = to_pixels(data)
    h, w = px.shape
    try:
        with open(path, "wb") as fh:
            fh.write(f"P5\n{w} {h}\n255\n".encode("ascii"))
            fh.write(px.tobytes(order="C"))
    except OSError as exc:
        raise OSError(exc.errno, f"cannot write map to {path}: {exc.strerror}") from exc
    return path


def _header_tokens(buf: bytes, count: int) -> tuple[list[bytes], int]:
    tokens, i = [], 0
    while len(tokens) < count:
        while i < len(buf) and buf[i : i + 1].isspace():
            i += 1
        if buf[i : i + 1] == b"#":
            while i < len(buf) and buf[i : i + 1] not in (b"\n", b"\r"):
                i += 1
            continue
        j = i
        while j < len(buf) and not buf[j : j + 1].isspace():
            j += 1
        if j == i:
            raise ValueError("truncated PGM header")
        tokens.append(buf[i:j])
        i = j
    return tokens, i + 1  # exactly one whitespace byte precedes the raster


def import_map(path: str | Path) -> np.ndarray:
    """Read a P5 PGM written by ``export_map``; returns uint8 pixels of shape (H, W)."""
    path = Path(path)
    try:
        buf = path.read_bytes()
    except OSError as exc:
        raise OSError(exc.errno, f"cannot read map from {path}: {exc.strerror}") from exc
    tokens, start = _header_tokens(buf, 4)
    if tokens[0] != b"P5":
        raise ValueError(f"{path}: not a binary PGM")
    w, h, maxval = (int(t) for t in tokens[1:])
    if maxval != 255:
        raise ValueError(f"{path}: only 8-bit PGM is supported")
    raster = buf[start : start + w * h]
    if len(raster) != w * h:
        raise ValueError(f"{path}: truncated raster")
    return np.frombuffer(raster, dtype=np.uint8).reshape(h, w).copy()


def import_scores(path: str | Path) -> np.ndarray:
    return import_map(path).astype(np.float64) / 255.0
