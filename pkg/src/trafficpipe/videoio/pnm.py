"""Binary PPM (P6) and PGM (P5) with maxval 255."""

from __future__ import annotations

import numpy as np

from ..geometry import Frame


class PnmError(ValueError):
    pass


def _tokens(data: bytes, count: int) -> tuple[list[bytes], int]:
    """Read ``count`` whitespace-separated header tokens, skipping comments.

    Returns the tokens and the offset of the first raster byte.
    """
    toks: list[bytes] = []
    i, n = 0, len(data)
    while len(toks) < count:
        while i < n and data[i:i + 1].isspace():
            i += 1
        if i < n and data[i:i + 1] == b"#":
            while i < n and data[i:i + 1] not in (b"\n", b"\r"):
                i += 1
            continue
        start = i
        while i < n and not data[i:i + 1].isspace() and data[i:i + 1] != b"#":
            i += 1
        if start == i:
            raise PnmError("truncated header")
        toks.append(data[start:i])
    if i >= n or not data[i:i + 1].isspace():
        raise PnmError("header must end with a single whitespace byte")
    return toks, i + 1


def decode_pnm(data: bytes) -> tuple[str, int, int, np.ndarray]:
    magic = data[:2]
    if magic in (b"P3", b"P2"):
        raise PnmError(f"ASCII {magic.decode()} is not supported, only binary P5/P6")
    if magic not in (b"P5", b"P6"):
        raise PnmError(f"unknown magic {magic!r}")
    (_, w, h, maxval), off = _tokens(data, 4)
    try:
        width, height, maxv = int(w), int(h), int(maxval)
    except ValueError:
        raise PnmError("non-integer header field") from None
    if maxv != 255:
        raise PnmError(f"maxval {maxv} unsupported, only 255")
    if width <= 0 or height <= 0:
        raise PnmError("dimensions must be positive")
    channels = 3 if magic == b"P6" else 1
    n = width * height * channels
    raster = data[off:off + n]
    if len(raster) != n:
        raise PnmError(f"raster truncated: expected {n} bytes, got {len(raster)}")
    arr = np.frombuffer(raster, dtype=np.uint8)
    shape = (height, width, 3) if channels == 3 else (height, width)
    return magic.decode(), width, height, arr.reshape(shape)


def encode_ppm(rgb: np.ndarray) -> bytes:
    h, w, _ = rgb.shape
    return f"P6\n{w} {h}\n255\n".encode() + np.ascontiguousarray(rgb, dtype=np.uint8).tobytes()


def encode_pgm(gray: np.ndarray) -> bytes:
    h, w = gray.shape
    return f"P5\n{w} {h}\n255\n".encode() + np.ascontiguousarray(gray, dtype=np.uint8).tobytes()


def ppm_read(path, seq: int = 0, timestamp_ms: float = 0.0) -> Frame:
    with open(path, "rb") as fh:
        magic, _, _, arr = decode_pnm(fh.read())
    if magic != "P6":
        raise PnmError(f"{path}: expected P6, found {magic}")
    return Frame.from_rgb(arr, seq, timestamp_ms)


def ppm_write(frame: Frame, path) -> None:
    with open(path, "wb") as fh:
        fh.write(encode_ppm(frame.rgb))


def pgm_read(path) -> np.ndarray:
    with open(path, "rb") as fh:
        magic, _, _, arr = decode_pnm(fh.read())
    if magic != "P5":
        raise PnmError(f"{path}: expected P5, found {magic}")
    return arr


def pgm_write(gray: np.ndarray, path) -> None:
    with open(path, "wb") as fh:
        fh.write(encode_pgm(gray))
