"""Minimal PFM / PGM / PPM readers and writers.

PFM: float32, header scale -1.0 (little-endian), rows stored bottom-up per
the format convention. 'PF' is 3-channel, 'Pf' single-channel.
PGM is binary P5 and PPM binary P6, both with maxval 255.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .errors import FormatError


def _parse_header(buf: bytes, n_tokens: int, path) -> tuple[list[bytes], int]:
    """Read whitespace-separated header tokens, skipping # comments.

    Returns the tokens and the offset of the first payload byte (one
    whitespace character after the last token).
    """
    tokens = []
    i = 0
    while len(tokens) < n_tokens:
        if i >= len(buf):
            raise FormatError(f"{path}: truncated header")
        c = buf[i : i + 1]
        if c.isspace():
            i += 1
        elif c == b"#":
            while i < len(buf) and buf[i : i + 1] != b"\n":
                i += 1
        else:
            j = i
            while j < len(buf) and not buf[j : j + 1].isspace():
                j += 1
            tokens.append(buf[i:j])
            i = j
    if i >= len(buf) or not buf[i : i + 1].isspace():
        raise FormatError(f"{path}: missing whitespace after header")
    return tokens, i + 1


def write_pfm(path, data: np.ndarray) -> None:
    """Write a float32 PFM. data is HxW (grayscale) or HxWx3 (color)."""
    a = np.asarray(data, dtype=np.float32)
    if a.ndim == 2:
        magic = b"Pf"
    elif a.ndim == 3 and a.shape[2] == 3:
        magic = b"PF"
    else:
        raise FormatError(f"PFM data must be HxW or HxWx3, got shape {a.shape}")
    h, w = a.shape[:2]
    header = magic + b"\n" + f"{w} {h}\n".encode() + b"-1.0\n"
    payload = np.flipud(a).astype("<f4").tobytes()
    Path(path).write_bytes(header + payload)


def read_pfm(path) -> np.ndarray:
    buf = Path(path).read_bytes()
    tokens, start = _parse_header(buf, 4, path)
    magic, ws, hs, scale_s = tokens
    if magic == b"PF":
        channels = 3
    elif magic == b"Pf":
        channels = 1
    else:
        raise FormatError(f"{path}: not a PFM file (magic {magic!r})")
    w, h = int(ws), int(hs)
    scale = float(scale_s)
    endian = "<" if scale < 0 else ">"
    expected = w * h * channels * 4
    payload = buf[start:]
    if len(payload) != expected:
        raise FormatError(
            f"{path}: expected {expected} payload bytes, got {len(payload)}"
        )
    a = np.frombuffer(payload, dtype=endian + "f4").reshape(
        (h, w) if channels == 1 else (h, w, channels)
    )
    if abs(scale) != 1.0:
        a = a * np.float32(abs(scale))
    return np.flipud(a).astype(np.float32)


def _write_pnm(path, magic: bytes, a: np.ndarray) -> None:
    h, w = a.shape[:2]
    header = magic + b"\n" + f"{w} {h}\n255\n".encode()
    Path(path).write_bytes(header + a.tobytes())


def write_pgm(path, data: np.ndarray) -> None:
    """Write a binary P5 grayscale image (uint8)."""
    a = np.asarray(data)
    if a.ndim != 2 or a.dtype != np.uint8:
        raise FormatError("PGM data must be HxW uint8")
    _write_pnm(path, b"P5", a)


def write_ppm(path, data: np.ndarray) -> None:
    """Write a binary P6 RGB image (uint8)."""
    a = np.asarray(data)
    if a.ndim != 3 or a.shape[2] != 3 or a.dtype != np.uint8:
        raise FormatError("PPM data must be HxWx3 uint8")
    _write_pnm(path, b"P6", a)


def _read_pnm(path, want_magic: bytes, channels: int) -> np.ndarray:
    buf = Path(path).read_bytes()
    tokens, start = _parse_header(buf, 4, path)
    magic, ws, hs, maxval = tokens
    if magic != want_magic:
        raise FormatError(f"{path}: expected {want_magic!r}, got magic {magic!r}")
    if maxval != b"255":
        raise FormatError(f"{path}: only maxval 255 is supported, got {maxval!r}")
    w, h = int(ws), int(hs)
    expected = w * h * channels
    payload = buf[start:]
    if len(payload) != expected:
        raise FormatError(
            f"{path}: expected {expected} payload bytes, got {len(payload)}"
        )
    a = np.frombuffer(payload, dtype=np.uint8)
    return a.reshape((h, w) if channels == 1 else (h, w, channels)).copy()


def read_pgm(path) -> np.ndarray:
    return _read_pnm(path, b"P5", 1)


def read_ppm(path) -> np.ndarray:
    return _read_pnm(path, b"P6", 3)
