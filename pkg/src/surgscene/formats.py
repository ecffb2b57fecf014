"""Readers and writers for PFM, PGM/PBM and ASCII PLY files."""

from __future__ import annotations

import re
from pathlib import Path

import numpy as np

from .errors import LoadError


def write_pfm(path, data: np.ndarray) -> None:
    """Single-channel little-endian PFM (scale -1.0), rows stored bottom to top."""
    data = np.asarray(data, dtype="<f4")
    if data.ndim != 2:
        raise ValueError("PFM writer expects a 2-D array")
    h, w = data.shape
    with open(path, "wb") as fh:
        fh.write(f"Pf\n{w} {h}\n-1.0\n".encode("ascii"))
        fh.write(np.ascontiguousarray(data[::-1]).tobytes())


def read_pfm(path) -> np.ndarray:
    path = Path(path)
    try:
        raw = path.read_bytes()
    except OSError as exc:
        raise LoadError(f"{path}: cannot read ({exc.strerror})") from exc
    tokens = []
    pos = 0
    while len(tokens) < 4:
        m = re.compile(rb"\s*(\S+)").match(raw, pos)
        if m is None:
            raise LoadError(f"{path}: truncated PFM header")
        tokens.append(m.group(1))
        pos = m.end()
    pos += 1  # single whitespace byte after the scale
    magic, w, h, scale = tokens
    if magic not in (b"Pf", b"PF"):
        raise LoadError(f"{path}: not a PFM file (magic {magic!r})")
    channels = 1 if magic == b"Pf" else 3
    try:
        w, h, scale = int(w), int(h), float(scale)
    except ValueError as exc:
        raise LoadError(f"{path}: malformed PFM header") from exc
    dtype = "<f4" if scale < 0 else ">f4"
    count = w * h * channels
    if len(raw) - pos < 4 * count:
        raise LoadError(f"{path}: PFM payload too short")
    data = np.frombuffer(raw, dtype=dtype, count=count, offset=pos).reshape(h, w, channels)[::-1]
    if channels == 1:
        data = data[:, :, 0]
    return data.astype(np.float32)


def _pnm_header(raw: bytes, path, n_fields: int):
    """Parse ``n_fields`` whitespace-separated header tokens, skipping comments."""
    tokens = []
    pos = 0
    while len(tokens) < n_fields:
        m = re.compile(rb"(?:\s|#[^\n]*\n)*(\S+)").match(raw, pos)
        if m is None:
            raise LoadError(f"{path}: truncated PNM header")
        tokens.append(m.group(1))
        pos = m.end()
    return tokens, pos + 1


def write_pgm(path, image: np.ndarray, maxval: int = 65535) -> None:
    """Binary PGM. Float input in [0, 1] is scaled to ``maxval``; integer input is written as is."""
    img = np.asarray(image)
    if img.ndim != 2:
        raise ValueError("PGM writer expects a 2-D array")
    if np.issubdtype(img.dtype, np.floating):
        img = np.round(np.clip(img, 0.0, 1.0) * maxval)
    img = img.astype(">u2" if maxval > 255 else "u1")
    h, w = img.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{w} {h}\n{maxval}\n".encode("ascii"))
        fh.write(img.tobytes())


def read_pnm(path) -> tuple[np.ndarray, int]:
    """Read PGM (P2/P5) or PBM (P1/P4). Returns ``(array, maxval)``; PBM yields a bool array and maxval 1."""
    path = Path(path)
    try:
        raw = path.read_bytes()
    except OSError as exc:
        raise LoadError(f"{path}: cannot read ({exc.strerror})") from exc
    magic = raw[:2]
    if magic in (b"P4", b"P1"):
        (_, w, h), pos = _pnm_header(raw, path, 3)
        w, h = int(w), int(h)
        if magic == b"P4":
            stride = (w + 7) // 8
            packed = np.frombuffer(raw, dtype=np.uint8, count=stride * h, offset=pos).reshape(h, stride)
            bits = np.unpackbits(packed, axis=1)[:, :w]
        else:
            digits = re.findall(rb"[01]", raw[pos:])
            bits = np.array([int(d) for d in digits[: w * h]], dtype=np.uint8).reshape(h, w)
        # PBM: 1 is black, i.e. "set"
        return bits.astype(bool), 1
    if magic in (b"P5", b"P2"):
        (_, w, h, maxval), pos = _pnm_header(raw, path, 4)
        w, h, maxval = int(w), int(h), int(maxval)
        if magic == b"P5":
            dtype = ">u2" if maxval > 255 else "u1"
            img = np.frombuffer(raw, dtype=dtype, count=w * h, offset=pos).reshape(h, w)
        else:
            img = np.array(raw[pos:].split()[: w * h], dtype=int).reshape(h, w)
        return img.astype(np.int64), maxval
    raise LoadError(f"{path}: unsupported image format (magic {magic!r})")


def read_gray(path) -> np.ndarray:
    """Grayscale image normalized to [0, 1]."""
    img, maxval = read_pnm(path)
    return img.astype(float) / maxval


def write_pbm(path, mask: np.ndarray) -> None:
    bits = np.asarray(mask, dtype=bool)
    h, w = bits.shape
    with open(path, "wb") as fh:
        fh.write(f"P4\n{w} {h}\n".encode("ascii"))
        fh.write(np.packbits(bits.astype(np.uint8), axis=1).tobytes())


def read_mask(path) -> np.ndarray:
    """Mask from PBM or from a 0/255 PGM (any nonzero value is set)."""
    img, maxval = read_pnm(path)
    return img.astype(bool)


def write_ply(path, points: np.ndarray, confidence: np.ndarray) -> None:
    """ASCII PLY with ``x y z confidence`` per vertex, at full float64 precision."""
    pts = np.asarray(points, dtype=float).reshape(-1, 3)
    conf = np.asarray(confidence, dtype=float).reshape(-1)
    lines = [
        "ply",
        "format ascii 1.0",
        f"element vertex {pts.shape[0]}",
        "property double x",
        "property double y",
        "property double z",
        "property double confidence",
        "end_header",
    ]
    body = [f"{x!r} {y!r} {z!r} {c!r}" for (x, y, z), c in zip(pts.tolist(), conf.tolist())]
    Path(path).write_text("\n".join(lines + body) + "\n")


def read_ply(path) -> tuple[np.ndarray, np.ndarray]:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise LoadError(f"{path}: cannot read ({exc.strerror})") from exc
    head, sep, body = text.partition("end_header\n")
    if not sep or not head.startswith("ply"):
        raise LoadError(f"{path}: not an ASCII PLY file")
    m = re.search(r"element vertex (\d+)", head)
    n = int(m.group(1)) if m else 0
    if n == 0:
        return np.zeros((0, 3)), np.zeros(0)
    data = np.array([[float(t) for t in line.split()] for line in body.splitlines()[:n]])
    return data[:, :3], data[:, 3]
