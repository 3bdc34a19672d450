"""Binary PPM/PGM image files.

RGB is 8-bit P6 over [0,1]; depth is 16-bit big-endian P5 in millimeters
(0 = no return); segmentation is 8-bit P5 class IDs. Load(save(x)) is
bitwise exact on the file bytes.
"""

from __future__ import annotations

import numpy as np

from .errors import ValidationError

DEPTH_SCALE_MM = 1000.0


def save_rgb(path, rgb: np.ndarray) -> None:
    rgb = np.asarray(rgb, dtype=np.float64)
    if rgb.ndim != 3 or rgb.shape[2] != 3:
        raise ValidationError(f"rgb image must be HxWx3, got {rgb.shape}")
    q = np.clip(np.rint(rgb * 255.0), 0, 255).astype(np.uint8)
    h, w, _ = q.shape
    with open(path, "wb") as fh:
        fh.write(b"P6\n%d %d\n255\n" % (w, h))
        fh.write(q.tobytes())


def load_rgb(path) -> np.ndarray:
    data, (w, h), maxval = _read_pnm(path, b"P6")
    if maxval != 255:
        raise ValidationError(f"{path}: expected 8-bit PPM, maxval {maxval}")
    arr = np.frombuffer(data, dtype=np.uint8, count=w * h * 3).reshape(h, w, 3)
    return arr.astype(np.float64) / 255.0


def save_depth(path, depth: np.ndarray) -> None:
    depth = np.asarray(depth, dtype=np.float64)
    if depth.ndim != 2:
        raise ValidationError(f"depth image must be HxW, got {depth.shape}")
    mm = np.clip(np.rint(depth * DEPTH_SCALE_MM), 0, 65535).astype(">u2")
    h, w = mm.shape
    with open(path, "wb") as fh:
        fh.write(b"P5\n%d %d\n65535\n" % (w, h))
        fh.write(mm.tobytes())


def load_depth(path) -> np.ndarray:
    data, (w, h), maxval = _read_pnm(path, b"P5")
    if maxval != 65535:
        raise ValidationError(f"{path}: expected 16-bit PGM, maxval {maxval}")
    arr = np.frombuffer(data, dtype=">u2", count=w * h).reshape(h, w)
    return arr.astype(np.float64) / DEPTH_SCALE_MM


def save_seg(path, seg: np.ndarray) -> None:
    seg = np.asarray(seg)
    if seg.ndim != 2:
        raise ValidationError(f"seg mask must be HxW, got {seg.shape}")
    if seg.min() < 0 or seg.max() > 255:
        raise ValidationError("seg class IDs must fit in a byte")
    q = seg.astype(np.uint8)
    h, w = q.shape
    with open(path, "wb") as fh:
        fh.write(b"P5\n%d %d\n255\n" % (w, h))
        fh.write(q.tobytes())


def load_seg(path) -> np.ndarray:
    data, (w, h), maxval = _read_pnm(path, b"P5")
    if maxval != 255:
        raise ValidationError(f"{path}: expected 8-bit PGM, maxval {maxval}")
    return np.frombuffer(data, dtype=np.uint8, count=w * h).reshape(h, w).copy()


def _read_pnm(path, magic):
    with open(path, "rb") as fh:
        blob = fh.read()
    if not blob.startswith(magic):
        raise ValidationError(f"{path}: expected {magic.decode()} file")
    fields = []
    pos = 2
    while len(fields) < 3:
        while pos < len(blob) and blob[pos : pos + 1].isspace():
            pos += 1
        if blob[pos : pos + 1] == b"#":  # comment line
            while pos < len(blob) and blob[pos : pos + 1] != b"\n":
                pos += 1
            continue
        start = pos
        while pos < len(blob) and not blob[pos : pos + 1].isspace():
            pos += 1
        if start == pos:
            raise ValidationError(f"{path}: truncated header")
        fields.append(int(blob[start:pos]))
    pos += 1  # single whitespace after maxval
    w, h, maxval = fields
    bytes_per = 3 if magic == b"P6" else 1
    if maxval > 255:
        bytes_per *= 2
    need = w * h * bytes_per
    data = blob[pos : pos + need]
    if len(data) != need:
        raise ValidationError(f"{path}: truncated pixel data")
    return data, (w, h), maxval
