"""File formats: graymaps, f32 grids, weight checkpoints, grasp lists and loss curves."""

from __future__ import annotations

import csv
import json
import struct
from pathlib import Path

import numpy as np
import torch

from .grasp_head import GraspPose

GRID_MAGIC = b"F32G"
CKPT_MAGIC = b"SGWT"
FORMAT_VERSION = 1


class FormatError(ValueError):
    pass


def write_pgm(path: str | Path, values: np.ndarray, vmax: float | None = None, config_hash: str = "") -> None:
    """8-bit binary portable graymap, linearly scaled so ``vmax`` maps to 255.

    The config hash goes into a header comment line.
    """
    v = np.asarray(values, dtype=np.float64)
    vmax = float(v.max()) if vmax is None else vmax
    scaled = np.zeros_like(v) if vmax <= 0 else np.clip(v / vmax, 0, 1) * 255
    img = np.round(scaled).astype(np.uint8)
    H, W = img.shape
    comment = f"# config_hash: {config_hash}\n" if config_hash else ""
    Path(path).write_bytes(f"P5\n{comment}{W} {H}\n255\n".encode() + img.tobytes())


def _pgm_header(data: bytes) -> tuple[list[bytes], dict, int]:
    tokens, meta, pos = [], {}, 0
    while len(tokens) < 4:
        while pos < len(data) and data[pos:pos + 1].isspace():
            pos += 1
        if data[pos:pos + 1] == b"#":
            end = data.index(b"\n", pos)
            line = data[pos + 1:end].decode()
            if ":" in line:
                key, value = line.split(":", 1)
                meta[key.strip()] = value.strip()
            pos = end + 1
            continue
        end = pos
        while end < len(data) and not data[end:end + 1].isspace():
            end += 1
        tokens.append(data[pos:end])
        pos = end
    return tokens, meta, pos + 1


def read_pgm(path: str | Path, with_meta: bool = False):
    data = Path(path).read_bytes()
    try:
        tokens, meta, start = _pgm_header(data)
    except ValueError as exc:
        raise FormatError(f"{path}: malformed graymap header") from exc
    if tokens[0] != b"P5":
        raise FormatError(f"{path}: not a binary graymap")
    W, H, maxval = (int(t) for t in tokens[1:4])
    if maxval != 255:
        raise FormatError("only 8-bit graymaps are supported")
    if len(data) - start != W * H:
        raise FormatError(f"{path}: payload size mismatch")
    img = np.frombuffer(data[start:], dtype=np.uint8).reshape(H, W)
    return (img, meta) if with_meta else img


_GRID_HEADER = struct.Struct("<4sHII16s")


def write_grid(path: str | Path, values: np.ndarray, config_hash: str = "") -> None:
    """``F32G`` magic, version, H, W, 16-byte config hash, then row-major little-endian f32."""
    v = np.asarray(values, dtype="<f4")
    if v.ndim != 2:
        raise FormatError("grids are 2-D")
    header = _GRID_HEADER.pack(GRID_MAGIC, FORMAT_VERSION, *v.shape, config_hash.encode()[:16])
    Path(path).write_bytes(header + v.tobytes())


def read_grid(path: str | Path, with_meta: bool = False):
    data = Path(path).read_bytes()
    if len(data) < _GRID_HEADER.size or data[:4] != GRID_MAGIC:
        raise FormatError(f"{path}: not an f32 grid")
    _magic, version, H, W, digest = _GRID_HEADER.unpack_from(data)
    if version != FORMAT_VERSION:
        raise FormatError(f"{path}: unsupported grid version {version}")
    payload = data[_GRID_HEADER.size:]
    if len(payload) != 4 * H * W:
        raise FormatError(f"{path}: payload size mismatch")
    grid = np.frombuffer(payload, dtype="<f4").reshape(H, W).copy()
    return (grid, {"config_hash": digest.rstrip(b"\0").decode()}) if with_meta else grid


def save_checkpoint(path: str | Path, state: dict, config_hash: str = "", meta: dict | None = None) -> None:
    """Shape-manifest header followed by little-endian f32 arrays in manifest order."""
    names = list(state)
    arrays = [np.ascontiguousarray(state[k].detach().cpu().numpy() if isinstance(state[k], torch.Tensor)
                                   else state[k], dtype="<f4") for k in names]
    manifest = {"config_hash": config_hash, "meta": meta or {},
                "tensors": [{"name": k, "shape": list(a.shape)} for k, a in zip(names, arrays)]}
    header = json.dumps(manifest, sort_keys=True).encode()
    with open(path, "wb") as fh:
        fh.write(CKPT_MAGIC + struct.pack("<HI", FORMAT_VERSION, len(header)) + header)
        for a in arrays:
            fh.write(a.tobytes())


def load_checkpoint(path: str | Path) -> tuple[dict, dict]:
    data = Path(path).read_bytes()
    if data[:4] != CKPT_MAGIC:
        raise FormatError(f"{path}: not a weight checkpoint")
    version, hlen = struct.unpack_from("<HI", data, 4)
    if version != FORMAT_VERSION:
        raise FormatError(f"{path}: unsupported checkpoint version {version}")
    manifest = json.loads(data[10:10 + hlen])
    offset = 10 + hlen
    state = {}
    for entry in manifest["tensors"]:
        n = int(np.prod(entry["shape"], dtype=np.int64))
        if offset + 4 * n > len(data):
            raise FormatError(f"{path}: truncated payload")
        arr = np.frombuffer(data, dtype="<f4", count=n, offset=offset).reshape(entry["shape"])
        state[entry["name"]] = torch.from_numpy(arr.copy())
        offset += 4 * n
    if offset != len(data):
        raise FormatError(f"{path}: trailing or missing payload bytes")
    return state, manifest


def write_grasps(path: str | Path, grasps: list[GraspPose], frame_id: str, config_hash: str) -> None:
    lines = [f"# frame_id: {frame_id}", f"# config_hash: {config_hash}",
             "# r00 r01 r02 r10 r11 r12 r20 r21 r22 tx ty tz width score"]
    lines += [" ".join(f"{v:.9g}" for v in g.to_row()) for g in grasps]
    Path(path).write_text("\n".join(lines) + "\n")


def read_grasps(path: str | Path) -> tuple[list[GraspPose], dict]:
    header, grasps = {}, []
    for line in Path(path).read_text().splitlines():
        if line.startswith("#"):
            if ":" in line:
                key, value = line[1:].split(":", 1)
                header[key.strip()] = value.strip()
        elif line.strip():
            grasps.append(GraspPose.from_row(line.split()))
    return grasps, header


def write_loss_curve(path: str | Path, curve: list[dict], config_hash: str = "") -> None:
    cols = ["step", "L_obj", "L_p", "L_v", "L_s", "L_w", "total"]
    with open(path, "w", newline="") as fh:
        fh.write(f"# config_hash: {config_hash}\n")
        writer = csv.writer(fh)
        writer.writerow(cols)
        for i, row in enumerate(curve):
            writer.writerow([i] + [repr(float(row[c])) for c in cols[1:]])
