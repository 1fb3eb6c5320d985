"""VXG1 voxel grid file format and dataset directories.

A VXG1 file is: magic bytes "VXG1", five little-endian u32 values
(version=1, C, Dx, Dy, Dz), then C*Dx*Dy*Dz little-endian float32 values
in (C, x, y, z) row-major order.  Total length is 24 + 4*C*Dx*Dy*Dz bytes
and a write/read round trip is bit-exact.

A dataset directory holds one input grid per sample (plus a target grid
for completion) and a manifest.json naming the files and labels.
"""

import json
import struct
from pathlib import Path

import numpy as np

from .backbone import VoxelGrid
from .data import ShapeSample
from .engine import Tensor
from .errors import DataError, NumericError

MAGIC = b"VXG1"
VERSION = 1
HEADER = struct.Struct("<5I")


def write_vxg(path, volume) -> None:
    arr = np.asarray(volume.data.data if isinstance(volume, VoxelGrid)
                     else (volume.data if isinstance(volume, Tensor) else volume))
    if arr.ndim != 4:
        raise DataError(f"VXG1 stores (C,Dx,Dy,Dz) grids, got shape {arr.shape}")
    payload = np.ascontiguousarray(arr, dtype="<f4").tobytes()
    try:
        with open(path, "wb") as fh:
            fh.write(MAGIC)
            fh.write(HEADER.pack(VERSION, *arr.shape))
            fh.write(payload)
    except OSError as exc:
        raise DataError(f"cannot write {path}: {exc}") from None


def read_vxg(path) -> np.ndarray:
    try:
        with open(path, "rb") as fh:
            raw = fh.read()
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc}") from None
    if len(raw) < 24 or raw[:4] != MAGIC:
        raise DataError(f"{path} is not a VXG1 file")
    version, c, dx, dy, dz = HEADER.unpack(raw[4:24])
    if version != VERSION:
        raise DataError(f"{path}: unsupported VXG version {version}")
    expected = 24 + 4 * c * dx * dy * dz
    if len(raw) != expected:
        raise DataError(f"{path}: expected {expected} bytes, found {len(raw)}")
    return np.frombuffer(raw[24:], dtype="<f4").reshape(c, dx, dy, dz).copy()


def _sample_names(index, task):
    base = f"sample_{index:05d}"
    if task == "complete":
        return f"{base}_input.vxg", f"{base}_target.vxg"
    return f"{base}_input.vxg", None


def save_dataset(directory, samples, task, dims, seed, meta=None) -> dict:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    index = []
    for i, sample in enumerate(samples):
        in_name, tgt_name = _sample_names(i, task)
        write_vxg(directory / in_name, sample.volume)
        entry = {"input": in_name, "label": int(sample.label)}
        if tgt_name is not None:
            if sample.target is None:
                raise DataError(f"sample {i} missing completion target")
            write_vxg(directory / tgt_name, sample.target)
            entry["target"] = tgt_name
        index.append(entry)
    manifest = {"format": "VXG1", "task": task, "dims": list(dims),
                "seed": seed, "count": len(samples), "samples": index}
    if meta:
        manifest["meta"] = meta
    text = json.dumps(manifest, indent=2, sort_keys=True) + "\n"
    (directory / "manifest.json").write_text(text, encoding="utf-8")
    return manifest


def load_dataset(directory, check_finite=True):
    """Returns (samples, manifest).  Non-finite voxel data is an error."""
    directory = Path(directory)
    manifest_path = directory / "manifest.json"
    if not manifest_path.exists():
        raise DataError(f"no manifest.json under {directory}")
    try:
        manifest = json.loads(manifest_path.read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise DataError(f"cannot parse {manifest_path}: {exc}") from None
    samples = []
    for i, entry in enumerate(manifest.get("samples", [])):
        vol = read_vxg(directory / entry["input"])
        if check_finite and not np.all(np.isfinite(vol)):
            raise NumericError(f"non-finite values in {entry['input']}")
        target = None
        if "target" in entry:
            tgt = read_vxg(directory / entry["target"])
            if check_finite and not np.all(np.isfinite(tgt)):
                raise NumericError(f"non-finite values in {entry['target']}")
            target = VoxelGrid(Tensor(tgt))
        samples.append(ShapeSample(volume=VoxelGrid(Tensor(vol)),
                                   label=int(entry["label"]), target=target))
    return samples, manifest
