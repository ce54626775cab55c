"""Deterministic on-disk artifacts: canonical JSON, CSV tables, wave frames.

Identical inputs must produce byte-identical files, so every writer pins
its formatting: JSON is emitted with sorted keys, minimal separators, and
the shortest round-tripping float repr; CSV uses repr for floats and "\n"
line endings; wave frames serialize as a length-prefixed JSON header
followed by raw little-endian complex128 bytes in C order.
"""

from __future__ import annotations

import hashlib
import json
import struct
from pathlib import Path

import numpy as np

from .dynamics import Ensemble, Trajectory, WaveFrames

FRAME_FORMAT = "wave-frames-v1"

__all__ = [
    "pythonize",
    "canonical_json",
    "sha256_of_json",
    "spec_hash",
    "write_json",
    "read_json",
    "write_csv",
    "write_trajectory_csv",
    "write_ensemble_csv",
    "write_frames",
    "read_frames",
]


def pythonize(obj):
    """Recursively convert numpy scalars/arrays so json can serialize them."""
    if isinstance(obj, dict):
        return {str(k): pythonize(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [pythonize(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [pythonize(v) for v in obj.tolist()]
    if isinstance(obj, (np.floating, float)):
        return float(obj)
    if isinstance(obj, (np.integer, int)) and not isinstance(obj, bool):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    if isinstance(obj, complex):
        raise TypeError("complex values must be split into [re, im] before writing")
    return obj


def canonical_json(obj) -> str:
    """Sorted keys, no inessential whitespace, shortest-repr floats, no NaN."""
    return json.dumps(pythonize(obj), sort_keys=True, separators=(",", ":"), allow_nan=False)


def sha256_of_json(obj) -> str:
    return hashlib.sha256(canonical_json(obj).encode("utf-8")).hexdigest()


def spec_hash(spec_obj: dict, exclude: tuple = ("out_dir",)) -> str:
    """Hash of a spec's canonical JSON, ignoring where its output lands."""
    trimmed = {k: v for k, v in spec_obj.items() if k not in exclude}
    return sha256_of_json(trimmed)


def write_json(path, obj) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes((canonical_json(obj) + "\n").encode("utf-8"))
    return path


def read_json(path):
    return json.loads(Path(path).read_text(encoding="utf-8"))


def _cell(value) -> str:
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return str(value)


def write_csv(path, header, rows) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    lines = [",".join(str(h) for h in header)]
    lines.extend(",".join(_cell(v) for v in row) for row in rows)
    path.write_bytes(("\n".join(lines) + "\n").encode("utf-8"))
    return path


def write_trajectory_csv(path, traj: Trajectory) -> Path:
    ndim = traj.configurations.shape[1]
    header = ["t"] + [f"x{d + 1}" for d in range(ndim)]
    rows = (
        [t] + list(q) for t, q in zip(traj.times, traj.configurations)
    )
    return write_csv(path, header, rows)


def write_ensemble_csv(path, e: Ensemble) -> Path:
    ndim = e.trajectories[0].configurations.shape[1]
    header = ["trajectory_id", "t"] + [f"x{d + 1}" for d in range(ndim)]

    def rows():
        for m, traj in enumerate(e.trajectories):
            for t, q in zip(traj.times, traj.configurations):
                yield [m, t] + list(q)

    return write_csv(path, header, rows())


def write_frames(path, frames: WaveFrames) -> Path:
    """Length-prefixed JSON header, then raw complex128 amplitudes (C order)."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    header = canonical_json(
        {
            "format": FRAME_FORMAT,
            "times": list(frames.times),
            "axes": [
                {"start": float(a[0]), "step": float(a[1] - a[0]), "size": int(a.size)}
                for a in frames.axes
            ],
            "dtype": "complex128",
        }
    ).encode("utf-8")
    payload = np.ascontiguousarray(frames.amplitudes, dtype="<c16").tobytes()
    with path.open("wb") as fh:
        fh.write(struct.pack("<I", len(header)))
        fh.write(header)
        fh.write(payload)
    return path


def read_frames(path) -> WaveFrames:
    path = Path(path)
    raw = path.read_bytes()
    (header_len,) = struct.unpack_from("<I", raw, 0)
    header = json.loads(raw[4 : 4 + header_len].decode("utf-8"))
    if header.get("format") != FRAME_FORMAT:
        raise ValueError(f"{path} is not a {FRAME_FORMAT} file")
    axes = tuple(
        ax["start"] + ax["step"] * np.arange(ax["size"]) for ax in header["axes"]
    )
    times = np.asarray(header["times"], dtype=float)
    shape = (times.size,) + tuple(ax["size"] for ax in header["axes"])
    amplitudes = (
        np.frombuffer(raw[4 + header_len :], dtype="<c16").reshape(shape).copy()
    )
    return WaveFrames(axes, times, amplitudes)
