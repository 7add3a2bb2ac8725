"""Checkpoint directory: JSON manifest + float32 tensor blob + RNG state.

Layout: manifest.json (format version, config hash, stage completed, tensor
index), tensors.bin (32-bit little-endian floats concatenated in manifest
order, followed by an 8-byte length and 4-byte CRC32 trailer), rng_state.bin.
Loading refuses corrupted blobs and config-hash mismatches.
"""

from __future__ import annotations

import json
import os
import zlib

import numpy as np

from ..errors import CheckpointCorruptError, CheckpointError

FORMAT_VERSION = 1


def save_checkpoint(path, tensors: dict, config_hash: str, stage: int,
                    rng_state: dict | None = None, extra: dict | None = None):
    os.makedirs(path, exist_ok=True)
    index = []
    chunks = []
    for name in sorted(tensors):
        arr = np.asarray(tensors[name], dtype=np.float64)
        index.append({"name": name, "shape": list(arr.shape), "dtype": "float32"})
        chunks.append(arr.astype("<f4").tobytes())
    blob = b"".join(chunks)
    trailer = len(blob).to_bytes(8, "little") + zlib.crc32(blob).to_bytes(4, "little")
    with open(os.path.join(path, "tensors.bin"), "wb") as fh:
        fh.write(blob + trailer)
    manifest = {
        "format_version": FORMAT_VERSION,
        "config_hash": config_hash,
        "stage_completed": stage,
        "tensors": index,
        "extra": extra or {},
    }
    with open(os.path.join(path, "manifest.json"), "w") as fh:
        json.dump(manifest, fh, indent=1, sort_keys=True)
    with open(os.path.join(path, "rng_state.bin"), "wb") as fh:
        fh.write(json.dumps(rng_state or {}, default=int).encode("utf-8"))
    return path


def load_checkpoint(path, expected_config_hash: str | None = None,
                    allow_hash_mismatch: bool = False):
    manifest_path = os.path.join(path, "manifest.json")
    if not os.path.exists(manifest_path):
        raise CheckpointError(f"no manifest at {path}")
    with open(manifest_path) as fh:
        manifest = json.load(fh)
    if manifest.get("format_version") != FORMAT_VERSION:
        raise CheckpointError(
            f"unsupported checkpoint format {manifest.get('format_version')}")
    if expected_config_hash is not None and \
            manifest["config_hash"] != expected_config_hash:
        if not allow_hash_mismatch:
            raise CheckpointError(
                f"config hash mismatch: checkpoint {manifest['config_hash']}, "
                f"current {expected_config_hash} (pass override to load anyway)")
    with open(os.path.join(path, "tensors.bin"), "rb") as fh:
        raw = fh.read()
    if len(raw) < 12:
        raise CheckpointCorruptError("tensor blob too short for its trailer")
    blob, trailer = raw[:-12], raw[-12:]
    length = int.from_bytes(trailer[:8], "little")
    checksum = int.from_bytes(trailer[8:], "little")
    if length != len(blob) or zlib.crc32(blob) != checksum:
        raise CheckpointCorruptError("tensor blob failed length/checksum record")
    tensors = {}
    offset = 0
    for entry in manifest["tensors"]:
        count = int(np.prod(entry["shape"])) if entry["shape"] else 1
        size = count * 4
        segment = blob[offset:offset + size]
        if len(segment) != size:
            raise CheckpointCorruptError(f"tensor {entry['name']} truncated")
        arr = np.frombuffer(segment, dtype="<f4").astype(np.float64)
        tensors[entry["name"]] = arr.reshape(entry["shape"])
        offset += size
    if offset != len(blob):
        raise CheckpointCorruptError("trailing bytes after last tensor")
    rng_path = os.path.join(path, "rng_state.bin")
    rng_state = {}
    if os.path.exists(rng_path):
        with open(rng_path, "rb") as fh:
            content = fh.read()
        if content:
            rng_state = json.loads(content.decode("utf-8"))
    return manifest, tensors, rng_state
