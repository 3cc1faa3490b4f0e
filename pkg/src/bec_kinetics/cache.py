"""On-disk cache for overlap tables and rate tables.

File layout: 6-byte magic ``BECKIN``, one format-version byte, a 4-byte
little-endian header length, a UTF-8 JSON header, then an ``.npz`` payload.
Files with a different magic, version or key are treated as misses.
"""

from __future__ import annotations

import hashlib
import io
import json
import os
import struct
from pathlib import Path

import numpy as np

from .rates import RateTable
from .trap import TrapConfig

MAGIC = b"BECKIN"
FORMAT_VERSION = 1


def write_blob(path, kind: str, key: str, arrays: dict, meta: dict | None = None) -> None:
    header = json.dumps({"kind": kind, "key": key, "meta": meta or {}}, sort_keys=True).encode()
    buf = io.BytesIO()
    np.savez(buf, **arrays)
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_suffix(path.suffix + ".tmp")
    with tmp.open("wb") as fh:
        fh.write(MAGIC + bytes([FORMAT_VERSION]) + struct.pack("<I", len(header)))
        fh.write(header)
        fh.write(buf.getvalue())
    os.replace(tmp, path)


def read_blob(path, kind: str, key: str):
    """(arrays, meta) or None on any mismatch or corruption."""
    try:
        data = Path(path).read_bytes()
    except OSError:
        return None
    head = len(MAGIC) + 5
    if len(data) < head or data[: len(MAGIC)] != MAGIC or data[len(MAGIC)] != FORMAT_VERSION:
        return None
    (n,) = struct.unpack("<I", data[len(MAGIC) + 1 : head])
    try:
        header = json.loads(data[head : head + n])
        if header.get("kind") != kind or header.get("key") != key:
            return None
        with np.load(io.BytesIO(data[head + n :]), allow_pickle=False) as npz:
            arrays = {name: npz[name] for name in npz.files}
    except (ValueError, OSError, json.JSONDecodeError):
        return None
    return arrays, header["meta"]


def _digest(text: str) -> str:
    return hashlib.sha256(text.encode()).hexdigest()[:16]


class RunCache:
    """Overlap tables keyed by (frequencies, mass, max index); rate tables by config hash."""

    def __init__(self, root, enabled: bool = True):
        self.root = Path(root)
        self.enabled = enabled
        self.hits: dict[str, bool] = {}

    def _overlap_key(self, config: TrapConfig, axis: str, max_index: int) -> str:
        omega = dict(zip("xyz", config.omegas))[axis]
        return f"overlap|{omega!r}|{config.mass!r}|{max_index}"

    def load_overlap(self, config: TrapConfig, axis: str, max_index: int):
        if not self.enabled:
            return None
        key = self._overlap_key(config, axis, max_index)
        got = read_blob(self.root / f"overlap-{_digest(key)}.bin", "overlap", key)
        self.hits[f"overlap_{axis}"] = got is not None
        return None if got is None else got[0]["values"]

    def store_overlap(self, config: TrapConfig, axis: str, max_index: int, values: np.ndarray):
        if self.enabled:
            key = self._overlap_key(config, axis, max_index)
            write_blob(self.root / f"overlap-{_digest(key)}.bin", "overlap", key, {"values": values})

    def load_rates(self, config_hash: str) -> RateTable | None:
        if not self.enabled:
            return None
        key = f"rates|{config_hash}"
        got = read_blob(self.root / f"rates-{config_hash}.bin", "rates", key)
        self.hits["rates"] = got is not None
        if got is None:
            return None
        arrays, meta = got
        for a in arrays.values():
            a.setflags(write=False)
        return RateTable(
            arrays["lambda_plus"], arrays["lambda_minus"], arrays["xi_plus"], arrays["xi_minus"],
            meta["mode"], meta.get("provenance", ""),
        )

    def store_rates(self, config_hash: str, rates: RateTable) -> None:
        if not self.enabled:
            return
        arrays = {
            "lambda_plus": rates.lambda_plus,
            "lambda_minus": rates.lambda_minus,
            "xi_plus": rates.xi_plus,
            "xi_minus": rates.xi_minus,
        }
        write_blob(
            self.root / f"rates-{config_hash}.bin", "rates", f"rates|{config_hash}", arrays,
            {"mode": rates.mode, "provenance": rates.provenance},
        )
