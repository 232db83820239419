"""CSV / manifest / cache file plumbing.

All numeric CSV fields are written with 17 significant digits, '.'
decimal separator and LF line endings, so byte-identical reruns can be
diffed directly (cpu_seconds columns and manifest timestamps are the
only run-dependent values).
"""

import hashlib
import json
import os
import tempfile
import time
from pathlib import Path

import numpy as np


def format_cell(value):
    if isinstance(value, (bool, np.bool_)):
        return "1" if value else "0"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return f"{float(value):.17g}"
    return str(value)


def _atomic_write(path, data):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name + ".tmp")
    try:
        with os.fdopen(fd, "w", newline="\n") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_csv(path, header, rows):
    lines = [",".join(header)]
    for row in rows:
        lines.append(",".join(format_cell(v) for v in row))
    _atomic_write(path, "\n".join(lines) + "\n")
    return Path(path)


def read_csv(path):
    with open(path, newline="\n") as fh:
        lines = [ln.rstrip("\n") for ln in fh if ln.strip()]
    header = lines[0].split(",")
    rows = [ln.split(",") for ln in lines[1:]]
    return header, rows


def canonical_json(obj):
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def content_hash(obj):
    return hashlib.sha256(canonical_json(obj).encode()).hexdigest()


def manifest_path(csv_path):
    return Path(csv_path).with_suffix(".manifest.json")


def write_manifest(csv_path, config_mapping, timings, library_version,
                   extra=None):
    payload = {
        "output": Path(csv_path).name,
        "config": config_mapping,
        "content_hash": content_hash(config_mapping),
        "timings": timings,
        "library_version": library_version,
        "created_at": time.strftime("%Y-%m-%dT%H:%M:%S", time.gmtime()),
    }
    if extra:
        payload.update(extra)
    _atomic_write(manifest_path(csv_path), json.dumps(payload, indent=2) + "\n")
    return manifest_path(csv_path)


class BasisCache:
    """On-disk cache of local-basis column matrices, keyed by content hash."""

    def __init__(self, root):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)

    def key(self, payload):
        return content_hash(payload)

    def _path(self, key):
        return self.root / f"basis-{key}.npz"

    def load(self, key):
        path = self._path(key)
        if not path.exists():
            return None
        with np.load(path) as data:
            return data["values"].copy()

    def store(self, key, values, payload):
        path = self._path(key)
        fd, tmp = tempfile.mkstemp(dir=self.root, prefix=path.name + ".tmp")
        os.close(fd)
        try:
            np.savez_compressed(tmp, values=values)
            # savez appends .npz to plain names
            tmp_npz = tmp if tmp.endswith(".npz") else tmp + ".npz"
            os.replace(tmp_npz, path)
        finally:
            if os.path.exists(tmp):
                os.unlink(tmp)
        meta = self.root / f"basis-{key}.json"
        _atomic_write(meta, canonical_json(payload) + "\n")
