"""Run manifests and atomic output writing."""

from __future__ import annotations

import datetime as dt
import hashlib
import json
import os
import tempfile
from dataclasses import asdict, dataclass, field

from . import __version__


def atomic_write_text(path, text: str) -> str:
    """Write ``text`` to ``path`` through a temporary file and rename."""
    path = os.fspath(path)
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    finally:
        if os.path.exists(tmp):
            os.remove(tmp)
    return path


def file_digest(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def _timestamp() -> str:
    # SOURCE_DATE_EPOCH pins the timestamp for reproducible builds
    epoch = os.environ.get("SOURCE_DATE_EPOCH")
    if epoch is not None:
        when = dt.datetime.fromtimestamp(int(epoch), tz=dt.timezone.utc)
    else:
        when = dt.datetime.now(tz=dt.timezone.utc)
    return when.replace(microsecond=0).isoformat()


@dataclass
class RunManifest:
    command: str
    parameters: dict
    input_digests: dict = field(default_factory=dict)
    outputs: list = field(default_factory=list)
    tool_version: str = __version__
    timestamp: str | None = field(default_factory=_timestamp)
    seed: int | None = None
    notes: dict = field(default_factory=dict)

    @classmethod
    def for_inputs(cls, command: str, parameters: dict, inputs=(), seed=None) -> "RunManifest":
        digests = {os.fspath(p): file_digest(p) for p in inputs if p and os.path.isfile(p)}
        m = cls(command=command, parameters=parameters, input_digests=digests, seed=seed)
        if seed is not None and "SOURCE_DATE_EPOCH" not in os.environ:
            # seeded runs must be byte-reproducible, so no wall-clock stamp
            m.timestamp = None
        return m

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2, sort_keys=True, default=str) + "\n"

    def write(self, path) -> str:
        return atomic_write_text(path, self.to_json())


def manifest_path_for(output) -> str:
    output = os.fspath(output)
    if os.path.isdir(output):
        return os.path.join(output, "manifest.json")
    return output + ".manifest.json"
