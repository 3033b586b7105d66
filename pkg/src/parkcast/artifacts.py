"""Fingerprinted stage artifacts.

Every artifact is a plain file plus a `<name>.meta.json` sidecar embedding the
tool version, config hash, seed and the fingerprints of every input. Metas
carry no timestamps, so re-running a stage with identical inputs produces
byte-identical files.
"""

from __future__ import annotations

import hashlib
import json
from pathlib import Path

from . import __version__
from .errors import FingerprintMismatchError


def sha256_bytes(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def sha256_file(path: Path | str) -> str:
    return sha256_bytes(Path(path).read_bytes())


def config_hash(config: dict) -> str:
    return sha256_bytes(json.dumps(config, sort_keys=True, default=str).encode())


def meta_path(path: Path | str) -> Path:
    path = Path(path)
    return path.with_name(path.name + ".meta.json")


def write_artifact(
    path: Path | str,
    content: str | bytes,
    *,
    inputs: dict[str, Path | str] | None = None,
    config: dict | None = None,
    seed: int | None = None,
) -> None:
    """Write the artifact and its fingerprint sidecar."""
    path = Path(path)
    if isinstance(content, str):
        content = content.encode("utf-8")
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(content)
    input_hashes = {}
    for name, source in (inputs or {}).items():
        if isinstance(source, (str, Path)) and Path(source).exists():
            input_hashes[name] = sha256_file(source)
        else:
            input_hashes[name] = str(source)
    meta = {
        "tool": "parkcast",
        "tool_version": __version__,
        "artifact": path.name,
        "sha256": sha256_bytes(content),
        "config_hash": config_hash(config or {}),
        "seed": seed,
        "inputs": input_hashes,
    }
    meta_path(path).write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def verify_artifact(path: Path | str) -> dict | None:
    """Check a file against its recorded fingerprint, if it has one.

    Returns the meta document (None when the file has no sidecar, e.g. an
    external input). Raises FingerprintMismatchError when the content has
    drifted from what the producing stage recorded.
    """
    path = Path(path)
    mp = meta_path(path)
    if not mp.exists():
        return None
    meta = json.loads(mp.read_text(encoding="utf-8"))
    actual = sha256_file(path)
    if meta.get("sha256") != actual:
        raise FingerprintMismatchError(path.name, expected=meta.get("sha256"), actual=actual)
    return meta


def read_verified_text(path: Path | str) -> str:
    verify_artifact(path)
    return Path(path).read_text(encoding="utf-8")
