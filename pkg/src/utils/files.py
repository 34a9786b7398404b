import hashlib
import json
import os
import tempfile
from pathlib import Path
from typing import Any, Dict, Iterable, Optional


def canonical_json(data: Any) -> str:
    """Serialize data with sorted keys and no insignificant whitespace variation"""
    return json.dumps(data, sort_keys=True, ensure_ascii=False, indent=2) + "\n"


def atomic_write_bytes(path: str | Path, data: bytes) -> str:
    """
    Write bytes to a file through a temporary file and a rename

    Args:
        path: Destination file
        data: Content to write

    Returns:
        str: Path to the written file
    """
    output_path = Path(path)
    output_path.parent.mkdir(parents=True, exist_ok=True)

    fd, tmp_name = tempfile.mkstemp(prefix=f".{output_path.name}.", dir=output_path.parent)
    try:
        with os.fdopen(fd, "wb") as f:
            f.write(data)
        os.replace(tmp_name, output_path)
    except BaseException:
        if os.path.exists(tmp_name):
            os.unlink(tmp_name)
        raise

    return str(output_path)


def atomic_write_text(path: str | Path, text: str) -> str:
    """Write UTF-8 text atomically, keeping "\\n" line endings"""
    return atomic_write_bytes(path, text.encode("utf-8"))


def sha256_file(path: str | Path) -> str:
    """Hex SHA-256 of a file's content"""
    digest = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 16), b""):
            digest.update(chunk)
    return digest.hexdigest()


def sha256_text(text: str) -> str:
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


def write_manifest(
    output: str | Path,
    command: str,
    config_hash: str,
    seed: Optional[int],
    inputs: Iterable[str | Path],
    outputs: Iterable[str | Path],
    extra: Optional[Dict[str, Any]] = None,
) -> str:
    """
    Write the reproduction manifest next to a stage output

    The manifest holds checksums only, never timestamps, so that re-running a stage
    with unchanged inputs reproduces it byte for byte.

    Args:
        output: Primary output of the stage; the manifest is "<output>.manifest.json"
        command: Name of the command that produced the output
        config_hash: Hash of the effective configuration
        seed: Seed used by the stage
        inputs: Input files to checksum (missing files are recorded as null)
        outputs: Output files to checksum

    Returns:
        str: Path to the manifest
    """
    def _checksums(paths: Iterable[str | Path]) -> Dict[str, Optional[str]]:
        return {
            Path(p).name: sha256_file(p) if Path(p).is_file() else None
            for p in paths
        }

    manifest = {
        "command": command,
        "config_hash": config_hash,
        "seed": seed,
        "inputs": _checksums(inputs),
        "outputs": _checksums(outputs),
    }
    if extra:
        manifest["extra"] = extra

    manifest_path = Path(f"{output}.manifest.json")
    return atomic_write_text(manifest_path, canonical_json(manifest))
