"""Run manifests: the JSON record written next to every command's outputs."""

import hashlib
import json
import os
from dataclasses import asdict, dataclass, field

from . import __version__, config
from .errors import FormatError, PrerequisiteError


@dataclass
class RunManifest:
    command: str
    seed: int
    settings: dict = field(default_factory=dict)
    inputs: dict = field(default_factory=dict)
    outputs: dict = field(default_factory=dict)
    duration_seconds: float = 0.0
    version: str = __version__

    def add_output(self, name: str, path):
        """Record an artifact together with its sha256."""
        self.outputs[name] = {"path": os.path.abspath(path), "sha256": file_sha256(path)}


def file_sha256(path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()


def get_manifest_path(run_dir, command: str) -> str:
    return os.path.join(run_dir, config.MANIFEST_FILE_PATTERN.format(command=command))


def save_manifest(manifest: RunManifest, run_dir) -> str:
    """
    Write the manifest into ``run_dir`` under the name of its command.

    Commands sharing a run directory keep separate manifests, so a later
    command never hides what an earlier one produced.

    Args:
        manifest: Manifest to write
        run_dir: Output directory of the run

    Returns:
        str: Path of the manifest file
    """
    os.makedirs(run_dir, exist_ok=True)
    path = get_manifest_path(run_dir, manifest.command)
    with open(path, "w", encoding="utf-8") as f:
        json.dump(asdict(manifest), f, indent=2, sort_keys=True)
    return path


def load_manifest(run_dir, command: str) -> RunManifest | None:
    """
    Read the manifest ``command`` left in a run directory.

    Returns:
        RunManifest | None: None when that command has not written one there
    """
    path = get_manifest_path(run_dir, command)
    if not os.path.exists(path):
        return None
    try:
        with open(path, "r", encoding="utf-8") as f:
            data = json.load(f)
        return RunManifest(**data)
    except (json.JSONDecodeError, TypeError) as e:
        raise FormatError(f"{path}: unreadable manifest ({e})") from None


def require_producer(artifact_path, command: str, hint: str):
    """
    Check that ``artifact_path`` was written by ``command``, per that command's manifest next to it.

    Raises:
        PrerequisiteError: naming the missing artifact and the command that makes it
    """
    path = os.path.abspath(artifact_path)
    manifest = load_manifest(os.path.dirname(path), command)
    produced = manifest is not None and manifest.command == command and any(
        entry.get("path") == path for entry in manifest.outputs.values()
    )
    if not produced:
        raise PrerequisiteError(
            f"{artifact_path} was not produced by '{command}'. {hint}", artifact=str(artifact_path)
        )
