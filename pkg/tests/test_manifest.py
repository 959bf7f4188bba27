import hashlib
import os

import pytest

from trimine.errors import FormatError, PrerequisiteError
from trimine.manifest import RunManifest, file_sha256, load_manifest, require_producer, save_manifest


def produce(run_dir, command: str, name: str, payload: bytes = b"x"):
    artifact = run_dir / name
    artifact.write_bytes(payload)
    manifest = RunManifest(command=command, seed=0)
    manifest.add_output(name.split(".")[0], artifact)
    save_manifest(manifest, run_dir)
    return artifact


class TestManifest:
    def test_round_trip(self, tmp_path):
        artifact = tmp_path / "features.tmds"
        artifact.write_bytes(b"payload")
        manifest = RunManifest(command="embed", seed=3, settings={"name": "features.tmds"})
        manifest.add_output("features", artifact)
        path = save_manifest(manifest, tmp_path)
        assert os.path.basename(path) == "manifest.embed.json"
        loaded = load_manifest(tmp_path, "embed")
        assert loaded == manifest
        assert loaded.outputs["features"]["sha256"] == hashlib.sha256(b"payload").hexdigest()

    def test_missing_manifest(self, tmp_path):
        assert load_manifest(tmp_path, "embed") is None

    def test_unreadable_manifest(self, tmp_path):
        (tmp_path / "manifest.mine.json").write_text("{not json")
        with pytest.raises(FormatError):
            load_manifest(tmp_path, "mine")

    def test_commands_sharing_a_directory_keep_their_own_manifests(self, tmp_path):
        produce(tmp_path, "embed", "features.tmds")
        produce(tmp_path, "mine", "triplets.tmts")
        assert load_manifest(tmp_path, "embed").command == "embed"
        assert load_manifest(tmp_path, "mine").command == "mine"

    def test_sha256(self, tmp_path):
        path = tmp_path / "blob"
        path.write_bytes(bytes(range(256)) * 5000)
        assert file_sha256(path) == hashlib.sha256(path.read_bytes()).hexdigest()


class TestRequireProducer:
    def test_produced_by_the_expected_command(self, tmp_path):
        artifact = produce(tmp_path, "embed", "features.tmds")
        require_producer(artifact, "embed", "hint")

    def test_other_command(self, tmp_path):
        artifact = produce(tmp_path, "gen-synth", "dataset.tmds")
        with pytest.raises(PrerequisiteError, match="not produced by 'embed'") as excinfo:
            require_producer(artifact, "embed", "Run 'trimine embed'.")
        assert excinfo.value.artifact == str(artifact)

    def test_later_command_in_the_same_directory(self, tmp_path):
        artifact = produce(tmp_path, "embed", "features.tmds")
        produce(tmp_path, "mine", "triplets.tmts")
        require_producer(artifact, "embed", "hint")

    def test_artifact_not_listed(self, tmp_path):
        produce(tmp_path, "embed", "features.tmds")
        other = tmp_path / "other.tmds"
        other.write_bytes(b"y")
        with pytest.raises(PrerequisiteError):
            require_producer(other, "embed", "hint")

    def test_no_manifest(self, tmp_path):
        artifact = tmp_path / "features.tmds"
        artifact.write_bytes(b"x")
        with pytest.raises(PrerequisiteError):
            require_producer(os.fspath(artifact), "embed", "hint")
