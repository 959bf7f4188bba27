import struct

import numpy as np
import pytest

from conftest import make_blobs
from trimine.core import EmbeddingSet, ExtremePolicy, Rng, Triplet
from trimine.dataio import (
    PART_NAMES,
    SplitSpec,
    load_dataset,
    load_matrix,
    load_negative_frequency,
    load_triplets,
    save_dataset,
    save_matrix,
    save_negative_frequency,
    save_skip_report,
    save_triplets,
    split,
    read_csv,
)
from trimine.distance import pairwise
from trimine.errors import FormatError, UsageError
from trimine.miner import NO_POSITIVE, SkippedAnchor, TripletSet, mine_offline, negative_frequency


def triplets():
    return TripletSet(
        (Triplet(0, 1, 2, ExtremePolicy.EPEN), Triplet(2, 3, 0, ExtremePolicy.HPHN)),
        ExtremePolicy.ASSORTED,
        seed=2**40 + 3,
    )


def four_points():
    return EmbeddingSet([[0.0], [1.0], [10.0], [12.0]], [0, 0, 1, 1], 2)


class TestDatasets:
    @pytest.mark.parametrize("name", ["data.tmds", "data.csv"])
    def test_round_trip(self, tmp_path, name):
        E = make_blobs()
        E = E.with_vectors(E.vectors / 3.0)
        path = tmp_path / name
        save_dataset(E, path)
        loaded = load_dataset(path)
        assert np.array_equal(loaded.vectors, E.vectors)
        assert np.array_equal(loaded.labels, E.labels)
        assert loaded.class_count == 3

    def test_binary_keeps_the_declared_class_count(self, tmp_path):
        path = tmp_path / "data.tmds"
        save_dataset(four_points(), path)
        assert load_dataset(path).class_count == 2

    def test_bad_magic(self, tmp_path):
        path = tmp_path / "data.tmds"
        save_dataset(four_points(), path)
        path.write_bytes(b"TMTS" + path.read_bytes()[4:])
        with pytest.raises(FormatError, match="bad magic") as excinfo:
            load_dataset(path)
        assert excinfo.value.offset == 0

    def test_truncated(self, tmp_path):
        path = tmp_path / "data.tmds"
        save_dataset(four_points(), path)
        data = path.read_bytes()
        path.write_bytes(data[:-4])
        with pytest.raises(FormatError, match="payload length") as excinfo:
            load_dataset(path)
        assert excinfo.value.offset == len(data) - 4

    def test_truncated_header(self, tmp_path):
        path = tmp_path / "data.tmds"
        path.write_bytes(b"TMDS\x01\x00")
        with pytest.raises(FormatError, match="truncated header") as excinfo:
            load_dataset(path)
        assert excinfo.value.offset == 6

    def test_zero_dimension_header(self, tmp_path):
        path = tmp_path / "data.tmds"
        save_dataset(four_points(), path)
        data = bytearray(path.read_bytes())
        data[16:20] = struct.pack("<I", 0)
        path.write_bytes(bytes(data))
        with pytest.raises(FormatError, match="d = 0") as excinfo:
            load_dataset(path)
        assert excinfo.value.offset == 16

    def test_label_beyond_class_count(self, tmp_path):
        path = tmp_path / "data.tmds"
        save_dataset(four_points(), path)
        data = bytearray(path.read_bytes())
        # header declares 2 classes; drop it to 1
        data[20:24] = struct.pack("<I", 1)
        path.write_bytes(bytes(data))
        with pytest.raises(FormatError, match="label 1"):
            load_dataset(path)

    def test_csv_field_count(self, tmp_path):
        path = tmp_path / "data.csv"
        path.write_text("label,f0,f1\n0,1.0,2.0\n1,3.0\n")
        with pytest.raises(FormatError) as excinfo:
            load_dataset(path)
        assert excinfo.value.line == 3

    def test_csv_bad_number(self, tmp_path):
        path = tmp_path / "data.csv"
        path.write_text("label,f0\n0,1.0\n1,abc\n0,2.0\n")
        with pytest.raises(FormatError, match="abc") as excinfo:
            load_dataset(path)
        assert excinfo.value.line == 3

    def test_csv_header(self, tmp_path):
        path = tmp_path / "data.csv"
        path.write_text("class,x,y\n0,1,2\n")
        with pytest.raises(FormatError) as excinfo:
            load_dataset(path)
        assert excinfo.value.line == 1

    def test_missing_file(self, tmp_path):
        with pytest.raises(UsageError, match="not found"):
            load_dataset(tmp_path / "absent.tmds")


class TestTriplets:
    def test_binary_round_trip(self, tmp_path):
        path = tmp_path / "triplets.tmts"
        save_triplets(triplets(), path)
        loaded = load_triplets(path, four_points())
        assert loaded.triplets == triplets().triplets
        assert loaded.seed == 2**40 + 3
        assert loaded.source_policy is ExtremePolicy.ASSORTED

    def test_csv_round_trip(self, tmp_path):
        path = tmp_path / "triplets.csv"
        save_triplets(triplets(), path)
        assert read_csv(path)[1] == ["0", "1", "2", "epen"]
        loaded = load_triplets(path)
        assert loaded.triplets == triplets().triplets
        assert loaded.source_policy is ExtremePolicy.ASSORTED
        assert loaded.seed == 0

    def test_csv_single_policy(self, tmp_path):
        E = four_points()
        T = mine_offline(E, pairwise(E), None, ExtremePolicy.EPHN)
        path = tmp_path / "triplets.csv"
        save_triplets(T, path)
        assert load_triplets(path, E).source_policy is ExtremePolicy.EPHN

    def test_unknown_policy_code(self, tmp_path):
        path = tmp_path / "triplets.tmts"
        save_triplets(triplets(), path)
        data = bytearray(path.read_bytes())
        header = 4 + 4 + 8 + 8 + 4
        data[header + 12:header + 16] = struct.pack("<I", 7)
        path.write_bytes(bytes(data))
        with pytest.raises(FormatError, match="policy code 7") as excinfo:
            load_triplets(path)
        assert excinfo.value.offset == header + 12

    def test_csv_unknown_policy(self, tmp_path):
        path = tmp_path / "triplets.csv"
        path.write_text("anchor,positive,negative,policy\n0,1,2,epen\n2,3,0,hardest\n")
        with pytest.raises(FormatError) as excinfo:
            load_triplets(path)
        assert excinfo.value.line == 3

    def test_validation_against_labels(self, tmp_path):
        path = tmp_path / "triplets.csv"
        path.write_text("anchor,positive,negative,policy\n0,2,3,epen\n")
        with pytest.raises(UsageError, match="Triplet 0"):
            load_triplets(path, four_points())

    def test_skip_report(self, tmp_path):
        path = tmp_path / "skipped.csv"
        save_skip_report((SkippedAnchor(5, NO_POSITIVE),), path)
        assert read_csv(path) == [["anchor", "reason"], ["5", "no_positive"]]


class TestMatrices:
    @pytest.mark.parametrize("name", ["distances.tmmx", "distances.csv"])
    def test_round_trip(self, tmp_path, name):
        values = pairwise(make_blobs(per_class=4)).values
        path = tmp_path / name
        save_matrix(values, path)
        assert np.array_equal(load_matrix(path), values)

    def test_negative_frequency_csv(self, tmp_path):
        E = make_blobs(class_count=4, per_class=5)
        F = negative_frequency(mine_offline(E, pairwise(E), None, ExtremePolicy.EPHN), E)
        path = tmp_path / "negative_frequency.csv"
        save_negative_frequency(F, path)
        rows = read_csv(path)
        assert rows[0] == ["class", "0", "1", "2", "3"]
        assert rows[1][0] == "0"
        assert np.array_equal(load_negative_frequency(path).counts, F.counts)

    def test_bad_row_id(self, tmp_path):
        path = tmp_path / "m.csv"
        path.write_text("index,0,1\n0,1.0,2.0\n5,3.0,4.0\n")
        with pytest.raises(FormatError) as excinfo:
            load_matrix(path)
        assert excinfo.value.line == 3

    def test_rejects_vectors(self, tmp_path):
        with pytest.raises(UsageError):
            save_matrix(np.zeros(3), tmp_path / "m.tmmx")


class TestSplit:
    def test_sizes_per_class(self):
        E = make_blobs(class_count=3, per_class=20)
        result = split(E, SplitSpec(seed=1))
        assert [len(p) for p in result.parts] == [42, 9, 9]
        for part in result.parts:
            assert part.class_count == 3
            assert np.all(part.class_counts() >= 2)

    def test_parts_are_disjoint_and_cover_everything(self):
        E = make_blobs(class_count=3, per_class=20)
        indices = split(E, SplitSpec(seed=2)).indices
        combined = np.concatenate(indices)
        assert sorted(combined.tolist()) == list(range(len(E)))
        assert all(np.all(np.diff(idx) > 0) for idx in indices)

    def test_seeded(self):
        E = make_blobs(class_count=3, per_class=20)
        first = split(E, SplitSpec(seed=4)).indices
        again = split(E, SplitSpec(seed=4), Rng(4)).indices
        other = split(E, SplitSpec(seed=5)).indices
        assert all(np.array_equal(a, b) for a, b in zip(first, again))
        assert not all(np.array_equal(a, b) for a, b in zip(first, other))

    def test_small_class(self):
        E = make_blobs(class_count=2, per_class=10)
        with pytest.raises(UsageError, match="Class 0"):
            split(E, SplitSpec())

    def test_unstratified(self):
        E = make_blobs(class_count=3, per_class=100)
        result = split(E, SplitSpec(seed=0, stratified=False))
        assert [len(p) for p in result.parts] == [210, 45, 45]

    def test_fractions_must_sum_to_one(self):
        with pytest.raises(UsageError):
            SplitSpec(fractions=(0.5, 0.3, 0.3))
        with pytest.raises(UsageError):
            SplitSpec(fractions=(1.0, 0.0, 0.0))

    def test_part_names(self):
        assert PART_NAMES == ("x1", "x2", "test")
