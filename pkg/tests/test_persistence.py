import json
import struct

import numpy as np
import pytest

from tajweed import persistence, svm
from tajweed.errors import IoError, SchemaError, VersionMismatch


def test_round_trip_decision_values_bit_exact(small_model, tmp_path):
    path = str(tmp_path / "m.model")
    persistence.save_model(small_model, path)
    loaded = persistence.load_model(path)
    rng = np.random.default_rng(17)
    X = rng.uniform(-30, 5, (100, 140))
    before = svm.decision_values(small_model.svm, X)
    after = svm.decision_values(loaded.svm, X)
    assert (before == after).all()
    assert loaded.tau_right == small_model.tau_right
    assert loaded.tau_wrong == small_model.tau_wrong
    assert loaded.calibration == small_model.calibration
    assert loaded.rule_id == small_model.rule_id
    assert loaded.config_fingerprint == small_model.config_fingerprint
    assert loaded.feature_config == small_model.feature_config


def test_repeated_saves_byte_identical(small_model, tmp_path):
    p1, p2 = str(tmp_path / "a.model"), str(tmp_path / "b.model")
    persistence.save_model(small_model, p1)
    persistence.save_model(small_model, p2)
    assert open(p1, "rb").read() == open(p2, "rb").read()


def test_save_load_save_stable(small_model, tmp_path):
    p1, p2 = str(tmp_path / "a.model"), str(tmp_path / "b.model")
    persistence.save_model(small_model, p1)
    persistence.save_model(persistence.load_model(p1), p2)
    assert open(p1, "rb").read() == open(p2, "rb").read()


def _patch_header(path, mutate):
    data = open(path, "rb").read()
    hlen = struct.unpack_from("<I", data, 8)[0]
    header = json.loads(data[12:12 + hlen])
    mutate(header)
    new_header = json.dumps(header, sort_keys=True, separators=(",", ":")).encode()
    return data[:8] + struct.pack("<I", len(new_header)) + new_header + data[12 + hlen:]


def test_version_mismatch(small_model, tmp_path):
    path = str(tmp_path / "m.model")
    persistence.save_model(small_model, path)
    blob = _patch_header(path, lambda h: h.update(format_version=999))
    bad = tmp_path / "bad.model"
    bad.write_bytes(blob)
    with pytest.raises(VersionMismatch) as exc:
        persistence.load_model(str(bad))
    assert exc.value.found == 999
    assert exc.value.expected == persistence.FORMAT_VERSION


def test_schema_error_on_shape_mismatch(small_model, tmp_path):
    path = str(tmp_path / "m.model")
    persistence.save_model(small_model, path)

    def shrink_dual(header):
        for spec in header["arrays"]:
            if spec["name"] == "dual_coefs":
                spec["shape"] = [spec["shape"][0] - 1]

    bad = tmp_path / "bad.model"
    bad.write_bytes(_patch_header(path, shrink_dual))
    with pytest.raises(SchemaError):
        persistence.load_model(str(bad))


def test_schema_error_on_wrong_magic(tmp_path):
    bad = tmp_path / "bad.model"
    bad.write_bytes(b"NOTMODEL" + b"\x00" * 32)
    with pytest.raises(SchemaError):
        persistence.load_model(str(bad))


def test_truncated_file(small_model, tmp_path):
    path = str(tmp_path / "m.model")
    persistence.save_model(small_model, path)
    blob = open(path, "rb").read()
    bad = tmp_path / "bad.model"
    bad.write_bytes(blob[:-16])
    with pytest.raises(SchemaError):
        persistence.load_model(str(bad))


def test_missing_file(tmp_path):
    with pytest.raises(IoError):
        persistence.load_model(str(tmp_path / "nope.model"))


def test_no_leftover_temp_file(small_model, tmp_path):
    path = tmp_path / "m.model"
    persistence.save_model(small_model, str(path))
    assert sorted(p.name for p in tmp_path.iterdir()) == ["m.model"]
