import json

import numpy as np
import pytest

from sim2real import imagecodec
from sim2real.errors import ValidationError
from sim2real.manifest import (ManifestRecord, config_hash, labels_to_str,
                               read_manifest, str_to_labels, validate_manifest,
                               write_manifest)


def test_labels_string_roundtrip():
    labels = (np.arange(121) % 3 == 0).astype(np.uint8)
    s = labels_to_str(labels)
    assert len(s) == 121 and set(s) <= {"0", "1"}
    np.testing.assert_array_equal(str_to_labels(s), labels)


def test_labels_string_rejects_nonbinary():
    with pytest.raises(ValidationError):
        labels_to_str(np.array([0, 2]))
    with pytest.raises(ValidationError):
        str_to_labels("01x")


def test_config_hash_stable_and_order_independent():
    a = config_hash({"b": 1, "a": [1, 2]})
    b = config_hash({"a": [1, 2], "b": 1})
    assert a == b and len(a) == 16
    assert config_hash({"a": [1, 3]}) != a


def test_record_json_roundtrip(tmp_path):
    rec = ManifestRecord(
        rgb="images/x.ppm", domain="sim", depth="images/x_d.pgm",
        state={"v0": [0.0, 0.0, 1.0], "a0": [0.0, 0.0, 0.0]},
        labels="01" * 60 + "1", provenance={"seed": 3, "config_hash": "abc"},
    )
    path = tmp_path / "m.jsonl"
    write_manifest(path, [rec])
    back = read_manifest(path)
    assert len(back) == 1
    assert back[0] == rec
    st = back[0].vehicle_state()
    np.testing.assert_array_equal(st.v0, [0, 0, 1])


def test_record_rejects_unknown_domain():
    with pytest.raises(ValidationError):
        ManifestRecord(rgb="x.ppm", domain="dreamt")


def test_read_manifest_bad_line(tmp_path):
    path = tmp_path / "bad.jsonl"
    path.write_text('{"rgb": "a.ppm", "domain": "sim"}\nnot json\n')
    with pytest.raises(ValidationError):
        read_manifest(path)


def test_validate_manifest_checks_files(tmp_path):
    img = tmp_path / "img.ppm"
    imagecodec.save_rgb(img, np.zeros((4, 4, 3)))
    good = ManifestRecord(rgb="img.ppm", domain="sim",
                          provenance={"config_hash": "h1"})
    path = tmp_path / "m.jsonl"
    write_manifest(path, [good])
    assert len(validate_manifest(path)) == 1

    missing = ManifestRecord(rgb="gone.ppm", domain="sim")
    write_manifest(path, [missing])
    with pytest.raises(ValidationError):
        validate_manifest(path)


def test_validate_manifest_detects_truncation(tmp_path):
    img = tmp_path / "img.ppm"
    imagecodec.save_rgb(img, np.zeros((4, 4, 3)))
    img.write_bytes(img.read_bytes()[:-3])
    path = tmp_path / "m.jsonl"
    write_manifest(path, [ManifestRecord(rgb="img.ppm", domain="sim")])
    with pytest.raises(ValidationError):
        validate_manifest(path)


def test_validate_manifest_hash_mismatch(tmp_path):
    img = tmp_path / "img.ppm"
    imagecodec.save_rgb(img, np.zeros((4, 4, 3)))
    rec = ManifestRecord(rgb="img.ppm", domain="sim",
                         provenance={"config_hash": "deadbeef"})
    path = tmp_path / "m.jsonl"
    write_manifest(path, [rec])
    with pytest.raises(ValidationError):
        validate_manifest(path, expect_hash="cafef00d")
    assert len(validate_manifest(path, expect_hash="deadbeef")) == 1


def test_validate_manifest_domain_filter(tmp_path):
    img = tmp_path / "img.ppm"
    imagecodec.save_rgb(img, np.zeros((4, 4, 3)))
    path = tmp_path / "m.jsonl"
    write_manifest(path, [ManifestRecord(rgb="img.ppm", domain="converted")])
    with pytest.raises(ValidationError):
        validate_manifest(path, expect_domain="sim")


def test_manifest_is_line_delimited_json(tmp_path):
    path = tmp_path / "m.jsonl"
    write_manifest(path, [ManifestRecord(rgb="a.ppm", domain="sim"),
                          ManifestRecord(rgb="b.ppm", domain="converted")])
    lines = path.read_text().strip().split("\n")
    assert len(lines) == 2
    assert all(json.loads(line) for line in lines)
