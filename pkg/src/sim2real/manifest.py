"""Line-delimited dataset manifests binding images, labels, states, and
provenance. Paths are stored relative to the manifest's directory; every
record carries the seed and resolved-config hash that produced it."""

from __future__ import annotations

import hashlib
import json
import os
from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import ValidationError
from .primitives import VehicleState

DOMAINS = ("sim", "pseudo-real", "converted")


def config_hash(obj) -> str:
    """Stable hash of any JSON-serializable configuration tree."""
    blob = json.dumps(obj, sort_keys=True, separators=(",", ":")).encode("utf-8")
    return hashlib.sha256(blob).hexdigest()[:16]


def labels_to_str(labels: np.ndarray) -> str:
    labels = np.asarray(labels)
    if not np.all((labels == 0) | (labels == 1)):
        raise ValidationError("labels must be binary")
    return "".join("1" if x else "0" for x in labels)


def str_to_labels(s: str) -> np.ndarray:
    if any(ch not in "01" for ch in s):
        raise ValidationError(f"label string contains non-binary characters: {s[:16]}...")
    return np.frombuffer(s.encode("ascii"), dtype=np.uint8) - ord("0")


@dataclass
class ManifestRecord:
    rgb: str
    domain: str
    depth: str | None = None
    seg: str | None = None
    pair_rgb: str | None = None
    pose: dict | None = None        # {"position": [x,y,z], "yaw": float}
    state: dict | None = None       # {"v0": [...], "a0": [...]}
    labels: str | None = None       # 121 ascii 0/1
    provenance: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.domain not in DOMAINS:
            raise ValidationError(f"unknown domain tag {self.domain!r}")

    def vehicle_state(self) -> VehicleState:
        if self.state is None:
            raise ValidationError("record has no vehicle state")
        return VehicleState(np.array(self.state["v0"]), np.array(self.state["a0"]))

    def label_vector(self) -> np.ndarray:
        if self.labels is None:
            raise ValidationError("record has no labels")
        return str_to_labels(self.labels)

    def to_json(self) -> str:
        d = {k: v for k, v in asdict(self).items() if v is not None}
        if not d.get("provenance"):
            d.pop("provenance", None)
        return json.dumps(d, sort_keys=True)

    @staticmethod
    def from_json(line: str) -> "ManifestRecord":
        return ManifestRecord(**json.loads(line))


def state_dict(state: VehicleState) -> dict:
    return {"v0": [float(x) for x in state.v0], "a0": [float(x) for x in state.a0]}


def write_manifest(path, records) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(rec.to_json() + "\n")


def read_manifest(path) -> list[ManifestRecord]:
    records = []
    with open(path, encoding="utf-8") as fh:
        for i, line in enumerate(fh):
            line = line.strip()
            if not line:
                continue
            try:
                records.append(ManifestRecord.from_json(line))
            except (json.JSONDecodeError, TypeError) as exc:
                raise ValidationError(f"{path}:{i + 1}: bad record: {exc}") from exc
    return records


def validate_manifest(path, expect_hash: str | None = None,
                      expect_domain: str | None = None) -> list[ManifestRecord]:
    """Read a manifest and verify every referenced file exists and parses,
    domains are consistent, and provenance hashes match when given."""
    from . import imagecodec  # local import to keep manifest IO dependency-light

    records = read_manifest(path)
    base = os.path.dirname(os.path.abspath(path))
    for i, rec in enumerate(records):
        where = f"{path}:{i + 1}"
        if expect_domain and rec.domain != expect_domain:
            raise ValidationError(f"{where}: domain {rec.domain!r}, expected {expect_domain!r}")
        if expect_hash is not None:
            got = rec.provenance.get("config_hash")
            if got != expect_hash:
                raise ValidationError(f"{where}: config hash {got} != expected {expect_hash}")
        for kind, rel in (("rgb", rec.rgb), ("depth", rec.depth), ("seg", rec.seg),
                          ("pair_rgb", rec.pair_rgb)):
            if rel is None:
                continue
            full = os.path.join(base, rel)
            if not os.path.exists(full):
                raise ValidationError(f"{where}: missing file {rel}")
            try:
                if kind in ("rgb", "pair_rgb"):
                    imagecodec.load_rgb(full)
                elif kind == "depth":
                    imagecodec.load_depth(full)
                else:
                    imagecodec.load_seg(full)
            except ValidationError as exc:
                raise ValidationError(f"{where}: {kind} unreadable: {exc}") from exc
        if rec.labels is not None:
            str_to_labels(rec.labels)
    return records


def resolve(path, rel: str) -> str:
    return os.path.join(os.path.dirname(os.path.abspath(path)), rel)


def rebase_record(rec: ManifestRecord, src_manifest, dst_manifest) -> ManifestRecord:
    """Rewrite a record's relative paths so they stay valid when the record
    moves from src_manifest's directory to dst_manifest's."""
    src = os.path.dirname(os.path.abspath(src_manifest))
    dst = os.path.dirname(os.path.abspath(dst_manifest))
    if src == dst:
        return rec
    from dataclasses import replace

    def move(rel):
        return None if rel is None else os.path.relpath(os.path.join(src, rel), dst)

    return replace(rec, rgb=move(rec.rgb), depth=move(rec.depth), seg=move(rec.seg),
                   pair_rgb=move(rec.pair_rgb))
