"""Persistent incident gallery and query-by-example location traces.

The gallery file is append-only: a fixed header, length-prefixed incident
records, and an index footer that is rewritten after every append. If a
crash leaves the footer torn, the records are recovered by scanning from the
header. The byte layout is documented in ``docs/gallery_format.md``.
"""

from __future__ import annotations

import fcntl
import hashlib
import json
import logging
import os
import struct
import warnings
from contextlib import contextmanager
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import EmptyGalleryError, GalleryFormatError, ParameterError, ShapeError
from .learned import FeatureModel, GaitTemplate, model_to_dict
from .metrics import kmeans, pair_distances

logger = logging.getLogger(__name__)

MAGIC = b"GGAL"
FOOTER_MAGIC = b"GIDX"
VERSION = 1
_HEADER = struct.Struct("<4sHHI16s4x")          # 32 bytes
_RECORD_HEAD = struct.Struct("<IQddd")           # length, id, timestamp, lat, lon
_FOOTER_TAIL = struct.Struct("<Q4s")             # count, magic


def model_fingerprint(model: FeatureModel) -> bytes:
    doc = json.dumps(model_to_dict(model), sort_keys=True).encode()
    return hashlib.sha256(doc).digest()[:16]


@dataclass(frozen=True)
class Incident:
    id: int
    template: GaitTemplate
    timestamp: float
    lat: float
    lon: float
    camera: str = ""

    def to_dict(self) -> dict:
        return {"id": self.id, "timestamp": self.timestamp, "lat": self.lat,
                "lon": self.lon, "camera": self.camera, "label": self.template.label}


@dataclass(frozen=True)
class Threshold:
    tau: float

    def __str__(self):
        return f"threshold:{self.tau!r}"


@dataclass(frozen=True)
class TopK:
    k: int

    def __str__(self):
        return f"topk:{self.k}"


@dataclass(frozen=True)
class Cluster:
    K: int
    seed: int = 0

    def __str__(self):
        return f"cluster:{self.K}:{self.seed}"


def parse_rule(text: str):
    """``threshold:<tau>``, ``topk:<k>`` or ``cluster:<K>[:<seed>]``."""
    kind, _, arg = text.partition(":")
    try:
        if kind == "threshold":
            return Threshold(float(arg))
        if kind == "topk":
            return TopK(int(arg))
        if kind == "cluster":
            K, _, seed = arg.partition(":")
            return Cluster(int(K), int(seed or 0))
    except ValueError:
        pass
    raise ParameterError(f"cannot parse acceptance rule {text!r}")


@dataclass(frozen=True)
class LocationTrace:
    query_id: int | None
    rule: str
    accepted: tuple[tuple[Incident, float], ...]

    def __len__(self):
        return len(self.accepted)

    @property
    def ids(self) -> list[int]:
        return [inc.id for inc, _ in self.accepted]

    def to_json(self) -> str:
        entries = [dict(inc.to_dict(), distance=d) for inc, d in self.accepted]
        doc = {"query": self.query_id, "rule": self.rule, "trace": entries}
        return json.dumps(doc, indent=1) + "\n"


def _pack_str(s: str) -> bytes:
    raw = s.encode("utf-8")
    if len(raw) > 0xFFFF:
        raise ParameterError("string field longer than 65535 bytes")
    return struct.pack("<H", len(raw)) + raw


def _unpack_str(buf: bytes, pos: int) -> tuple[str, int]:
    (n,) = struct.unpack_from("<H", buf, pos)
    pos += 2
    return buf[pos:pos + n].decode("utf-8"), pos + n


class Gallery:
    """Incidents of one feature model, stored in a single file."""

    def __init__(self, path, model: FeatureModel):
        self.path = Path(path)
        self.model = model
        self.dim = model.d_out
        self._fingerprint = model_fingerprint(model)
        if not self.path.exists():
            with open(self.path, "xb") as fh:
                fh.write(_HEADER.pack(MAGIC, VERSION, 0, self.dim, self._fingerprint))
                fh.write(_FOOTER_TAIL.pack(0, FOOTER_MAGIC))
                fh.flush()
                os.fsync(fh.fileno())
        with self._locked(fcntl.LOCK_SH) as fh:
            self._check_header(fh.read(_HEADER.size))

    # -- file access ---------------------------------------------------------

    @contextmanager
    def _locked(self, mode):
        with open(self.path, "r+b" if mode == fcntl.LOCK_EX else "rb") as fh:
            fcntl.flock(fh, mode)
            try:
                yield fh
            finally:
                fcntl.flock(fh, fcntl.LOCK_UN)

    def _check_header(self, raw: bytes) -> None:
        if len(raw) < _HEADER.size:
            raise GalleryFormatError("gallery file shorter than its header")
        magic, version, _, dim, fp = _HEADER.unpack(raw)
        if magic != MAGIC:
            raise GalleryFormatError("not a gallery file")
        if version != VERSION:
            raise GalleryFormatError(f"unsupported gallery version {version}")
        if dim != self.dim:
            raise ShapeError(f"gallery holds {dim}-d templates, model produces {self.dim}-d")
        if fp != self._fingerprint:
            raise GalleryFormatError("gallery was built with a different model")

    def _record_size(self, raw: bytes, pos: int) -> int:
        return 4 + struct.unpack_from("<I", raw, pos)[0]

    def _offsets(self, raw: bytes) -> tuple[list[int], int]:
        """Record offsets and the end of the record area."""
        tail = _FOOTER_TAIL.size
        if len(raw) >= _HEADER.size + tail:
            count, magic = _FOOTER_TAIL.unpack_from(raw, len(raw) - tail)
            start = len(raw) - tail - 8 * count
            if magic == FOOTER_MAGIC and start >= _HEADER.size:
                offsets = list(struct.unpack_from(f"<{count}Q", raw, start))
                if all(_HEADER.size <= o < start for o in offsets):
                    return offsets, start
        logger.warning("gallery footer damaged; recovering records by scan")
        return self._scan(raw)

    def _scan(self, raw: bytes) -> tuple[list[int], int]:
        offsets, pos = [], _HEADER.size
        expected_id = 0
        while pos + _RECORD_HEAD.size <= len(raw):
            length, rid = struct.unpack_from("<IQ", raw, pos)
            if rid != expected_id or pos + 4 + length > len(raw):
                break
            offsets.append(pos)
            pos += 4 + length
            expected_id += 1
        return offsets, pos

    def _decode(self, raw: bytes, pos: int) -> Incident:
        _, rid, ts, lat, lon = _RECORD_HEAD.unpack_from(raw, pos)
        p = pos + _RECORD_HEAD.size
        camera, p = _unpack_str(raw, p)
        label, p = _unpack_str(raw, p)
        feats = np.frombuffer(raw, dtype="<f8", count=self.dim, offset=p).copy()
        return Incident(rid, GaitTemplate(feats, label or None), ts, lat, lon, camera)

    # -- public API ------------------------------------------------------------

    def incidents(self) -> list[Incident]:
        """Consistent snapshot of every stored incident."""
        with self._locked(fcntl.LOCK_SH) as fh:
            raw = fh.read()
        offsets, _ = self._offsets(raw)
        return [self._decode(raw, o) for o in offsets]

    def __len__(self) -> int:
        return len(self.incidents())

    def add(self, template, timestamp: float, lat: float, lon: float,
            camera: str = "", label: str | None = None) -> int:
        """Append one incident and return its id."""
        feats = np.asarray(template.features if isinstance(template, GaitTemplate) else template,
                           dtype=np.float64).reshape(-1)
        if isinstance(template, GaitTemplate) and label is None:
            label = template.label
        if feats.shape != (self.dim,):
            raise ShapeError(f"template has {feats.size} features, gallery expects {self.dim}")
        if not np.all(np.isfinite(feats)):
            raise ParameterError("template has non-finite features")
        if not -90 <= lat <= 90 or not -180 <= lon <= 180:
            raise ParameterError(f"geolocation ({lat}, {lon}) out of range")
        with self._locked(fcntl.LOCK_EX) as fh:
            raw = fh.read()
            offsets, end = self._offsets(raw)
            rid = len(offsets)
            body = (struct.pack("<Qddd", rid, float(timestamp), float(lat), float(lon))
                    + _pack_str(camera) + _pack_str(label or "")
                    + feats.astype("<f8").tobytes())
            record = struct.pack("<I", len(body)) + body
            offsets.append(end)
            footer = struct.pack(f"<{len(offsets)}Q", *offsets) + _FOOTER_TAIL.pack(
                len(offsets), FOOTER_MAGIC)
            fh.seek(end)
            fh.write(record + footer)
            fh.truncate()
            fh.flush()
            os.fsync(fh.fileno())
        return rid

    def query(self, template, rule, exclude_id: int | None = None) -> LocationTrace:
        """Rank all incidents by model distance and keep those the rule accepts."""
        feats = np.asarray(template.features if isinstance(template, GaitTemplate) else template,
                           dtype=np.float64).reshape(-1)
        if feats.shape != (self.dim,):
            raise ShapeError(f"query has {feats.size} features, gallery expects {self.dim}")
        incidents = [i for i in self.incidents() if i.id != exclude_id]
        if not incidents:
            raise EmptyGalleryError("gallery has no incidents to rank")
        rule = parse_rule(rule) if isinstance(rule, str) else rule
        T = np.stack([i.template.features for i in incidents])
        W = self.model.whiten(np.vstack([T, feats[None]]))
        dist = np.sqrt(np.sum((W[:-1] - W[-1]) ** 2, axis=1))
        order = np.lexsort((np.array([i.id for i in incidents]), dist))

        if isinstance(rule, Threshold):
            keep = [k for k in order if dist[k] <= rule.tau]
        elif isinstance(rule, TopK):
            if rule.k < 0:
                raise ParameterError("k must be >= 0")
            if rule.k > len(incidents):
                warnings.warn(f"top-{rule.k} requested from {len(incidents)} incidents; clipped",
                              stacklevel=2)
            keep = list(order[: rule.k])
        elif isinstance(rule, Cluster):
            K = min(rule.K, len(W))
            if K < rule.K:
                warnings.warn(f"K={rule.K} exceeds {len(W)} templates; clipped", stacklevel=2)
            assign = kmeans(W, K, rule.seed).assignment
            keep = [k for k in order if assign[k] == assign[-1]]
        else:
            raise ParameterError(f"unknown acceptance rule {rule!r}")
        accepted = tuple((incidents[k], float(dist[k])) for k in keep)
        return LocationTrace(exclude_id, str(rule), accepted)

    def query_incident(self, incident_id: int, rule) -> LocationTrace:
        """Trace of a stored incident, the incident itself excluded."""
        for inc in self.incidents():
            if inc.id == incident_id:
                return self.query(inc.template, rule, exclude_id=incident_id)
        raise KeyError(f"no incident {incident_id}")


def trace_quality(trace: LocationTrace, label: str, gallery_labels: Sequence[str | None]) -> dict:
    """Purity, recall and F-measure of a trace against a known identity.

    ``gallery_labels`` are the stored labels of every candidate incident;
    the relevant set is the incidents carrying ``label``.
    """
    relevant = sum(1 for g in gallery_labels if g == label)
    hits = sum(1 for inc, _ in trace.accepted if inc.template.label == label)
    purity = hits / len(trace) if len(trace) else 0.0
    recall = hits / relevant if relevant else 0.0
    f = 2 * purity * recall / (purity + recall) if hits else 0.0
    return {"purity": purity, "recall": recall, "f": f, "accepted": len(trace),
            "relevant": relevant}


def calibrate_threshold(model: FeatureModel, templates, labels: Sequence[str],
                        quantile: float = 0.9) -> float:
    """Distance below which ``quantile`` of same-identity pairs fall."""
    if not 0 < quantile <= 1:
        raise ParameterError(f"quantile must lie in (0, 1], got {quantile}")
    d, pos = pair_distances(templates, labels, model)
    if not pos.any():
        raise ParameterError("calibration needs at least one same-identity pair")
    return float(np.quantile(d[pos], quantile))
