"""File formats: detection / ground-truth JSON Lines, depth and mask rasters, score maps.

See ``docs/formats.md`` for the byte-level description.
"""

from __future__ import annotations

import json
import logging
import math
import re
from collections import OrderedDict
from pathlib import Path
from typing import Iterable, Iterator, Mapping, Sequence

import numpy as np
from PIL import Image

from .detection import OOD_LABEL, Detection
from .geometry import BoundingBox
from .metrics import GroundTruth

logger = logging.getLogger(__name__)

DETECTIONS_FORMAT = "ooddet-detections"
GROUND_TRUTH_FORMAT = "ooddet-groundtruth"
FORMAT_VERSION = 1


class FormatError(ValueError):
    """Malformed input file; carries the offending location."""

    def __init__(self, path: str | Path, line: int | None, message: str):
        self.path = str(path)
        self.line = line
        loc = f"{self.path}:{line}" if line is not None else self.path
        super().__init__(f"{loc}: {message}")


# ---------------------------------------------------------------- JSON Lines


def _iter_records(path: Path, expected_format: str) -> Iterator[tuple[int, dict]]:
    """Yield ``(line_number, record)``; validates the header line."""
    with open(path, encoding="utf-8") as fh:
        header_seen = False
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as err:
                raise FormatError(path, lineno, f"invalid JSON: {err.msg}") from None
            if not isinstance(rec, dict):
                raise FormatError(path, lineno, "record must be a JSON object")
            if not header_seen:
                header_seen = True
                if "format" in rec:
                    if rec["format"] != expected_format:
                        raise FormatError(path, lineno, f"expected format {expected_format!r}, got {rec['format']!r}")
                    if rec.get("version") != FORMAT_VERSION:
                        raise FormatError(path, lineno, f"unsupported version {rec.get('version')!r}")
                    continue
                raise FormatError(path, lineno, f"missing header line {{\"format\": \"{expected_format}\", ...}}")
            yield lineno, rec


def _box_from(rec: dict, path: Path, lineno: int) -> BoundingBox:
    try:
        coords = [float(rec[k]) for k in ("x1", "y1", "x2", "y2")]
    except KeyError as err:
        raise FormatError(path, lineno, f"missing field {err.args[0]!r}") from None
    except (TypeError, ValueError):
        raise FormatError(path, lineno, "box coordinates must be numbers") from None
    try:
        return BoundingBox(*coords)
    except ValueError as err:
        raise FormatError(path, lineno, str(err)) from None


def _image_id(rec: dict, path: Path, lineno: int) -> str:
    if "image_id" not in rec:
        raise FormatError(path, lineno, "missing field 'image_id'")
    return str(rec["image_id"])


def _label_to_json(label: int) -> int | str:
    return "ood" if label == OOD_LABEL else int(label)


def _label_from_json(value, classes: Sequence[str], path: Path, lineno: int) -> int:
    if isinstance(value, bool):
        raise FormatError(path, lineno, f"invalid label {value!r}")
    if isinstance(value, int):
        if value < OOD_LABEL or (classes and value >= len(classes)):
            raise FormatError(path, lineno, f"class index {value} outside the label space")
        return value
    if isinstance(value, str):
        if value.lower() == "ood":
            return OOD_LABEL
        if value in classes:
            return classes.index(value)
        raise FormatError(path, lineno, f"unknown class name {value!r}")
    raise FormatError(path, lineno, f"invalid label {value!r}")


def load_detections(
    path: str | Path, classes: Sequence[str] = ()
) -> "OrderedDict[str, list[Detection]]":
    """Per-image detection lists, images in order of first appearance."""
    path = Path(path)
    out: OrderedDict[str, list[Detection]] = OrderedDict()
    for lineno, rec in _iter_records(path, DETECTIONS_FORMAT):
        image_id = _image_id(rec, path, lineno)
        box = _box_from(rec, path, lineno)
        if "sco" not in rec:
            raise FormatError(path, lineno, "missing field 'sco'")
        if "occ" not in rec:
            logger.warning("%s:%d: no 'occ' field, defaulting to 0", path, lineno)
        label = _label_from_json(rec.get("label", "ood"), classes, path, lineno)
        try:
            det = Detection(
                box=box,
                sco=float(rec["sco"]),
                occ=float(rec.get("occ", 0.0)),
                label=label,
                class_scores=tuple(float(s) for s in rec.get("class_scores", ())),
                provenance=rec.get("provenance", "standard"),
            )
        except (TypeError, ValueError) as err:
            raise FormatError(path, lineno, str(err)) from None
        out.setdefault(image_id, []).append(det)
    return out


def _fmt(x: float) -> float | int:
    return int(x) if float(x).is_integer() and abs(x) < 2**53 else x


def detection_record(image_id: str, d: Detection) -> dict:
    rec = {
        "image_id": image_id,
        "x1": _fmt(d.box.x1),
        "y1": _fmt(d.box.y1),
        "x2": _fmt(d.box.x2),
        "y2": _fmt(d.box.y2),
        "label": _label_to_json(d.label),
        "sco": d.sco,
        "occ": d.occ,
        "provenance": d.provenance,
    }
    if d.class_scores:
        rec["class_scores"] = list(d.class_scores)
    return rec


def write_detections(path: str | Path, dets: Mapping[str, Iterable[Detection]]) -> None:
    lines = [json.dumps({"format": DETECTIONS_FORMAT, "version": FORMAT_VERSION})]
    for image_id, items in dets.items():
        lines.extend(json.dumps(detection_record(image_id, d)) for d in items)
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def load_ground_truth(
    path: str | Path, classes: Sequence[str] = ()
) -> "OrderedDict[str, list[GroundTruth]]":
    """Per-image annotations. Records with ``"known": false`` are unknown objects.

    A record without box fields (``{"image_id": ...}`` only) declares an image
    with no annotations.
    """
    path = Path(path)
    out: OrderedDict[str, list[GroundTruth]] = OrderedDict()
    for lineno, rec in _iter_records(path, GROUND_TRUTH_FORMAT):
        image_id = _image_id(rec, path, lineno)
        objs = out.setdefault(image_id, [])
        if not any(k in rec for k in ("x1", "y1", "x2", "y2")):
            continue
        box = _box_from(rec, path, lineno)
        known = rec.get("known", True)
        if not isinstance(known, bool):
            raise FormatError(path, lineno, "'known' must be a boolean")
        if known:
            label = _label_from_json(rec.get("label"), classes, path, lineno)
            if label == OOD_LABEL:
                raise FormatError(path, lineno, "known object cannot carry the OOD label")
        else:
            label = OOD_LABEL
        objs.append(GroundTruth(box, label, known))
    return out


def write_ground_truth(path: str | Path, gts: Mapping[str, Iterable[GroundTruth]]) -> None:
    lines = [json.dumps({"format": GROUND_TRUTH_FORMAT, "version": FORMAT_VERSION})]
    for image_id, items in gts.items():
        items = list(items)
        if not items:
            lines.append(json.dumps({"image_id": image_id}))
        for g in items:
            lines.append(
                json.dumps(
                    {
                        "image_id": image_id,
                        "x1": _fmt(g.box.x1),
                        "y1": _fmt(g.box.y1),
                        "x2": _fmt(g.box.x2),
                        "y2": _fmt(g.box.y2),
                        "label": _label_to_json(g.label),
                        "known": g.known,
                    }
                )
            )
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def load_annotations_raw(path: str | Path) -> "OrderedDict[str, list[tuple[BoundingBox, int | str]]]":
    """Ground-truth file with labels kept as written (source-dataset names)."""
    path = Path(path)
    out: OrderedDict[str, list[tuple[BoundingBox, int | str]]] = OrderedDict()
    for lineno, rec in _iter_records(path, GROUND_TRUTH_FORMAT):
        image_id = _image_id(rec, path, lineno)
        objs = out.setdefault(image_id, [])
        if "x1" in rec:
            label = rec.get("label", "ood")
            if isinstance(label, str) and label.lower() == "ood":
                label = OOD_LABEL
            objs.append((_box_from(rec, path, lineno), label))
    return out


# ---------------------------------------------------------------- rasters


def _read_pnm_header(data: bytes, path: Path) -> tuple[str, int, int, int, int]:
    """Return ``(magic, width, height, maxval, data_offset)`` of a PGM."""
    tokens: list[bytes] = []
    pos = 0
    while len(tokens) < 4:
        m = re.compile(rb"\s*(#[^\n]*\n|\S+)").match(data, pos)
        if m is None:
            raise FormatError(path, None, "truncated PGM header")
        pos = m.end()
        tok = m.group(1)
        if not tok.startswith(b"#"):
            tokens.append(tok)
    magic = tokens[0].decode("ascii", "replace")
    if magic not in ("P2", "P5"):
        raise FormatError(path, None, f"not a PGM file (magic {magic!r})")
    try:
        width, height, maxval = (int(t) for t in tokens[1:])
    except ValueError:
        raise FormatError(path, None, "invalid PGM header") from None
    if width <= 0 or height <= 0 or not 0 < maxval < 65536:
        raise FormatError(path, None, "invalid PGM dimensions or maxval")
    # exactly one whitespace byte separates header and binary data
    return magic, width, height, maxval, pos + 1


def read_pgm(path: str | Path) -> np.ndarray:
    path = Path(path)
    data = path.read_bytes()
    magic, width, height, maxval, offset = _read_pnm_header(data, path)
    n = width * height
    if magic == "P5":
        dtype = np.dtype(">u2") if maxval > 255 else np.dtype(np.uint8)
        raw = np.frombuffer(data, dtype=dtype, count=-1, offset=offset)
        if raw.size < n:
            raise FormatError(path, None, f"expected {n} samples, found {raw.size}")
        arr = raw[:n]
    else:
        try:
            arr = np.array(data[offset - 1 :].split(), dtype=np.int64)
        except ValueError:
            raise FormatError(path, None, "non-integer sample in ASCII PGM") from None
        if arr.size != n:
            raise FormatError(path, None, f"expected {n} samples, found {arr.size}")
    return arr.reshape(height, width).astype(np.uint16 if maxval > 255 else np.uint8)


def write_pgm(path: str | Path, arr: np.ndarray) -> None:
    arr = np.asarray(arr)
    if arr.ndim != 2:
        raise ValueError("PGM holds a single channel")
    maxval = 65535 if arr.dtype != np.uint8 else 255
    header = f"P5\n{arr.shape[1]} {arr.shape[0]}\n{maxval}\n".encode("ascii")
    body = arr.astype(">u2" if maxval > 255 else np.uint8).tobytes()
    Path(path).write_bytes(header + body)


def _read_gray(path: Path) -> np.ndarray:
    suffix = path.suffix.lower()
    if suffix in (".pgm", ".pnm"):
        return read_pgm(path)
    if suffix == ".png":
        with Image.open(path) as im:
            if im.mode not in ("L", "I;16", "I;16B", "I", "1"):
                raise FormatError(path, None, f"expected a single-channel PNG, got mode {im.mode}")
            return np.array(im)
    raise FormatError(path, None, f"unsupported raster type {suffix!r} (use .png or .pgm)")


def load_depth(path: str | Path, scale: float = 1.0) -> np.ndarray:
    """Depth raster as float32, multiplied by ``scale``."""
    arr = _read_gray(Path(path)).astype(np.float32)
    return arr * np.float32(scale)


def save_depth(path: str | Path, depth: np.ndarray, scale: float = 1.0) -> None:
    """Store ``depth / scale`` rounded to 16-bit unsigned integers (PNG or PGM)."""
    q = np.rint(np.asarray(depth, dtype=np.float64) / scale)
    if (q < 0).any() or (q > 65535).any():
        raise ValueError("depth out of 16-bit range at this scale")
    q = q.astype(np.uint16)
    path = Path(path)
    if path.suffix.lower() == ".png":
        Image.fromarray(q).save(path)
    else:
        write_pgm(path, q)


def load_mask(path: str | Path) -> np.ndarray:
    """Binary raster: any nonzero sample is True."""
    return _read_gray(Path(path)) != 0


def save_mask(path: str | Path, mask: np.ndarray) -> None:
    arr = np.asarray(mask, dtype=bool).astype(np.uint8) * 255
    path = Path(path)
    if path.suffix.lower() == ".png":
        Image.fromarray(arr).save(path)
    else:
        write_pgm(path, arr)


def read_pfm(path: str | Path) -> np.ndarray:
    """Single-channel Portable Float Map (``Pf``); rows returned top-to-bottom."""
    path = Path(path)
    data = path.read_bytes()
    parts = data.split(b"\n", 3)
    if len(parts) < 4 or parts[0].strip() != b"Pf":
        raise FormatError(path, None, "not a single-channel PFM file")
    try:
        width, height = (int(v) for v in parts[1].split())
        scale = float(parts[2])
    except ValueError:
        raise FormatError(path, None, "invalid PFM header") from None
    dtype = np.dtype("<f4") if scale < 0 else np.dtype(">f4")
    body = parts[3]
    if len(body) < width * height * 4:
        raise FormatError(path, None, "truncated PFM data")
    arr = np.frombuffer(body, dtype=dtype, count=width * height).reshape(height, width)
    return np.flipud(arr).astype(np.float32)


def write_pfm(path: str | Path, arr: np.ndarray) -> None:
    arr = np.asarray(arr, dtype="<f4")
    if arr.ndim != 2:
        raise ValueError("PFM writer supports single-channel maps only")
    header = f"Pf\n{arr.shape[1]} {arr.shape[0]}\n-1.0\n".encode("ascii")
    Path(path).write_bytes(header + np.flipud(arr).tobytes())


def load_score_map(path: str | Path, scale: float = 1.0) -> np.ndarray:
    """Anomaly scores from PFM (as stored) or 16-bit PNG/PGM (times ``scale``)."""
    path = Path(path)
    if path.suffix.lower() == ".pfm":
        return read_pfm(path)
    return _read_gray(path).astype(np.float32) * np.float32(scale)


def load_rgb(path: str | Path) -> np.ndarray:
    with Image.open(path) as im:
        return np.array(im.convert("RGB"))


def save_rgb(path: str | Path, pixels: np.ndarray) -> None:
    Image.fromarray(np.asarray(pixels, dtype=np.uint8)).save(path)


def dumps_report(report: Mapping) -> str:
    """Canonical JSON: sorted keys, fixed indentation, NaN rejected."""
    def clean(v):
        if isinstance(v, float) and not math.isfinite(v):
            raise ValueError("non-finite value in report")
        return v

    def walk(v):
        if isinstance(v, Mapping):
            return {str(k): walk(x) for k, x in v.items()}
        if isinstance(v, (list, tuple)):
            return [walk(x) for x in v]
        return clean(v)

    return json.dumps(walk(report), sort_keys=True, indent=2) + "\n"
