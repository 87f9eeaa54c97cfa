"""Surveillance CSV ingestion, season segmentation, and checkpoint files.

Input CSV schema (UTF-8, comma-separated, header required)::

    region,year,week,wili
    nat,2003,21,1.23

A season runs from calendar week 21 through week 20 of the next year and is
labelled ``"2003/04"``. Week 53 is kept when the data contains it.
"""

import csv
import hashlib
import json
import struct
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .exceptions import CheckpointError, ContractError, DataFormatError
from .model import FittedModel, Hyperparams

SEASON_START_WEEK = 21
SEASON_END_WEEK = 20
FIRST_TARGET_WEEK = 40
COLUMNS = ("region", "year", "week", "wili")

CHECKPOINT_MAGIC = b"FNPCAST\x00"
CHECKPOINT_VERSION = 1


@dataclass(frozen=True, order=True)
class WiliRecord:
    year: int
    week: int
    region: str
    wili: float

    @property
    def epiweek(self):
        return (self.year, self.week)


@dataclass
class SeasonSeries:
    season_id: str
    values: np.ndarray
    epiweeks: list = field(default_factory=list)

    def __len__(self):
        return len(self.values)

    def index_of(self, year, week):
        """0-based position of an epiweek within the season, or None."""
        try:
            return self.epiweeks.index((year, week))
        except ValueError:
            return None


def format_epiweek(year, week):
    return f"{year}w{week:02d}"


def season_label(start_year):
    return f"{start_year}/{(start_year + 1) % 100:02d}"


def parse_csv(path, region=None):
    """Validated records sorted by epiweek.

    ``region=None`` keeps every region. An unknown region yields an empty
    list and a warning.
    """
    records = []
    seen = set()
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or not set(COLUMNS) <= {c.strip() for c in reader.fieldnames}:
            raise DataFormatError(f"{path}: header must contain columns {','.join(COLUMNS)}")
        for row in reader:
            line = reader.line_num
            try:
                rec = WiliRecord(
                    year=int(row["year"]),
                    week=int(row["week"]),
                    region=row["region"].strip(),
                    wili=float(row["wili"]),
                )
            except (TypeError, ValueError, AttributeError):
                raise DataFormatError(f"{path}: line {line}: malformed row {row}") from None
            if not 1 <= rec.week <= 53:
                raise DataFormatError(f"{path}: line {line}: week {rec.week} outside 1..53")
            if not np.isfinite(rec.wili) or rec.wili < 0:
                raise DataFormatError(f"{path}: line {line}: wILI value {rec.wili} must be finite and >= 0")
            if region is not None and rec.region != region:
                continue
            key = (rec.region, rec.year, rec.week)
            if key in seen:
                raise DataFormatError(
                    f"{path}: line {line}: duplicate epiweek {format_epiweek(rec.year, rec.week)} "
                    f"for region {rec.region!r}")
            seen.add(key)
            records.append(rec)
    if region is not None and not records:
        warnings.warn(f"no records for region {region!r} in {path}", stacklevel=2)
    return sorted(records)


def _season_start(year, week):
    return year if week >= SEASON_START_WEEK else year - 1


def _follows(prev, cur):
    (py, pw), (cy, cw) = prev, cur
    if cy == py:
        return cw == pw + 1
    return cy == py + 1 and cw == 1 and pw in (52, 53)


def segment_seasons(records, keep_partial=False):
    """Cut records into complete seasons, oldest first.

    Incomplete head or tail seasons are dropped with a warning; a missing week
    inside a season raises :class:`DataFormatError`. With ``keep_partial`` a
    season that starts at week 21 but has not finished yet is kept (the
    in-progress season of real-time forecasting).
    """
    records = sorted(records)
    if len({r.region for r in records}) > 1:
        raise ContractError("segment_seasons expects records of a single region")
    groups = {}
    for r in records:
        groups.setdefault(_season_start(r.year, r.week), []).append(r)
    seasons = []
    for start in sorted(groups):
        group = groups[start]
        weeks = [r.epiweek for r in group]
        for prev, cur in zip(weeks, weeks[1:]):
            if not _follows(prev, cur):
                py, pw = prev
                missing = (py, pw + 1) if pw < 52 else (py + 1, 1)
                raise DataFormatError(
                    f"season {season_label(start)}: missing epiweek {format_epiweek(*missing)}")
        complete_tail = weeks[-1] == (start + 1, SEASON_END_WEEK)
        if weeks[0] == (start, SEASON_START_WEEK) and keep_partial and not complete_tail:
            seasons.append(SeasonSeries(season_label(start), np.array([r.wili for r in group]), weeks))
            continue
        if weeks[0] != (start, SEASON_START_WEEK) or not complete_tail:
            warnings.warn(
                f"dropping incomplete season {season_label(start)} "
                f"({format_epiweek(*weeks[0])}..{format_epiweek(*weeks[-1])})", stacklevel=2)
            continue
        seasons.append(SeasonSeries(season_label(start), np.array([r.wili for r in group]), weeks))
    return seasons


@dataclass(frozen=True)
class EvalPoint:
    season_id: str
    t: int  # prefix length
    target_index: int  # 0-based position of the target week
    prefix: np.ndarray
    truth: float


def first_target_index(season):
    """Position of calendar week 40; week 21 sits at 0, so 19 for plain arrays."""
    for i, (_, week) in enumerate(getattr(season, "epiweeks", None) or []):
        if week == FIRST_TARGET_WEEK:
            return i
    return FIRST_TARGET_WEEK - SEASON_START_WEEK


def realtime_eval_points(season, horizon):
    """Prefix/target pairs whose target runs from calendar week 40 to season end."""
    if horizon < 1:
        raise ContractError("horizon must be at least 1")
    values = np.asarray(getattr(season, "values", season), dtype=np.float64)
    sid = getattr(season, "season_id", "")
    points = []
    for target in range(first_target_index(season), len(values)):
        t = target - horizon + 1
        if t < 1:
            continue
        points.append(EvalPoint(sid, t, target, values[:t], float(values[target])))
    return points


# -- checkpoints ------------------------------------------------------------------


def _pack(model):
    arrays = [(f"param/{k}", np.asarray(v, dtype="<f8")) for k, v in model.params.items()]
    arrays += [(f"ref/{i}", np.asarray(r, dtype="<f8")) for i, r in enumerate(model.references)]
    index, chunks, offset = [], [], 0
    for name, arr in arrays:
        raw = np.ascontiguousarray(arr).tobytes()
        index.append([name, list(arr.shape), offset, len(raw)])
        chunks.append(raw)
        offset += len(raw)
    return index, b"".join(chunks)


def save_model(path, model, metadata=None):
    """Write a versioned checkpoint; identical models give identical bytes."""
    index, payload = _pack(model)
    header = {
        "version": CHECKPOINT_VERSION,
        "hyperparams": model.hyperparams.to_dict(),
        "reference_ids": list(model.reference_ids),
        "loc": model.loc,
        "scale": model.scale,
        "arrays": index,
        "payload_sha256": hashlib.sha256(payload).hexdigest(),
        "metadata": metadata or {},
    }
    head = json.dumps(header, sort_keys=True).encode("utf-8")
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(struct.pack("<HI", CHECKPOINT_VERSION, len(head)))
        fh.write(head)
        fh.write(payload)


def load_model(path):
    """Read a checkpoint. Returns ``(FittedModel, metadata)``."""
    try:
        blob = Path(path).read_bytes()
    except OSError as err:
        raise CheckpointError(f"cannot read checkpoint {path}: {err}") from err
    fixed = len(CHECKPOINT_MAGIC) + struct.calcsize("<HI")
    if len(blob) < fixed or not blob.startswith(CHECKPOINT_MAGIC):
        raise CheckpointError(f"{path}: not a checkpoint file")
    version, head_len = struct.unpack("<HI", blob[len(CHECKPOINT_MAGIC):fixed])
    if version != CHECKPOINT_VERSION:
        raise CheckpointError(f"{path}: checkpoint version {version}, expected {CHECKPOINT_VERSION}")
    try:
        header = json.loads(blob[fixed:fixed + head_len].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as err:
        raise CheckpointError(f"{path}: corrupted header") from err
    payload = blob[fixed + head_len:]
    if hashlib.sha256(payload).hexdigest() != header.get("payload_sha256"):
        raise CheckpointError(f"{path}: payload truncated or corrupted")
    params, refs = {}, {}
    for name, shape, offset, nbytes in header["arrays"]:
        arr = np.frombuffer(payload[offset:offset + nbytes], dtype="<f8").astype(np.float64)
        arr = arr.reshape(shape)
        kind, key = name.split("/", 1)
        if kind == "param":
            params[key] = arr
        else:
            refs[int(key)] = arr
    try:
        model = FittedModel(
            params=params,
            hyperparams=Hyperparams.from_dict(header["hyperparams"]),
            references=[refs[i] for i in sorted(refs)],
            reference_ids=header["reference_ids"],
            loc=header["loc"],
            scale=header["scale"],
        )
    except (ContractError, KeyError, TypeError) as err:
        raise CheckpointError(f"{path}: inconsistent checkpoint contents: {err}") from err
    return model, header.get("metadata", {})
