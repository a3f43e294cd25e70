"""Manifests, stratified splits, the expert review queue, and the synthetic
corpus generator used in place of recorded recitations.

Manifest format: CSV with header `path,rule_id,polarity,onset_s,split`,
UTF-8, LF line endings. `path` is relative to the manifest's directory,
`polarity` is Right/Wrong or empty for rule-free material, `onset_s` is
empty unless an event start is known (verse files), `split` is train/test/
unassigned.

Review queue format: newline-delimited JSON events after a schema header
line; records are append-only and labels are appended as transition events,
so the queue survives restarts with no lost or duplicated records.
"""

from __future__ import annotations

import csv
import fcntl
import io
import json
import os
import warnings
from dataclasses import dataclass, replace
from datetime import datetime, timezone

import numpy as np

from . import audio
from .errors import (
    InvalidTransition,
    IoError,
    ParseError,
    StratumTooSmall,
    UnknownRecord,
)

RULE_IDS = ("edgham_meem", "ekhfaa_meem", "tafkheem_lam", "tarqeeq_lam")
POLARITIES = ("Right", "Wrong")
SPLITS = ("train", "test", "unassigned")

MANIFEST_HEADER = ["path", "rule_id", "polarity", "onset_s", "split"]
MANIFEST_NAME = "manifest.csv"

QUEUE_SCHEMA_VERSION = 1


class DanglingPathWarning(UserWarning):
    """Manifest rows referencing audio files that do not exist."""


@dataclass(frozen=True)
class ManifestEntry:
    path: str
    rule_id: str
    polarity: str | None        # None marks rule-free material
    onset_s: float | None
    split: str = "unassigned"


def resolve_path(root, path) -> str:
    return path if os.path.isabs(path) else os.path.join(root, path)


def load_manifest(path) -> list[ManifestEntry]:
    """Parse a manifest; malformed rows raise ParseError with their line
    number, rows pointing at missing audio trigger one DanglingPathWarning.
    """
    entries = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ParseError("empty manifest (missing header)", line_number=1)
        if header != MANIFEST_HEADER:
            raise ParseError(f"bad header {header!r}", line_number=1)
        for line_no, row in enumerate(reader, start=2):
            if len(row) != len(MANIFEST_HEADER):
                raise ParseError(f"expected {len(MANIFEST_HEADER)} fields, got {len(row)}",
                                 line_number=line_no)
            p, rule_id, polarity, onset, split = row
            if not p or not rule_id:
                raise ParseError("path and rule_id are required", line_number=line_no)
            if polarity not in ("Right", "Wrong", ""):
                raise ParseError(f"bad polarity {polarity!r}", line_number=line_no)
            if split not in SPLITS:
                raise ParseError(f"bad split {split!r}", line_number=line_no)
            try:
                onset_s = float(onset) if onset else None
            except ValueError:
                raise ParseError(f"bad onset_s {onset!r}", line_number=line_no)
            entries.append(ManifestEntry(p, rule_id, polarity or None, onset_s, split))

    root = os.path.dirname(os.path.abspath(path))
    missing = [e.path for e in entries if not os.path.isfile(resolve_path(root, e.path))]
    if missing:
        warnings.warn(DanglingPathWarning(f"{len(missing)} missing audio files: "
                                          + ", ".join(missing[:5])))
    return entries


def save_manifest(entries, path) -> None:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(MANIFEST_HEADER)
    for e in entries:
        onset = repr(float(e.onset_s)) if e.onset_s is not None else ""
        writer.writerow([e.path, e.rule_id, e.polarity or "", onset, e.split])
    with open(path, "w", newline="", encoding="utf-8") as fh:
        fh.write(buf.getvalue())


def split(entries, train_fraction: float = 0.7, seed: int = 0) -> list[ManifestEntry]:
    """Assign train/test per (rule_id, polarity) stratum: round(fraction*n)
    entries go to train, the rest to test, chosen by a seeded shuffle.
    """
    if not 0.0 < train_fraction < 1.0:
        raise ValueError("train_fraction must be in (0, 1)")
    strata: dict[tuple, list[int]] = {}
    for i, e in enumerate(entries):
        strata.setdefault((e.rule_id, e.polarity or ""), []).append(i)

    rng = np.random.default_rng(seed)
    assignment = {}
    for key in sorted(strata):
        idx = strata[key]
        if len(idx) < 2:
            raise StratumTooSmall(f"stratum {key} has {len(idx)} entries (need >= 2)")
        order = np.array(idx)
        rng.shuffle(order)
        n_train = round(train_fraction * len(idx))
        for pos, i in enumerate(order):
            assignment[int(i)] = "train" if pos < n_train else "test"
    return [replace(e, split=assignment[i]) for i, e in enumerate(entries)]


# --- synthetic corpus ------------------------------------------------------

def default_recipe() -> dict:
    """Reference recipe: four separable classes (two rules x two polarities).

    Each class is full-band colored noise with a class-specific spectral
    tilt and formant bumps, a harmonic comb at a class-specific
    fundamental, and class-specific amplitude modulation; every clip sits
    on the shared low-level background bed that verses are built from.
    Full-band class energy keeps every filter dimension informative, which
    is what makes the fixed gamma=0.1 / standardized-feature regime behave.
    Dump with `tajweed synth --write-spec` to edit classes without code.
    """
    def cls(f0, tilt, formants, am_rate, am_depth):
        return {
            "fundamental_hz": f0,
            "harmonics": 10,
            "harmonic_decay": 0.9,
            "harmonic_level": 0.7,
            "fundamental_jitter": 0.002,
            "tilt_db_per_khz": tilt,
            "formants": formants,
            "am_rate_hz": am_rate,
            "am_depth": am_depth,
            "gain_jitter_db": 0.3,
            "level": 0.3,
        }

    return {
        "sample_rate_hz": 8000,
        "clip_seconds": 4.0,
        "event_seconds_min": 3.9,
        "event_seconds_max": 4.0,
        "event_lead_max_s": 0.5,
        "clips_per_class": 80,
        "negatives_per_rule": 30,
        "verses_per_rule": 4,
        "event_free_verses_per_rule": 4,
        "verse_seconds_min": 10.0,
        "verse_seconds_max": 15.0,
        "background": {"noise_level": 0.01, "band_hz": [50.0, 3950.0]},
        "classes": {
            "edgham_meem": {
                "Right": cls(150.0, -4.0, [[300, 700, 2.0], [1800, 2200, 1.0]], 2.0, 0.25),
                "Wrong": cls(210.0, 2.0, [[900, 1400, 2.0], [2600, 3100, 1.0]], 4.0, 0.5),
            },
            "tarqeeq_lam": {
                "Right": cls(280.0, -1.0, [[500, 1000, 1.5], [2300, 2800, 1.5]], 6.0, 0.7),
                "Wrong": cls(360.0, 4.0, [[1400, 1900, 2.0], [3100, 3600, 1.0]], 8.0, 0.9),
            },
        },
    }


def _band_noise(n, rate, band, rng) -> np.ndarray:
    """Unit-RMS white noise restricted to a frequency band."""
    white = rng.standard_normal(n)
    spectrum = np.fft.rfft(white)
    freqs = np.fft.rfftfreq(n, 1.0 / rate)
    spectrum[(freqs < band[0]) | (freqs > band[1])] = 0.0
    shaped = np.fft.irfft(spectrum, n)
    rms = np.sqrt(np.mean(shaped ** 2))
    return shaped / max(rms, 1e-12)


def _render_class_clip(recipe_cls, rate, seconds, rng) -> np.ndarray:
    n = int(round(seconds * rate))
    t = np.arange(n) / rate

    # full-band colored noise: class tilt plus formant bumps
    spectrum = np.fft.rfft(rng.standard_normal(n))
    freqs = np.fft.rfftfreq(n, 1.0 / rate)
    gain = 10.0 ** (recipe_cls.get("tilt_db_per_khz", 0.0) * freqs / 1000.0 / 20.0)
    for lo, hi, lvl in recipe_cls.get("formants", []):
        gain = np.where((freqs >= lo) & (freqs <= hi), gain * (1.0 + lvl), gain)
    noise = np.fft.irfft(spectrum * gain, n)
    noise /= max(np.sqrt(np.mean(noise ** 2)), 1e-12)

    f0 = recipe_cls["fundamental_hz"] * (
        1.0 + recipe_cls.get("fundamental_jitter", 0.0) * rng.uniform(-1.0, 1.0)
    )
    harm = np.zeros(n)
    for h in range(1, recipe_cls.get("harmonics", 10) + 1):
        amp = recipe_cls.get("harmonic_decay", 0.9) ** (h - 1)
        harm += amp * np.sin(2.0 * np.pi * h * f0 * t + rng.uniform(0.0, 2.0 * np.pi))
    harm /= max(np.sqrt(np.mean(harm ** 2)), 1e-12)

    sig = noise + recipe_cls.get("harmonic_level", 0.7) * harm
    sig *= 1.0 + recipe_cls.get("am_depth", 0.5) * np.sin(
        2.0 * np.pi * recipe_cls.get("am_rate_hz", 3.0) * t + rng.uniform(0.0, 2.0 * np.pi)
    )
    sig *= recipe_cls["level"] / max(np.sqrt(np.mean(sig ** 2)), 1e-12)
    sig *= 10.0 ** (recipe_cls.get("gain_jitter_db", 0.3) * rng.uniform(-1.0, 1.0) / 20.0)
    return np.clip(sig, -0.98, 0.98)


def _render_background(recipe, n, rate, rng) -> np.ndarray:
    bg = recipe["background"]
    return bg["noise_level"] * _band_noise(n, rate, bg["band_hz"], rng)


def _fade_edges(sig, rate, fade_s=0.02) -> np.ndarray:
    k = min(int(round(fade_s * rate)), len(sig) // 2)
    if k > 0:
        ramp = 0.5 - 0.5 * np.cos(np.pi * np.arange(k) / k)
        sig = sig.copy()
        sig[:k] *= ramp
        sig[-k:] *= ramp[::-1]
    return sig


def synth_generate(recipe, seed: int, out_dir, *, clips_per_class=None,
                   negatives_per_rule=None, verses_per_rule=None,
                   event_free_per_rule=None) -> list[ManifestEntry]:
    """Write a deterministic synthetic corpus and its manifest.

    Per class: `clips_per_class` 4 s exemplars. Per rule: rule-free
    background clips, verses (10-15 s background with one class event
    injected at a recorded onset, template saved under templates/), and
    event-free verses. Returns the manifest entries (also written to
    out_dir/manifest.csv).
    """
    rate = recipe["sample_rate_hz"]
    clip_s = recipe["clip_seconds"]
    n_clips = recipe["clips_per_class"] if clips_per_class is None else clips_per_class
    n_neg = recipe["negatives_per_rule"] if negatives_per_rule is None else negatives_per_rule
    n_verse = recipe["verses_per_rule"] if verses_per_rule is None else verses_per_rule
    n_free = (recipe["event_free_verses_per_rule"]
              if event_free_per_rule is None else event_free_per_rule)

    try:
        os.makedirs(out_dir, exist_ok=True)
        if n_verse > 0:
            os.makedirs(os.path.join(out_dir, "templates"), exist_ok=True)
    except OSError as exc:
        raise IoError(f"cannot create corpus directory {out_dir}: {exc}") from exc

    seq = np.random.SeedSequence(seed)
    entries = []

    def write(name, samples):
        try:
            audio.write_wav(os.path.join(out_dir, name), audio.AudioClip(samples, rate))
        except OSError as exc:
            raise IoError(f"cannot write {name}: {exc}") from exc

    def render_event(cls_recipe, rng):
        dur = rng.uniform(recipe.get("event_seconds_min", 3.4),
                          recipe.get("event_seconds_max", 4.0))
        return _fade_edges(_render_class_clip(cls_recipe, rate, dur, rng), rate)

    for rule_id in sorted(recipe["classes"]):
        polarities = recipe["classes"][rule_id]
        for polarity in POLARITIES:
            cls_recipe = polarities[polarity]
            for i in range(n_clips):
                rng = np.random.default_rng(seq.spawn(1)[0])
                name = f"{rule_id}_{polarity.lower()}_{i:04d}.wav"
                n_clip = int(round(clip_s * rate))
                # manually-cut exemplars: near-window-length event at a random
                # lead-in of up to one detection stride, truncated at the clip
                # edge (what a random 4 s cut does to a real recording). This
                # makes each sliding-window alignment look distinct, so the
                # window starting at-or-just-before an event onset is the
                # training-like one and localization stays sharp.
                samples = _render_background(recipe, n_clip, rate, rng)
                event = render_event(cls_recipe, rng)
                lead_max = int(round(recipe.get("event_lead_max_s", 0.5) * rate))
                start = int(rng.integers(0, lead_max + 1))
                end = min(start + len(event), n_clip)
                samples[start:end] += event[: end - start]
                write(name, np.clip(samples, -1.0, 1.0))
                entries.append(ManifestEntry(name, rule_id, polarity, None))

        for i in range(n_neg):
            rng = np.random.default_rng(seq.spawn(1)[0])
            name = f"{rule_id}_neg_{i:04d}.wav"
            write(name, _render_background(recipe, int(round(clip_s * rate)), rate, rng))
            entries.append(ManifestEntry(name, rule_id, None, None))

        for polarity in POLARITIES:
            for i in range(n_verse):
                rng = np.random.default_rng(seq.spawn(1)[0])
                verse_s = rng.uniform(recipe["verse_seconds_min"], recipe["verse_seconds_max"])
                n = int(round(verse_s * rate))
                verse = _render_background(recipe, n, rate, rng)
                event = render_event(polarities[polarity], rng)
                first = int(round(0.5 * rate))
                last = n - len(event) - first
                onset = int(rng.integers(first, last + 1))
                verse[onset:onset + len(event)] += event
                name = f"{rule_id}_{polarity.lower()}_verse_{i:04d}.wav"
                write(name, np.clip(verse, -1.0, 1.0))
                write(os.path.join("templates", name), event)
                entries.append(ManifestEntry(name, rule_id, polarity, onset / rate))

        for i in range(n_free):
            rng = np.random.default_rng(seq.spawn(1)[0])
            verse_s = rng.uniform(recipe["verse_seconds_min"], recipe["verse_seconds_max"])
            n = int(round(verse_s * rate))
            name = f"{rule_id}_free_verse_{i:04d}.wav"
            write(name, _render_background(recipe, n, rate, rng))
            entries.append(ManifestEntry(name, rule_id, None, None))

    save_manifest(entries, os.path.join(out_dir, MANIFEST_NAME))
    return entries


# --- expert review queue ----------------------------------------------------

@dataclass(frozen=True)
class ReviewRecord:
    record_id: int | None
    audio_path: str
    rule_id: str
    verdict: dict | None        # serialized Detection, or None
    created_at: str = ""
    status: str = "pending"
    corrected_label: str | None = None


def _read_queue(path) -> dict[int, ReviewRecord]:
    records: dict[int, ReviewRecord] = {}
    if not os.path.exists(path):
        return records
    with open(path, encoding="utf-8") as fh:
        header = fh.readline()
        if not header:
            return records
        meta = json.loads(header)
        if meta.get("schema_version") != QUEUE_SCHEMA_VERSION:
            raise ParseError(f"unsupported queue schema {meta.get('schema_version')}",
                             line_number=1)
        for line_no, line in enumerate(fh, start=2):
            if not line.strip():
                continue
            try:
                event = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ParseError(f"bad queue line: {exc}", line_number=line_no)
            rid = int(event["record_id"])
            if event["kind"] == "record":
                if rid not in records:
                    records[rid] = ReviewRecord(
                        record_id=rid,
                        audio_path=event["audio_path"],
                        rule_id=event["rule_id"],
                        verdict=event.get("verdict"),
                        created_at=event.get("created_at", ""),
                    )
            elif event["kind"] == "label":
                if rid not in records:
                    raise ParseError(f"label for unknown record {rid}", line_number=line_no)
                records[rid] = replace(
                    records[rid], status=event["status"], corrected_label=event.get("label")
                )
    return records


def _append_event(path, event: dict) -> None:
    line = json.dumps(event, sort_keys=True, separators=(",", ":"))
    new = not os.path.exists(path) or os.path.getsize(path) == 0
    with open(path, "a", encoding="utf-8") as fh:
        fcntl.flock(fh.fileno(), fcntl.LOCK_EX)
        try:
            if new:
                fh.write(json.dumps({"schema_version": QUEUE_SCHEMA_VERSION}) + "\n")
            fh.write(line + "\n")
            fh.flush()
            os.fsync(fh.fileno())
        finally:
            fcntl.flock(fh.fileno(), fcntl.LOCK_UN)


def review_append(queue_path, record: ReviewRecord) -> ReviewRecord:
    """Durably append a record; ids are assigned monotonically when absent,
    and re-appending an existing id is a no-op (idempotent retry).
    """
    records = _read_queue(queue_path)
    if record.record_id is not None and record.record_id in records:
        return records[record.record_id]
    rid = record.record_id if record.record_id is not None else (
        max(records, default=0) + 1
    )
    created = record.created_at or datetime.now(timezone.utc).isoformat(timespec="seconds")
    stored = replace(record, record_id=rid, created_at=created, status="pending")
    _append_event(queue_path, {
        "kind": "record",
        "record_id": rid,
        "audio_path": stored.audio_path,
        "rule_id": stored.rule_id,
        "verdict": stored.verdict,
        "created_at": stored.created_at,
    })
    return stored


def review_list(queue_path, status: str | None = None) -> list[ReviewRecord]:
    records = sorted(_read_queue(queue_path).values(), key=lambda r: r.record_id)
    if status is not None:
        records = [r for r in records if r.status == status]
    return records


def review_label(queue_path, record_id: int, status: str,
                 label: str | None = None, force: bool = False) -> ReviewRecord:
    """Move a record pending -> approved | corrected. Relabeling an already
    labeled record requires force=True.
    """
    if status not in ("approved", "corrected"):
        raise ValueError("status must be approved or corrected")
    if status == "corrected" and label not in POLARITIES:
        raise ValueError("corrected records need a Right/Wrong label")
    records = _read_queue(queue_path)
    if record_id not in records:
        raise UnknownRecord(f"no review record {record_id}")
    current = records[record_id]
    if current.status != "pending" and not force:
        raise InvalidTransition(
            f"record {record_id} is already {current.status}; pass force to relabel"
        )
    _append_event(queue_path, {
        "kind": "label",
        "record_id": record_id,
        "status": status,
        "label": label,
    })
    return replace(current, status=status, corrected_label=label)


def review_export(queue_path) -> list[ManifestEntry]:
    """Labeled records as manifest entries ready for retraining."""
    out = []
    for r in review_list(queue_path):
        if r.status == "pending":
            continue
        if r.status == "corrected":
            polarity = r.corrected_label
            onset = (r.verdict or {}).get("offset_s")
        else:
            polarity = (r.verdict or {}).get("polarity")
            onset = (r.verdict or {}).get("offset_s")
        out.append(ManifestEntry(r.audio_path, r.rule_id, polarity, onset))
    return out
