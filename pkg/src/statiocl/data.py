"""Segment datasets: synthetic generation, on-disk format, splitting, normalisation.

A dataset is N segments of shape (T, V).  Segments are grouped into recordings
(contiguous rows); ``position`` is a segment's index inside its recording and is
what the temporal weighting measures distances with.  Splits are assigned per
recording so temporal neighbours never straddle train and test.

On-disk layout (both files plain text)::

    <name>.manifest      key = value lines grouped in [sections]
    <name>.values.csv    per segment: one header row "@segment,recording,index,label"
                         followed by T rows of V comma-separated floats

Manifest grammar::

    [dataset]        name, length, channels, segments, values (path), labels (optional path)
    [recordings]     <recording id> = <first row>:<stop row>   (half-open row range)
    [splits]         train|val|test = space-separated recording ids
    [normalization]  mean, std = comma-separated per-channel floats (train split)

Blank lines and lines starting with ``#`` are ignored.  Relative paths resolve
against the manifest's directory.  Floats are written with ``repr`` so a
write/load round trip is exact.
"""
from __future__ import annotations

import inspect
import logging
import math
import re
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

logger = logging.getLogger(__name__)

SPLIT_NAMES = ("train", "val", "test")
DEFAULT_PROPORTIONS = (0.6, 0.2, 0.2)


class DatasetError(ValueError):
    """Malformed dataset files or inconsistent manifest."""


class ConfigError(ValueError):
    pass


# -- generators ----------------------------------------------------------

def ar1(rng, length, channels, phi=0.5, sigma=1.0):
    if not abs(phi) < 1 or sigma <= 0:
        raise ConfigError(f"ar1 needs |phi| < 1 and sigma > 0, got phi={phi}, sigma={sigma}")
    eps = rng.normal(0.0, sigma, size=(length, channels))
    x = np.empty((length, channels))
    x[0] = rng.normal(0.0, sigma / math.sqrt(1.0 - phi * phi), size=channels)
    for t in range(1, length):
        x[t] = phi * x[t - 1] + eps[t]
    return x


def random_walk(rng, length, channels, sigma=1.0):
    if sigma <= 0:
        raise ConfigError(f"random_walk needs sigma > 0, got {sigma}")
    return np.cumsum(rng.normal(0.0, sigma, size=(length, channels)), axis=0)


def sine_noise(rng, length, channels, freq=0.05, sigma=0.3, amplitude=1.0):
    if not 0 < freq < 0.5 or sigma < 0:
        raise ConfigError(f"sine_noise needs 0 < freq < 0.5 and sigma >= 0, got freq={freq}, sigma={sigma}")
    t = np.arange(length)[:, None]
    phase = rng.uniform(0.0, 2.0 * math.pi, size=channels)
    return amplitude * np.sin(2.0 * math.pi * freq * t + phase) + rng.normal(0.0, sigma, size=(length, channels))


def trend_noise(rng, length, channels, slope=0.05, sigma=1.0):
    if sigma < 0:
        raise ConfigError(f"trend_noise needs sigma >= 0, got {sigma}")
    t = np.arange(length)[:, None]
    return slope * t + rng.normal(0.0, sigma, size=(length, channels))


GENERATORS = {"ar1": ar1, "random_walk": random_walk, "sine_noise": sine_noise, "trend_noise": trend_noise}

_GEN_RE = re.compile(r"^\s*([a-z_0-9]+)\s*(?:\((.*)\))?\s*$")


def parse_generator(text: str) -> tuple[str, dict]:
    """``"ar1(0.5, 1)"`` or ``"ar1(phi=0.5)"`` -> ``("ar1", {"phi": 0.5, "sigma": 1.0})``."""
    m = _GEN_RE.match(text)
    if not m or m.group(1) not in GENERATORS:
        raise ConfigError(f"unknown generator {text!r}; choose from {sorted(GENERATORS)}")
    name, args = m.group(1), (m.group(2) or "").strip()
    names = list(inspect.signature(GENERATORS[name]).parameters)[3:]
    params: dict[str, float] = {}
    for i, tok in enumerate(filter(None, (a.strip() for a in args.split(",")))):
        key, _, val = tok.rpartition("=")
        key = key.strip() or (names[i] if i < len(names) else None)
        if key not in names:
            raise ConfigError(f"generator {name} has no parameter for {tok!r}")
        params[key] = float(val)
    return name, params


def format_generator(name: str, params: dict) -> str:
    inner = ", ".join(f"{k}={v!r}" for k, v in params.items())
    return f"{name}({inner})"


@dataclass
class SynthSpec:
    classes: tuple = (("ar1", {"phi": 0.5, "sigma": 1.0}), ("random_walk", {"sigma": 1.0}))
    n_segments: int = 2000
    segments_per_recording: int = 50
    mean_run_length: float = 10.0
    length: int = 179
    channels: int = 1
    seed: int = 0
    proportions: tuple = DEFAULT_PROPORTIONS
    stratify: bool = False
    name: str = "synth"

    def __post_init__(self):
        self.classes = tuple(parse_generator(c) if isinstance(c, str) else (c[0], dict(c[1])) for c in self.classes)
        if not self.classes:
            raise ConfigError("need at least one class generator")
        for name, _ in self.classes:
            if name not in GENERATORS:
                raise ConfigError(f"unknown generator {name!r}")
        if self.mean_run_length < 1:
            raise ConfigError("mean_run_length must be >= 1")
        if self.n_segments < 1 or self.segments_per_recording < 1 or self.length < 2 or self.channels < 1:
            raise ConfigError("n_segments, segments_per_recording, channels must be positive and length >= 2")


# -- dataset -------------------------------------------------------------

@dataclass
class Dataset:
    name: str
    values: np.ndarray                 # (N, T, V)
    recording: np.ndarray              # (N,)
    position: np.ndarray               # (N,)
    split: np.ndarray                  # (N,) codes into SPLIT_NAMES
    labels: np.ndarray | None = None   # (N,)
    segment_id: np.ndarray | None = None
    norm_mean: np.ndarray | None = None
    norm_std: np.ndarray | None = None
    normalized: bool = False
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        n = self.values.shape[0]
        if self.segment_id is None:
            self.segment_id = np.arange(n)
        for name in ("recording", "position", "split", "segment_id"):
            if np.shape(getattr(self, name)) != (n,):
                raise DatasetError(f"{name} must have one entry per segment")
        if self.labels is not None and np.shape(self.labels) != (n,):
            raise DatasetError("labels must have one entry per segment")

    def __len__(self) -> int:
        return self.values.shape[0]

    @property
    def length(self) -> int:
        return self.values.shape[1]

    @property
    def channels(self) -> int:
        return self.values.shape[2]

    @property
    def max_recording_length(self) -> int:
        _, counts = np.unique(self.recording, return_counts=True)
        return int(counts.max())

    def indices(self, split: str) -> np.ndarray:
        return np.flatnonzero(self.split == SPLIT_NAMES.index(split))

    def train_statistics(self) -> tuple[np.ndarray, np.ndarray]:
        train = self.values[self.indices("train")]
        if train.size == 0:
            raise DatasetError("train split is empty; cannot compute normalisation statistics")
        flat = train.reshape(-1, self.channels)
        return flat.mean(axis=0), flat.std(axis=0)

    def normalize(self) -> "Dataset":
        """Z-score every channel with the stored (or recomputed) train-split statistics."""
        if self.normalized:
            return self
        mean, std = (self.norm_mean, self.norm_std) if self.norm_mean is not None else self.train_statistics()
        std = np.where(std > 0, std, 1.0)
        return replace(self, values=(self.values - mean) / std, norm_mean=mean, norm_std=std, normalized=True)


def _largest_remainder(n: int, proportions) -> list[int]:
    raw = [p * n for p in proportions]
    counts = [int(math.floor(r)) for r in raw]
    order = sorted(range(len(raw)), key=lambda i: (-(raw[i] - counts[i]), i))
    for i in order[: n - sum(counts)]:
        counts[i] += 1
    return counts


def split(dataset: Dataset, proportions=DEFAULT_PROPORTIONS, seed: int = 0, stratify: bool = False) -> np.ndarray:
    """Seeded recording-level split; returns per-segment split codes."""
    proportions = tuple(float(p) for p in proportions)
    if len(proportions) != 3 or min(proportions) < 0 or abs(sum(proportions) - 1.0) > 1e-9:
        raise ValueError(f"proportions must be three non-negative numbers summing to 1, got {proportions}")
    recs = np.unique(dataset.recording)
    if sum(p > 0 for p in proportions) > recs.size:
        raise ValueError(f"{recs.size} recordings cannot fill {sum(p > 0 for p in proportions)} splits")
    rng = np.random.default_rng(seed)
    rec_split = {}
    if stratify:
        if dataset.labels is None:
            raise ValueError("stratified split needs class labels")
        majority = {}
        for r in recs:
            vals, counts = np.unique(dataset.labels[dataset.recording == r], return_counts=True)
            majority[r] = vals[np.argmax(counts)]
        groups = [np.array([r for r in recs if majority[r] == c]) for c in sorted(set(majority.values()))]
    else:
        groups = [recs]
    for group in groups:
        shuffled = group[rng.permutation(group.size)]
        start = 0
        for code, count in enumerate(_largest_remainder(group.size, proportions)):
            for r in shuffled[start:start + count]:
                rec_split[r] = code
            start += count
    return np.array([rec_split[r] for r in dataset.recording], dtype=np.int64)


def _class_sequence(rng, n: int, n_classes: int, mean_run: float) -> np.ndarray:
    """Labels laid out in runs of geometric length, each class capped at its equal share."""
    budget = _largest_remainder(n, [1.0 / n_classes] * n_classes)
    seq = np.empty(n, dtype=np.int64)
    cls = int(rng.integers(n_classes))
    filled = 0
    while filled < n:
        while budget[cls] == 0:
            cls = (cls + 1) % n_classes
        run = min(int(rng.geometric(1.0 / mean_run)), budget[cls], n - filled)
        seq[filled:filled + run] = cls
        budget[cls] -= run
        filled += run
        cls = (cls + 1) % n_classes
    return seq


def gen_synthetic(spec: SynthSpec) -> Dataset:
    """Recordings of consecutive segments whose class persists over geometric runs."""
    layout_seq, value_seq = np.random.SeedSequence(spec.seed).spawn(2)
    layout_rng, value_rng = np.random.default_rng(layout_seq), np.random.default_rng(value_seq)
    labels = _class_sequence(layout_rng, spec.n_segments, len(spec.classes), spec.mean_run_length)
    rows = np.arange(spec.n_segments)
    recording = rows // spec.segments_per_recording
    position = rows % spec.segments_per_recording
    values = np.empty((spec.n_segments, spec.length, spec.channels))
    for i, c in enumerate(labels):
        name, params = spec.classes[c]
        values[i] = GENERATORS[name](value_rng, spec.length, spec.channels, **params)
    ds = Dataset(spec.name, values, recording, position, np.zeros(spec.n_segments, dtype=np.int64), labels,
                 meta={"classes": [format_generator(n, p) for n, p in spec.classes]})
    ds.split = split(ds, spec.proportions, spec.seed, spec.stratify)
    ds.norm_mean, ds.norm_std = ds.train_statistics()
    return ds


# -- I/O -----------------------------------------------------------------

def _fmt(x: float) -> str:
    return repr(float(x))


def _parse_floats(text: str) -> np.ndarray:
    return np.array([float(tok) for tok in text.split(",")], dtype=np.float64)


def _recording_ranges(ds: Dataset) -> dict[int, tuple[int, int]]:
    ranges = {}
    for r in dict.fromkeys(ds.recording.tolist()):
        rows = np.flatnonzero(ds.recording == r)
        if rows[-1] - rows[0] + 1 != rows.size:
            raise DatasetError(f"recording {r} is not contiguous; reorder segments before writing")
        ranges[int(r)] = (int(rows[0]), int(rows[-1]) + 1)
    return ranges


def write_dataset(ds: Dataset, directory) -> Path:
    """Write ``<name>.manifest`` and ``<name>.values.csv``; returns the manifest path."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    values_path = directory / f"{ds.name}.values.csv"
    manifest_path = directory / f"{ds.name}.manifest"
    ranges = _recording_ranges(ds)
    with values_path.open("w") as fh:
        fh.write("# segment,recording,index,label then T rows of V values\n")
        for i in range(len(ds)):
            label = "" if ds.labels is None else str(int(ds.labels[i]))
            fh.write(f"@{int(ds.segment_id[i])},{int(ds.recording[i])},{int(ds.position[i])},{label}\n")
            for row in ds.values[i]:
                fh.write(",".join(_fmt(v) for v in row) + "\n")
    lines = ["# statiocl dataset manifest v1", "[dataset]", f"name = {ds.name}", f"length = {ds.length}",
             f"channels = {ds.channels}", f"segments = {len(ds)}", f"values = {values_path.name}"]
    for key, val in ds.meta.items():
        if key == "classes":
            lines.append("classes = " + "; ".join(val))
    lines += ["", "[recordings]"] + [f"{r} = {a}:{b}" for r, (a, b) in ranges.items()]
    lines += ["", "[splits]"]
    for code, name in enumerate(SPLIT_NAMES):
        recs = [str(r) for r in ranges if ds.split[ranges[r][0]] == code]
        lines.append(f"{name} = {' '.join(recs)}")
    if ds.norm_mean is not None:
        lines += ["", "[normalization]", "mean = " + ",".join(_fmt(v) for v in ds.norm_mean),
                  "std = " + ",".join(_fmt(v) for v in ds.norm_std)]
    manifest_path.write_text("\n".join(lines) + "\n")
    return manifest_path


_SECTIONS = {
    "dataset": {"name", "length", "channels", "segments", "values", "labels", "classes"},
    "recordings": None,
    "splits": set(SPLIT_NAMES),
    "normalization": {"mean", "std"},
}


def read_manifest(path) -> dict[str, dict[str, str]]:
    path = Path(path)
    if not path.is_file():
        raise DatasetError(f"manifest not found: {path}")
    sections: dict[str, dict[str, str]] = {}
    current = None
    for lineno, raw in enumerate(path.read_text().splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if line.startswith("[") and line.endswith("]"):
            current = line[1:-1].strip()
            if current not in _SECTIONS:
                raise DatasetError(f"{path}:{lineno}: unknown section [{current}]")
            sections.setdefault(current, {})
            continue
        if current is None or "=" not in line:
            raise DatasetError(f"{path}:{lineno}: expected 'key = value' inside a section")
        key, _, val = (s.strip() for s in line.partition("="))
        allowed = _SECTIONS[current]
        if allowed is not None and key not in allowed:
            raise DatasetError(f"{path}:{lineno}: unknown key {key!r} in [{current}]")
        if key in sections[current]:
            raise DatasetError(f"{path}:{lineno}: duplicate key {key!r}")
        sections[current][key] = val
    for required in ("dataset", "recordings", "splits"):
        if required not in sections:
            raise DatasetError(f"{path}: missing [{required}] section")
    return sections


def _read_values(path: Path, n: int, length: int, channels: int):
    if not path.is_file():
        raise DatasetError(f"values file not found: {path}")
    values = np.empty((n, length, channels))
    header = np.empty((n, 3), dtype=np.int64)
    labels: list[str] = []
    seg, row = -1, length
    with path.open() as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            if line.startswith("@"):
                if row != length:
                    raise DatasetError(f"{path}:{lineno}: segment {seg} has {row} rows, expected {length}")
                seg += 1
                if seg >= n:
                    raise DatasetError(f"{path}:{lineno}: more than {n} segments")
                parts = line[1:].split(",")
                if len(parts) != 4:
                    raise DatasetError(f"{path}:{lineno}: header needs segment,recording,index,label")
                try:
                    header[seg] = [int(p) for p in parts[:3]]
                except ValueError:
                    raise DatasetError(f"{path}:{lineno}: non-integer segment header") from None
                labels.append(parts[3].strip())
                row = 0
                continue
            if seg < 0 or row >= length:
                raise DatasetError(f"{path}:{lineno}: value row outside a segment block (expected {length} rows)")
            try:
                vals = _parse_floats(line)
            except ValueError:
                raise DatasetError(f"{path}:{lineno}: unparsable value row") from None
            if vals.size != channels:
                raise DatasetError(f"{path}:{lineno}: row has {vals.size} columns, expected {channels}")
            values[seg, row] = vals
            row += 1
    if seg + 1 != n or row != length:
        raise DatasetError(f"{path}: found {seg + 1} complete segments, manifest declares {n}")
    return values, header, labels


def load_dataset(manifest_path, normalize: bool = True) -> Dataset:
    """Read a dataset; values are z-scored with train-split statistics unless ``normalize=False``."""
    manifest_path = Path(manifest_path)
    m = read_manifest(manifest_path)
    d = m["dataset"]
    try:
        n, length, channels = int(d["segments"]), int(d["length"]), int(d["channels"])
        values_path = manifest_path.parent / d["values"]
    except KeyError as exc:
        raise DatasetError(f"{manifest_path}: [dataset] is missing {exc.args[0]!r}") from None

    recording = np.full(n, -1, dtype=np.int64)
    for rec, span in m["recordings"].items():
        a, _, b = span.partition(":")
        a, b = int(a), int(b)
        if not 0 <= a < b <= n or np.any(recording[a:b] >= 0):
            raise DatasetError(f"{manifest_path}: recording {rec} range {span} is invalid or overlaps")
        recording[a:b] = int(rec)
    if np.any(recording < 0):
        raise DatasetError(f"{manifest_path}: segment {int(np.argmax(recording < 0))} belongs to no recording")

    rec_split: dict[int, int] = {}
    for code, name in enumerate(SPLIT_NAMES):
        for tok in m["splits"].get(name, "").split():
            r = int(tok)
            if r in rec_split:
                raise DatasetError(f"{manifest_path}: recording {r} appears in both {SPLIT_NAMES[rec_split[r]]} and {name}")
            rec_split[r] = code
    missing = set(recording.tolist()) - set(rec_split)
    if missing:
        raise DatasetError(f"{manifest_path}: recordings {sorted(missing)[:5]} are in no split")
    unknown = set(rec_split) - set(recording.tolist())
    if unknown:
        raise DatasetError(f"{manifest_path}: splits name unknown recordings {sorted(unknown)[:5]}")

    values, header, label_tokens = _read_values(values_path, n, length, channels)
    bad = np.flatnonzero(header[:, 1] != recording)
    if bad.size:
        raise DatasetError(f"{values_path}: segment {bad[0]} header says recording {header[bad[0], 1]}, "
                           f"manifest says {recording[bad[0]]}")
    labels = None
    if "labels" in d:
        lab_path = manifest_path.parent / d["labels"]
        if not lab_path.is_file():
            raise DatasetError(f"labels file not found: {lab_path}")
        toks = [t.strip() for t in lab_path.read_text().splitlines() if t.strip()]
        if len(toks) != n:
            raise DatasetError(f"{lab_path}: {len(toks)} labels for {n} segments")
        labels = np.array([int(t) for t in toks], dtype=np.int64)
    elif all(label_tokens):
        labels = np.array([int(t) for t in label_tokens], dtype=np.int64)
    elif any(label_tokens):
        raise DatasetError(f"{values_path}: some segments are labelled and some are not")

    meta = {}
    if "classes" in d:
        meta["classes"] = [c.strip() for c in d["classes"].split(";")]
    ds = Dataset(d.get("name", manifest_path.stem), values, recording, header[:, 2],
                 np.array([rec_split[r] for r in recording], dtype=np.int64), labels, header[:, 0], meta=meta)
    norm = m.get("normalization")
    if norm:
        ds.norm_mean, ds.norm_std = _parse_floats(norm["mean"]), _parse_floats(norm["std"])
        if ds.norm_mean.size != channels or ds.norm_std.size != channels:
            raise DatasetError(f"{manifest_path}: normalisation stats need {channels} values")
    return ds.normalize() if normalize else ds
