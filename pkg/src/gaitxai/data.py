"""GRF dataset handling: ingestion, preprocessing, normalization, assembly.

Conventions
-----------
A trial holds six stance-phase force series, each resampled to 101 nodes.
Node ``q`` (0..100) corresponds to q% of stance. The slot order is fixed:

    0 affected ML, 1 affected AP, 2 affected V,
    3 unaffected ML, 4 unaffected AP, 5 unaffected V

The assembled model input concatenates the slots into 606 values. In the
1-based index convention used in exports, indices 1..101 are affected ML,
102..202 affected AP, 203..303 affected V, 304..404 unaffected ML,
405..505 unaffected AP, 506..606 unaffected V.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np
from scipy.signal import butter, filtfilt

N_NODES = 101
N_SLOTS = 6
N_INPUTS = N_SLOTS * N_NODES

CLASS_LABELS = ("HC", "H", "K", "A")
SIDES = ("affected", "unaffected")
COMPONENTS = ("ML", "AP", "V")
SLOT_NAMES = tuple(f"{side}_{comp}" for side in SIDES for comp in COMPONENTS)

GRAVITY = 9.81  # m/s^2, used to express force as % body weight

# Horizontal (ML and AP) input positions of both sides, 0-based.
HORIZONTAL_SLOTS = (0, 1, 3, 4)
VERTICAL_SLOTS = (2, 5)
_HORIZONTAL_MASK = np.zeros(N_INPUTS, dtype=bool)
for _slot in HORIZONTAL_SLOTS:
    _HORIZONTAL_MASK[_slot * N_NODES:(_slot + 1) * N_NODES] = True
_HORIZONTAL_MASK.setflags(write=False)

_CSV_FIELDS = ("subject_id", "session_id", "class_label", "side", "component")


class GrfDataError(ValueError):
    """Base error for dataset ingestion and preprocessing problems."""


class GrfParseError(GrfDataError):
    """A cell could not be parsed; the message carries the CSV row number."""


class GrfShapeError(GrfDataError):
    """A series has the wrong number of samples."""


def slot_index(side: str, component: str) -> int:
    return SIDES.index(side) * len(COMPONENTS) + COMPONENTS.index(component)


def slot_slice(slot: int) -> slice:
    """Positions of a slot's 101 nodes inside the 606-value input (0-based)."""
    return slice(slot * N_NODES, (slot + 1) * N_NODES)


def describe_index(index_1based: int) -> tuple[str, str, int]:
    """Map a 1-based input index to (side, component, pct_stance)."""
    if not 1 <= index_1based <= N_INPUTS:
        raise ValueError(f"input index {index_1based} outside 1..{N_INPUTS}")
    slot, node = divmod(index_1based - 1, N_NODES)
    return SIDES[slot // 3], COMPONENTS[slot % 3], node


@dataclass(frozen=True)
class GrfTrial:
    """One stance-phase recording: six 101-node series plus metadata.

    ``signals`` has shape (6, 101) in the fixed slot order, values in % body
    weight (or min-max units after normalization). For healthy controls the
    slot assignment of the physical legs is arbitrary and ``side_order`` is
    recorded as ``randomized_hc``; :func:`assign_sides_hc` draws the actual
    balanced assignment.
    """

    subject_id: str
    session_id: str
    class_label: str
    signals: np.ndarray
    side_order: str = ""
    body_mass_kg: float | None = None

    def __post_init__(self):
        if self.class_label not in CLASS_LABELS:
            raise GrfDataError(
                f"trial {self.subject_id}/{self.session_id}: unknown class "
                f"label {self.class_label!r} (expected one of {CLASS_LABELS})"
            )
        sig = np.asarray(self.signals, dtype=np.float64)
        if sig.shape != (N_SLOTS, N_NODES):
            raise GrfShapeError(
                f"trial {self.subject_id}/{self.session_id}: signals must have "
                f"shape (6, {N_NODES}), got {sig.shape}"
            )
        sig = sig.copy()
        sig.setflags(write=False)
        object.__setattr__(self, "signals", sig)
        expected = "randomized_hc" if self.class_label == "HC" else "affected_first"
        if not self.side_order:
            object.__setattr__(self, "side_order", expected)
        elif self.side_order != expected:
            raise GrfDataError(
                f"trial {self.subject_id}/{self.session_id}: side_order "
                f"{self.side_order!r} inconsistent with class {self.class_label}"
            )
        if self.body_mass_kg is not None and self.body_mass_kg <= 0:
            raise GrfDataError("body_mass_kg must be positive")

    @property
    def key(self) -> tuple[str, str]:
        return (self.subject_id, self.session_id)


@dataclass(frozen=True)
class Dataset:
    """An immutable collection of trials sharing one normalization state."""

    trials: tuple[GrfTrial, ...]
    normalization_state: str = "bodyweight"
    per_component_extrema: tuple[tuple[float, float], ...] | None = None

    def __post_init__(self):
        if self.normalization_state not in ("raw", "bodyweight", "minmax"):
            raise GrfDataError(
                f"unknown normalization state {self.normalization_state!r}"
            )
        object.__setattr__(self, "trials", tuple(self.trials))
        label_of: dict[str, str] = {}
        for trial in self.trials:
            seen = label_of.setdefault(trial.subject_id, trial.class_label)
            if seen != trial.class_label:
                raise GrfDataError(
                    f"subject {trial.subject_id} has inconsistent class labels "
                    f"({seen} vs {trial.class_label})"
                )

    def __len__(self) -> int:
        return len(self.trials)

    def subjects(self) -> dict[str, str]:
        """Stable subject_id -> class_label mapping."""
        return {t.subject_id: t.class_label for t in self.trials}


@dataclass(frozen=True)
class InputVector:
    """The 606-value concatenated model input for one trial."""

    values: np.ndarray
    subject_id: str = ""
    session_id: str = ""
    class_label: str = ""

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=np.float64)
        if vals.shape != (N_INPUTS,):
            raise GrfShapeError(f"input vector must have {N_INPUTS} values, got {vals.shape}")
        vals = vals.copy()
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)

    def component(self, side: str, component: str) -> np.ndarray:
        return self.values[slot_slice(slot_index(side, component))]


# ---------------------------------------------------------------------------
# Ingestion


def _open_stream(source) -> io.TextIOBase:
    if isinstance(source, (str, Path)):
        return open(source, "r", encoding="utf-8", newline="")
    if isinstance(source, bytes):
        return io.StringIO(source.decode("utf-8"))
    if isinstance(source, io.TextIOBase):
        return source
    # binary file-like
    return io.TextIOWrapper(source, encoding="utf-8")


def parse_grf_csv(source, schema: Mapping[str, str] | None = None) -> Dataset:
    """Parse the wide per-series CSV layout into a body-weight Dataset.

    Expected columns: subject_id, session_id, class_label, side, component,
    then s001..s101 sample columns. ``schema`` optionally maps the canonical
    metadata column names to the file's actual column names, and may set
    ``sample_prefix`` (default ``"s"``). Side values ``left``/``right`` are
    accepted for HC trials only and are placed provisionally in the
    affected/unaffected slots; run :func:`assign_sides_hc` afterwards.
    """
    schema = dict(schema or {})
    prefix = schema.pop("sample_prefix", "s")
    colmap = {name: schema.get(name, name) for name in _CSV_FIELDS}

    stream = _open_stream(source)
    reader = csv.reader(stream)
    try:
        header = next(reader)
    except StopIteration:
        raise GrfParseError("empty CSV: no header row") from None

    col_idx = {}
    for name in _CSV_FIELDS:
        actual = colmap[name]
        if actual not in header:
            raise GrfParseError(f"missing column {actual!r} in CSV header")
        col_idx[name] = header.index(actual)

    sample_cols = []
    for i, col in enumerate(header):
        if col.startswith(prefix) and col[len(prefix):].isdigit():
            sample_cols.append((int(col[len(prefix):]), i))
    sample_cols.sort()
    if len(sample_cols) != N_NODES:
        raise GrfShapeError(
            f"expected {N_NODES} sample columns ({prefix}001..{prefix}{N_NODES}), "
            f"found {len(sample_cols)}"
        )
    sample_idx = [i for _, i in sample_cols]

    series: dict[tuple[str, str], dict[int, np.ndarray]] = {}
    meta: dict[tuple[str, str], str] = {}
    for rownum, row in enumerate(reader, start=2):
        if not row:
            continue
        if len(row) != len(header):
            raise GrfParseError(
                f"row {rownum}: expected {len(header)} cells, found {len(row)}"
            )
        subject = row[col_idx["subject_id"]].strip()
        session = row[col_idx["session_id"]].strip()
        label = row[col_idx["class_label"]].strip()
        side = row[col_idx["side"]].strip()
        comp = row[col_idx["component"]].strip()
        if label not in CLASS_LABELS:
            raise GrfParseError(f"row {rownum}: unknown class label {label!r}")
        if comp not in COMPONENTS:
            raise GrfParseError(f"row {rownum}: unknown component {comp!r}")
        if side in ("left", "right"):
            if label != "HC":
                raise GrfParseError(
                    f"row {rownum}: side {side!r} is only valid for HC trials; "
                    "patient trials must use affected/unaffected"
                )
            side = "affected" if side == "left" else "unaffected"
        elif side not in SIDES:
            raise GrfParseError(f"row {rownum}: unknown side {side!r}")

        try:
            values = np.array([float(row[i]) for i in sample_idx], dtype=np.float64)
        except ValueError:
            raise GrfParseError(f"row {rownum}: non-numeric sample value") from None
        if not np.all(np.isfinite(values)):
            raise GrfParseError(f"row {rownum}: non-finite sample value")

        key = (subject, session)
        slot = slot_index(side, comp)
        per_trial = series.setdefault(key, {})
        if slot in per_trial:
            raise GrfParseError(
                f"row {rownum}: duplicate series for trial {subject}/{session} "
                f"({side} {comp})"
            )
        per_trial[slot] = values
        previous = meta.setdefault(key, label)
        if previous != label:
            raise GrfParseError(
                f"row {rownum}: trial {subject}/{session} has conflicting class labels"
            )

    trials = []
    for key in sorted(series):
        subject, session = key
        per_trial = series[key]
        missing = [s for s in range(N_SLOTS) if s not in per_trial]
        if missing:
            names = ", ".join(SLOT_NAMES[s] for s in missing)
            raise GrfDataError(
                f"trial {subject}/{session}: missing series for {names}"
            )
        signals = np.stack([per_trial[s] for s in range(N_SLOTS)])
        trials.append(
            GrfTrial(
                subject_id=subject,
                session_id=session,
                class_label=meta[key],
                signals=signals,
            )
        )
    return Dataset(trials=tuple(trials), normalization_state="bodyweight")


def load_sidecar(path) -> dict:
    """Read a JSON sidecar mapping canonical column names to file columns."""
    with open(path, "r", encoding="utf-8") as fh:
        schema = json.load(fh)
    if not isinstance(schema, dict):
        raise GrfParseError(f"sidecar {path}: expected a JSON object")
    return schema


# ---------------------------------------------------------------------------
# Series-level preprocessing (raw ingestion and synthetic pipelines)


def butterworth_zero_lag(signal: Sequence[float], fs: float = 2000.0,
                         fc: float = 20.0, order: int = 2) -> np.ndarray:
    """Forward-backward low-pass Butterworth filter (zero net phase shift).

    Edges are reflect-padded with 3*(order+1) samples before the
    forward-backward pass so endpoints are not distorted.
    """
    x = np.asarray(signal, dtype=np.float64)
    if fc >= fs / 2:
        raise GrfDataError(f"cutoff {fc} Hz must be below the Nyquist rate {fs / 2} Hz")
    b, a = butter(order, fc, btype="low", fs=fs)
    padlen = 3 * (order + 1)
    if len(x) <= padlen:
        raise GrfDataError(f"signal too short to filter ({len(x)} samples)")
    return filtfilt(b, a, x, padtype="even", padlen=padlen)


def time_normalize(signal: Sequence[float], n: int = N_NODES) -> np.ndarray:
    """Resample a series to ``n`` points by linear interpolation over its support."""
    x = np.asarray(signal, dtype=np.float64)
    if len(x) < 2:
        raise GrfDataError("time_normalize needs at least 2 samples")
    grid = np.linspace(0.0, len(x) - 1.0, n)
    return np.interp(grid, np.arange(len(x)), x)


def amplitude_normalize(signal: Sequence[float], body_mass_kg: float) -> np.ndarray:
    """Express a force series in % body weight (force / (m*g) * 100)."""
    if body_mass_kg <= 0:
        raise GrfDataError(f"body mass must be positive, got {body_mass_kg}")
    x = np.asarray(signal, dtype=np.float64)
    return x / (body_mass_kg * GRAVITY) * 100.0


# ---------------------------------------------------------------------------
# Dataset-level normalization and assembly


def minmax_normalize(dataset: Dataset) -> Dataset:
    """Scale each of the six signals to [-1, 1] using global per-slot extrema.

    The extrema are taken over all trials and all nodes of a slot, as a single
    affine map per slot, and recorded on the returned Dataset.
    """
    if dataset.normalization_state != "bodyweight":
        raise GrfDataError(
            "min-max normalization requires a body-weight dataset, got state "
            f"{dataset.normalization_state!r}"
        )
    if not dataset.trials:
        raise GrfDataError("cannot normalize an empty dataset")
    stacked = np.stack([t.signals for t in dataset.trials])  # (n, 6, 101)
    mins = stacked.min(axis=(0, 2))
    maxs = stacked.max(axis=(0, 2))
    for slot in range(N_SLOTS):
        if maxs[slot] == mins[slot]:
            raise GrfDataError(
                f"degenerate range for {SLOT_NAMES[slot]}: min == max == {mins[slot]}"
            )
    span = maxs - mins
    trials = []
    for trial in dataset.trials:
        scaled = 2.0 * (trial.signals - mins[:, None]) / span[:, None] - 1.0
        trials.append(
            GrfTrial(
                subject_id=trial.subject_id,
                session_id=trial.session_id,
                class_label=trial.class_label,
                signals=scaled,
                body_mass_kg=trial.body_mass_kg,
            )
        )
    extrema = tuple((float(mins[s]), float(maxs[s])) for s in range(N_SLOTS))
    return Dataset(trials=tuple(trials), normalization_state="minmax",
                   per_component_extrema=extrema)


def assemble_input(trial: GrfTrial) -> InputVector:
    """Concatenate the six slots into the fixed 606-value layout."""
    return InputVector(
        values=trial.signals.reshape(-1),
        subject_id=trial.subject_id,
        session_id=trial.session_id,
        class_label=trial.class_label,
    )


def assemble_matrix(trials: Iterable[GrfTrial]) -> np.ndarray:
    """Stack assembled inputs into an (n, 606) matrix."""
    return np.stack([t.signals.reshape(-1) for t in trials])


def occlude_values(values: np.ndarray) -> np.ndarray:
    """Zero the horizontal (ML, AP) positions of both sides; idempotent."""
    out = np.array(values, dtype=np.float64, copy=True)
    out[..., _HORIZONTAL_MASK] = 0.0
    return out


def occlude_horizontal(v: InputVector) -> InputVector:
    return InputVector(
        values=occlude_values(v.values),
        subject_id=v.subject_id,
        session_id=v.session_id,
        class_label=v.class_label,
    )


def assign_sides_hc(dataset: Dataset, rng: np.random.Generator) -> Dataset:
    """Randomly assign HC leg recordings to the affected/unaffected slots.

    The draw is balanced across HC subjects (the two slot orderings differ in
    count by at most one) and is made per subject, so all trials of a subject
    share one ordering. Non-HC trials are returned unchanged.
    """
    hc_subjects = sorted({t.subject_id for t in dataset.trials if t.class_label == "HC"})
    if not hc_subjects:
        return dataset
    n = len(hc_subjects)
    swaps = np.array([False] * (n // 2) + [True] * (n - n // 2))
    rng.shuffle(swaps)
    swap_of = dict(zip(hc_subjects, swaps))
    reorder = np.array([3, 4, 5, 0, 1, 2])
    trials = []
    for trial in dataset.trials:
        if trial.class_label == "HC" and swap_of[trial.subject_id]:
            trials.append(
                GrfTrial(
                    subject_id=trial.subject_id,
                    session_id=trial.session_id,
                    class_label=trial.class_label,
                    signals=trial.signals[reorder],
                    body_mass_kg=trial.body_mass_kg,
                )
            )
        else:
            trials.append(trial)
    return Dataset(trials=tuple(trials),
                   normalization_state=dataset.normalization_state,
                   per_component_extrema=dataset.per_component_extrema)


# ---------------------------------------------------------------------------
# Canonical dump / load


def dump_dataset(dataset: Dataset, out_dir) -> None:
    """Write the canonical CSV layout plus a JSON manifest with extrema."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    header = list(_CSV_FIELDS) + [f"s{i:03d}" for i in range(1, N_NODES + 1)]
    with open(out_dir / "data.csv", "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for trial in sorted(dataset.trials, key=lambda t: t.key):
            for slot in range(N_SLOTS):
                side, comp = SLOT_NAMES[slot].split("_")
                row = [trial.subject_id, trial.session_id, trial.class_label,
                       side, comp]
                row.extend(repr(float(v)) for v in trial.signals[slot])
                writer.writerow(row)
    manifest = {
        "normalization_state": dataset.normalization_state,
        "per_component_extrema": None if dataset.per_component_extrema is None
        else {SLOT_NAMES[s]: list(dataset.per_component_extrema[s]) for s in range(N_SLOTS)},
        "n_trials": len(dataset.trials),
        "class_counts": _class_counts(dataset),
    }
    with open(out_dir / "manifest.json", "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_dataset(in_dir) -> Dataset:
    """Load a dataset written by :func:`dump_dataset`."""
    in_dir = Path(in_dir)
    parsed = parse_grf_csv(in_dir / "data.csv")
    manifest_path = in_dir / "manifest.json"
    if not manifest_path.exists():
        return parsed
    with open(manifest_path, "r", encoding="utf-8") as fh:
        manifest = json.load(fh)
    extrema = manifest.get("per_component_extrema")
    return Dataset(
        trials=parsed.trials,
        normalization_state=manifest.get("normalization_state", "bodyweight"),
        per_component_extrema=None if extrema is None
        else tuple(tuple(extrema[name]) for name in SLOT_NAMES),
    )


def _class_counts(dataset: Dataset) -> dict[str, int]:
    counts: dict[str, int] = {}
    for trial in dataset.trials:
        counts[trial.class_label] = counts.get(trial.class_label, 0) + 1
    return {k: counts[k] for k in sorted(counts)}
