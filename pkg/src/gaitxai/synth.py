"""Synthetic GRF datasets with known discriminative regions.

The generator builds smooth per-slot template curves (double-hump vertical
force, braking/propulsion AP lobes, a small ML wave), injects class-specific
raised-cosine bumps into declared node regions, and adds smooth trial noise
plus an optional per-subject offset. The spec records its own ground-truth
regions so downstream assertions (t-fields, relevance mass) can target them.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.ndimage import gaussian_filter1d

from .data import CLASS_LABELS, Dataset, GrfTrial, N_NODES, N_SLOTS

_FWHM_TO_SIGMA = 1.0 / np.sqrt(8.0 * np.log(2.0))


@dataclass(frozen=True)
class RegionBump:
    """A raised-cosine bump confined to nodes [start, end] of one slot."""

    slot: int
    start: int
    end: int
    amplitude: float

    def curve(self) -> np.ndarray:
        out = np.zeros(N_NODES)
        width = self.end - self.start
        q = np.arange(self.start, self.end + 1)
        out[q] = self.amplitude * 0.5 * (1.0 - np.cos(2.0 * np.pi * (q - self.start) / max(width, 1)))
        return out


@dataclass(frozen=True)
class SynthClass:
    label: str
    bumps: tuple[RegionBump, ...] = ()


@dataclass(frozen=True)
class SynthSpec:
    classes: tuple[SynthClass, ...]
    subjects_per_class: int = 12
    trials_per_subject: int = 5
    noise_sd: float = 3.0
    noise_fwhm: float = 8.0
    subject_sd: float = 0.0

    def __post_init__(self):
        if len(self.classes) < 1:
            raise ValueError("synthetic spec needs at least one class")
        labels = [c.label for c in self.classes]
        if len(set(labels)) != len(labels):
            raise ValueError(f"duplicate class labels in synthetic spec: {labels}")
        for cls in self.classes:
            if cls.label not in CLASS_LABELS:
                raise ValueError(f"synthetic class label {cls.label!r} not in {CLASS_LABELS}")
            for bump in cls.bumps:
                if not 0 <= bump.slot < N_SLOTS:
                    raise ValueError(f"bump slot {bump.slot} outside 0..{N_SLOTS - 1}")
                if not 0 <= bump.start <= bump.end <= N_NODES - 1:
                    raise ValueError(
                        f"bump nodes [{bump.start}, {bump.end}] outside 0..{N_NODES - 1}"
                    )
        if self.subjects_per_class < 1 or self.trials_per_subject < 1:
            raise ValueError("subjects_per_class and trials_per_subject must be >= 1")
        if self.noise_sd < 0 or self.subject_sd < 0 or self.noise_fwhm <= 0:
            raise ValueError("noise parameters must be nonnegative (fwhm positive)")

    def discriminative_regions(self) -> list[RegionBump]:
        """Regions whose injected bump profile differs between classes."""
        profiles = []
        for cls in self.classes:
            per_slot = np.zeros((N_SLOTS, N_NODES))
            for bump in cls.bumps:
                per_slot[bump.slot] += bump.curve()
            profiles.append(per_slot)
        regions = []
        seen = set()
        for cls in self.classes:
            for bump in cls.bumps:
                key = (bump.slot, bump.start, bump.end)
                if key in seen:
                    continue
                seen.add(key)
                segs = [p[bump.slot, bump.start:bump.end + 1] for p in profiles]
                if any(not np.array_equal(segs[0], s) for s in segs[1:]):
                    regions.append(bump)
        return regions

    def to_json(self) -> dict:
        return {
            "classes": [
                {
                    "label": c.label,
                    "bumps": [
                        {"slot": b.slot, "start": b.start, "end": b.end,
                         "amplitude": b.amplitude}
                        for b in c.bumps
                    ],
                }
                for c in self.classes
            ],
            "subjects_per_class": self.subjects_per_class,
            "trials_per_subject": self.trials_per_subject,
            "noise_sd": self.noise_sd,
            "noise_fwhm": self.noise_fwhm,
            "subject_sd": self.subject_sd,
        }

    @staticmethod
    def from_json(payload: dict) -> "SynthSpec":
        classes = tuple(
            SynthClass(
                label=c["label"],
                bumps=tuple(RegionBump(**b) for b in c.get("bumps", ())),
            )
            for c in payload["classes"]
        )
        return SynthSpec(
            classes=classes,
            subjects_per_class=payload.get("subjects_per_class", 12),
            trials_per_subject=payload.get("trials_per_subject", 5),
            noise_sd=payload.get("noise_sd", 3.0),
            noise_fwhm=payload.get("noise_fwhm", 8.0),
            subject_sd=payload.get("subject_sd", 0.0),
        )


def load_spec(path) -> SynthSpec:
    with open(path, "r", encoding="utf-8") as fh:
        return SynthSpec.from_json(json.load(fh))


def save_spec(spec: SynthSpec, path) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(spec.to_json(), fh, indent=2, sort_keys=True)
        fh.write("\n")


def base_templates() -> np.ndarray:
    """Smooth per-slot template curves in % body weight, shape (6, 101)."""
    t = np.linspace(0.0, 1.0, N_NODES)
    envelope = np.clip(np.minimum(t / 0.06, (1.0 - t) / 0.06), 0.0, 1.0)

    def gauss(center, width, amp):
        return amp * np.exp(-(((t - center) / width) ** 2))

    vertical = (gauss(0.25, 0.13, 115.0) + gauss(0.75, 0.13, 118.0)
                + gauss(0.50, 0.20, 40.0)) * envelope
    ap = (gauss(0.18, 0.10, -18.0) + gauss(0.82, 0.10, 20.0)) * envelope
    ml = (gauss(0.20, 0.15, 5.0) + gauss(0.75, 0.20, 4.5)) * envelope
    # the unaffected side reuses the same morphology
    return np.stack([ml, ap, vertical, ml, ap, vertical])


def _smooth_noise(rng: np.random.Generator, shape, sd: float, fwhm: float) -> np.ndarray:
    if sd == 0:
        return np.zeros(shape)
    sigma = fwhm * _FWHM_TO_SIGMA
    white = rng.standard_normal(shape)
    smooth = gaussian_filter1d(white, sigma, axis=-1, mode="reflect")
    # renormalize so the smoothed field keeps unit variance before scaling
    kernel_gain = np.sqrt(2.0 * np.sqrt(np.pi) * sigma)
    return sd * smooth * kernel_gain


def synth_generate(spec: SynthSpec, rng: np.random.Generator) -> Dataset:
    """Generate a body-weight Dataset realizing ``spec``; deterministic given rng."""
    templates = base_templates()
    trials = []
    for cls in spec.classes:
        class_curve = templates.copy()
        for bump in cls.bumps:
            class_curve[bump.slot] += bump.curve()
        for si in range(spec.subjects_per_class):
            subject_id = f"{cls.label}{si + 1:03d}"
            subject_offset = _smooth_noise(rng, (N_SLOTS, N_NODES),
                                           spec.subject_sd, spec.noise_fwhm)
            for ti in range(spec.trials_per_subject):
                noise = _smooth_noise(rng, (N_SLOTS, N_NODES),
                                      spec.noise_sd, spec.noise_fwhm)
                trials.append(
                    GrfTrial(
                        subject_id=subject_id,
                        session_id=f"t{ti + 1:02d}",
                        class_label=cls.label,
                        signals=class_curve + subject_offset + noise,
                    )
                )
    return Dataset(trials=tuple(trials), normalization_state="bodyweight")


# ---------------------------------------------------------------------------
# Presets used by the CLI and the acceptance suite


def preset_vertical(subjects: int = 20, trials: int = 15, noise_sd: float = 4.0,
                    snr: float = 4.0) -> SynthSpec:
    """Two classes separated only inside affected-V nodes 45..60."""
    return SynthSpec(
        classes=(
            SynthClass(label="HC"),
            SynthClass(label="K", bumps=(RegionBump(slot=2, start=45, end=60,
                                                    amplitude=snr * noise_sd),)),
        ),
        subjects_per_class=subjects,
        trials_per_subject=trials,
        noise_sd=noise_sd,
        noise_fwhm=8.0,
        subject_sd=noise_sd * 0.25,
    )


def preset_horizontal(subjects: int = 20, trials: int = 15, noise_sd: float = 4.0,
                      snr: float = 4.0) -> SynthSpec:
    """Two classes separated only in the horizontal (ML, AP) components."""
    amp = snr * noise_sd
    return SynthSpec(
        classes=(
            SynthClass(label="HC"),
            SynthClass(label="K", bumps=(
                RegionBump(slot=0, start=55, end=75, amplitude=amp),
                RegionBump(slot=1, start=15, end=35, amplitude=amp),
            )),
        ),
        subjects_per_class=subjects,
        trials_per_subject=trials,
        noise_sd=noise_sd,
        noise_fwhm=8.0,
        subject_sd=noise_sd * 0.25,
    )


PRESETS = {
    "vertical": preset_vertical,
    "horizontal": preset_horizontal,
}


def preset_spec(name: str, **kwargs) -> SynthSpec:
    if name not in PRESETS:
        raise ValueError(f"unknown synthetic preset {name!r}; options: {sorted(PRESETS)}")
    return PRESETS[name](**kwargs)
