"""Synthetic paired-modality data and the gallery/probe protocol split.

Each subject has a latent identity vector z.  A modality m renders it as

    tanh(A_m z + b_m) + gap * o_m + noise * e

where A_m = A + divergence * D_m shares a common part A across
modalities, o_m is a fixed per-modality offset (the "sensing gap") and e is
fresh standard normal noise for every sample.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Iterator

import numpy as np

from .linalg import make_rng
from .model import MODALITIES, NIR, VIS


@dataclass(frozen=True)
class GenConfig:
    num_subjects: int = 80
    nir_per_subject: int = 8
    vis_per_subject: int = 4
    latent_dim: int = 16
    input_dim: int = 32
    within_class_noise: float = 0.15
    modality_gap_strength: float = 0.5
    map_divergence: float = 0.5
    seed: int = 0

    def __post_init__(self):
        for k in ("num_subjects", "nir_per_subject", "vis_per_subject",
                  "latent_dim", "input_dim"):
            if getattr(self, k) < 1:
                raise ValueError(f"{k} must be >= 1, got {getattr(self, k)}")
        for k in ("within_class_noise", "modality_gap_strength", "map_divergence"):
            if getattr(self, k) < 0:
                raise ValueError(f"{k} must be >= 0, got {getattr(self, k)}")


@dataclass(frozen=True)
class Sample:
    input: np.ndarray
    subject_id: int
    modality: str


@dataclass
class Dataset:
    """Samples stored column-wise: one row of ``inputs`` per sample."""

    inputs: np.ndarray
    subject_ids: np.ndarray
    modalities: np.ndarray
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        self.inputs = np.asarray(self.inputs, dtype=np.float64)
        self.subject_ids = np.asarray(self.subject_ids, dtype=np.int64)
        self.modalities = np.asarray(self.modalities, dtype="<U1")
        n = self.inputs.shape[0]
        if self.subject_ids.shape != (n,) or self.modalities.shape != (n,):
            raise ValueError("inputs, subject_ids and modalities must have equal length")
        if not np.all(np.isfinite(self.inputs)):
            raise ValueError("dataset inputs must be finite")
        if np.any(self.subject_ids < 0):
            raise ValueError("subject ids must be non-negative")
        if not np.all(np.isin(self.modalities, MODALITIES)):
            raise ValueError(f"modalities must be in {MODALITIES}")

    def __len__(self) -> int:
        return self.inputs.shape[0]

    @property
    def input_dim(self) -> int:
        return self.inputs.shape[1]

    def samples(self) -> Iterator[Sample]:
        for x, s, m in zip(self.inputs, self.subject_ids, self.modalities):
            yield Sample(x, int(s), str(m))

    def subjects(self) -> np.ndarray:
        return np.unique(self.subject_ids)

    def subset(self, indices) -> "Dataset":
        idx = np.asarray(indices, dtype=np.int64)
        return Dataset(self.inputs[idx], self.subject_ids[idx],
                       self.modalities[idx], dict(self.metadata))

    def indices(self, subject: int, modality: str) -> np.ndarray:
        return np.flatnonzero((self.subject_ids == subject) & (self.modalities == modality))

    def single_modality_subjects(self) -> list[int]:
        out = []
        for s in self.subjects():
            if not all(np.any((self.subject_ids == s) & (self.modalities == m))
                       for m in MODALITIES):
                out.append(int(s))
        return out


def generate(config: GenConfig = GenConfig(), *, shared_maps: bool = False) -> Dataset:
    """Draw a dataset.  ``shared_maps`` forces both modalities onto one map."""
    rng = make_rng(config.seed)
    L, D = config.latent_dim, config.input_dim
    base = rng.normal(0.0, 1.0 / math.sqrt(L), size=(D, L))
    maps, biases, offsets = {}, {}, {}
    for m in MODALITIES:
        dev = rng.normal(0.0, 1.0 / math.sqrt(L), size=(D, L))
        maps[m] = base + config.map_divergence * dev
        biases[m] = rng.normal(0.0, 0.1, size=D)
        offsets[m] = rng.normal(0.0, 1.0, size=D)
    if shared_maps:
        maps[VIS], biases[VIS] = maps[NIR], biases[NIR]

    latents = rng.normal(size=(config.num_subjects, L))
    counts = {NIR: config.nir_per_subject, VIS: config.vis_per_subject}
    rows, subjects, modalities = [], [], []
    for s, z in enumerate(latents):
        for m in MODALITIES:
            clean = np.tanh(maps[m] @ z + biases[m]) + config.modality_gap_strength * offsets[m]
            noise = rng.normal(size=(counts[m], D))
            rows.append(clean + config.within_class_noise * noise)
            subjects += [s] * counts[m]
            modalities += [m] * counts[m]
    meta = {"generator": asdict(config), "shared_maps": shared_maps}
    return Dataset(np.vstack(rows), np.array(subjects), np.array(modalities), meta)


@dataclass
class ProtocolSplit:
    """Train subjects vs disjoint test subjects; test side as gallery/probe.

    Gallery holds one VIS sample per test subject, the probe set every NIR
    sample of the test subjects.  ``heldout_indices`` lists every sample of
    the test subjects (used for held-out distribution diagnostics).
    """

    dataset: Dataset
    train_indices: np.ndarray
    gallery_indices: np.ndarray
    probe_indices: np.ndarray

    @property
    def train(self) -> Dataset:
        return self.dataset.subset(self.train_indices)

    @property
    def gallery(self) -> list[Sample]:
        return list(self.dataset.subset(self.gallery_indices).samples())

    @property
    def probe(self) -> list[Sample]:
        return list(self.dataset.subset(self.probe_indices).samples())

    @property
    def train_subjects(self) -> np.ndarray:
        return np.unique(self.dataset.subject_ids[self.train_indices])

    @property
    def test_subjects(self) -> np.ndarray:
        return np.unique(self.dataset.subject_ids[self.gallery_indices])

    @property
    def heldout_indices(self) -> np.ndarray:
        return np.flatnonzero(np.isin(self.dataset.subject_ids, self.test_subjects))

    def check(self) -> None:
        """Raise AssertionError if a protocol invariant is violated."""
        ds = self.dataset
        train_s = set(self.train_subjects.tolist())
        test_s = set(self.test_subjects.tolist())
        assert not train_s & test_s, f"subjects leak across split: {sorted(train_s & test_s)}"
        g_subj = ds.subject_ids[self.gallery_indices]
        assert len(set(g_subj.tolist())) == len(g_subj), "gallery has a repeated subject"
        assert np.all(ds.modalities[self.gallery_indices] == VIS), "gallery must be VIS"
        assert np.all(ds.modalities[self.probe_indices] == NIR), "probe must be NIR"
        p_subj = set(ds.subject_ids[self.probe_indices].tolist())
        assert p_subj <= test_s, "probe subject missing from gallery"
        assert test_s <= p_subj, "test subject without probe samples"


def split(dataset: Dataset, test_fraction: float, rng: np.random.Generator) -> ProtocolSplit:
    subjects = dataset.subjects()
    n_test = int(round(test_fraction * len(subjects)))
    if n_test < 1 or n_test >= len(subjects):
        raise ValueError(
            f"test_fraction={test_fraction} with {len(subjects)} subjects "
            "leaves an empty train or test side")
    perm = rng.permutation(subjects)
    test = np.sort(perm[:n_test])
    train = np.sort(perm[n_test:])
    gallery, probe = [], []
    for s in test:
        vis = dataset.indices(s, VIS)
        nir = dataset.indices(s, NIR)
        if len(vis) == 0 or len(nir) == 0:
            raise ValueError(f"test subject {s} lacks a VIS or NIR sample")
        gallery.append(int(vis[rng.integers(len(vis))]))
        probe.extend(nir.tolist())
    train_idx = np.flatnonzero(np.isin(dataset.subject_ids, train))
    out = ProtocolSplit(dataset, train_idx, np.array(gallery, dtype=np.int64),
                        np.array(probe, dtype=np.int64))
    out.check()
    return out


# --- file formats -----------------------------------------------------------

def format_float(v: float) -> str:
    return f"{v:.17g}"


def save_dataset(dataset: Dataset, path) -> None:
    d = dataset.input_dim
    lines = ["subject_id,modality," + ",".join(f"v{j}" for j in range(d))]
    for x, s, m in zip(dataset.inputs, dataset.subject_ids, dataset.modalities):
        lines.append(f"{s},{m}," + ",".join(format_float(v) for v in x))
    Path(path).write_text("\n".join(lines) + "\n")


def load_dataset(path) -> Dataset:
    lines = Path(path).read_text().splitlines()
    header = lines[0].split(",")
    if header[:2] != ["subject_id", "modality"]:
        raise ValueError(f"{path}: unexpected header {lines[0][:40]!r}")
    subjects, modalities, rows = [], [], []
    for ln in lines[1:]:
        if not ln:
            continue
        parts = ln.split(",")
        subjects.append(int(parts[0]))
        modalities.append(parts[1])
        rows.append([float(v) for v in parts[2:]])
    inputs = np.array(rows, dtype=np.float64).reshape(len(rows), len(header) - 2)
    return Dataset(inputs, np.array(subjects), np.array(modalities))


def save_split(sp: ProtocolSplit, path) -> None:
    out = []
    for name, idx in (("TRAIN", sp.train_indices), ("GALLERY", sp.gallery_indices),
                      ("PROBE", sp.probe_indices)):
        out.append(name)
        out.append(",".join(str(int(i)) for i in idx))
    Path(path).write_text("\n".join(out) + "\n")


def load_split(dataset: Dataset, path) -> ProtocolSplit:
    lines = Path(path).read_text().splitlines()
    sections = {}
    for name, body in zip(lines[0::2], lines[1::2]):
        sections[name] = np.array([int(v) for v in body.split(",") if v], dtype=np.int64)
    missing = {"TRAIN", "GALLERY", "PROBE"} - sections.keys()
    if missing:
        raise ValueError(f"{path}: missing sections {sorted(missing)}")
    sp = ProtocolSplit(dataset, sections["TRAIN"], sections["GALLERY"], sections["PROBE"])
    sp.check()
    return sp
