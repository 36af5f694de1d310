"""Training data generation and the on-disk dataset format.

Each record pairs a coarse-step input with a fine-step target for the same
wave field w:

    X = [lambda(coarse(restrict(w))), c_coarse]   4 x n  x n   channels
    Y =  lambda(fine(w))                          3 x 2n x 2n  channels

The trajectory variant walks w forward with the fine solver and emits one
record per window; the Procrustes variant harvests every iterate of a
Procrustes parareal run, whose later iterations carry noticeably more
high-frequency content than plain trajectories.

Files use a little-endian binary layout (magic "PWDS"): a fixed header with
the record count, window length, generator seed and grid/step parameters,
followed by packed float64 tensors. Identical seeds reproduce identical
bytes.
"""

from __future__ import annotations

import io
import struct
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .energy import energy_norm, lambda_map
from .errors import ConfigError, FormatError, NumericError
from .fileio import read_f64, read_struct, write_f64
from .grid import WaveField, restrict_wave
from .jnet import coarse_input_tensor
from .media import sample_pulse, sample_training_medium
from .parareal import parareal_procrustes
from .solver import COARSE_DT, FINE_DT, Medium, coarse_propagate, fine_propagate

DATASET_MAGIC = b"PWDS"
DATASET_VERSION = 1
_HEADER_FMT = "<4sIQdQIIIIdd"
_HEADER_SIZE = struct.calcsize(_HEADER_FMT)

BLOWUP_FACTOR = 1e6

# desk-scale defaults: 200 media x 1 pulse x 8 windows = 1600 records
DESK_N_MEDIA = 200
DESK_PULSES_PER_MEDIUM = 1
DESK_N_STEPS = 8

VARIANTS = ("t", "tp")


@dataclass(frozen=True)
class TrainingExample:
    """One (coarse input, fine target) pair."""

    medium_id: int
    x: np.ndarray  # (4, n, n)
    y: np.ndarray  # (3, 2n, 2n)

    def __post_init__(self):
        if self.x.ndim != 3 or self.x.shape[0] != 4 or self.x.shape[1] != self.x.shape[2]:
            raise ConfigError(f"input tensor must be (4, n, n), got {self.x.shape}")
        n = self.x.shape[1]
        if self.y.shape != (3, 2 * n, 2 * n):
            raise ConfigError(f"target tensor must be (3, {2*n}, {2*n}), got {self.y.shape}")
        if not (np.all(np.isfinite(self.x)) and np.all(np.isfinite(self.y))):
            raise NumericError("training example contains non-finite entries")


@dataclass(frozen=True)
class DatasetManifest:
    """Everything needed to locate and validate records in a dataset file."""

    record_count: int
    dt_star: float
    seed: int
    x_channels: int
    x_n: int
    y_channels: int
    y_n: int
    fine_dt: float
    coarse_dt: float

    @property
    def record_nbytes(self) -> int:
        x = self.x_channels * self.x_n * self.x_n
        y = self.y_channels * self.y_n * self.y_n
        return 8 + 8 * (x + y)  # medium id + payload

    def record_offset(self, i: int) -> int:
        if not 0 <= i < self.record_count:
            raise ConfigError(f"record index {i} outside [0, {self.record_count})")
        return _HEADER_SIZE + i * self.record_nbytes


@dataclass(frozen=True)
class Dataset:
    """In-memory dataset: stacked tensors plus provenance."""

    x: np.ndarray  # (R, 4, n, n)
    y: np.ndarray  # (R, 3, 2n, 2n)
    medium_ids: np.ndarray  # (R,)
    dt_star: float
    seed: int

    def __post_init__(self):
        if self.x.ndim != 4 or self.y.ndim != 4:
            raise ConfigError("dataset tensors must be 4-dimensional")
        if not (self.x.shape[0] == self.y.shape[0] == self.medium_ids.shape[0]):
            raise ConfigError("dataset record counts disagree")

    def __len__(self) -> int:
        return self.x.shape[0]

    @property
    def manifest(self) -> DatasetManifest:
        return DatasetManifest(
            record_count=len(self),
            dt_star=self.dt_star,
            seed=self.seed,
            x_channels=self.x.shape[1],
            x_n=self.x.shape[2],
            y_channels=self.y.shape[1],
            y_n=self.y.shape[2],
            fine_dt=FINE_DT,
            coarse_dt=COARSE_DT,
        )


def from_examples(examples: list[TrainingExample], dt_star: float, seed: int) -> Dataset:
    if not examples:
        raise ConfigError("cannot build a dataset from zero examples")
    return Dataset(
        x=np.stack([ex.x for ex in examples]),
        y=np.stack([ex.y for ex in examples]),
        medium_ids=np.array([ex.medium_id for ex in examples], dtype=np.int64),
        dt_star=dt_star,
        seed=seed,
    )


# ---------------------------------------------------------------------------
# pair generation


def make_pair(m: Medium, w: WaveField, dt_star: float, medium_id: int = 0) -> TrainingExample:
    """Coarse-step input and fine-step target for one field."""
    g = coarse_propagate(restrict_wave(w), m, dt_star)
    y = lambda_map(fine_propagate(w, m, dt_star), m.c).stack()
    return TrainingExample(medium_id=medium_id, x=coarse_input_tensor(g, m), y=y)


def _check_blowup(w: WaveField, m: Medium, e0: float):
    if e0 > 0 and energy_norm(lambda_map(w, m.c)) > BLOWUP_FACTOR * e0:
        raise NumericError("trajectory energy blew up during dataset generation")


def gen_trajectory_pairs(
    m: Medium, w0: WaveField, n_steps: int, dt_star: float, medium_id: int = 0
) -> list[TrainingExample]:
    """n_steps records along one fine trajectory started at w0."""
    if n_steps < 1:
        raise ConfigError("need at least one trajectory step")
    e0 = energy_norm(lambda_map(w0, m.c))
    pairs = []
    w = w0
    for _ in range(n_steps):
        pairs.append(make_pair(m, w, dt_star, medium_id))
        w = fine_propagate(w, m, dt_star)
        _check_blowup(w, m, e0)
    return pairs


def gen_procrustes_pairs(
    m: Medium,
    w0: WaveField,
    n_steps: int,
    dt_star: float,
    k_max: int = 4,
    medium_id: int = 0,
) -> list[TrainingExample]:
    """One record per parareal iterate: (k_max + 1) * (n_steps + 1) pairs.

    The run's snapshots u[k][n] for k = 0..k_max, n = 0..n_steps each
    contribute a pair; duplicates (converged iterates repeat) are kept.
    """
    run = parareal_procrustes(w0, m, n_steps, k_max, dt_star)
    if run.unstable:
        raise NumericError("Procrustes parareal run blew up during dataset generation")
    e0 = energy_norm(lambda_map(w0, m.c))
    pairs = []
    for row in run.snapshots:
        for w in row:
            _check_blowup(w, m, e0)
            pairs.append(make_pair(m, w, dt_star, medium_id))
    return pairs


def build_training_set(
    n_media: int = DESK_N_MEDIA,
    pulses_per_medium: int = DESK_PULSES_PER_MEDIUM,
    n_steps: int = DESK_N_STEPS,
    dt_star: float = 0.2,
    variant: str = "t",
    seed: int = 0,
    *,
    k_max: int = 4,
    workers: int = 1,
) -> Dataset:
    """Sample media and pulses, emit records, stack into one Dataset.

    Each medium gets an independent child of the root seed sequence, so the
    result is byte-identical for any worker count and media can be generated
    in parallel.
    """
    if variant not in VARIANTS:
        raise ConfigError(f"unknown dataset variant {variant!r}, expected one of {VARIANTS}")
    if n_media < 1 or pulses_per_medium < 1:
        raise ConfigError("need at least one medium and one pulse per medium")

    children = np.random.SeedSequence(seed).spawn(n_media)

    def one_medium(task: tuple[int, np.random.SeedSequence]) -> list[TrainingExample]:
        idx, child = task
        rng = np.random.default_rng(child)
        m = sample_training_medium(rng)
        out: list[TrainingExample] = []
        for _ in range(pulses_per_medium):
            w0, _ = sample_pulse(rng)
            if variant == "t":
                out.extend(gen_trajectory_pairs(m, w0, n_steps, dt_star, medium_id=idx))
            else:
                out.extend(
                    gen_procrustes_pairs(m, w0, n_steps, dt_star, k_max, medium_id=idx)
                )
        return out

    tasks = list(enumerate(children))
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            per_medium = list(pool.map(one_medium, tasks))
    else:
        per_medium = [one_medium(t) for t in tasks]

    examples = [ex for batch in per_medium for ex in batch]
    return from_examples(examples, dt_star, seed)


# ---------------------------------------------------------------------------
# binary i/o


def write_dataset(path, ds: Dataset):
    man = ds.manifest
    with open(path, "wb") as f:
        f.write(
            struct.pack(
                _HEADER_FMT,
                DATASET_MAGIC,
                DATASET_VERSION,
                man.record_count,
                man.dt_star,
                man.seed,
                man.x_channels,
                man.x_n,
                man.y_channels,
                man.y_n,
                man.fine_dt,
                man.coarse_dt,
            )
        )
        for i in range(len(ds)):
            f.write(struct.pack("<Q", int(ds.medium_ids[i])))
            write_f64(f, ds.x[i])
            write_f64(f, ds.y[i])


def read_manifest_stream(f: io.BufferedReader) -> DatasetManifest:
    fields = read_struct(f, _HEADER_FMT, "dataset header")
    magic, version = fields[0], fields[1]
    if magic != DATASET_MAGIC:
        raise FormatError(f"bad dataset magic {magic!r}")
    if version != DATASET_VERSION:
        raise FormatError(f"unsupported dataset version {version}")
    man = DatasetManifest(
        record_count=fields[2],
        dt_star=fields[3],
        seed=fields[4],
        x_channels=fields[5],
        x_n=fields[6],
        y_channels=fields[7],
        y_n=fields[8],
        fine_dt=fields[9],
        coarse_dt=fields[10],
    )
    if man.record_count == 0 or man.x_n == 0 or man.y_n == 0:
        raise FormatError("dataset header declares empty contents")
    if man.x_channels > 16 or man.y_channels > 16 or man.x_n > 1 << 16 or man.y_n > 1 << 16:
        raise FormatError("dataset header dimensions are implausible")
    return man


def read_manifest(path) -> DatasetManifest:
    with open(path, "rb") as f:
        return read_manifest_stream(f)


def read_dataset(path) -> Dataset:
    """Load a dataset file; truncation or trailing bytes raise FormatError."""
    with open(path, "rb") as f:
        man = read_manifest_stream(f)
        x_len = man.x_channels * man.x_n * man.x_n
        y_len = man.y_channels * man.y_n * man.y_n
        ids = np.empty(man.record_count, dtype=np.int64)
        x = np.empty((man.record_count, man.x_channels, man.x_n, man.x_n))
        y = np.empty((man.record_count, man.y_channels, man.y_n, man.y_n))
        for i in range(man.record_count):
            (ids[i],) = read_struct(f, "<Q", f"record {i} medium id")
            x[i] = read_f64(f, x_len, f"record {i} input").reshape(x[i].shape)
            y[i] = read_f64(f, y_len, f"record {i} target").reshape(y[i].shape)
        if f.read(1):
            raise FormatError("trailing bytes after the final record")
    return Dataset(x=x, y=y, medium_ids=ids, dt_star=man.dt_star, seed=man.seed)


def read_record(path, i: int) -> TrainingExample:
    """Random access to a single record via the manifest offsets."""
    man = read_manifest(path)
    x_len = man.x_channels * man.x_n * man.x_n
    y_len = man.y_channels * man.y_n * man.y_n
    with open(path, "rb") as f:
        f.seek(man.record_offset(i))
        (mid,) = read_struct(f, "<Q", f"record {i} medium id")
        x = read_f64(f, x_len, f"record {i} input").reshape(man.x_channels, man.x_n, man.x_n)
        y = read_f64(f, y_len, f"record {i} target").reshape(man.y_channels, man.y_n, man.y_n)
    return TrainingExample(medium_id=int(mid), x=x, y=y)
