"""Skeleton data pipeline: parsing, preprocessing, splits, fixtures, I/O.

Sequences are 25-joint 3-D skeletons. Preprocessing keeps every second
frame, truncates to 150 steps, and re-centers each frame so the hip joint
(index 0) sits exactly at the origin.

Two on-disk formats live here:

  * NTU ``.skeleton`` text files (read-only adapter, see
    `parse_ntu_skeleton`).
  * the package's own binary dataset file (version byte first; see
    `write_dataset`), which tests and training consume so nothing else
    depends on the raw dataset being present.
"""
from __future__ import annotations

import math
import re
import struct
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Iterable, Optional, Sequence

import numpy as np

from .errors import (AmbiguousBodyError, ConfigError, DataError,
                     EmptySequenceError, ParseError)
from .priors import MAX_SEQUENCE_LENGTH, LengthPrior, sample_length

N_JOINTS = 25
FRAME_DIM = N_JOINTS * 3
N_CLASSES = 60

# NTU cross-subject protocol: performer ids assigned to the training side.
NTU_XSUB_TRAIN_SUBJECTS = frozenset(
    {1, 2, 4, 5, 8, 9, 13, 14, 15, 16, 17, 18, 19, 25, 27, 28, 31, 34, 35, 38})
NTU_ALL_SUBJECTS = frozenset(range(1, 41))

# Mutual (two-person) action classes, zero-based. The dataset manual lists
# eleven (A50..A60); some summaries quote only the last ten, so both sets
# are provided and the filter takes either.
MUTUAL_ACTION_CLASSES = frozenset(range(49, 60))
LAST_TEN_CLASSES = frozenset(range(50, 60))


# ---------------------------------------------------------------------------
# domain types

@dataclass(frozen=True)
class RecordingMeta:
    """Ids encoded in an NTU file name (SsssCcccPpppRrrrAaaa)."""

    setup: int
    camera: int
    subject_id: int
    replication: int
    action_class: int  # zero-based


@dataclass
class BodyFrame:
    body_id: int
    joints: np.ndarray  # (25, 3) float32


@dataclass
class RawRecording:
    frames: list  # list of per-frame body lists (list[BodyFrame])
    action_class: int
    subject_id: int
    camera: int = 0
    replication: int = 0
    setup: int = 0

    @property
    def max_body_count(self) -> int:
        return max((len(bodies) for bodies in self.frames), default=0)

    @property
    def body_count_per_frame(self) -> list:
        return [len(bodies) for bodies in self.frames]


@dataclass
class SkeletonSequence:
    frames: np.ndarray  # (T, 25, 3) float32, hip joint at origin
    label: Optional[int]
    subject_id: int
    labeled: bool = True

    @property
    def length(self) -> int:
        return self.frames.shape[0]

    def flat(self) -> np.ndarray:
        """(T, 75) view used by the models."""
        return self.frames.reshape(self.length, FRAME_DIM)

    def validate(self):
        t = self.length
        if t < 1 or t > MAX_SEQUENCE_LENGTH:
            raise DataError(f"sequence length {t} outside [1, {MAX_SEQUENCE_LENGTH}]")
        if self.frames.shape[1:] != (N_JOINTS, 3):
            raise DataError(f"bad frame shape {self.frames.shape}")
        if not np.all(np.isfinite(self.frames)):
            raise DataError("non-finite coordinates")
        if np.any(self.frames[:, 0, :] != 0.0):
            raise DataError("hip joint not at origin")


@dataclass
class DatasetSplit:
    train: list
    test: list
    label_fraction: float = 1.0

    def subject_sets(self):
        return ({s.subject_id for s in self.train},
                {s.subject_id for s in self.test})


# ---------------------------------------------------------------------------
# NTU .skeleton adapter

_NTU_NAME = re.compile(r"S(\d+)C(\d+)P(\d+)R(\d+)A(\d+)", re.IGNORECASE)


def parse_ntu_filename(name: str) -> RecordingMeta:
    """Extract setup/camera/subject/replication/action ids from a file name.

    The action token is converted to a zero-based class (A017 -> 16); the
    subject id is kept as the raw performer number (P003 -> 3).
    """
    m = _NTU_NAME.search(Path(name).name)
    if not m:
        raise ParseError(f"file name {name!r} does not match SsssCcccPpppRrrrAaaa")
    s, c, p, r, a = (int(g) for g in m.groups())
    if a < 1:
        raise ParseError(f"action token A{a:03d} out of range in {name!r}")
    return RecordingMeta(setup=s, camera=c, subject_id=p, replication=r,
                         action_class=a - 1)


def parse_ntu_skeleton(text: str, meta: RecordingMeta) -> RawRecording:
    """Parse one NTU ``.skeleton`` file.

    Layout (line numbers are 1-based in errors):
      line 1: frame count
      per frame: a body-count line; per body: one body-info line (first
      token is the tracking id), one joint-count line (25), then 25 joint
      lines whose first three floats are x y z in meters. Remaining
      per-joint sensor fields (depth/color projections, orientation,
      tracking state) are ignored.
    """
    lines = text.splitlines()
    pos = 0

    def next_line(what):
        nonlocal pos
        if pos >= len(lines):
            raise ParseError(f"file truncated while reading {what}", line=pos + 1)
        pos += 1
        return lines[pos - 1].strip()

    def read_int(what):
        raw = next_line(what)
        try:
            return int(raw)
        except ValueError:
            raise ParseError(f"expected integer {what}, got {raw!r}", line=pos) from None

    n_frames = read_int("frame count")
    if n_frames < 0:
        raise ParseError("negative frame count", line=1)
    frames = []
    for _ in range(n_frames):
        n_bodies = read_int("body count")
        bodies = []
        for _ in range(n_bodies):
            info = next_line("body info")
            try:
                body_id = int(float(info.split()[0]))
            except (IndexError, ValueError):
                raise ParseError(f"bad body-info line {info!r}", line=pos) from None
            n_joints = read_int("joint count")
            if n_joints != N_JOINTS:
                raise ParseError(f"expected {N_JOINTS} joints, got {n_joints}",
                                 line=pos)
            joints = np.empty((N_JOINTS, 3), dtype=np.float32)
            for j in range(N_JOINTS):
                fields = next_line("joint line").split()
                if len(fields) < 3:
                    raise ParseError("joint line has fewer than 3 fields", line=pos)
                try:
                    joints[j] = [float(v) for v in fields[:3]]
                except ValueError:
                    raise ParseError(f"bad joint coordinates {fields[:3]!r}",
                                     line=pos) from None
            if not np.all(np.isfinite(joints)):
                raise DataError(
                    f"non-finite joint coordinate near line {pos} "
                    f"(subject {meta.subject_id}, class {meta.action_class})")
            bodies.append(BodyFrame(body_id=body_id, joints=joints))
        frames.append(bodies)
    return RawRecording(frames=frames, action_class=meta.action_class,
                        subject_id=meta.subject_id, camera=meta.camera,
                        replication=meta.replication, setup=meta.setup)


def load_ntu_file(path) -> RawRecording:
    path = Path(path)
    meta = parse_ntu_filename(path.name)
    try:
        return parse_ntu_skeleton(path.read_text(), meta)
    except ParseError as e:
        raise ParseError(str(e), line=e.line, path=str(path)) from None


def load_ntu_directory(path) -> list:
    """Parse every ``.skeleton`` file under `path`, sorted by file name.

    Parsing is pure per file, so the order (and thus the result) is
    deterministic regardless of how the walk is scheduled.
    """
    root = Path(path)
    if not root.is_dir():
        raise DataError(f"{path}: not a directory")
    files = sorted(root.glob("*.skeleton"))
    if not files:
        raise DataError(f"{path}: no .skeleton files found")
    return [load_ntu_file(f) for f in files]


# ---------------------------------------------------------------------------
# preprocessing

def _dominant_body_track(raw: RawRecording) -> list:
    """Frames of the single most-tracked body; ties are ambiguous."""
    durations = {}
    for bodies in raw.frames:
        for body in bodies:
            durations[body.body_id] = durations.get(body.body_id, 0) + 1
    if not durations:
        raise EmptySequenceError("recording has no tracked bodies")
    ranked = sorted(durations.items(), key=lambda kv: (-kv[1], kv[0]))
    if len(ranked) > 1 and ranked[0][1] == ranked[1][1]:
        raise AmbiguousBodyError(
            f"bodies {ranked[0][0]} and {ranked[1][0]} tracked equally long")
    keep = ranked[0][0]
    track = []
    for bodies in raw.frames:
        for body in bodies:
            if body.body_id == keep:
                track.append(body.joints)
                break
    return track


def preprocess(raw: RawRecording, max_len: int = MAX_SEQUENCE_LENGTH,
               subsample: int = 2) -> SkeletonSequence:
    """Subsample every `subsample`-th frame, truncate, center on the hip.

    Applied exactly once per recording: the pipeline hands the result on
    as a `SkeletonSequence`, which this function does not accept again.
    """
    track = _dominant_body_track(raw)
    kept = track[::subsample][:max_len]
    if not kept:
        raise EmptySequenceError("no frames left after subsampling")
    frames = np.stack(kept).astype(np.float32)
    frames = frames - frames[:, 0:1, :]  # hip joint to origin, per frame
    seq = SkeletonSequence(frames=frames, label=raw.action_class,
                           subject_id=raw.subject_id, labeled=True)
    seq.validate()
    return seq


def filter_single_subject(recordings: Iterable,
                          multi_subject_classes=MUTUAL_ACTION_CLASSES,
                          max_bodies: int = 1) -> list:
    """Drop recordings of mutual-action classes or with extra tracked bodies.

    `multi_subject_classes` is configurable (`MUTUAL_ACTION_CLASSES` per
    the dataset manual, `LAST_TEN_CLASSES` to match the ten-class
    convention); `max_bodies` <= 0 disables the body-count criterion.
    """
    out = []
    for rec in recordings:
        if rec.action_class in multi_subject_classes:
            continue
        if max_bodies > 0 and rec.max_body_count > max_bodies:
            continue
        out.append(rec)
    return out


def split_cross_subject(sequences: Iterable, train_subject_ids,
                        test_subject_ids=None) -> DatasetSplit:
    """Partition by performer id; subjects never straddle the split."""
    train_ids = frozenset(train_subject_ids)
    test_ids = None if test_subject_ids is None else frozenset(test_subject_ids)
    if test_ids is not None and train_ids & test_ids:
        raise ConfigError(f"subjects {sorted(train_ids & test_ids)} are in both sides")
    train, test = [], []
    for seq in sequences:
        if seq.subject_id in train_ids:
            train.append(seq)
        elif test_ids is None or seq.subject_id in test_ids:
            test.append(seq)
        else:
            raise ConfigError(f"subject id {seq.subject_id} belongs to neither side")
    return DatasetSplit(train=train, test=test, label_fraction=1.0)


def mask_labels(split: DatasetSplit, fraction: float, seed: int) -> DatasetSplit:
    """Keep labels on a stratified random `fraction` of the training set.

    Per-class quotas use the largest-remainder rule, so the total labeled
    count is round(fraction * N) and each class is within one sample of
    fraction * class_count. Test labels are always retained. Deterministic
    for a fixed seed.
    """
    if not 0.0 < fraction <= 1.0:
        raise ConfigError(f"label fraction {fraction} outside (0, 1]")
    rng = np.random.default_rng(seed)
    by_class = {}
    for i, seq in enumerate(split.train):
        if seq.label is None:
            raise DataError("cannot stratify: training sample without a label")
        by_class.setdefault(seq.label, []).append(i)

    n = len(split.train)
    total = int(round(fraction * n))
    quotas, remainders = {}, []
    for cls in sorted(by_class):
        exact = fraction * len(by_class[cls])
        quotas[cls] = int(math.floor(exact))
        remainders.append((-(exact - quotas[cls]), cls))
    extras = total - sum(quotas.values())
    for _, cls in sorted(remainders)[:max(extras, 0)]:
        quotas[cls] += 1

    chosen = set()
    for cls in sorted(by_class):
        idx = np.array(by_class[cls])
        picked = rng.permutation(len(idx))[:quotas[cls]]
        chosen.update(idx[picked].tolist())

    train = [replace(seq, labeled=(i in chosen)) for i, seq in enumerate(split.train)]
    test = [replace(seq, labeled=True) for seq in split.test]
    return DatasetSplit(train=train, test=test, label_fraction=fraction)


# ---------------------------------------------------------------------------
# synthetic fixture

# joint chains that move per class; anchors (shoulders, hips, spine) stay put
_LIMBS = (
    ([9, 10, 11, 23, 24], np.array([0.55, 0.80, 0.24])),   # right arm raise
    ([5, 6, 7, 21, 22], np.array([-0.55, 0.80, 0.24])),    # left arm raise
    ([17, 18, 19], np.array([0.45, 0.55, 0.70])),          # right leg kick
    ([13, 14, 15], np.array([-0.45, 0.55, 0.70])),         # left leg kick
    ([2, 3], np.array([0.95, 0.0, 0.30])),                 # head sway
)

_TEMPLATE = 0.75 * np.array([
    [0.00, 0.00, 0.00],    # 0 spine base (hip)
    [0.00, 0.15, 0.00],    # 1 spine mid
    [0.00, 0.38, 0.00],    # 2 neck
    [0.00, 0.48, 0.00],    # 3 head
    [-0.12, 0.30, 0.00],   # 4 shoulder L
    [-0.22, 0.16, 0.00],   # 5 elbow L
    [-0.26, 0.02, 0.00],   # 6 wrist L
    [-0.28, -0.03, 0.00],  # 7 hand L
    [0.12, 0.30, 0.00],    # 8 shoulder R
    [0.22, 0.16, 0.00],    # 9 elbow R
    [0.26, 0.02, 0.00],    # 10 wrist R
    [0.28, -0.03, 0.00],   # 11 hand R
    [-0.08, -0.02, 0.00],  # 12 hip L
    [-0.09, -0.32, 0.00],  # 13 knee L
    [-0.10, -0.62, 0.00],  # 14 ankle L
    [-0.11, -0.68, 0.05],  # 15 foot L
    [0.08, -0.02, 0.00],   # 16 hip R
    [0.09, -0.32, 0.00],   # 17 knee R
    [0.10, -0.62, 0.00],   # 18 ankle R
    [0.11, -0.68, 0.05],   # 19 foot R
    [0.00, 0.30, 0.00],    # 20 spine shoulder
    [-0.29, -0.07, 0.00],  # 21 hand tip L
    [-0.25, -0.05, 0.02],  # 22 thumb L
    [0.29, -0.07, 0.00],   # 23 hand tip R
    [0.25, -0.05, 0.02],   # 24 thumb R
], dtype=np.float64)


def _synth_sequence(cls: int, rng: np.random.Generator, length: int,
                    noise: float) -> np.ndarray:
    limb, direction = _LIMBS[cls % len(_LIMBS)]
    freq = 0.10 + 0.035 * (cls % len(_LIMBS)) + 0.05 * (cls // len(_LIMBS))
    amp = 0.20 + 0.04 * (cls % 3)
    freq *= 1.0 + rng.uniform(-0.05, 0.05)
    amp *= 1.0 + rng.uniform(-0.10, 0.10)
    phase = rng.uniform(0.0, 2.0 * np.pi)

    t = np.arange(length)
    wave = np.sin(2.0 * np.pi * freq * t + phase)            # (T,)
    reach = np.linspace(0.35, 1.0, len(limb))                # distal joints travel more
    frames = np.repeat(_TEMPLATE[None, :, :], length, axis=0)
    frames[:, limb, :] += amp * wave[:, None, None] * reach[None, :, None] \
        * direction[None, None, :]
    if noise > 0:
        jitter = rng.normal(0.0, noise, size=(length, N_JOINTS, 3))
        jitter[:, 0, :] = 0.0  # hip stays exactly at the origin
        frames = frames + jitter
    return frames.astype(np.float32)


def synth_make(n_classes: int, n_per_class, seed: int,
               n_test_per_class=None, noise: float = 0.008,
               length_prior: LengthPrior = LengthPrior()) -> DatasetSplit:
    """Deterministic stick-figure fixture: class decides limb, speed, reach.

    `n_per_class` (and `n_test_per_class`) may be an int or one count per
    class; the test side defaults to 30% of the train side. Lengths come
    from the standard duration prior; every frame keeps the hip at the
    origin, so the result satisfies the same invariants as real data.
    """
    if n_classes < 2:
        raise ConfigError("n_classes must be >= 2")

    def counts(spec, default):
        if spec is None:
            spec = default
        if isinstance(spec, int):
            return [spec] * n_classes
        if len(spec) != n_classes:
            raise ConfigError("per-class counts must have n_classes entries")
        return [int(v) for v in spec]

    train_counts = counts(n_per_class, None)
    test_counts = counts(n_test_per_class, [max(1, c * 3 // 10) for c in train_counts])

    rng = np.random.default_rng(seed)

    def build(per_class, subjects, labeled):
        seqs = []
        for cls in range(n_classes):
            for i in range(per_class[cls]):
                length = sample_length(rng, length_prior)
                frames = _synth_sequence(cls, rng, length, noise)
                seqs.append(SkeletonSequence(
                    frames=frames, label=cls,
                    subject_id=subjects[i % len(subjects)], labeled=labeled))
        order = rng.permutation(len(seqs))
        return [seqs[i] for i in order]

    train = build(train_counts, subjects=list(range(8)), labeled=True)
    test = build(test_counts, subjects=list(range(100, 104)), labeled=True)
    return DatasetSplit(train=train, test=test, label_fraction=1.0)


# ---------------------------------------------------------------------------
# canonical binary dataset file

DATASET_VERSION = 1
_HEADER = struct.Struct("<BId")       # version, record count, label_fraction
_RECORD = struct.Struct("<BHhiB")     # side, T, label, subject_id, labeled


def write_dataset(path, split: DatasetSplit):
    """Write the split in the package's binary format (version byte first)."""
    blocks = [_HEADER.pack(DATASET_VERSION, len(split.train) + len(split.test),
                           float(split.label_fraction))]
    for side, seqs in ((0, split.train), (1, split.test)):
        for seq in seqs:
            frames = np.ascontiguousarray(seq.frames, dtype=np.float32)
            label = -1 if seq.label is None else int(seq.label)
            blocks.append(_RECORD.pack(side, seq.length, label,
                                       int(seq.subject_id), int(seq.labeled)))
            blocks.append(frames.tobytes())
    Path(path).write_bytes(b"".join(blocks))


def read_dataset(path) -> DatasetSplit:
    """Read a dataset file; inverse of `write_dataset`, bit-exact."""
    buf = Path(path).read_bytes()
    if len(buf) < _HEADER.size:
        raise DataError(f"{path}: truncated header")
    version, count, label_fraction = _HEADER.unpack_from(buf, 0)
    if version != DATASET_VERSION:
        raise DataError(f"{path}: unsupported dataset version {version}")
    offset = _HEADER.size
    train, test = [], []
    for i in range(count):
        if offset + _RECORD.size > len(buf):
            raise DataError(f"{path}: truncated at record {i}")
        side, t, label, subject, labeled = _RECORD.unpack_from(buf, offset)
        offset += _RECORD.size
        nbytes = t * FRAME_DIM * 4
        if offset + nbytes > len(buf):
            raise DataError(f"{path}: truncated frames at record {i}")
        frames = np.frombuffer(buf, dtype="<f4", count=t * FRAME_DIM,
                               offset=offset).reshape(t, N_JOINTS, 3).copy()
        offset += nbytes
        seq = SkeletonSequence(frames=frames,
                               label=None if label < 0 else int(label),
                               subject_id=int(subject), labeled=bool(labeled))
        (train if side == 0 else test).append(seq)
    return DatasetSplit(train=train, test=test, label_fraction=label_fraction)


# ---------------------------------------------------------------------------
# batching

@dataclass
class Batch:
    """Padded model input: frames (B, T, 75), bool mask, labels, label flags."""

    x: np.ndarray
    mask: np.ndarray
    labels: np.ndarray
    labeled: np.ndarray

    def __len__(self):
        return self.x.shape[0]


def make_batch(seqs: Sequence, dtype=np.float32) -> Batch:
    """Zero-pad sequences to the batch maximum length."""
    b = len(seqs)
    t_max = max(s.length for s in seqs)
    x = np.zeros((b, t_max, FRAME_DIM), dtype=dtype)
    mask = np.zeros((b, t_max), dtype=bool)
    labels = np.full(b, -1, dtype=np.int64)
    labeled = np.zeros(b, dtype=bool)
    for i, s in enumerate(seqs):
        x[i, :s.length] = s.flat()
        mask[i, :s.length] = True
        if s.label is not None:
            labels[i] = s.label
        labeled[i] = s.labeled
    return Batch(x=x, mask=mask, labels=labels, labeled=labeled)


class EpochSampler:
    """Without-replacement batches, reshuffled every epoch, seed-driven."""

    def __init__(self, seqs: Sequence, batch_size: int, rng: np.random.Generator,
                 dtype=np.float32):
        if not seqs:
            raise ConfigError("cannot sample from an empty sequence list")
        self.seqs = list(seqs)
        self.batch_size = min(batch_size, len(self.seqs))
        self.rng = rng
        self.dtype = dtype
        self._order = []

    def next_batch(self) -> Batch:
        if len(self._order) < self.batch_size:
            self._order = list(self.rng.permutation(len(self.seqs)))
        take, self._order = self._order[:self.batch_size], self._order[self.batch_size:]
        return make_batch([self.seqs[i] for i in take], dtype=self.dtype)
