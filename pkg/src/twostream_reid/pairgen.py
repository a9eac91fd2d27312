"""Cross-camera pair generation.

Positives are the full Cartesian product of the first N occurrences of
one vehicle on each camera (N^2 per fully-populated match); negatives
are sampled uniformly without replacement from all cross-vehicle
occurrence combinations. Training keeps negatives equal to positives;
testing scales negatives by the multiplier lambda. Vehicle identities
are split at the vehicle level so no identity contributes to both
train and test.
"""

import csv
import hashlib
from dataclasses import dataclass

import numpy as np

from .errors import ConsistencyError, ParameterError, ValidationError

POSITIVE = "positive"
NEGATIVE = "negative"


@dataclass(frozen=True)
class Occurrence:
    frame_index: int
    shape_ref: str
    plate_ref: str


@dataclass
class VehicleTrack:
    camera_id: int
    vehicle_id: str
    occurrences: list
    plate_visible: bool = True

    def __post_init__(self):
        if not self.occurrences:
            raise ParameterError(f"track {self.vehicle_id}/cam{self.camera_id} has no occurrences")
        frames = [o.frame_index for o in self.occurrences]
        if any(b <= a for a, b in zip(frames, frames[1:])):
            raise ParameterError(
                f"track {self.vehicle_id}/cam{self.camera_id}: frames not strictly increasing"
            )


@dataclass(frozen=True)
class PatchPair:
    cam1: tuple  # (shape_ref, plate_ref)
    cam2: tuple
    label: str
    provenance: tuple  # (vehicle_id_1, frame_1, vehicle_id_2, frame_2)

    @property
    def is_positive(self):
        return self.label == POSITIVE


@dataclass
class PairSetSpec:
    n: int
    lam: int
    train_ids: frozenset
    test_ids: frozenset
    seed: int

    def __post_init__(self):
        if self.n < 1:
            raise ParameterError(f"N must be >= 1, got {self.n}")
        if self.lam < 1:
            raise ParameterError(f"lambda must be >= 1, got {self.lam}")
        if self.train_ids & self.test_ids:
            raise ParameterError("train and test vehicle id sets overlap")

    def split_hash(self):
        digest = hashlib.sha256()
        for vid in sorted(self.train_ids):
            digest.update(f"T:{vid}\n".encode())
        for vid in sorted(self.test_ids):
            digest.update(f"E:{vid}\n".encode())
        return digest.hexdigest()[:16]


def index_tracks(tracks):
    """Index a track list by (camera_id, vehicle_id)."""
    out = {}
    for track in tracks:
        key = (track.camera_id, track.vehicle_id)
        if key in out:
            raise ConsistencyError(f"duplicate track for camera {key[0]}, vehicle {key[1]}")
        out[key] = track
    return out


def match_keys(indexed):
    """Vehicle ids present on both cameras, in sorted order."""
    cam1 = {vid for cam, vid in indexed if cam == 1}
    cam2 = {vid for cam, vid in indexed if cam == 2}
    return sorted(cam1 & cam2)


def first_n(track, n):
    """First min(N, len) occurrences in frame order; flags short tracks."""
    if n < 1:
        raise ParameterError(f"N must be >= 1, got {n}")
    short = len(track.occurrences) < n
    return track.occurrences[:n], short


def _pair(occ1, vid1, occ2, vid2):
    label = POSITIVE if vid1 == vid2 else NEGATIVE
    return PatchPair(
        cam1=(occ1.shape_ref, occ1.plate_ref),
        cam2=(occ2.shape_ref, occ2.plate_ref),
        label=label,
        provenance=(vid1, occ1.frame_index, vid2, occ2.frame_index),
    )


def positive_pairs(matches, indexed, n):
    """Cartesian product of first-N occurrences for every matched vehicle."""
    pairs = []
    for vid in matches:
        if (1, vid) not in indexed or (2, vid) not in indexed:
            raise ConsistencyError(f"match key {vid!r} missing a camera track")
        occs1, _ = first_n(indexed[(1, vid)], n)
        occs2, _ = first_n(indexed[(2, vid)], n)
        for o1 in occs1:
            for o2 in occs2:
                pairs.append(_pair(o1, vid, o2, vid))
    return pairs


def negative_pool_size(indexed, n, restrict_ids=None):
    flat1, flat2 = _flatten_for_negatives(indexed, n, restrict_ids)
    count1 = {}
    count2 = {}
    for vid, _ in flat1:
        count1[vid] = count1.get(vid, 0) + 1
    for vid, _ in flat2:
        count2[vid] = count2.get(vid, 0) + 1
    same = sum(c1 * count2.get(vid, 0) for vid, c1 in count1.items())
    return len(flat1) * len(flat2) - same


def _flatten_for_negatives(indexed, n, restrict_ids=None):
    flat1, flat2 = [], []
    for (cam, vid), track in sorted(indexed.items()):
        if restrict_ids is not None and vid not in restrict_ids:
            continue
        occs, _ = first_n(track, n)
        target = flat1 if cam == 1 else flat2
        target.extend((vid, occ) for occ in occs)
    return flat1, flat2


def negative_pairs(indexed, n, count, rng, restrict_ids=None):
    """Uniform sample without replacement of cross-vehicle combinations."""
    flat1, flat2 = _flatten_for_negatives(indexed, n, restrict_ids)
    n1, n2 = len(flat1), len(flat2)
    vids1 = np.array([v for v, _ in flat1])
    vids2 = np.array([v for v, _ in flat2])
    valid = np.flatnonzero((vids1[:, None] != vids2[None, :]).reshape(-1))
    if count > valid.size:
        raise ParameterError(
            f"requested {count} negative pairs but the cross-vehicle pool has only {valid.size}"
        )
    chosen = rng.choice(valid, size=count, replace=False) if count else np.array([], dtype=int)
    pairs = []
    for idx in chosen:
        vid1, occ1 = flat1[idx // n2]
        vid2, occ2 = flat2[idx % n2]
        pairs.append(_pair(occ1, vid1, occ2, vid2))
    return pairs


def build_sets(spec, tracks):
    """Train pairs (balanced) and test pairs (lambda-scaled negatives)."""
    indexed = index_tracks(tracks) if not isinstance(tracks, dict) else tracks
    all_ids = {vid for _, vid in indexed}
    covered = spec.train_ids | spec.test_ids
    if all_ids - covered:
        raise ParameterError(f"split does not cover vehicle ids: {sorted(all_ids - covered)[:5]}")

    matches = match_keys(indexed)
    rng = np.random.default_rng(spec.seed)
    out = []
    for side_ids, multiplier in ((spec.train_ids, 1), (spec.test_ids, spec.lam)):
        side_matches = [vid for vid in matches if vid in side_ids]
        positives = positive_pairs(side_matches, indexed, spec.n)
        negatives = negative_pairs(
            indexed, spec.n, multiplier * len(positives), rng, restrict_ids=side_ids
        )
        out.append(positives + negatives)
    return out[0], out[1]


def settings_report(spec, train_pairs, test_pairs):
    """Counts block shaped like the experiment-settings table."""
    tr_pos = sum(p.is_positive for p in train_pairs)
    te_pos = sum(p.is_positive for p in test_pairs)
    lines = [
        f"Settings: N = {spec.n}, lambda = {spec.lam} (seed {spec.seed}, "
        f"split {spec.split_hash()})",
        f"  Training: #positives {tr_pos}  #negatives {len(train_pairs) - tr_pos}",
        f"  Testing:  #positives {te_pos}  #negatives {len(test_pairs) - te_pos}",
    ]
    return "\n".join(lines)


def random_split(vehicle_ids, test_fraction, seed):
    """Vehicle-level split; every id is used to train or test, never both."""
    if not 0.0 < test_fraction < 1.0:
        raise ParameterError(f"test fraction must be in (0,1), got {test_fraction}")
    ids = sorted(vehicle_ids)
    rng = np.random.default_rng(seed)
    rng.shuffle(ids)
    n_test = max(1, round(len(ids) * test_fraction))
    return frozenset(ids[n_test:]), frozenset(ids[:n_test])


PAIRS_MAGIC = "# twostream-reid pairs v1"
_FIELDS = ["label", "cam1_vehicle", "cam1_frame", "cam2_vehicle", "cam2_frame",
           "shape1_path", "plate1_path", "shape2_path", "plate2_path"]


def save_pairs(path, spec, pairs):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        fh.write(f"{PAIRS_MAGIC} N={spec.n} lambda={spec.lam} "
                 f"seed={spec.seed} split={spec.split_hash()}\n")
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(_FIELDS)
        for p in pairs:
            vid1, f1, vid2, f2 = p.provenance
            writer.writerow([p.label, vid1, f1, vid2, f2,
                             p.cam1[0], p.cam1[1], p.cam2[0], p.cam2[1]])


def load_pairs(path):
    """Read back (header dict, pairs). Raises ValidationError on bad shape."""
    with open(path, newline="", encoding="utf-8") as fh:
        first = fh.readline().rstrip("\n")
        if not first.startswith(PAIRS_MAGIC):
            raise ValidationError(f"{path}: not a pair manifest")
        header = dict(item.split("=", 1) for item in first[len(PAIRS_MAGIC):].split())
        reader = csv.reader(fh)
        fields = next(reader, None)
        if fields != _FIELDS:
            raise ValidationError(f"{path}: unexpected column header {fields}")
        pairs = []
        for row in reader:
            if len(row) != len(_FIELDS):
                raise ValidationError(f"{path}: malformed row {row}")
            label, vid1, f1, vid2, f2, s1, p1, s2, p2 = row
            if label not in (POSITIVE, NEGATIVE):
                raise ValidationError(f"{path}: unknown label {label!r}")
            pairs.append(PatchPair(cam1=(s1, p1), cam2=(s2, p2), label=label,
                                   provenance=(vid1, int(f1), vid2, int(f2))))
    return header, pairs


def pair_vehicle_ids(pairs):
    out = set()
    for p in pairs:
        out.add(p.provenance[0])
        out.add(p.provenance[2])
    return out
