"""Deterministic synthetic corpus: procedural vehicle-shape and plate patches.

Stands in for the private camera videos. Each identity gets a shape
archetype (silhouette geometry shared by every identity assigned to it),
an identity-specific body tint, and a unique plate string rendered in a
fixed 5x7 bitmap font. Per-occurrence illumination scaling and Gaussian
pixel noise provide the controllable ambiguity knobs: few archetypes
make shapes collide, small alphabets and noise make plates confusable.

Tensor layout note: plate patches are stored rotated a quarter turn so
a decoded plate is 96x48x3 with the long axis first, matching the
network's (3,96,48) input contract.
"""

import csv
import os
from dataclasses import dataclass, field

import numpy as np
from PIL import Image

from . import font5x7
from .errors import ParameterError, StorageError, ValidationError
from .pairgen import Occurrence, VehicleTrack

SHAPE_HW = (96, 96)
PLATE_HW = (96, 48)  # tensor (H, W) after the stored quarter-turn
SCHEMA_VERSION = 1
MANIFEST_MAGIC = "# twostream-reid corpus v1"

DEFAULT_ALPHABET = "ABCDEFGHIJKLMNOPQRSTUVWXYZ0123456789"


@dataclass
class SynthSpec:
    n_vehicles: int = 50
    match_fraction: float = 0.6
    occurrences_per_camera: int = 3
    shape_classes: int = 10
    plate_alphabet: str = DEFAULT_ALPHABET
    plate_length: int = 5
    noise_std: float = 0.02
    illumination_range: tuple = (0.8, 1.2)
    plate_occlusion_prob: float = 0.0
    tint_levels: int = 0  # 0 = continuous tints; k >= 2 quantizes each channel
    seed: int = 0

    def __post_init__(self):
        if self.n_vehicles < 1 or self.occurrences_per_camera < 1 or self.shape_classes < 1:
            raise ParameterError("vehicle, occurrence and archetype counts must be positive")
        if not 0.0 <= self.match_fraction <= 1.0:
            raise ParameterError(f"match_fraction must be in [0,1], got {self.match_fraction}")
        if self.noise_std < 0:
            raise ParameterError(f"noise_std must be >= 0, got {self.noise_std}")
        unknown = set(self.plate_alphabet) - set(font5x7.GLYPHS)
        if not self.plate_alphabet or unknown:
            raise ParameterError(f"plate_alphabet has unsupported symbols: {sorted(unknown)}")
        if len(self.plate_alphabet) ** self.plate_length < self.n_vehicles:
            raise ParameterError("plate alphabet/length cannot give every vehicle a unique plate")
        lo, hi = self.illumination_range
        if not 0 < lo <= hi:
            raise ParameterError(f"bad illumination_range {self.illumination_range}")
        if self.tint_levels == 1 or self.tint_levels < 0:
            raise ParameterError(f"tint_levels must be 0 or >= 2, got {self.tint_levels}")


@dataclass
class CorpusManifest:
    root: str
    tracks: list
    summary: dict = field(default_factory=dict)

    def __post_init__(self):
        if not self.summary:
            self.summary = recompute_summary(self.tracks)


def recompute_summary(tracks):
    out = {"vehicles_cam1": 0, "plates_cam1": 0, "vehicles_cam2": 0, "plates_cam2": 0}
    for t in tracks:
        out[f"vehicles_cam{t.camera_id}"] += 1
        if t.plate_visible:
            out[f"plates_cam{t.camera_id}"] += 1
    cam1 = {t.vehicle_id for t in tracks if t.camera_id == 1}
    cam2 = {t.vehicle_id for t in tracks if t.camera_id == 2}
    out["matchings"] = len(cam1 & cam2)
    return out


def _archetype_mask(arch_rng):
    """Car-rear silhouette layers: (body, window, wheels) boolean masks."""
    h, w = SHAPE_HW
    yy, xx = np.mgrid[0:h, 0:w]
    body_w = int(arch_rng.integers(58, 82))
    body_h = int(arch_rng.integers(40, 62))
    top = h - 14 - body_h
    left = (w - body_w) // 2
    roundness = float(arch_rng.uniform(4, 14))
    body = (
        (yy >= top) & (yy < h - 14) & (xx >= left) & (xx < left + body_w)
        & ~((yy - top < roundness)
            & (np.minimum(xx - left, left + body_w - 1 - xx) < roundness)
            & ((yy - top) + np.minimum(xx - left, left + body_w - 1 - xx) < roundness))
    )
    win_h = int(arch_rng.integers(10, 18))
    win_margin = int(arch_rng.integers(6, 14))
    window = (
        (yy >= top + 4) & (yy < top + 4 + win_h)
        & (xx >= left + win_margin) & (xx < left + body_w - win_margin)
    )
    wheel_r = int(arch_rng.integers(5, 9))
    wheel_y = h - 14
    offsets = int(arch_rng.integers(8, 16))
    wheels = (
        ((yy - wheel_y) ** 2 + (xx - (left + offsets)) ** 2 <= wheel_r**2)
        | ((yy - wheel_y) ** 2 + (xx - (left + body_w - offsets)) ** 2 <= wheel_r**2)
    )
    return body, window, wheels


def _render_shape_base(masks, tint):
    body, window, wheels = masks
    img = np.full(SHAPE_HW + (3,), 0.16)
    img[body] = tint
    img[window] = (0.08, 0.09, 0.12)
    img[wheels] = (0.05, 0.05, 0.05)
    return img


def _render_plate_base(plate_string, visible):
    """Natural 48x96 plate canvas; caller rotates before storage."""
    img = np.full((48, 96, 3), 0.88)
    img[:3], img[-3:], img[:, :3], img[:, -3:] = 0.1, 0.1, 0.1, 0.1
    if not visible:
        img[:] = 0.35  # occluder slab; no glyphs survive
        return np.rot90(img)
    n = len(plate_string)
    scale = max(1, min((96 - 10) // (6 * n), (48 - 10) // 7))
    total_w = n * 6 * scale - scale
    x = (96 - total_w) // 2
    y = (48 - 7 * scale) // 2
    for ch in plate_string:
        g = np.kron(font5x7.glyph_array(ch), np.ones((scale, scale), dtype=np.uint8))
        region = img[y : y + 7 * scale, x : x + 5 * scale]
        region[g == 1] = (0.05, 0.05, 0.08)
        x += 6 * scale
    return np.rot90(img)


def _unique_plates(spec, rng):
    base = len(spec.plate_alphabet)
    codes = []
    seen = set()
    while len(codes) < spec.n_vehicles:
        code = int(rng.integers(0, base**spec.plate_length))
        if code not in seen:
            seen.add(code)
            codes.append(code)
    plates = []
    for code in codes:
        chars = []
        for _ in range(spec.plate_length):
            code, rem = divmod(code, base)
            chars.append(spec.plate_alphabet[rem])
        plates.append("".join(chars))
    return plates


def _occurrence_image(base, occ_rng, spec):
    lo, hi = spec.illumination_range
    img = base * occ_rng.uniform(lo, hi)
    if spec.noise_std > 0:
        img = img + occ_rng.normal(0.0, spec.noise_std, size=base.shape)
    return (np.clip(img, 0.0, 1.0) * 255).round().astype(np.uint8)


def _write_png(path, array):
    try:
        Image.fromarray(array).save(path, format="PNG")
    except OSError as exc:
        raise StorageError(f"cannot write patch {path}: {exc}") from exc


def generate(spec, out_dir):
    """Render the corpus under out_dir and write its manifest. Deterministic."""
    try:
        os.makedirs(os.path.join(out_dir, "cam1"), exist_ok=True)
        os.makedirs(os.path.join(out_dir, "cam2"), exist_ok=True)
    except OSError as exc:
        raise StorageError(f"cannot create corpus directory {out_dir}: {exc}") from exc

    top_rng = np.random.default_rng(np.random.SeedSequence((spec.seed, 0xC0)))
    ids = [f"veh{i:04d}" for i in range(spec.n_vehicles)]
    order = list(range(spec.n_vehicles))
    top_rng.shuffle(order)
    n_matched = round(spec.n_vehicles * spec.match_fraction)
    matched = {ids[i] for i in order[:n_matched]}

    plates = _unique_plates(spec, top_rng)
    arch_masks = [
        _archetype_mask(np.random.default_rng(np.random.SeedSequence((spec.seed, 0xA1, a))))
        for a in range(spec.shape_classes)
    ]

    tracks = []
    for idx, vid in enumerate(ids):
        id_rng = np.random.default_rng(np.random.SeedSequence((spec.seed, 0x1D, idx)))
        archetype = int(id_rng.integers(spec.shape_classes))
        if spec.tint_levels:
            # quantized tints collide on purpose: shape confusability knob
            steps = id_rng.integers(0, spec.tint_levels, 3)
            tint = 0.35 + 0.6 * steps / (spec.tint_levels - 1)
        else:
            tint = 0.35 + 0.6 * id_rng.random(3)
        shape_base = _render_shape_base(arch_masks[archetype], tint)
        cameras = (1, 2) if vid in matched else (1 + idx % 2,)
        for cam in cameras:
            cam_rng = np.random.default_rng(np.random.SeedSequence((spec.seed, 0xCA, idx, cam)))
            visible = bool(cam_rng.random() >= spec.plate_occlusion_prob)
            plate_base = _render_plate_base(plates[idx], visible)
            frames = np.cumsum(cam_rng.integers(1, 5, size=spec.occurrences_per_camera))
            frames += int(cam_rng.integers(0, 5000))
            occurrences = []
            for k, frame in enumerate(frames):
                occ_rng = np.random.default_rng(
                    np.random.SeedSequence((spec.seed, 0x0C, idx, cam, k))
                )
                rel_shape = f"cam{cam}/{vid}_f{frame:05d}_shape.png"
                rel_plate = f"cam{cam}/{vid}_f{frame:05d}_plate.png"
                _write_png(os.path.join(out_dir, rel_shape),
                           _occurrence_image(shape_base, occ_rng, spec))
                _write_png(os.path.join(out_dir, rel_plate),
                           _occurrence_image(plate_base, occ_rng, spec))
                occurrences.append(Occurrence(int(frame), rel_shape, rel_plate))
            tracks.append(VehicleTrack(cam, vid, occurrences, plate_visible=visible))

    manifest = CorpusManifest(root=out_dir, tracks=tracks)
    save_manifest(manifest, os.path.join(out_dir, "manifest.csv"))
    return manifest


def save_manifest(manifest, path):
    s = manifest.summary
    try:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            fh.write(f"{MANIFEST_MAGIC} schema={SCHEMA_VERSION} "
                     f"vehicles_cam1={s['vehicles_cam1']} plates_cam1={s['plates_cam1']} "
                     f"vehicles_cam2={s['vehicles_cam2']} plates_cam2={s['plates_cam2']} "
                     f"matchings={s['matchings']}\n")
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["camera", "vehicle_id", "plate_visible",
                             "frames", "shape_paths", "plate_paths"])
            for t in manifest.tracks:
                writer.writerow([
                    t.camera_id, t.vehicle_id, int(t.plate_visible),
                    ";".join(str(o.frame_index) for o in t.occurrences),
                    ";".join(o.shape_ref for o in t.occurrences),
                    ";".join(o.plate_ref for o in t.occurrences),
                ])
    except OSError as exc:
        raise StorageError(f"cannot write manifest {path}: {exc}") from exc


def load_patch(path, dtype=np.float64):
    """Decode a patch PNG to a (3,H,W) array normalized to [0,1]."""
    with Image.open(path) as img:
        arr = np.asarray(img.convert("RGB"), dtype=dtype)
    return np.ascontiguousarray((arr / 255.0).transpose(2, 0, 1))


def _expected_hw(kind):
    return SHAPE_HW if kind == "shape" else PLATE_HW


def load_manifest(path):
    """Parse and fully validate a corpus manifest.

    Checks schema version, patch existence, decoded geometry, and that
    the header summary matches counts recomputed from the entries.
    """
    root = os.path.dirname(os.path.abspath(path))
    with open(path, newline="", encoding="utf-8") as fh:
        first = fh.readline().rstrip("\n")
        if not first.startswith(MANIFEST_MAGIC):
            raise ValidationError(f"{path}: not a corpus manifest")
        header = dict(item.split("=", 1) for item in first[len(MANIFEST_MAGIC):].split())
        if int(header.get("schema", -1)) != SCHEMA_VERSION:
            raise ValidationError(f"{path}: unsupported schema version {header.get('schema')}")
        reader = csv.reader(fh)
        next(reader, None)  # column header
        tracks = []
        for row in reader:
            cam, vid, visible, frames, shapes, plates = row
            occurrences = [
                Occurrence(int(f), s, p)
                for f, s, p in zip(frames.split(";"), shapes.split(";"), plates.split(";"))
            ]
            tracks.append(VehicleTrack(int(cam), vid, occurrences, plate_visible=bool(int(visible))))

    problems = []
    for t in tracks:
        for occ in t.occurrences:
            for kind, rel in (("shape", occ.shape_ref), ("plate", occ.plate_ref)):
                full = os.path.join(root, rel)
                if not os.path.exists(full):
                    problems.append(f"missing patch file: {rel}")
                    continue
                with Image.open(full) as img:
                    w, h = img.size
                if (h, w) != _expected_hw(kind):
                    problems.append(f"bad geometry {w}x{h} for {kind} patch: {rel}")
    summary = recompute_summary(tracks)
    for key, value in summary.items():
        declared = int(header.get(key, -1))
        if declared != value:
            problems.append(f"summary count mismatch for {key}: header {declared}, actual {value}")
    if problems:
        raise ValidationError(f"{path}: " + "; ".join(problems[:10]) +
                              (f" (+{len(problems) - 10} more)" if len(problems) > 10 else ""))
    return CorpusManifest(root=root, tracks=tracks, summary=summary)


def stats(manifest):
    """Dataset-information summary: per-camera vehicle/plate counts + matchings."""
    return dict(manifest.summary)


def format_stats(summary):
    lines = [
        "Camera  #Vehicles  #Plates",
        f"  1     {summary['vehicles_cam1']:9d}  {summary['plates_cam1']:7d}",
        f"  2     {summary['vehicles_cam2']:9d}  {summary['plates_cam2']:7d}",
        f"Matchings between cameras: {summary['matchings']}",
    ]
    return "\n".join(lines)


def tracks_abs(manifest):
    """Tracks with patch refs resolved against the manifest root."""
    out = []
    for t in manifest.tracks:
        occs = [
            Occurrence(o.frame_index,
                       os.path.join(manifest.root, o.shape_ref),
                       os.path.join(manifest.root, o.plate_ref))
            for o in t.occurrences
        ]
        out.append(VehicleTrack(t.camera_id, t.vehicle_id, occs, plate_visible=t.plate_visible))
    return out
