"""Manifest ingestion, metrics, the mean-predictor baseline, splits and evaluation.

A manifest is one JSON file::

    {
      "intrinsics": "intrinsics.json",        # path or inline object
      "mesh_db": "meshes",                     # directory of <label>.obj
      "density": "density.csv",
      "mesh_units": {"rice": 0.1},             # optional, file units -> cm
      "board": {"cols": 4, "rows": 3, "spacing_cm": 1.2},
      "scenes": [
        {"id": "0001", "image": "img/0001.jpg", "mask": "masks/0001.png",
         "label": "rice", "corners": [[u, v], ...12],
         "volume_ml": 120.0, "weight_g": 98.0, "energy_kcal": 156.0,
         "split": "test"}
      ]
    }

Relative paths resolve against the manifest's directory. ``corners`` may also
be a path to a JSON file holding the 12 pairs.
"""

from __future__ import annotations

import csv
import io
import json
import logging
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import EvaluationError, InputError, InsufficientDataError
from .estimate import EnergyDensityTable, EstimateRecord, RunConfig, Scene, run_pipeline
from .geometry import BoardSpec, CameraIntrinsics, load_intrinsics
from .mesh import MeshDatabase
from .objectpose import ABLATION_ROWS, Ablation

logger = logging.getLogger(__name__)

SPLITS = ("train", "test")


@dataclass(frozen=True)
class SceneEntry:
    scene_id: str
    mask: Path
    label: str
    corners: np.ndarray
    volume_ml: float
    energy_kcal: float
    weight_g: float | None = None
    image: Path | None = None
    split: str | None = None

    def to_scene(self) -> Scene:
        return Scene(self.scene_id, self.label, self.mask, self.corners,
                     str(self.image) if self.image else None)

    def truth(self, kind: str) -> float:
        return {"volume": self.volume_ml, "energy": self.energy_kcal}[kind]


@dataclass
class Manifest:
    """Validated scene entries plus the shared resources they refer to."""

    path: Path | None
    entries: list[SceneEntry]
    intrinsics: CameraIntrinsics | None = None
    mesh_db: Path | None = None
    density: Path | None = None
    mesh_units: dict[str, float] = field(default_factory=dict)
    board: BoardSpec = field(default_factory=BoardSpec)

    def __len__(self) -> int:
        return len(self.entries)

    def __iter__(self):
        return iter(self.entries)

    def __getitem__(self, i):
        return self.entries[i]

    def open_mesh_db(self, override=None) -> MeshDatabase:
        root = override or self.mesh_db or os.environ.get("MONOVOL_MESH_DB")
        if root is None:
            raise InputError("no mesh database: set mesh_db in the manifest, pass one, or set MONOVOL_MESH_DB")
        return MeshDatabase(root, self.mesh_units)

    def load_densities(self, override=None) -> EnergyDensityTable:
        path = override or self.density
        if path is None:
            raise InputError("no energy density table given")
        return EnergyDensityTable.load(path)


def _resolve(base: Path, value) -> Path | None:
    if value is None:
        return None
    p = Path(value)
    return p if p.is_absolute() else base / p


def _positive(entry_id, name, value, required=True):
    if value is None:
        if required:
            raise InputError(f"scene {entry_id}: missing {name}")
        return None
    try:
        x = float(value)
    except (TypeError, ValueError):
        raise InputError(f"scene {entry_id}: {name} is not a number: {value!r}") from None
    if not (x > 0 and math.isfinite(x)):
        raise InputError(f"scene {entry_id}: {name} must be positive, got {value!r}")
    return x


def _corners(entry_id, value, base: Path, n: int) -> np.ndarray:
    if isinstance(value, str):
        path = _resolve(base, value)
        try:
            value = json.loads(path.read_text())
        except FileNotFoundError:
            raise InputError(f"scene {entry_id}: corner file not found: {path}") from None
        except ValueError as exc:
            raise InputError(f"scene {entry_id}: cannot parse {path}: {exc}") from None
    try:
        pts = np.asarray(value, dtype=float)
    except (TypeError, ValueError):
        raise InputError(f"scene {entry_id}: corners must be [u, v] pairs") from None
    if pts.ndim != 2 or pts.shape[1] != 2 or len(pts) != n:
        count = len(pts) if pts.ndim >= 1 else 0
        raise InputError(f"scene {entry_id}: expected {n} corners, got {count}")
    if not np.all(np.isfinite(pts)):
        raise InputError(f"scene {entry_id}: corners must be finite")
    return pts


def parse_entry(raw: dict, base: Path, board: BoardSpec = BoardSpec(), check_files: bool = True) -> SceneEntry:
    entry_id = str(raw.get("id", "?"))
    if "id" not in raw:
        raise InputError("scene without an id")
    for key in ("mask", "label", "corners"):
        if raw.get(key) is None:
            raise InputError(f"scene {entry_id}: missing {key}")
    split = raw.get("split")
    if split is not None and split not in SPLITS:
        raise InputError(f"scene {entry_id}: split must be one of {SPLITS}, got {split!r}")
    entry = SceneEntry(
        scene_id=entry_id,
        mask=_resolve(base, raw["mask"]),
        label=str(raw["label"]),
        corners=_corners(entry_id, raw["corners"], base, board.n_corners),
        volume_ml=_positive(entry_id, "volume_ml", raw.get("volume_ml")),
        energy_kcal=_positive(entry_id, "energy_kcal", raw.get("energy_kcal")),
        weight_g=_positive(entry_id, "weight_g", raw.get("weight_g"), required=False),
        image=_resolve(base, raw.get("image")),
        split=split,
    )
    if check_files:
        if not entry.mask.is_file():
            raise InputError(f"scene {entry_id}: mask not found: {entry.mask}")
        if entry.image is not None and not entry.image.is_file():
            raise InputError(f"scene {entry_id}: image not found: {entry.image}")
    return entry


def load_manifest(path, *, mesh_db=None, check_files: bool = True) -> Manifest:
    """Read and validate a manifest; every error names the offending scene.

    ``mesh_db`` (relative to the working directory) overrides the manifest's
    mesh directory.
    """
    path = Path(path)
    try:
        data = json.loads(path.read_text())
    except FileNotFoundError:
        raise InputError(f"manifest not found: {path}") from None
    except ValueError as exc:
        raise InputError(f"cannot parse manifest {path}: {exc}") from None
    if isinstance(data, list):
        data = {"scenes": data}
    if not isinstance(data, dict) or not isinstance(data.get("scenes", []), list):
        raise InputError(f"{path}: expected an object with a 'scenes' list")
    base = path.parent
    board = BoardSpec.from_dict(data.get("board"))
    K = data.get("intrinsics")
    if isinstance(K, dict):
        K = CameraIntrinsics.from_dict(K)
    elif K is not None:
        K = load_intrinsics(_resolve(base, K))
    manifest = Manifest(
        path=path,
        entries=[],
        intrinsics=K,
        mesh_db=Path(mesh_db) if mesh_db else _resolve(base, data.get("mesh_db")),
        density=_resolve(base, data.get("density")),
        mesh_units={str(k): float(v) for k, v in (data.get("mesh_units") or {}).items()},
        board=board,
    )
    seen = set()
    for raw in data.get("scenes", []):
        if not isinstance(raw, dict):
            raise InputError(f"{path}: scene entries must be objects")
        entry = parse_entry(raw, base, board, check_files)
        if entry.scene_id in seen:
            raise InputError(f"scene {entry.scene_id}: duplicate id")
        seen.add(entry.scene_id)
        manifest.entries.append(entry)
    if not manifest.entries:
        logger.warning("manifest %s has no scenes", path)
    if manifest.mesh_db is not None and manifest.entries:
        if not manifest.mesh_db.is_dir():
            raise InputError(f"mesh database directory not found: {manifest.mesh_db}")
        for e in manifest.entries:
            if not (manifest.mesh_db / f"{e.label}.obj").is_file():
                raise InputError(f"scene {e.scene_id}: label {e.label!r} has no mesh in {manifest.mesh_db}")
    return manifest


def write_manifest(manifest: dict, path) -> None:
    atomic_write(path, json.dumps(manifest, indent=2) + "\n")


def atomic_write(path, text: str) -> None:
    path = Path(path)
    tmp = path.with_name(f".{path.name}.tmp")
    tmp.write_text(text)
    os.replace(tmp, path)


# -- metrics -----------------------------------------------------------------

def _abs_errors(truth: float, estimate: float) -> tuple[float, float]:
    """(|e - t|, 100 |e - t| / t)."""
    err = abs(estimate - truth)
    return err, 100.0 * err / truth


def compute_metrics(pairs: Iterable[tuple[float, float]]) -> tuple[float, float]:
    """(MAE, MAPE in %) over ``(truth, estimate)`` pairs.

    Sums use ``math.fsum``, which is correctly rounded, so the result does not
    depend on the pair order.
    """
    pairs = list(pairs)
    if not pairs:
        raise InsufficientDataError("metrics need at least one (truth, estimate) pair")
    abs_err, pct = [], []
    for truth, est in pairs:
        if not truth > 0:
            raise InputError(f"MAPE undefined for non-positive ground truth {truth!r}")
        a, p = _abs_errors(float(truth), float(est))
        abs_err.append(a)
        pct.append(p)
    n = len(pairs)
    return math.fsum(abs_err) / n, math.fsum(pct) / n


@dataclass
class MetricsReport:
    vmae: float
    vmape: float
    emae: float
    emape: float
    n: int
    n_failed: int = 0
    method: str = "pipeline"
    ablation: str = "none"
    per_food: dict[str, "MetricsReport"] = field(default_factory=dict)
    failed: list[dict] = field(default_factory=list)

    @classmethod
    def from_predictions(cls, rows: Sequence[tuple[str, float, float, float, float]], **kw) -> "MetricsReport":
        """``rows`` are (label, true volume, est volume, true energy, est energy)."""
        vmae, vmape = compute_metrics([(r[1], r[2]) for r in rows])
        emae, emape = compute_metrics([(r[3], r[4]) for r in rows])
        per_food = {}
        if kw.pop("breakdown", True):
            for label in sorted({r[0] for r in rows}):
                sub = [r for r in rows if r[0] == label]
                per_food[label] = cls.from_predictions(
                    sub, breakdown=False, method=kw.get("method", "pipeline"),
                    ablation=kw.get("ablation", "none"),
                )
        return cls(vmae, vmape, emae, emape, len(rows), per_food=per_food, **kw)

    def to_dict(self) -> dict:
        out = {
            "method": self.method,
            "ablation": self.ablation,
            "n": self.n,
            "n_failed": self.n_failed,
            "vmae_ml": self.vmae,
            "vmape_pct": self.vmape,
            "emae_kcal": self.emae,
            "emape_pct": self.emape,
        }
        if self.per_food:
            out["per_food"] = {k: v.to_dict() for k, v in self.per_food.items()}
        if self.failed:
            out["failed"] = self.failed
        return out

    def table(self) -> str:
        """Fixed-width text table: overall row first, then one row per food."""
        head = f"{'food':<16}{'N':>5}{'VMAE(mL)':>11}{'VMAPE(%)':>10}{'EMAE(kCal)':>12}{'EMAPE(%)':>10}"

        def row(name, r):
            return f"{name:<16}{r.n:>5}{r.vmae:>11.2f}{r.vmape:>10.2f}{r.emae:>12.2f}{r.emape:>10.2f}"

        lines = [f"{self.method} (ablation: {self.ablation})", head, row("all", self)]
        lines += [row(k, v) for k, v in self.per_food.items()]
        if self.n_failed:
            lines.append(f"failed scenes: {self.n_failed}")
        return "\n".join(lines)


def baseline_predictor(entries: Sequence[SceneEntry], kind: str = "volume",
                       reference: Sequence[SceneEntry] | None = None) -> list[float]:
    """Predict the mean ground truth of ``reference`` (default: ``entries``) for every entry."""
    if kind not in ("volume", "energy"):
        raise InputError(f"baseline field must be 'volume' or 'energy', got {kind!r}")
    ref = entries if reference is None else reference
    if not entries or not ref:
        raise InsufficientDataError("baseline needs at least one entry")
    mean = math.fsum(e.truth(kind) for e in ref) / len(ref)
    return [mean] * len(entries)


def evaluate_baseline(entries: Sequence[SceneEntry], reference: Sequence[SceneEntry] | None = None) -> MetricsReport:
    vol = baseline_predictor(entries, "volume", reference)
    en = baseline_predictor(entries, "energy", reference)
    rows = [(e.label, e.volume_ml, v, e.energy_kcal, k) for e, v, k in zip(entries, vol, en)]
    return MetricsReport.from_predictions(rows, method="baseline")


def split_dataset(entries: Sequence[SceneEntry], test_fraction: float = 0.2, seed: int = 0):
    """Stratified per-label split, deterministic for a fixed seed.

    Each label keeps ``round(test_fraction * n)`` test entries, clamped so both
    sides get at least one. Output order follows the input order.
    """
    if not 0 < test_fraction < 1:
        raise InputError(f"test fraction must be in (0, 1), got {test_fraction}")
    by_label: dict[str, list[int]] = {}
    for i, e in enumerate(entries):
        by_label.setdefault(e.label, []).append(i)
    rng = np.random.default_rng(seed)
    test_idx = set()
    for label in sorted(by_label):
        idx = by_label[label]
        if len(idx) < 2:
            raise InsufficientDataError(f"label {label!r} has {len(idx)} entry; stratified split needs 2")
        k = min(max(int(round(test_fraction * len(idx))), 1), len(idx) - 1)
        test_idx.update(idx[j] for j in rng.permutation(len(idx))[:k])
    train = [e for i, e in enumerate(entries) if i not in test_idx]
    test = [e for i, e in enumerate(entries) if i in test_idx]
    return train, test


def tagged_split(entries: Sequence[SceneEntry]):
    """Split from the manifest's own ``split`` tags; None if any entry lacks one."""
    if not entries or any(e.split is None for e in entries):
        return None
    return [e for e in entries if e.split == "train"], [e for e in entries if e.split == "test"]


# -- evaluation ----------------------------------------------------------------

CSV_COLUMNS = (
    "scene_id", "label", "status", "area_input", "area_rendered", "scale",
    "volume_ml", "energy_kcal", "true_volume_ml", "true_energy_kcal",
    "volume_abs_error", "volume_ape_pct", "energy_abs_error", "energy_ape_pct",
    "error_stage", "error_message",
)

_WORKER: dict = {}


def _init_worker(mesh_db, K, densities, config):
    _WORKER.update(mesh_db=mesh_db, K=K, densities=densities, config=config)


def _run_one(entry: SceneEntry) -> EstimateRecord:
    w = _WORKER
    return run_pipeline(entry.to_scene(), w["mesh_db"], w["K"], w["densities"], w["config"])


def run_scenes(entries, mesh_db, K, densities, config, jobs: int = 1) -> list[EstimateRecord]:
    """Records in input order, whatever the degree of parallelism."""
    if jobs <= 1 or len(entries) < 2:
        _init_worker(mesh_db, K, densities, config)
        return [_run_one(e) for e in entries]
    with ProcessPoolExecutor(max_workers=jobs, initializer=_init_worker,
                             initargs=(mesh_db, K, densities, config)) as pool:
        return list(pool.map(_run_one, entries, chunksize=max(1, len(entries) // (4 * jobs))))


def _fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, float):
        return repr(x)
    return str(x)


def scene_rows(entries: Sequence[SceneEntry], records: Sequence[EstimateRecord]) -> list[dict]:
    rows = []
    for e, r in zip(entries, records):
        row = {
            "scene_id": e.scene_id, "label": e.label, "status": r.status,
            "area_input": r.area_input, "area_rendered": r.area_rendered, "scale": r.scale,
            "volume_ml": r.volume_ml, "energy_kcal": r.energy_kcal,
            "true_volume_ml": e.volume_ml, "true_energy_kcal": e.energy_kcal,
            "volume_abs_error": None, "volume_ape_pct": None,
            "energy_abs_error": None, "energy_ape_pct": None,
            "error_stage": r.error_stage, "error_message": r.error_message,
        }
        if r.ok:
            row["volume_abs_error"], row["volume_ape_pct"] = _abs_errors(e.volume_ml, r.volume_ml)
            row["energy_abs_error"], row["energy_ape_pct"] = _abs_errors(e.energy_kcal, r.energy_kcal)
        rows.append(row)
    return rows


def rows_to_csv(rows: Sequence[dict]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for row in rows:
        w.writerow([_fmt(row[c]) for c in CSV_COLUMNS])
    return buf.getvalue()


def evaluate(entries: Sequence[SceneEntry], mesh_db: MeshDatabase, K: CameraIntrinsics,
             densities: EnergyDensityTable, config: RunConfig | None = None, *,
             jobs: int = 1, csv_path=None):
    """Run the pipeline over ``entries``; returns ``(report, records)``.

    Failed scenes are excluded from the metrics and listed in the report.
    Raises EvaluationError when no scene succeeds.
    """
    config = config or RunConfig()
    entries = list(entries)
    if not entries:
        raise InsufficientDataError("nothing to evaluate: no scenes")
    records = run_scenes(entries, mesh_db, K, densities, config, jobs)
    rows = scene_rows(entries, records)
    if csv_path is not None:
        atomic_write(csv_path, rows_to_csv(rows))
    good = [(e.label, e.volume_ml, r.volume_ml, e.energy_kcal, r.energy_kcal)
            for e, r in zip(entries, records) if r.ok]
    failed = [{"scene_id": r.scene_id, "stage": r.error_stage, "type": r.error_type,
               "message": r.error_message} for r in records if not r.ok]
    if not good:
        raise EvaluationError(
            f"all {len(entries)} scenes failed; first: {failed[0]['scene_id']} "
            f"at {failed[0]['stage']}: {failed[0]['message']}"
        )
    for f in failed:
        logger.warning("scene %s failed at %s: %s", f["scene_id"], f["stage"], f["message"])
    report = MetricsReport.from_predictions(good, ablation=config.ablation.tag)
    report.n_failed = len(failed)
    report.failed = failed
    return report, records


def evaluate_ablations(entries, mesh_db, K, densities, config: RunConfig | None = None, *,
                       rows: Sequence[Ablation] = ABLATION_ROWS, jobs: int = 1):
    """One report per ablation row, in row order."""
    config = config or RunConfig()
    out = []
    for abl in rows:
        cfg = replace(config, ablation=abl)
        out.append(evaluate(entries, mesh_db, K, densities, cfg, jobs=jobs)[0])
    return out


# -- annotation conversion ------------------------------------------------------

def convert_annotation_csv(csv_path, out_path, *, corner_origin: str = "top-right",
                           board: BoardSpec = BoardSpec(), **shared) -> dict:
    """Build a manifest from a flat CSV, one row per image.

    Expected columns: ``id, image, mask, label, volume_ml, weight_g,
    energy_kcal`` and optionally ``split``, plus ``u0, v0 .. u11, v11`` for
    the corners in row-major order. Set ``corner_origin="top-left"`` when the
    annotator started each row at the left. ``shared`` keys (intrinsics,
    mesh_db, density, mesh_units) are copied into the manifest header.
    """
    if corner_origin not in ("top-right", "top-left"):
        raise InputError(f"corner origin must be 'top-right' or 'top-left', got {corner_origin!r}")
    n = board.n_corners
    scenes = []
    with Path(csv_path).open(newline="") as fh:
        for line, row in enumerate(csv.DictReader(fh), 2):
            try:
                pts = [[float(row[f"u{i}"]), float(row[f"v{i}"])] for i in range(n)]
            except (KeyError, TypeError, ValueError):
                raise InputError(f"{csv_path}:{line}: need numeric columns u0,v0 .. u{n - 1},v{n - 1}") from None
            if corner_origin == "top-left":
                grid = np.asarray(pts).reshape(board.rows, board.cols, 2)[:, ::-1]
                pts = grid.reshape(-1, 2).tolist()
            scene = {k: row.get(k) or None for k in ("id", "image", "mask", "label", "split")}
            for k in ("volume_ml", "weight_g", "energy_kcal"):
                scene[k] = float(row[k]) if row.get(k) else None
            scene["corners"] = pts
            scenes.append(scene)
    manifest = {k: v for k, v in shared.items() if v is not None}
    manifest["board"] = board.to_dict()
    manifest["scenes"] = scenes
    write_manifest(manifest, out_path)
    return manifest


def load_schema(name: str) -> dict:
    """Shipped JSON schema: ``estimate_record``, ``report`` or ``manifest``."""
    from importlib import resources

    try:
        text = (resources.files("monovol") / "schemas" / f"{name}.json").read_text()
    except FileNotFoundError:
        raise InputError(f"no schema named {name!r}") from None
    return json.loads(text)
