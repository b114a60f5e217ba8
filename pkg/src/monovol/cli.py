"""Command-line interface: ``monovol {estimate,evaluate,synth,render}``.

Exit codes: 0 success, 2 input or validation, 3 geometry, 4 render,
5 evaluation. The default mesh directory comes from ``MONOVOL_MESH_DB``.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import os
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__
from .dataset import (
    SceneEntry,
    atomic_write,
    evaluate,
    evaluate_baseline,
    load_manifest,
    split_dataset,
    tagged_split,
    write_manifest,
)
from .errors import EXIT_OK, InputError, MonovolError
from .estimate import EnergyDensityTable, RunConfig, Scene, load_config, run_pipeline
from .geometry import BoardSpec, CameraIntrinsics, load_intrinsics, solve_pnp
from .mesh import MeshDatabase, apply_object_pose, canonicalize, load_mesh
from .objectpose import ABLATION_ROWS, Ablation, ObjectPose, save_mask, wrap_half_turn
from .render import projection_matrix, render_silhouette
from .shapes import FIXTURES, fixture
from .synth import (
    DEFAULT_INTRINSICS,
    PHONE_INTRINSICS,
    canonical_scene,
    random_scene,
    write_scene,
)

logger = logging.getLogger("monovol")

MESH_DB_ENV = "MONOVOL_MESH_DB"


def _dump(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=False) + "\n"


def _read_corners(path) -> np.ndarray:
    path = Path(path)
    try:
        data = json.loads(path.read_text())
    except FileNotFoundError:
        raise InputError(f"corner file not found: {path}") from None
    except ValueError as exc:
        raise InputError(f"cannot parse corner file {path}: {exc}") from None
    if isinstance(data, dict):
        data = data.get("corners")
    try:
        return np.asarray(data, dtype=float).reshape(-1, 2)
    except (TypeError, ValueError):
        raise InputError(f"{path}: corners must be a list of [u, v] pairs") from None


def _run_config(args) -> RunConfig:
    cfg = load_config(args.config) if args.config else RunConfig()
    changes = {}
    ablate = getattr(args, "ablate", None)
    if ablate and ablate != "sweep":
        changes["ablation"] = Ablation.parse(ablate)
    if getattr(args, "refine", None) is not None:
        if args.refine < 0:
            raise InputError("--refine must be >= 0")
        changes["refine_iterations"] = args.refine
    if getattr(args, "debug", False):
        changes["debug_render"] = True
    if getattr(args, "overlay", False):
        changes["overlay"] = True
    if getattr(args, "output_dir", None):
        changes["output_dir"] = str(args.output_dir)
    return replace(cfg, **changes)


def _mesh_db(path, units=None) -> MeshDatabase:
    root = path or os.environ.get(MESH_DB_ENV)
    if not root:
        raise InputError(f"no mesh database: pass --mesh-db or set {MESH_DB_ENV}")
    return MeshDatabase(root, units)


# -- estimate ------------------------------------------------------------------

def cmd_estimate(args) -> int:
    config = _run_config(args)
    if args.manifest:
        manifest = load_manifest(args.manifest, mesh_db=args.mesh_db, check_files=False)
        matches = [e for e in manifest if e.scene_id == args.scene]
        if not matches:
            raise InputError(f"scene {args.scene!r} not in {args.manifest}")
        entry: SceneEntry = matches[0]
        mask = args.mask or entry.mask
        corners = _read_corners(args.corners) if args.corners else entry.corners
        label = args.label or entry.label
        image = args.image or (str(entry.image) if entry.image else None)
        K = load_intrinsics(args.intrinsics) if args.intrinsics else manifest.intrinsics
        db = manifest.open_mesh_db(args.mesh_db)
        densities = manifest.load_densities(args.density)
        config = replace(config, board=manifest.board)
        scene_id = entry.scene_id
    else:
        missing = [f for f in ("mask", "corners", "intrinsics", "density", "label") if not getattr(args, f)]
        if missing:
            raise InputError("estimate needs --" + ", --".join(missing) + " (or --manifest with --scene)")
        mask, label, image = args.mask, args.label, args.image
        corners = _read_corners(args.corners)
        K = load_intrinsics(args.intrinsics)
        db = _mesh_db(args.mesh_db)
        densities = EnergyDensityTable.load(args.density)
        scene_id = args.scene or Path(mask).stem
    if K is None:
        raise InputError("no camera intrinsics: pass --intrinsics")
    if not Path(mask).is_file():
        raise InputError(f"mask file not found: {mask}")
    record = run_pipeline(Scene(scene_id, label, str(mask), corners, image), db, K, densities, config)
    text = _dump(record.to_dict())
    if args.output:
        atomic_write(args.output, text)
    sys.stdout.write(text)
    if not record.ok:
        print(f"error in stage {record.error_stage}: {record.error_message}", file=sys.stderr)
    return record.exit_code


# -- evaluate ------------------------------------------------------------------

def cmd_evaluate(args) -> int:
    manifest = load_manifest(args.manifest, mesh_db=args.mesh_db)
    entries = list(manifest)
    if not entries:
        raise InputError(f"manifest {args.manifest} has no scenes")
    K = load_intrinsics(args.intrinsics) if args.intrinsics else manifest.intrinsics
    if K is None:
        raise InputError("no camera intrinsics: set them in the manifest or pass --intrinsics")
    db = manifest.open_mesh_db(args.mesh_db)
    densities = manifest.load_densities(args.density)
    config = replace(_run_config(args), board=manifest.board)

    if args.split_seed is not None:
        split = split_dataset(entries, args.test_fraction, args.split_seed)
    else:
        split = tagged_split(entries)
    if args.test_only:
        if split is None:
            raise InputError("--test-only needs --split-seed or split tags on every scene")
        entries = split[1]
    reference = split[0] if split is not None else None
    if reference is not None and not reference:
        logger.warning("train split is empty; the baseline predicts the evaluated scenes' own mean")
        reference = None

    out = Path(args.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    rows = ABLATION_ROWS if args.ablate == "sweep" else (config.ablation,)
    baseline = evaluate_baseline(entries, reference)
    for abl in rows:
        cfg = replace(config, ablation=abl)
        suffix = "" if len(rows) == 1 else f"_{abl.tag}"
        report, _ = evaluate(entries, db, K, densities, cfg, jobs=args.jobs,
                             csv_path=out / f"scenes{suffix}.csv")
        payload = {
            "manifest": str(args.manifest),
            "split": {
                "seed": args.split_seed,
                "test_fraction": args.test_fraction if args.split_seed is not None else None,
                "test_only": bool(args.test_only),
                "source": "seed" if args.split_seed is not None else ("tags" if split else None),
            },
            "config": cfg.to_dict(),
            "reports": [report.to_dict(), baseline.to_dict()],
        }
        atomic_write(out / f"report{suffix}.json", _dump(payload))
        table = report.table() + "\n\n" + baseline.table() + "\n"
        atomic_write(out / f"report{suffix}.txt", table)
        print(table)
    return EXIT_OK


# -- synth -----------------------------------------------------------------------

def _load_synth_mesh(spec: str):
    if spec in FIXTURES:
        return fixture(spec), spec
    path = Path(spec)
    if not path.is_file():
        raise InputError(f"--mesh must be one of {sorted(FIXTURES)} or an OBJ path, got {spec!r}")
    return load_mesh(path), path.stem


def cmd_synth(args) -> int:
    mesh, default_label = _load_synth_mesh(args.mesh)
    label = args.label or default_label
    if not args.scale > 0:
        raise InputError(f"--scale must be positive, got {args.scale}")
    if not args.density > 0:
        raise InputError(f"--density must be positive, got {args.density}")
    if args.count < 1:
        raise InputError(f"--count must be >= 1, got {args.count}")
    out = Path(args.out)
    entries = []
    if args.random:
        K = load_intrinsics(args.intrinsics) if args.intrinsics else DEFAULT_INTRINSICS
        rng = np.random.default_rng(args.seed)
        for i in range(args.count):
            scene = random_scene(mesh, args.scale, rng, K)
            entries.append(write_scene(scene, out, f"{label}_{args.seed}_{i:03d}", label, args.density))
    else:
        if args.count != 1:
            raise InputError("--count needs --random")
        K = load_intrinsics(args.intrinsics) if args.intrinsics else PHONE_INTRINSICS
        pitch = args.pitch
        if not 0 < pitch < 90:
            raise InputError(f"--pitch must be in (0, 90) degrees, got {pitch}")
        if not args.height > 0:
            raise InputError(f"--height must be positive, got {args.height}")
        scene = canonical_scene(mesh, args.scale, K, height=args.height, pitch_deg=pitch)
        entries.append(write_scene(scene, out, f"{label}_canonical", label, args.density))
    EnergyDensityTable({label: args.density}).write(out / "density.csv", {label: "synthetic"})
    manifest = {
        "intrinsics": "intrinsics.json",
        "mesh_db": "meshes",
        "density": "density.csv",
        "board": scene.board.to_dict(),
        "scenes": entries,
    }
    write_manifest(manifest, out / "manifest.json")
    for e in entries:
        print(f"{e['id']}: true volume {e['volume_ml']:.4f} mL -> {out / e['mask']}")
    return EXIT_OK


# -- render ----------------------------------------------------------------------

def cmd_render(args) -> int:
    """Render a mesh at a given object pose through the camera the corners imply."""
    K: CameraIntrinsics = load_intrinsics(args.intrinsics)
    if K.image_width is None or K.image_height is None:
        raise InputError("intrinsics must carry image_width and image_height to render")
    if args.label:
        mesh, _ = _mesh_db(args.mesh_db).get(args.label)
    else:
        mesh = canonicalize(_load_synth_mesh(args.mesh)[0])
    corners = _read_corners(args.corners)
    pnp = solve_pnp((BoardSpec().world_points(), corners), K)
    tx, ty, theta = args.pose
    pose = ObjectPose(tx, ty, wrap_half_turn(math.radians(theta)))
    sil = render_silhouette(apply_object_pose(mesh, pose, args.scale),
                            projection_matrix(K, pnp.extrinsics), K.image_width, K.image_height)
    save_mask(sil, args.out)
    print(f"{args.out}: {sil.area} px, PnP residual {pnp.mean_error:.3g} px")
    return EXIT_OK


# -- parser ----------------------------------------------------------------------

def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--mesh-db", help=f"directory of <label>.obj meshes (default: ${MESH_DB_ENV})")
    p.add_argument("--density", help="energy density CSV (label, kcal_per_ml, source)")
    p.add_argument("--intrinsics", help="camera intrinsics JSON")
    p.add_argument("--config", help="run config (TOML or JSON)")
    p.add_argument("--refine", type=int, help="refinement iterations (0 = single render)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="monovol", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("estimate", help="estimate volume and energy for one image")
    _common(p)
    p.add_argument("--image", help="RGB image (only needed for overlays)")
    p.add_argument("--mask", help="binary mask PNG")
    p.add_argument("--corners", help="JSON file with 12 [u, v] corner pixels")
    p.add_argument("--label", help="food label (mesh and density key)")
    p.add_argument("--manifest", help="take scene inputs from this manifest")
    p.add_argument("--scene", help="scene id (with --manifest) or record id")
    p.add_argument("--ablate", help="comma list of zero_tx, zero_ty, zero_theta")
    p.add_argument("--debug", action="store_true", help="write the rendered silhouette PNG")
    p.add_argument("--overlay", action="store_true", help="draw the render over --image")
    p.add_argument("--output-dir", help="directory for debug PNGs")
    p.add_argument("-o", "--output", help="also write the record JSON here")
    p.set_defaults(func=cmd_estimate)

    p = sub.add_parser("evaluate", help="evaluate a manifest and write metrics")
    _common(p)
    p.add_argument("manifest")
    p.add_argument("--split-seed", type=int, help="stratified split with this seed")
    p.add_argument("--test-fraction", type=float, default=0.2)
    p.add_argument("--test-only", action="store_true", help="evaluate the test split only")
    p.add_argument("--ablate", help="comma list of flags, or 'sweep' for every ablation row")
    p.add_argument("--jobs", type=int, default=os.cpu_count() or 1)
    p.add_argument("--output-dir", default="monovol-eval")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("synth", help="generate a synthetic scene with a known answer")
    p.add_argument("--mesh", default="cube", help=f"fixture ({', '.join(sorted(FIXTURES))}) or OBJ path")
    p.add_argument("--label")
    p.add_argument("--scale", type=float, default=1.0)
    p.add_argument("--random", action="store_true", help="random camera and object pose")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--count", type=int, default=1, help="number of random scenes")
    p.add_argument("--height", type=float, default=50.0, help="camera height in cm (canonical scene)")
    p.add_argument("--pitch", type=float, default=45.0, help="camera pitch in degrees (canonical scene)")
    p.add_argument("--density", type=float, default=1.0, help="kCal per mL written to density.csv")
    p.add_argument("--intrinsics")
    p.add_argument("--out", default="synthetic")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("render", help="render a mesh silhouette for debugging")
    p.add_argument("--mesh", default="cube")
    p.add_argument("--label", help="take the mesh from the mesh database instead")
    p.add_argument("--mesh-db")
    p.add_argument("--intrinsics", required=True)
    p.add_argument("--corners", required=True)
    p.add_argument("--pose", type=float, nargs=3, default=(0.0, 0.0, 0.0),
                   metavar=("TX", "TY", "THETA_DEG"))
    p.add_argument("--scale", type=float, default=1.0)
    p.add_argument("--out", default="render.png")
    p.set_defaults(func=cmd_render)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.WARNING - 10 * min(args.verbose, 2),
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return args.func(args)
    except MonovolError as exc:
        stage = getattr(exc, "stage", None)
        where = f" in stage {stage}" if stage else ""
        print(f"monovol: {type(exc).__name__}{where}: {exc}", file=sys.stderr)
        return exc.exit_code


if __name__ == "__main__":
    sys.exit(main())
