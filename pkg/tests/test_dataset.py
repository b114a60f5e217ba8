import csv
import json
import logging
import random
from pathlib import Path

import jsonschema
import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from monovol.dataset import (
    CSV_COLUMNS,
    MetricsReport,
    SceneEntry,
    baseline_predictor,
    compute_metrics,
    convert_annotation_csv,
    evaluate,
    evaluate_baseline,
    load_manifest,
    load_schema,
    split_dataset,
    tagged_split,
)
from monovol.errors import EvaluationError, InputError, InsufficientDataError
from monovol.estimate import EnergyDensityTable
from monovol.geometry import BoardSpec
from monovol.mesh import MeshDatabase
from monovol.shapes import cube, icosphere
from monovol.synth import DEFAULT_INTRINSICS, random_scene, write_scene

# -- metrics -----------------------------------------------------------------------


@pytest.mark.parametrize("pairs,mae,mape", [
    ([(100, 90)], 10.0, 10.0),
    ([(100, 110), (50, 40)], 10.0, 15.0),
    ([(200, 200), (10, 20), (40, 30)], 20 / 3, 125 / 3),
    ([(1, 0)], 1.0, 100.0),
])
def test_metric_examples(pairs, mae, mape):
    got = compute_metrics(pairs)
    assert got[0] == pytest.approx(mae, rel=1e-15)
    assert got[1] == pytest.approx(mape, rel=1e-15)


def test_metrics_against_brute_force():
    r = random.Random(3)
    pairs = [(r.uniform(1, 500), r.uniform(0, 600)) for _ in range(1000)]
    mae = sum(abs(e - t) for t, e in pairs) / len(pairs)
    mape = sum(100 * abs(e - t) / t for t, e in pairs) / len(pairs)
    got = compute_metrics(pairs)
    assert got[0] == pytest.approx(mae, rel=1e-12)
    assert got[1] == pytest.approx(mape, rel=1e-12)


@given(st.lists(st.tuples(st.floats(0.01, 1e4), st.floats(0, 1e4)), min_size=1, max_size=40), st.randoms())
def test_metrics_are_order_independent(pairs, r):
    shuffled = pairs[:]
    r.shuffle(shuffled)
    assert compute_metrics(pairs) == compute_metrics(shuffled)


def test_metric_errors():
    with pytest.raises(InsufficientDataError):
        compute_metrics([])
    with pytest.raises(InputError, match="non-positive"):
        compute_metrics([(0.0, 1.0)])


def entry(i, label, volume, energy=None, split=None):
    return SceneEntry(f"s{i}", Path(f"m{i}.png"), label, np.zeros((12, 2)), volume,
                      energy if energy is not None else 2 * volume, split=split)


def test_report_breakdown_and_table():
    rows = [("a", 100, 90, 200, 180), ("a", 100, 110, 200, 220), ("b", 50, 50, 100, 100)]
    rep = MetricsReport.from_predictions(rows)
    assert rep.n == 3 and rep.vmae == pytest.approx(20 / 3)
    assert rep.per_food["a"].vmape == pytest.approx(10.0)
    assert rep.per_food["b"].emae == 0.0
    text = rep.table().splitlines()
    assert text[2].split()[:2] == ["all", "3"] and text[3].startswith("a")
    schema = load_schema("report")
    jsonschema.validate(rep.to_dict(), {"$defs": schema["$defs"], "$ref": "#/$defs/metrics"})


def test_baseline_predicts_reference_mean():
    train = [entry(0, "a", 100), entry(1, "a", 300)]
    test = [entry(2, "a", 150), entry(3, "b", 250)]
    assert baseline_predictor(test, "volume", train) == [200.0, 200.0]
    rep = evaluate_baseline(test, train)
    assert rep.vmae == pytest.approx(50.0) and rep.emae == pytest.approx(100.0)
    assert rep.vmape == pytest.approx((100 * 50 / 150 + 100 * 50 / 250) / 2)
    assert rep.method == "baseline"
    with pytest.raises(InsufficientDataError):
        baseline_predictor(test, "volume", [])
    with pytest.raises(InputError):
        baseline_predictor(test, "weight")


# -- splits ------------------------------------------------------------------------

def labelled(counts):
    out, i = [], 0
    for label, n in counts.items():
        for _ in range(n):
            out.append(entry(i, label, 10.0 + i))
            i += 1
    return out


def test_split_is_stratified_and_deterministic():
    entries = labelled({"rice": 10, "apple": 10, "egg": 3})
    train, test = split_dataset(entries, 0.2, seed=5)
    per = {k: sum(e.label == k for e in test) for k in ("rice", "apple", "egg")}
    assert per == {"rice": 2, "apple": 2, "egg": 1}
    assert {e.scene_id for e in train} | {e.scene_id for e in test} == {e.scene_id for e in entries}
    assert not {e.scene_id for e in train} & {e.scene_id for e in test}
    again = split_dataset(entries, 0.2, seed=5)
    assert [e.scene_id for e in again[1]] == [e.scene_id for e in test]
    assert [e.scene_id for e in split_dataset(entries, 0.2, seed=6)[1]] != [e.scene_id for e in test]
    order = [e.scene_id for e in entries]
    assert [e.scene_id for e in test] == [s for s in order if s in {e.scene_id for e in test}]


def test_split_errors():
    with pytest.raises(InsufficientDataError, match="lonely"):
        split_dataset(labelled({"a": 4, "lonely": 1}))
    with pytest.raises(InputError):
        split_dataset(labelled({"a": 4}), 1.0)


def test_tagged_split():
    es = [entry(0, "a", 1, split="train"), entry(1, "a", 2, split="test")]
    assert [len(x) for x in tagged_split(es)] == [1, 1]
    assert tagged_split(es + [entry(2, "a", 3)]) is None


# -- manifests ---------------------------------------------------------------------

@pytest.fixture(scope="module")
def synth_dir(tmp_path_factory):
    """Three synthetic scenes (two cubes, one sphere) with a manifest and unit densities."""
    out = tmp_path_factory.mktemp("synth")
    rng = np.random.default_rng(21)
    scenes = []
    for i, (mesh, k) in enumerate([(cube(), 1.0), (cube(), 1.3), (icosphere(3, label="ball"), 0.7)]):
        syn = random_scene(mesh, k, rng, DEFAULT_INTRINSICS)
        scenes.append(write_scene(syn, out, f"sc{i}", density=1.0))
    EnergyDensityTable({"cube": 1.0, "ball": 1.0}).write(out / "density.csv")
    manifest = {"intrinsics": "intrinsics.json", "mesh_db": "meshes", "density": "density.csv",
                "scenes": scenes}
    (out / "manifest.json").write_text(json.dumps(manifest))
    return out


def test_manifest_loads(synth_dir):
    m = load_manifest(synth_dir / "manifest.json")
    assert len(m) == 3 and m[2].label == "ball"
    assert m.intrinsics == DEFAULT_INTRINSICS
    assert m[0].mask == synth_dir / "masks" / "sc0.png"
    assert m.open_mesh_db().labels() == ["ball", "cube"]
    jsonschema.validate(json.loads((synth_dir / "manifest.json").read_text()), load_schema("manifest"))


def write_manifest_file(tmp_path, scenes, **head):
    p = tmp_path / "m.json"
    p.write_text(json.dumps({**head, "scenes": scenes}))
    return p


def test_manifest_validation(tmp_path, caplog):
    (tmp_path / "a.png").write_bytes(b"")
    good = {"id": "x1", "mask": "a.png", "label": "rice", "corners": [[0, 0]] * 12,
            "volume_ml": 10, "energy_kcal": 12}
    assert len(load_manifest(write_manifest_file(tmp_path, [good]))) == 1
    cases = [
        ({"corners": [[0, 0]] * 11}, "x1: expected 12 corners, got 11"),
        ({"volume_ml": -1}, "x1: volume_ml must be positive"),
        ({"energy_kcal": None}, "x1: missing energy_kcal"),
        ({"mask": "none.png"}, "x1: mask not found"),
        ({"split": "val"}, "x1: split"),
        ({"corners": "c.json"}, "corner file not found"),
    ]
    for change, msg in cases:
        with pytest.raises(InputError, match=msg):
            load_manifest(write_manifest_file(tmp_path, [{**good, **change}]))
    with pytest.raises(InputError, match="duplicate"):
        load_manifest(write_manifest_file(tmp_path, [good, good]))
    (tmp_path / "meshes").mkdir()
    with pytest.raises(InputError, match="'rice' has no mesh"):
        load_manifest(write_manifest_file(tmp_path, [good], mesh_db="meshes"))
    with caplog.at_level(logging.WARNING):
        assert len(load_manifest(write_manifest_file(tmp_path, []))) == 0
    assert "no scenes" in caplog.text
    with pytest.raises(InputError, match="not found"):
        load_manifest(tmp_path / "missing.json")


def test_converter_flips_left_origin(tmp_path):
    board = BoardSpec()
    grid = [[float(c), float(10 * r)] for r in range(board.rows) for c in range(board.cols)]
    header = ["id", "mask", "label", "volume_ml", "energy_kcal"]
    header += [f"{a}{i}" for i in range(12) for a in "uv"]
    row = ["a", "a.png", "rice", "5", "6"] + [str(x) for p in grid for x in p]
    (tmp_path / "ann.csv").write_text(",".join(header) + "\n" + ",".join(row) + "\n")
    m = convert_annotation_csv(tmp_path / "ann.csv", tmp_path / "out.json", corner_origin="top-left",
                               density="d.csv")
    assert m["density"] == "d.csv"
    assert m["scenes"][0]["corners"][:4] == [[3.0, 0.0], [2.0, 0.0], [1.0, 0.0], [0.0, 0.0]]
    same = convert_annotation_csv(tmp_path / "ann.csv", tmp_path / "o2.json")
    assert same["scenes"][0]["corners"] == grid
    assert json.loads((tmp_path / "out.json").read_text()) == m


# -- evaluation ----------------------------------------------------------------------

def test_evaluate_matches_hand_aggregation(synth_dir, tmp_path):
    m = load_manifest(synth_dir / "manifest.json")
    db = m.open_mesh_db()
    report, records = evaluate(m.entries, db, m.intrinsics, m.load_densities(), jobs=1,
                               csv_path=tmp_path / "s.csv")
    assert report.n == 3 and report.n_failed == 0
    errs = [abs(r.volume_ml - e.volume_ml) for e, r in zip(m, records)]
    assert report.vmae == pytest.approx(sum(errs) / 3, rel=1e-12)
    assert report.vmape < 3.0
    with (tmp_path / "s.csv").open() as fh:
        rows = list(csv.DictReader(fh))
    assert tuple(rows[0]) == CSV_COLUMNS
    back = compute_metrics((float(r["true_volume_ml"]), float(r["volume_ml"])) for r in rows)
    assert back == (report.vmae, report.vmape)
    assert report.per_food.keys() == {"ball", "cube"} and report.per_food["cube"].n == 2


def test_evaluate_reports_failures(synth_dir):
    m = load_manifest(synth_dir / "manifest.json")
    db = MeshDatabase.from_meshes({"cube": cube()})
    report, records = evaluate(m.entries, db, m.intrinsics, m.load_densities())
    assert report.n == 2 and report.n_failed == 1
    assert report.failed[0]["scene_id"] == "sc2" and report.failed[0]["stage"] == "lookup"
    with pytest.raises(EvaluationError, match="all 3 scenes failed"):
        evaluate(m.entries, MeshDatabase.from_meshes({"x": cube()}), m.intrinsics, m.load_densities())

