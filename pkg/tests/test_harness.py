import csv
import json

import numpy as np
import pytest

from segaeval import harness
from segaeval.cli import main
from segaeval.errors import EmptyField, IncompleteDesign, SegaEvalError
from segaeval.mesh import TetMesh, write_tetmesh
from segaeval.metrics import evaluate_pair
from segaeval.synthetic import vessel_phantom, write_base_cases, write_team_predictions
from segaeval.volume import LabelMask, read_nrrd, write_nrrd

TEAMS = {
    "NVAUTO": dict(threshold=0.298, median=True, runtime=40.0),
    "Brightskies": dict(threshold=0.30, runtime=55.0),
    "ATB": dict(threshold=0.30, runtime=20.0, skip={"case0_r3"}),
}


def run_pipeline(root, n_base=2, threads=1, seed=7, teams=TEAMS):
    gt, out, subs = root / "gt", root / "out", root / "subs"
    write_base_cases(gt, 1)
    cfg = harness.EvaluationConfig(ground_truth_dir=gt, output_dir=out, n_base=n_base,
                                   seed=seed, threads=threads)
    assert harness.cmd_augment(cfg) == 0
    write_team_predictions(cfg.augmented_dir, subs, teams)
    cfg = harness.EvaluationConfig(ground_truth_dir=cfg.augmented_dir, submissions_dir=subs,
                                   output_dir=out, n_base=n_base, seed=seed, threads=threads)
    codes = [harness.cmd_evaluate(cfg), harness.cmd_sensitivity(cfg), harness.cmd_leaderboard(cfg)]
    return cfg, codes


@pytest.fixture(scope="module")
def pipeline(tmp_path_factory):
    return run_pipeline(tmp_path_factory.mktemp("pipe"))


class TestConfig:
    def test_file_and_overrides(self, tmp_path):
        p = tmp_path / "cfg.txt"
        p.write_text("# comment\nground_truth_dir = /data/gt\nn-base: 7\nseed=3\nthreads = auto\n")
        cfg = harness.load_config(p, seed=11)
        assert cfg.n_base == 7 and cfg.seed == 11 and cfg.threads >= 1
        assert str(cfg.ground_truth_dir) == "/data/gt"

    def test_unknown_key(self, tmp_path):
        p = tmp_path / "cfg.txt"
        p.write_text("colour = blue\n")
        with pytest.raises(SegaEvalError):
            harness.load_config(p)

    def test_n_base_validated(self):
        with pytest.raises(SegaEvalError):
            harness.EvaluationConfig(n_base=1)


class TestAugment:
    def test_defaults_give_150_pairs(self, tmp_path):
        write_base_cases(tmp_path / "gt", 1)
        cfg = harness.EvaluationConfig(ground_truth_dir=tmp_path / "gt", output_dir=tmp_path / "o")
        assert harness.cmd_augment(cfg) == 0
        assert len(list(cfg.augmented_dir.glob("*.seg.nrrd"))) == 150
        assert len(harness.read_manifest(cfg.manifest_path)) == 150

    def test_small_design_and_manifest(self, pipeline):
        cfg, _ = pipeline
        rows = harness.read_manifest(cfg.manifest_path)
        assert len(rows) == 12
        assert [r["kind"] for r in rows[:6]] == ["A", "AB_1", "AB_2", "AB_3", "AB_4", "B"]
        with open(cfg.manifest_path) as fh:
            assert next(csv.reader(fh)) == list(harness.MANIFEST_COLUMNS)

    def test_manifest_rerun_identical(self, tmp_path):
        write_base_cases(tmp_path / "gt", 1)
        blobs = []
        for k in range(2):
            cfg = harness.EvaluationConfig(ground_truth_dir=tmp_path / "gt",
                                           output_dir=tmp_path / f"o{k}", n_base=2, seed=5)
            harness.cmd_augment(cfg)
            blobs.append(cfg.manifest_path.read_bytes())
        assert blobs[0] == blobs[1]

    def test_unreadable_case_isolated(self, tmp_path):
        write_base_cases(tmp_path / "gt", 2)
        (tmp_path / "gt" / "case1.nrrd").write_bytes(b"NRRD0004\ngarbage\n\n")
        cfg = harness.EvaluationConfig(ground_truth_dir=tmp_path / "gt", output_dir=tmp_path / "o", n_base=2)
        assert harness.cmd_augment(cfg) == 2
        rep = json.loads((tmp_path / "o" / "augment_report.json").read_text())
        assert [e["case"] for e in rep["errors"]] == ["case1"]
        assert len(rep["written"]) == 12

    def test_all_cases_broken(self, tmp_path):
        (tmp_path / "gt").mkdir()
        (tmp_path / "gt" / "x.nrrd").write_bytes(b"junk")
        (tmp_path / "gt" / "x.seg.nrrd").write_bytes(b"junk")
        cfg = harness.EvaluationConfig(ground_truth_dir=tmp_path / "gt", output_dir=tmp_path / "o", n_base=2)
        assert harness.cmd_augment(cfg) == 1


class TestEvaluate:
    def test_report(self, pipeline):
        cfg, codes = pipeline
        assert codes == [0, 0, 0]
        ev = harness.read_json(cfg.output_dir / "evaluation.json")
        assert set(ev["teams"]) == set(TEAMS)
        atb = {c["case"]: c for c in ev["teams"]["ATB"]["cases"]}
        assert atb["case0_r3"]["degenerate_flag"] == "EmptyPrediction"
        assert atb["case0_r3"]["dsc"] == 0.0
        assert ev["teams"]["ATB"]["nr_flag"] is True
        assert ev["teams"]["NVAUTO"]["nr_flag"] is False
        assert ev["teams"]["NVAUTO"]["mean_runtime_s"] == 40.0

    def test_metrics_equal_direct_computation(self, pipeline):
        cfg, _ = pipeline
        ev = harness.read_json(cfg.output_dir / "evaluation.json")
        case = ev["teams"]["Brightskies"]["cases"][4]
        gt = read_nrrd(cfg.ground_truth_dir / f"{case['case']}.seg.nrrd")
        pred = read_nrrd(cfg.submissions_dir / "Brightskies" / f"{case['case']}.seg.nrrd")
        direct = evaluate_pair(pred, gt)
        assert case["dsc"] == direct.dsc and case["hd_mm"] == direct.hd_mm

    def test_perfect_team(self, tmp_path):
        image, mask = vessel_phantom()
        (tmp_path / "gt").mkdir()
        (tmp_path / "subs" / "oracle").mkdir(parents=True)
        for c in ("a", "b"):
            write_nrrd(mask, tmp_path / "gt" / f"{c}.seg.nrrd")
            write_nrrd(mask, tmp_path / "subs" / "oracle" / f"{c}.nrrd")  # stem match
        cfg = harness.EvaluationConfig(ground_truth_dir=tmp_path / "gt",
                                       submissions_dir=tmp_path / "subs", output_dir=tmp_path / "o")
        assert harness.cmd_evaluate(cfg) == 0
        ev = harness.read_json(tmp_path / "o" / "evaluation.json")
        cases = ev["teams"]["oracle"]["cases"]
        assert all(c["dsc"] == 1.0 and c["hd_mm"] == 0.0 for c in cases)
        assert ev["teams"]["oracle"]["mean_runtime_s"] is None

    def test_geometry_mismatch_recorded(self, tmp_path):
        _, mask = vessel_phantom()
        (tmp_path / "gt").mkdir()
        (tmp_path / "subs" / "t").mkdir(parents=True)
        write_nrrd(mask, tmp_path / "gt" / "a.seg.nrrd")
        write_nrrd(mask, tmp_path / "gt" / "b.seg.nrrd")
        write_nrrd(mask, tmp_path / "subs" / "t" / "a.seg.nrrd")
        write_nrrd(LabelMask(np.ones((3, 3, 3))), tmp_path / "subs" / "t" / "b.seg.nrrd")
        cfg = harness.EvaluationConfig(ground_truth_dir=tmp_path / "gt",
                                       submissions_dir=tmp_path / "subs", output_dir=tmp_path / "o")
        assert harness.cmd_evaluate(cfg) == 2
        ev = harness.read_json(tmp_path / "o" / "evaluation.json")
        b = ev["teams"]["t"]["cases"][1]
        assert b["error"].startswith("GeometryMismatch") and ev["teams"]["t"]["nr_flag"]

    def test_mapping_override(self, tmp_path):
        _, mask = vessel_phantom()
        (tmp_path / "gt").mkdir()
        tdir = tmp_path / "subs" / "t"
        tdir.mkdir(parents=True)
        write_nrrd(mask, tmp_path / "gt" / "a.seg.nrrd")
        write_nrrd(mask, tdir / "whatever.seg.nrrd")
        (tdir / "mapping.csv").write_text("case,file\na,whatever.seg.nrrd\n")
        cfg = harness.EvaluationConfig(ground_truth_dir=tmp_path / "gt",
                                       submissions_dir=tmp_path / "subs", output_dir=tmp_path / "o")
        harness.cmd_evaluate(cfg)
        ev = harness.read_json(tmp_path / "o" / "evaluation.json")
        assert ev["teams"]["t"]["cases"][0]["dsc"] == 1.0


class TestSensitivity:
    def test_report(self, pipeline):
        cfg, _ = pipeline
        sens = harness.read_json(cfg.output_dir / "sensitivity.json")
        assert sens["n_base"] == 2 and sens["factors"] == ["alpha", "d", "beta", "sigma"]
        for team in TEAMS:
            t = sens["teams"][team]
            for out in ("DSC", "HD"):
                assert set(t[out]["indices"]) == {"alpha", "d", "beta", "sigma"}
            assert t["p_var"] == pytest.approx((t["DSC"]["p_var"] + t["HD"]["p_var"]) / 2)

    def _manifest(self, n_base=64, seed=0):
        _, rows = harness.design_manifest(n_base, seed)
        return [{"row": r["row"], "kind": r["kind"], "point": r["point"]} for r in rows]

    def test_additive_model_has_no_interaction(self):
        manifest = self._manifest(1024)
        metrics = {key: {f"c_r{r['row']}": sum(r["point"]) * (1 if key == "dsc" else 3)
                         for r in manifest} for key in ("dsc", "hd_mm")}
        res = harness.team_sensitivity(metrics, manifest)
        assert abs(res["p_inter"]) < 0.02
        assert res["p_var"] == pytest.approx(1.0, abs=0.05)

    def test_missing_row(self):
        manifest = self._manifest(4)
        cases = {f"c_r{r['row']}": 0.5 for r in manifest if r["row"] != 3}
        with pytest.raises(IncompleteDesign) as exc:
            harness.team_sensitivity({"dsc": cases, "hd_mm": cases}, manifest)
        assert exc.value.missing == [3]

    def test_incomplete_team_reported(self, tmp_path, pipeline):
        cfg, _ = pipeline
        ev = harness.read_json(cfg.output_dir / "evaluation.json")
        ev["teams"]["NVAUTO"]["cases"] = ev["teams"]["NVAUTO"]["cases"][:-1]
        out = tmp_path / "o"
        out.mkdir()
        harness.write_json(out / "evaluation.json", {k: v for k, v in ev.items() if k != "schema_version"})
        c2 = harness.EvaluationConfig(output_dir=out, manifest=cfg.manifest_path)
        assert harness.cmd_sensitivity(c2) == 2
        sens = harness.read_json(out / "sensitivity.json")
        assert "IncompleteDesign" in sens["errors"]["NVAUTO"]


class TestLeaderboard:
    def test_outputs(self, pipeline):
        cfg, _ = pipeline
        with open(cfg.output_dir / "leaderboard.csv") as fh:
            rows = list(csv.reader(fh))
        assert rows[0] == ["team", "p_dsc", "r_dsc", "p_hd", "r_hd", "p_var", "r_var",
                           "p_inter", "r_inter", "p_fin", "r_fin"]
        assert rows[-1][0] == "ATB" and rows[-1][2] == "NR"
        lb = harness.read_json(cfg.output_dir / "leaderboard.json")
        assert lb["order"][-1] == "ATB"
        assert len(lb["teams"][0]["dsc_values"]) == 12
        for name in ("metrics_hist.svg", "sobol_indices.svg"):
            assert (cfg.output_dir / name).read_text().lstrip().startswith("<?xml")

    def test_empty_field(self, tmp_path):
        out = tmp_path / "o"
        out.mkdir()
        harness.write_json(out / "evaluation.json", {"cases": [], "teams": {}})
        harness.write_json(out / "sensitivity.json", {"teams": {}, "factors": []})
        with pytest.raises(EmptyField):
            harness.cmd_leaderboard(harness.EvaluationConfig(output_dir=out))

    def test_schema_version_checked(self, tmp_path):
        (tmp_path / "evaluation.json").write_text(json.dumps({"schema_version": 99}))
        with pytest.raises(SegaEvalError):
            harness.read_json(tmp_path / "evaluation.json")


def _regular_tets(n, invert=0, seed=0):
    rng = np.random.default_rng(seed)
    base = np.array([[1, 1, 1], [-1, -1, 1], [-1, 1, -1], [1, -1, -1]], float)
    nodes, tets = [], []
    for k in range(n):
        pts = base * rng.uniform(0.5, 2) + rng.normal(0, 10, 3)
        if k < invert:
            pts = pts[[1, 0, 2, 3]]
        nodes.append(pts)
        tets.append(np.arange(4) + 4 * k)
    return TetMesh(np.vstack(nodes), np.array(tets))


class TestMeshQC:
    def test_ranking(self, tmp_path):
        for team, inv in (("clean", 0), ("flawed", 3)):
            d = tmp_path / "meshes" / team
            d.mkdir(parents=True)
            for c in range(2):
                write_tetmesh(_regular_tets(20, invert=inv, seed=c), d / f"c{c}.node", d / f"c{c}.ele")
        broken = tmp_path / "meshes" / "broken"
        broken.mkdir()
        (broken / "c0.node").write_text("1 3 0 0\n")
        (broken / "c0.ele").write_text("0 4 0\n")
        cfg = harness.EvaluationConfig(meshes_dir=tmp_path / "meshes", output_dir=tmp_path / "o")
        assert harness.cmd_meshqc(cfg) == 2
        rep = harness.read_json(tmp_path / "o" / "meshqc.json")
        assert [r["team"] for r in rep["ranking"]] == ["clean", "flawed", "broken"]
        assert rep["ranking"][2]["nr_flag"] is True
        assert rep["teams"]["flawed"]["aggregate"]["invalid_count"] == 3.0
        assert rep["teams"]["clean"]["meshes"]["c0"]["element_count"] == 20

    def test_empty_field(self, tmp_path):
        (tmp_path / "meshes").mkdir()
        with pytest.raises(EmptyField):
            harness.cmd_meshqc(harness.EvaluationConfig(meshes_dir=tmp_path / "meshes",
                                                        output_dir=tmp_path / "o"))


class TestCLI:
    def test_end_to_end(self, tmp_path):
        write_base_cases(tmp_path / "gt", 1)
        cfg = tmp_path / "run.cfg"
        cfg.write_text(f"ground_truth_dir = {tmp_path / 'gt'}\noutput_dir = {tmp_path / 'out'}\n")
        assert main(["augment", "--config", str(cfg), "--n-base", "2", "--seed", "1"]) == 0
        write_team_predictions(tmp_path / "out" / "augmented", tmp_path / "subs",
                               {"A": dict(threshold=0.3), "B": dict(threshold=0.29)})
        common = ["--ground-truth", str(tmp_path / "out" / "augmented"),
                  "--submissions", str(tmp_path / "subs"), "--out", str(tmp_path / "out"),
                  "--threads", "2"]
        for cmd in ("evaluate", "sensitivity", "leaderboard"):
            assert main([cmd, *common]) == 0
        assert (tmp_path / "out" / "leaderboard.csv").exists()

    def test_fatal_exit(self, tmp_path):
        assert main(["augment", "--ground-truth", str(tmp_path), "--out", str(tmp_path / "o")]) == 1

    def test_requires_subcommand(self):
        with pytest.raises(SystemExit):
            main([])
