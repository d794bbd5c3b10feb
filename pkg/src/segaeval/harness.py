"""Batch orchestration behind the ``segaeval`` command line.

Directory contract
------------------
* base cases: ``<ground_truth_dir>/<case>.nrrd`` + ``<case>.seg.nrrd``
* augmented cases: ``<output_dir>/augmented/<case>_r<row>.nrrd`` / ``.seg.nrrd``
  plus ``manifest.csv``
* predictions: ``<submissions_dir>/<team>/<case>.seg.nrrd`` (or ``<case>.nrrd``),
  optional ``mapping.csv`` (case,file) and ``runtimes.csv`` (case,seconds)
* tet meshes: ``<meshes_dir>/<team>/<case>.node`` + ``<case>.ele``

Every command writes plain CSV/JSON reports carrying ``schema_version`` and
returns an exit status: 0 success, 2 partial failure, 1 fatal.
"""

from __future__ import annotations

import csv
import json
import math
import os
import re
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, fields
from pathlib import Path

import numpy as np

from . import augment as aug
from .errors import EmptyField, IncompleteDesign, SegaEvalError
from .mesh import read_tetmesh, tet_quality_report
from .metrics import Degenerate, MetricResult, evaluate_pair
from .ranking import JacobianStanding, TeamRecord, build_leaderboard, jacobian_ranking
from .sensitivity import build_saltelli_design, estimate_sobol, robustness_scores
from .volume import LabelMask, read_nrrd, write_nrrd

SCHEMA_VERSION = 1
EXIT_OK, EXIT_FATAL, EXIT_PARTIAL = 0, 1, 2

MANIFEST_COLUMNS = ("row", "kind", "u1", "u2", "u3", "u4",
                    "alpha", "d", "beta", "sigma", "noise_seed")
EVAL_COLUMNS = ("team", "case", "dsc", "hd_mm", "volume_ml_pred", "volume_ml_gt",
                "degenerate_flag", "wall_time_s", "error")
OUTPUTS = ("DSC", "HD")
_CASE_ROW = re.compile(r"^(?P<base>.+)_r(?P<row>\d+)$")


@dataclass
class EvaluationConfig:
    ground_truth_dir: Path | None = None
    submissions_dir: Path | None = None
    output_dir: Path = Path("segaeval_out")
    n_base: int = 25
    seed: int = 0
    threads: int = 1
    manifest: Path | None = None
    meshes_dir: Path | None = None
    encoding: str = "gzip"
    factors: tuple = aug.FACTORS

    def __post_init__(self):
        for name in ("ground_truth_dir", "submissions_dir", "output_dir", "manifest", "meshes_dir"):
            v = getattr(self, name)
            if v is not None and not isinstance(v, Path):
                setattr(self, name, Path(v))
        self.n_base = int(self.n_base)
        self.seed = int(self.seed)
        if self.threads in (None, "auto", 0):
            self.threads = os.cpu_count() or 1
        self.threads = max(1, int(self.threads))
        if self.n_base < 2:
            raise SegaEvalError(f"n_base must be >= 2, got {self.n_base}")

    @property
    def augmented_dir(self):
        return self.output_dir / "augmented"

    @property
    def manifest_path(self):
        return self.manifest or self.augmented_dir / "manifest.csv"


def load_config(path=None, **overrides):
    """Read ``key = value`` lines (``#`` comments) and apply overrides."""
    values = {}
    if path is not None:
        known = {f.name for f in fields(EvaluationConfig)}
        for lineno, line in enumerate(Path(path).read_text().splitlines(), 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            key, sep, value = line.partition("=")
            if not sep:
                key, sep, value = line.partition(":")
            key = key.strip().replace("-", "_")
            if not sep or key not in known:
                raise SegaEvalError(f"{path}:{lineno}: cannot parse {line!r}")
            values[key] = value.strip()
    values.update({k: v for k, v in overrides.items() if v is not None})
    return EvaluationConfig(**values)


# --------------------------------------------------------------------------
# report helpers


def _clean(obj):
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else None
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    return obj


def write_json(path, payload):
    payload = {"schema_version": SCHEMA_VERSION, **payload}
    Path(path).write_text(json.dumps(_clean(payload), indent=2, sort_keys=False) + "\n")


def read_json(path):
    data = json.loads(Path(path).read_text())
    if data.get("schema_version") != SCHEMA_VERSION:
        raise SegaEvalError(f"{path}: unsupported schema_version {data.get('schema_version')}")
    return data


def write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def _run(fn, items, threads):
    # results come back in submission order whatever the worker count
    if threads <= 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))


def _guard(fn):
    def wrapped(item):
        try:
            return fn(item), None
        except (SegaEvalError, OSError, ValueError) as exc:
            return None, f"{type(exc).__name__}: {exc}"
    return wrapped


# --------------------------------------------------------------------------
# augment


def noise_seed_for(seed):
    """Noise stream shared by every row of a design (so rows differ only by
    their factor values)."""
    with np.errstate(over="ignore"):
        return int(aug._splitmix64(np.array([seed], dtype=np.uint64))[0] >> np.uint64(1))


def design_manifest(n_base, seed):
    design = build_saltelli_design(n_base, aug.N_FACTORS, seed)
    nseed = noise_seed_for(seed)
    rows = []
    for r, (kind, point) in enumerate(design.rows):
        p = aug.sample_params(point, nseed)
        rows.append({"row": r, "kind": kind, "point": tuple(float(x) for x in point), "params": p})
    return design, rows


def write_manifest(path, rows):
    write_csv(path, MANIFEST_COLUMNS, [
        [r["row"], r["kind"], *(repr(u) for u in r["point"]),
         repr(r["params"].alpha_deg), repr(r["params"].d_mm), repr(r["params"].beta),
         repr(r["params"].sigma), r["params"].noise_seed]
        for r in rows
    ])


def read_manifest(path):
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        missing = set(MANIFEST_COLUMNS) - set(reader.fieldnames or ())
        if missing:
            raise SegaEvalError(f"{path}: manifest lacks columns {sorted(missing)}")
        return [{"row": int(r["row"]), "kind": r["kind"],
                 "point": tuple(float(r[f"u{i}"]) for i in range(1, 5)),
                 "noise_seed": int(r["noise_seed"])} for r in reader]


def base_cases(directory):
    """Case ids having both an image and a ``.seg.nrrd`` mask."""
    out = []
    for p in sorted(Path(directory).glob("*.seg.nrrd")):
        case = p.name[: -len(".seg.nrrd")]
        if (p.parent / f"{case}.nrrd").exists():
            out.append(case)
    return out


def cmd_augment(config):
    if config.ground_truth_dir is None:
        raise SegaEvalError("augment needs ground_truth_dir")
    cases = base_cases(config.ground_truth_dir)
    if not cases:
        raise SegaEvalError(f"no base cases in {config.ground_truth_dir}")
    out = config.augmented_dir
    out.mkdir(parents=True, exist_ok=True)
    _, rows = design_manifest(config.n_base, config.seed)
    write_manifest(out / "manifest.csv", rows)

    def load(case):
        gt = config.ground_truth_dir
        return read_nrrd(gt / f"{case}.nrrd", as_mask=False), read_nrrd(gt / f"{case}.seg.nrrd", as_mask=True)

    loaded = _run(_guard(load), cases, config.threads)
    jobs = [(case, pair, row) for case, (pair, err) in zip(cases, loaded) if err is None for row in rows]

    def work(job):
        case, (image, mask), row = job
        res = aug.augment_case(image, mask, row["params"], {"case": case, "row": row["row"]})
        stem = f"{case}_r{row['row']}"
        write_nrrd(res.image, out / f"{stem}.nrrd", config.encoding)
        write_nrrd(res.mask, out / f"{stem}.seg.nrrd", config.encoding)
        return stem

    results = _run(_guard(work), jobs, config.threads)
    errors = [{"case": c, "error": e} for c, (_, e) in zip(cases, loaded) if e is not None]
    errors += [{"case": f"{j[0]}_r{j[2]['row']}", "error": e} for j, (_, e) in zip(jobs, results) if e]
    written = [s for s, e in results if e is None]
    write_json(config.output_dir / "augment_report.json", {
        "seed": config.seed, "n_base": config.n_base, "n_rows": len(rows),
        "base_cases": cases, "written": written, "errors": errors,
    })
    if not written:
        return EXIT_FATAL
    return EXIT_PARTIAL if errors else EXIT_OK


# --------------------------------------------------------------------------
# evaluate


def _read_table(path, key, value, cast):
    if not path.exists():
        return {}
    with open(path, newline="") as fh:
        return {r[key]: cast(r[value]) for r in csv.DictReader(fh)}


def _prediction_path(team_dir, case, mapping):
    if case in mapping:
        return team_dir / mapping[case]
    for name in (f"{case}.seg.nrrd", f"{case}.nrrd"):
        if (team_dir / name).exists():
            return team_dir / name
    return None


def evaluate_case(gt_path, pred_path):
    """Metrics for one case; a missing prediction scores as an empty mask."""
    gt = read_nrrd(gt_path, as_mask=True)
    if pred_path is None:
        empty = LabelMask.like(gt, np.zeros(gt.dims, dtype=bool))
        res = evaluate_pair(empty, gt)
        return MetricResult(res.dsc, res.hd_mm, 0.0, res.volume_ml_gt, Degenerate.EMPTY_PREDICTION)
    return evaluate_pair(read_nrrd(pred_path, as_mask=True), gt)


def cmd_evaluate(config):
    if config.ground_truth_dir is None or config.submissions_dir is None:
        raise SegaEvalError("evaluate needs ground_truth_dir and submissions_dir")
    gt_dir = config.ground_truth_dir
    cases = sorted(p.name[: -len(".seg.nrrd")] for p in gt_dir.glob("*.seg.nrrd"))
    teams = sorted(p.name for p in config.submissions_dir.iterdir() if p.is_dir())
    if not cases or not teams:
        raise SegaEvalError("nothing to evaluate (no cases or no team directories)")
    jobs = []
    runtimes = {}
    for team in teams:
        tdir = config.submissions_dir / team
        mapping = _read_table(tdir / "mapping.csv", "case", "file", str)
        runtimes[team] = _read_table(tdir / "runtimes.csv", "case", "seconds", float)
        for case in cases:
            jobs.append((team, case, _prediction_path(tdir, case, mapping)))

    def work(job):
        team, case, pred = job
        return evaluate_case(gt_dir / f"{case}.seg.nrrd", pred)

    results = _run(_guard(work), jobs, config.threads)
    report = {}
    csv_rows = []
    for (team, case, _), (res, err) in zip(jobs, results):
        t = report.setdefault(team, {"cases": [], "nr_flag": False})
        wall = runtimes[team].get(case)
        entry = {"case": case, "wall_time_s": wall, "error": err}
        if res is not None:
            entry.update(res.as_dict())
        else:
            entry.update({"dsc": None, "hd_mm": None, "volume_ml_pred": None,
                          "volume_ml_gt": None, "degenerate_flag": None})
        if err is not None or (res is not None and res.degenerate_flag is not Degenerate.NONE):
            t["nr_flag"] = True
        t["cases"].append(entry)
        csv_rows.append([team, case] + [_cell(entry[k]) for k in EVAL_COLUMNS[2:]])
    for team, t in report.items():
        times = [c["wall_time_s"] for c in t["cases"] if c["wall_time_s"] is not None]
        t["mean_runtime_s"] = float(np.mean(times)) if times and len(times) == len(t["cases"]) else None
    config.output_dir.mkdir(parents=True, exist_ok=True)
    write_csv(config.output_dir / "evaluation.csv", EVAL_COLUMNS, csv_rows)
    write_json(config.output_dir / "evaluation.json", {"cases": cases, "teams": report})
    n_err = sum(1 for _, e in results if e is not None)
    if n_err == len(results):
        return EXIT_FATAL
    return EXIT_PARTIAL if n_err else EXIT_OK


def _cell(v):
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    return str(v)


# --------------------------------------------------------------------------
# sensitivity


def design_outputs(team_cases, manifest, metric):
    """Per-row model output: the metric averaged over base cases.

    ``team_cases`` maps case id -> metric value (None for failed cases).
    Raises IncompleteDesign listing the rows without a value.
    """
    by_row = {}
    for case, value in team_cases.items():
        m = _CASE_ROW.match(case)
        if m and value is not None:
            by_row.setdefault(int(m["row"]), []).append(value)
    missing = [r["row"] for r in manifest if r["row"] not in by_row]
    if missing:
        raise IncompleteDesign(missing)
    return np.array([np.mean(by_row[r["row"]]) for r in manifest])


def split_by_kind(manifest, y, m_factors=aug.N_FACTORS):
    kinds = [r["kind"] for r in manifest]
    y = np.asarray(y, dtype=np.float64)
    y_A = y[[i for i, k in enumerate(kinds) if k == "A"]]
    y_B = y[[i for i, k in enumerate(kinds) if k == "B"]]
    y_AB = np.stack([y[[i for i, k in enumerate(kinds) if k == f"AB_{f + 1}"]]
                     for f in range(m_factors)])
    return y_A, y_B, y_AB


def team_sensitivity(team_cases_by_metric, manifest):
    """Indices and robustness scores for both outputs, plus their mean."""
    out = {}
    p_var, p_inter = [], []
    for name, key in zip(OUTPUTS, ("dsc", "hd_mm")):
        y = design_outputs(team_cases_by_metric[key], manifest, name)
        idx = estimate_sobol(*split_by_kind(manifest, y), output_name=name)
        sc = robustness_scores(idx)
        out[name] = {"indices": idx.as_dict(list(aug.FACTORS)), "p_var": sc.p_var,
                     "p_inter": sc.p_inter, "degenerate": idx.degenerate}
        p_var.append(sc.p_var)
        p_inter.append(sc.p_inter)
    out["p_var"] = float(np.mean(p_var))
    out["p_inter"] = float(np.mean(p_inter))
    return out


def cmd_sensitivity(config):
    evaluation = read_json(config.output_dir / "evaluation.json")
    manifest = read_manifest(config.manifest_path)
    teams, errors = {}, {}
    for team, t in evaluation["teams"].items():
        metrics = {key: {c["case"]: c[key] for c in t["cases"]} for key in ("dsc", "hd_mm")}
        try:
            teams[team] = team_sensitivity(metrics, manifest)
        except SegaEvalError as exc:
            errors[team] = f"{type(exc).__name__}: {exc}"
    n_base = sum(1 for r in manifest if r["kind"] == "A")
    write_json(config.output_dir / "sensitivity.json", {
        "n_base": n_base, "seed": config.seed, "factors": list(aug.FACTORS),
        "teams": teams, "errors": errors,
    })
    if not teams:
        return EXIT_FATAL
    return EXIT_PARTIAL if errors else EXIT_OK


# --------------------------------------------------------------------------
# leaderboard


def team_records(evaluation, sensitivity):
    records = []
    for team, t in evaluation["teams"].items():
        ok = [c for c in t["cases"] if c["dsc"] is not None]
        sens = sensitivity["teams"].get(team)
        nr = bool(t["nr_flag"]) or sens is None or not ok
        runtime = t.get("mean_runtime_s")
        records.append(TeamRecord(
            team_id=team,
            dsc_values=[c["dsc"] for c in ok],
            hd_values=[c["hd_mm"] for c in ok],
            p_var=sens["p_var"] if sens else math.nan,
            p_inter=sens["p_inter"] if sens else math.nan,
            mean_runtime_s=runtime if runtime and runtime > 0 else math.inf,
            nr_flag=nr,
        ))
    return records


def cmd_leaderboard(config):
    from . import plots

    evaluation = read_json(config.output_dir / "evaluation.json")
    sensitivity = read_json(config.output_dir / "sensitivity.json")
    records = team_records(evaluation, sensitivity)
    if not records:
        raise EmptyField("no teams in evaluation report")
    board = build_leaderboard(records)
    write_csv(config.output_dir / "leaderboard.csv", board.COLUMNS, board.table())
    rows = []
    for s in board.rows:
        t = evaluation["teams"][s.team_id]
        rows.append({**{k: getattr(s, k) for k in (
            "team_id", "p_dsc", "r_dsc", "p_hd", "r_hd", "p_var", "r_var",
            "p_inter", "r_inter", "p_fin", "r_fin", "nr_flag", "mean_runtime_s")},
            "dsc_values": [c["dsc"] for c in t["cases"]],
            "hd_values": [c["hd_mm"] for c in t["cases"]],
            "cases": [c["case"] for c in t["cases"]]})
    write_json(config.output_dir / "leaderboard.json", {"order": board.order, "teams": rows})
    plots.metric_histograms(records, config.output_dir / "metrics_hist.svg")
    plots.sobol_bars(sensitivity, config.output_dir / "sobol_indices.svg")
    return EXIT_OK


# --------------------------------------------------------------------------
# meshqc


def cmd_meshqc(config):
    if config.meshes_dir is None:
        raise SegaEvalError("meshqc needs meshes_dir")
    teams = sorted(p.name for p in Path(config.meshes_dir).iterdir() if p.is_dir())
    if not teams:
        raise EmptyField(f"no team directories in {config.meshes_dir}")
    jobs = [(team, p.stem, p) for team in teams
            for p in sorted((Path(config.meshes_dir) / team).glob("*.node"))]

    def work(job):
        _, _, node = job
        return tet_quality_report(read_tetmesh(node, node.with_suffix(".ele")))

    results = _run(_guard(work), jobs, config.threads)
    per_team = {team: {"meshes": {}, "errors": {}} for team in teams}
    for (team, case, _), (rep, err) in zip(jobs, results):
        if err is None:
            per_team[team]["meshes"][case] = rep.as_dict()
        else:
            per_team[team]["errors"][case] = err
    standings = []
    for team in teams:
        reps = list(per_team[team]["meshes"].values())
        nr = not reps or bool(per_team[team]["errors"])
        agg = {k: float(np.mean([r[k] for r in reps])) if reps else math.nan
               for k in ("median", "variance", "skewness", "invalid_count")}
        per_team[team]["aggregate"] = agg
        standings.append(JacobianStanding(team, agg["median"], agg["variance"], agg["skewness"],
                                          agg["invalid_count"], nr_flag=nr))
    ranked = jacobian_ranking(standings)
    config.output_dir.mkdir(parents=True, exist_ok=True)
    write_json(config.output_dir / "meshqc.json", {
        "teams": per_team,
        "ranking": [{"team": s.team_id, "p_j": s.p_j, "r_j": s.r_j, "nr_flag": s.nr_flag}
                    for s in ranked],
    })
    write_csv(config.output_dir / "meshqc_leaderboard.csv",
              ("team", "m_j", "var_j", "skew_j", "n_invalid", "p_j", "r_j"),
              [[s.team_id, _cell(s.m_j), _cell(s.var_j), _cell(s.skew_j), _cell(s.n_invalid),
                "NR" if s.nr_flag else _cell(s.p_j), s.r_j] for s in ranked])
    any_err = any(v["errors"] for v in per_team.values())
    return EXIT_PARTIAL if any_err else EXIT_OK
