"""Command-line runner: ``ddlpv {generate-data, synthesize, verify, reproduce-example}``.

Exit codes: 0 success, 2 config or input error, 3 data not persistently
exciting, 4 a method was Infeasible, 5 a method was Inconclusive,
6 certification failed, 7 the reproduced feasibility table deviates.
"""

from __future__ import annotations

import argparse
import glob
import json
import os
import sys
import time

import numpy as np

from .consistency import sample_compatible_systems
from .data import DataSet, NoiseModel, is_persistently_exciting
from .experiment import (EXPECTED_TABLE, ConfigError, ExperimentConfig, consistency_from_record, generate_data,
                         run_method)
from .consistency import build_consistency_qmi
from .lpv import example_plant
from .seeding import derive_seed
from .synthesis import SynthesisResult
from .verify import certify_decrease, closed_loop_montecarlo, unit_circle

EXIT_OK, EXIT_CONFIG, EXIT_NOT_PE, EXIT_INFEASIBLE, EXIT_INCONCLUSIVE, EXIT_CERT, EXIT_TABLE = 0, 2, 3, 4, 5, 6, 7


def _write(path: str, text: str):
    with open(path, "w") as fh:
        fh.write(text if text.endswith("\n") else text + "\n")


def _load_config(args) -> ExperimentConfig:
    cfg = ExperimentConfig.from_toml(args.config) if args.config else ExperimentConfig()
    cfg = cfg.with_seed(args.seed)
    if getattr(args, "method", None):
        raw = dict(cfg.raw)
        raw["synthesis"] = dict(raw["synthesis"], methods=[m.strip() for m in args.method.split(",") if m.strip()])
        cfg = ExperimentConfig(raw)
        cfg.validate()
    return cfg


def _tag(method: str, delta: float) -> str:
    return f"{method}_d{delta:g}"


def cmd_generate_data(cfg: ExperimentConfig, out_dir: str) -> int:
    os.makedirs(out_dir, exist_ok=True)
    traj, ds, W = generate_data(cfg)
    noise, _ = consistency_from_record(ds, W)
    _write(os.path.join(out_dir, "trajectory.csv"), traj.to_csv())
    _write(os.path.join(out_dir, "dataset.json"), ds.to_json())
    _write(os.path.join(out_dir, "noise_model.json"), noise.to_json())
    _write(os.path.join(out_dir, "noise_record.json"),
           json.dumps({"W": W.tolist(), "Omega": (W @ W.T).tolist(), "seed": cfg.seed}, indent=1))
    pe, rank = is_persistently_exciting(ds)
    need = ds.Phi.shape[0]
    print(f"persistently exciting: {pe} (rank {rank} of {need}, N_d = {ds.N_d})")
    if not pe:
        print(f"hint: increase data.N_d to at least {need}", file=sys.stderr)
        return EXIT_NOT_PE
    return EXIT_OK


def _load_consistency(out_dir: str):
    try:
        with open(os.path.join(out_dir, "dataset.json")) as fh:
            ds = DataSet.from_json(fh.read())
        with open(os.path.join(out_dir, "noise_model.json")) as fh:
            noise = NoiseModel.from_json(fh.read())
    except (OSError, KeyError, ValueError) as exc:
        raise ConfigError(f"cannot load data from {out_dir}: {exc}") from exc
    return build_consistency_qmi(ds, noise)


def cmd_synthesize(cfg: ExperimentConfig, out_dir: str) -> dict:
    """Run every configured (method, delta) pair; returns ``{(method, delta): status}``."""
    c = _load_consistency(out_dir)
    y = cfg.section("synthesis")
    table = {}
    for method in y["methods"]:
        for delta in y["deltas"]:
            res = run_method(method, c, float(delta), cfg)
            _write(os.path.join(out_dir, f"result_{_tag(method, delta)}.json"), res.to_json())
            table[(method, float(delta))] = res.status
            print(f"{method:9s} delta={delta:<5g} {res.status:12s} slack={res.slack:.3e}")
    return table


def _synth_exit(table: dict) -> int:
    statuses = set(table.values())
    if "Inconclusive" in statuses:
        return EXIT_INCONCLUSIVE
    if "Infeasible" in statuses:
        return EXIT_INFEASIBLE
    return EXIT_OK


def cmd_verify(cfg: ExperimentConfig, out_dir: str, methods=None) -> dict:
    """Certify every Feasible result file and run the unit-circle ensemble."""
    c = _load_consistency(out_dir)
    v = cfg.section("verify")
    rows = {}
    for path in sorted(glob.glob(os.path.join(out_dir, "result_*.json"))):
        with open(path) as fh:
            res = SynthesisResult.from_json(fh.read())
        delta = float(res.extra.get("delta", cfg.section("system")["delta_data"]))
        tag = _tag(res.method.lower(), delta)
        if methods and res.method.lower() not in methods:
            continue
        if not res.feasible:
            rows[tag] = {"status": res.status, "certified": None}
            continue
        plant, sched, polytope = example_plant(delta)
        try:
            rep = certify_decrease(res, c, polytope, int(v["n_systems"]), int(v["n_p_samples"]), cfg.seed,
                                   float(v["tol"]), extra_plants=[plant])
        except np.linalg.LinAlgError as exc:
            rows[tag] = {"status": res.status, "certified": False, "error": str(exc)}
            continue
        _write(os.path.join(out_dir, f"certification_{tag}.json"), rep.to_json())
        n_mc = min(int(v["n_systems"]), 20)
        plants = [plant] + (sample_compatible_systems(c, n_mc, derive_seed(cfg.seed, "montecarlo-systems"))
                            if n_mc else [])
        ens = closed_loop_montecarlo(res, plants, sched, unit_circle(int(v["n_ics"])), float(v["w_max"]),
                                     int(v["N"]), cfg.seed)
        ens.write(os.path.join(out_dir, f"trajectories_{tag}"))
        summ = ens.summary()
        rows[tag] = {"status": res.status, "certified": rep.passed, "min_margin": rep.min_margin,
                     "n_checks": rep.n_checks, "max_final_norm": summ["max_final_norm"],
                     "n_diverged": summ["n_diverged"], "decrease_violations": summ["decrease_violations"]}
        print(f"{tag:12s} certified={rep.passed} min_margin={rep.min_margin:.3e} "
              f"max|x_N|={summ['max_final_norm']}")
    _write(os.path.join(out_dir, "verify_summary.json"), json.dumps(rows, indent=1, default=float))
    with open(os.path.join(out_dir, "verify_summary.csv"), "w") as fh:
        fh.write("result,status,certified,min_margin,max_final_norm,n_diverged,decrease_violations\n")
        for tag, r in rows.items():
            fh.write(",".join(str(x) for x in (tag, r["status"], r.get("certified"), r.get("min_margin", ""),
                                               r.get("max_final_norm", ""), r.get("n_diverged", ""),
                                               r.get("decrease_violations", ""))) + "\n")
    return rows


def cmd_reproduce_example(cfg: ExperimentConfig, out_dir: str) -> int:
    t0 = time.perf_counter()
    raw = dict(cfg.raw)
    raw["synthesis"] = dict(raw["synthesis"], methods=["blf", "slf"], deltas=[1.0, 5.0])
    cfg = ExperimentConfig(raw)
    code = cmd_generate_data(cfg, out_dir)
    if code != EXIT_OK:
        return code
    table = cmd_synthesize(cfg, out_dir)
    rows = cmd_verify(cfg, out_dir)
    got = {f"{m},{d:g}": s for (m, d), s in table.items()}
    want = {f"{m},{d:g}": s for (m, d), s in EXPECTED_TABLE.items()}
    match = got == want
    certified = all(r["certified"] is not False for r in rows.values())
    manifest = {"seed": cfg.seed, "config": cfg.raw, "outcomes": got, "expected": want,
                "matches_expected": match, "all_feasible_certified": certified,
                "timing": {"wall_time_s": time.perf_counter() - t0}}
    _write(os.path.join(out_dir, "manifest.json"), json.dumps(manifest, indent=1, default=float))
    print(f"feasibility table matches expected: {match}")
    if not certified:
        return EXIT_CERT
    return EXIT_OK if match else EXIT_TABLE


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="ddlpv", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)
    for name in ("generate-data", "synthesize", "verify", "reproduce-example"):
        sp = sub.add_parser(name)
        sp.add_argument("--config", help="TOML configuration file (defaults are built in)")
        sp.add_argument("--seed", type=int, help="root seed, overrides the config")
        sp.add_argument("--out-dir", default="out", help="directory for all artifacts")
        sp.add_argument("--method", help="comma-separated subset of blf,slf,fbsp,analysis")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = _load_config(args)
        if args.command == "generate-data":
            return cmd_generate_data(cfg, args.out_dir)
        if args.command == "synthesize":
            return _synth_exit(cmd_synthesize(cfg, args.out_dir))
        if args.command == "verify":
            methods = None
            if args.method:
                methods = {m.strip() for m in args.method.split(",")}
            rows = cmd_verify(cfg, args.out_dir, methods)
            return EXIT_CERT if any(r["certified"] is False for r in rows.values()) else EXIT_OK
        return cmd_reproduce_example(cfg, args.out_dir)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
