"""Command-line front-end: reproducible experiments over the library.

Subcommands: classify, dispersion, growth, evolve, verify.  Every run
writes a manifest (resolved configuration, config hash, timings,
outcome) and each output file references the manifest hash, so results
can be traced back to the exact configuration that produced them.

Exit codes: 0 success, 2 configuration error, 3 numeric failure,
4 resource (atom cap) failure.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import math
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__, dynamics, measures, symbols, verification
from .errors import (ActiveFMError, AtomCapError, ConfigError, DimensionMismatchError,
                     ExperimentError, InvalidStateError, LatticeError, NumericError)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERIC = 3
EXIT_RESOURCE = 4


# ---------------------------------------------------------------------------
# configuration


DEFAULTS = {
    "rng_seed": 0,
    "model": {"lambda0": 1.0, "lambda1": 0.0, "gamma0": -1.0, "gamma2": 1.0,
              "alpha": 0.1875, "beta": 1.0, "n": 2},
    "state": {"kind": "disordered", "p0": 0.0, "V_direction": None},
    "sim": {"t_end": 1.0, "dt": 0.05, "stepper": "etd2rk", "blowup_threshold": None,
            "diagnostics_stride": 1, "linearized": False},
    "truncation": {"basis": None, "k_max": 2.5, "drop_tol": 0.0, "atom_cap": 100000,
                   "origin_policy": "drop"},
    "seed": {"kind": "pair", "k": [1.0, 0.0], "amplitude": 1e-6, "direction": None,
             "pairs": 4, "key_max": 2, "fm_norm": 1e-3, "atoms": []},
}


def load_config(path) -> dict:
    if path is None:
        return {}
    try:
        with open(path, "r", encoding="utf-8") as fh:
            cfg = json.load(fh)
    except FileNotFoundError as exc:
        raise ConfigError(f"config file not found: {path}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config file is not valid JSON: {exc}") from exc
    if not isinstance(cfg, dict):
        raise ConfigError("config root must be a JSON object")
    return cfg


def resolve_config(raw: dict, seed_override=None) -> dict:
    """Materialize all defaults into a flat, hashable configuration dict."""
    out = {}
    for section, defaults in DEFAULTS.items():
        if isinstance(defaults, dict):
            got = dict(defaults)
            got.update(raw.get(section, {}) or {})
            out[section] = got
        else:
            out[section] = raw.get(section, defaults)
    for key in ("sweep", "dispersion", "growth"):
        if key in raw:
            out[key] = raw[key]
    if seed_override is not None:
        out["rng_seed"] = int(seed_override)
    return out


def config_hash(resolved: dict) -> str:
    canon = json.dumps(resolved, sort_keys=True, separators=(",", ":"), default=str)
    return hashlib.sha256(canon.encode("utf-8")).hexdigest()[:16]


def params_from(cfg: dict) -> symbols.ModelParams:
    m = cfg["model"]
    try:
        return symbols.ModelParams(float(m["lambda0"]), float(m["lambda1"]),
                                   float(m["gamma0"]), float(m["gamma2"]),
                                   float(m["alpha"]), float(m["beta"]), int(m["n"]))
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"bad model section: {exc}") from exc


def state_from(cfg: dict, params: symbols.ModelParams) -> symbols.SteadyState:
    s = cfg["state"]
    kind = s.get("kind", "disordered")
    direction = s.get("V_direction")
    if kind == "ordered" and direction is None:
        direction = [1.0] + [0.0] * (params.n - 1)
    return dynamics.steady_state_transform(kind, params,
                                           V_direction=direction, p0=float(s.get("p0", 0.0)))


def truncation_from(cfg: dict, params: symbols.ModelParams) -> dynamics.TruncationPolicy:
    t = cfg["truncation"]
    basis = t.get("basis")
    if basis is None:
        basis = np.eye(params.n).tolist()
    basis = np.asarray(basis, dtype=float)
    if basis.shape != (params.n, params.n):
        raise ConfigError(f"truncation basis must be {params.n} generator wavevectors of length {params.n}")
    return dynamics.TruncationPolicy(basis=basis, k_max=float(t["k_max"]),
                                     drop_tol=float(t.get("drop_tol", 0.0)),
                                     atom_cap=int(t.get("atom_cap", 100000)),
                                     origin_policy=t.get("origin_policy", "drop"))


def seed_measure(cfg: dict, params: symbols.ModelParams, state: symbols.SteadyState,
                 trunc: dynamics.TruncationPolicy) -> measures.SpectralMeasure:
    s = cfg["seed"]
    kind = s.get("kind", "pair")
    if kind == "pair":
        k = np.asarray(s["k"], dtype=float)
        direction = s.get("direction")
        V = state.V if state.kind == "ordered" else None
        return dynamics.pair_seed(k, float(s.get("amplitude", 1e-6)),
                                  direction=direction, V=V)
    if kind == "random":
        rng = np.random.default_rng(int(cfg["rng_seed"]))
        return dynamics.random_real_solenoidal(rng, trunc, int(s.get("pairs", 4)),
                                               float(s.get("fm_norm", 1e-3)),
                                               key_max=int(s.get("key_max", 2)))
    if kind == "atoms":
        atoms = [(np.asarray(a["xi"], float),
                  np.asarray(a["re"], float) + 1j * np.asarray(a["im"], float))
                 for a in s.get("atoms", [])]
        if not atoms:
            return measures.zero_measure(params.n)
        return measures.normalize(atoms)
    raise ConfigError(f"unknown seed kind {kind!r}")


# ---------------------------------------------------------------------------
# output helpers


def _fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, float):
        return repr(x)
    return str(x)


def write_table(path: Path, header: list[str], rows: list[list], manifest_hash: str,
                fmt: str) -> None:
    if fmt == "jsonl":
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(json.dumps({"manifest": manifest_hash, "columns": header}) + "\n")
            for row in rows:
                fh.write(json.dumps({k: v for k, v in zip(header, row)}, default=float) + "\n")
        return
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(f"# manifest: {manifest_hash}\n")
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in rows:
            writer.writerow([_fmt(v) for v in row])


class Manifest:
    def __init__(self, command: str, resolved: dict, threads: int):
        self.command = command
        self.resolved = resolved
        self.hash = config_hash(resolved)
        self.threads = threads
        self.started = time.time()
        self.timings: dict = {}
        self.outputs: list[str] = []
        self.outcome: dict = {}

    def write(self, outdir: Path) -> None:
        doc = {
            "tool": "activefm",
            "version": __version__,
            "command": self.command,
            "config": self.resolved,
            "config_hash": self.hash,
            "threads": self.threads,
            "wall_seconds": time.time() - self.started,
            "timings": self.timings,
            "outputs": self.outputs,
            "outcome": self.outcome,
        }
        with open(outdir / "manifest.json", "w", encoding="utf-8") as fh:
            json.dump(doc, fh, indent=2, sort_keys=True, default=str)
            fh.write("\n")


def _outdir(args) -> Path:
    out = Path(args.out or ".")
    out.mkdir(parents=True, exist_ok=True)
    return out


# ---------------------------------------------------------------------------
# subcommands


def _sweep_values(spec_entry, fallback) -> np.ndarray:
    if spec_entry is None:
        return np.asarray([fallback], dtype=float)
    if isinstance(spec_entry, (int, float)):
        return np.asarray([spec_entry], dtype=float)
    if isinstance(spec_entry, list):
        return np.asarray(spec_entry, dtype=float)
    return np.linspace(float(spec_entry["min"]), float(spec_entry["max"]),
                       int(spec_entry["num"]))


def cmd_classify(args) -> int:
    cfg = resolve_config(load_config(args.config), args.seed)
    out = _outdir(args)
    manifest = Manifest("classify", cfg, args.threads)
    m = cfg["model"]
    sweep = cfg.get("sweep", {})
    gamma0s = _sweep_values(sweep.get("gamma0"), m["gamma0"])
    alphas = _sweep_values(sweep.get("alpha"), m["alpha"])
    gamma2 = float(sweep.get("gamma2", m["gamma2"]))
    beta = float(sweep.get("beta", m["beta"]))
    n = int(m["n"])
    direction = cfg["state"].get("V_direction") or ([1.0] + [0.0] * (n - 1))

    header = ["gamma0", "alpha", "gamma2", "beta", "v_mag", "state_kind", "class",
              "spectral_bound", "k_star", "s_minus_sq", "s_plus_sq"]
    rows = []
    for g0 in gamma0s:
        for al in alphas:
            params = symbols.ModelParams(m["lambda0"], m["lambda1"], float(g0), gamma2,
                                         float(al), beta, n)
            v = symbols.classify_disordered(params)
            kstar = float(np.linalg.norm(v.witness.xi)) if v.witness else None
            band = v.critical_band or (None, None)
            rows.append([float(g0), float(al), gamma2, beta, 0.0, "disordered",
                         v.stability, v.spectral_bound, kstar, band[0], band[1]])
            if al < 0:
                state = symbols.SteadyState.ordered(params, direction)
                vo = symbols.classify_ordered(params, state.V)
                kstar = float(np.linalg.norm(vo.witness.xi)) if vo.witness else None
                rows.append([float(g0), float(al), gamma2, beta,
                             float(np.linalg.norm(state.V)), "ordered",
                             vo.stability, vo.spectral_bound, kstar, None, None])
    name = "phase_diagram.jsonl" if args.format == "jsonl" else "phase_diagram.csv"
    write_table(out / name, header, rows, manifest.hash, args.format)
    manifest.outputs.append(name)
    manifest.outcome = {"rows": len(rows)}
    manifest.write(out)
    print(f"classify: {len(rows)} rows -> {out / name} (manifest {manifest.hash})")
    return EXIT_OK


def cmd_dispersion(args) -> int:
    cfg = resolve_config(load_config(args.config), args.seed)
    out = _outdir(args)
    manifest = Manifest("dispersion", cfg, args.threads)
    params = params_from(cfg)
    d = cfg.get("dispersion", {})
    ks = np.linspace(float(d.get("k_min", 0.0)), float(d.get("k_max", 2.0)),
                     int(d.get("num", 201)))
    rows = [[float(k), float(symbols.dispersion_disordered(float(k), params)), 0]
            for k in ks]
    band = symbols.critical_wavenumbers(params)
    if band.exists:
        for ssq in (band.s_minus_sq, band.s_plus_sq):
            k = math.sqrt(ssq)
            rows.append([k, float(symbols.dispersion_disordered(k, params)), 1])
    name = "dispersion.jsonl" if args.format == "jsonl" else "dispersion.csv"
    write_table(out / name, ["k", "sigma", "is_crossing"], rows, manifest.hash, args.format)
    manifest.outputs.append(name)
    manifest.outcome = {"rows": len(rows), "band": band.exists,
                        "discriminant": band.discriminant}
    manifest.write(out)
    print(f"dispersion: {len(rows)} rows -> {out / name} (manifest {manifest.hash})")
    return EXIT_OK


def cmd_growth(args) -> int:
    cfg = resolve_config(load_config(args.config), args.seed)
    out = _outdir(args)
    manifest = Manifest("growth", cfg, args.threads)
    params = params_from(cfg)
    state = state_from(cfg, params)
    g = cfg.get("growth", {})
    k_seed = np.asarray(g.get("k_seed", cfg["seed"].get("k", [1.0, 0.0])), dtype=float)
    result = dynamics.growth_rate_experiment(
        state, params, k_seed,
        epsilon=float(g.get("epsilon", 1e-6)),
        linearized=bool(g.get("linearized", False)),
        horizon=float(g.get("horizon", 20.0)),
        dt=g.get("dt"),
        stepper=cfg["sim"].get("stepper", "etd2rk"))
    rows = [[float(np.linalg.norm(k_seed)), result.measured_rate, result.predicted_rate,
             result.rel_error, result.n_fit_points, result.window[0], result.window[1]]]
    name = "growth.jsonl" if args.format == "jsonl" else "growth.csv"
    write_table(out / name, ["k", "measured_rate", "predicted_rate", "rel_error",
                             "n_fit_points", "window_t0", "window_t1"],
                rows, manifest.hash, args.format)
    manifest.outputs.append(name)
    manifest.outcome = {"measured_rate": result.measured_rate,
                        "predicted_rate": result.predicted_rate,
                        "rel_error": result.rel_error}
    manifest.write(out)
    print(f"growth: measured {result.measured_rate:.9g} vs predicted "
          f"{result.predicted_rate:.9g} (rel error {result.rel_error:.3e}) "
          f"-> {out / name}")
    return EXIT_OK


def cmd_evolve(args) -> int:
    cfg = resolve_config(load_config(args.config), args.seed)
    out = _outdir(args)
    manifest = Manifest("evolve", cfg, args.threads)
    params = params_from(cfg)
    state = state_from(cfg, params)
    trunc = truncation_from(cfg, params)
    u0 = seed_measure(cfg, params, state, trunc)
    sim = cfg["sim"]
    sim_cfg = dynamics.SimConfig(
        params=params, state=state, u0=u0, truncation=trunc,
        t_end=float(sim["t_end"]), dt=float(sim["dt"]),
        stepper=sim.get("stepper", "etd2rk"),
        blowup_fm_threshold=sim.get("blowup_threshold"),
        diagnostics_stride=int(sim.get("diagnostics_stride", 1)),
        linearized=bool(sim.get("linearized", False)))
    t0 = time.time()
    traj = dynamics.evolve(sim_cfg)
    manifest.timings["evolve_seconds"] = time.time() - t0

    outcome_code = traj.outcome.kind
    rows = []
    for i, rec in enumerate(traj.diagnostics):
        final = i == len(traj.diagnostics) - 1
        rows.append([rec.t, rec.fm_norm, rec.fm4_norm, rec.atom_count, rec.sup_sample,
                     outcome_code if final else "running"])
    name = "diagnostics.jsonl" if args.format == "jsonl" else "diagnostics.csv"
    write_table(out / name, ["t", "fm_norm", "fm4_norm", "atom_count", "sup_sample",
                             "outcome"], rows, manifest.hash, args.format)
    snap_name = "snapshots.jsonl"
    measures.write_snapshots(out / snap_name, zip(traj.times, traj.snapshots),
                             manifest_hash=manifest.hash)
    manifest.outputs.extend([name, snap_name])
    manifest.outcome = {"kind": traj.outcome.kind, "t": traj.outcome.t,
                        "final_fm_norm": traj.diagnostics[-1].fm_norm,
                        "dt_times_max_rate": traj.meta["dt_times_max_rate"]}
    manifest.write(out)
    print(f"evolve: outcome {traj.outcome.kind} at t={traj.outcome.t}, "
          f"{len(traj.diagnostics)} diagnostic records -> {out / name}")
    return EXIT_OK


def preflight_manifest(outdir: Path) -> list[verification.CheckResult]:
    """Check that prior outputs in `outdir` reference its manifest hash."""
    results = []
    mpath = outdir / "manifest.json"
    if not mpath.exists():
        return [verification.CheckResult("oracle.manifest_preflight", False,
                                         f"no manifest.json in {outdir}")]
    with open(mpath, "r", encoding="utf-8") as fh:
        doc = json.load(fh)
    want = doc.get("config_hash", "")
    ok = True
    detail = []
    for name in doc.get("outputs", []):
        p = outdir / name
        if not p.exists():
            ok = False
            detail.append(f"{name}: missing")
            continue
        with open(p, "r", encoding="utf-8") as fh:
            first = fh.readline()
        if want not in first:
            ok = False
            detail.append(f"{name}: does not reference manifest {want}")
    results.append(verification.CheckResult(
        "oracle.manifest_preflight", ok,
        "; ".join(detail) if detail else f"{len(doc.get('outputs', []))} outputs match {want}"))
    return results


def cmd_verify(args) -> int:
    suites = ["algebra", "symbols", "maxreg", "oracle"] if args.suite == "all" else [args.suite]
    results = []
    if "oracle" in suites and args.out and (Path(args.out) / "manifest.json").exists():
        results.extend(preflight_manifest(Path(args.out)))
        if not all(r.ok for r in results):
            for r in results:
                print(f"{'PASS' if r.ok else 'FAIL'} {r.name}: {r.detail}")
            print("verify: FAIL (manifest preflight)")
            return EXIT_NUMERIC
    t0 = time.time()
    results.extend(verification.run_suites(suites, seed=args.seed or 0))
    for r in results:
        print(f"{'PASS' if r.ok else 'FAIL'} {r.name}: {r.detail}")
    n_fail = sum(not r.ok for r in results)
    print(f"verify: {len(results) - n_fail}/{len(results)} checks passed "
          f"in {time.time() - t0:.1f}s")
    return EXIT_OK if n_fail == 0 else EXIT_NUMERIC


# ---------------------------------------------------------------------------
# entry point


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="activefm",
        description="Spectral-measure simulator and stability analyzer for active-fluid turbulence")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", type=str, default=None, help="JSON configuration file")
        p.add_argument("--out", type=str, default=None, help="output directory")
        p.add_argument("--seed", type=int, default=None, help="64-bit RNG seed (overrides config)")
        p.add_argument("--threads", type=int, default=1, help="worker count (recorded; kernels are vectorized)")
        p.add_argument("--format", choices=("csv", "jsonl"), default="csv")

    p = sub.add_parser("classify", help="stability phase-diagram sweep")
    common(p)
    p.set_defaults(func=cmd_classify)

    p = sub.add_parser("dispersion", help="dispersion curve with band crossings")
    common(p)
    p.set_defaults(func=cmd_dispersion)

    p = sub.add_parser("growth", help="measured vs predicted growth rate")
    common(p)
    p.set_defaults(func=cmd_growth)

    p = sub.add_parser("evolve", help="nonlinear evolution run")
    common(p)
    p.set_defaults(func=cmd_evolve)

    p = sub.add_parser("verify", help="built-in verification suites")
    p.add_argument("suite", nargs="?", default="all",
                   choices=("algebra", "symbols", "maxreg", "oracle", "all"))
    common(p)
    p.set_defaults(func=cmd_verify)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, InvalidStateError, LatticeError, DimensionMismatchError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except AtomCapError as exc:
        print(f"resource error: {exc}", file=sys.stderr)
        return EXIT_RESOURCE
    except (NumericError, ExperimentError, ActiveFMError) as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
