"""``spinherald`` command line: batch runs that write CSV tables plus a JSON manifest.

Every CSV starts with one ``#`` schema line followed by a column header row.
Exit codes: 0 ok, 2 invalid parameters, 3 numerical-quality failure, 4 I/O.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import os
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__
from . import dynamics as dyn
from .measurement import (
    DetectorModel,
    average_qfi_imperfect,
    first_pulse_table,
    posterior_first_pulse,
    posterior_update_subsequent,
    sample_mean_qfi,
    sample_runs,
)
from .qfi_engine import average_qfi_ideal, extremal_table, fit_power_law
from .spin_decomposition import decompose, most_probable_S, tail_mass, write_csv as write_decomposition

log = logging.getLogger("spinherald")

EXIT_OK, EXIT_PARAMS, EXIT_NUMERICS, EXIT_IO = 0, 2, 3, 4
THREADS_ENV = "SPINHERALD_THREADS"

DEFAULTS = {
    "common": {"seed": 0, "threads": 1, "out_dir": "."},
    "decompose": {"N": 1000, "tail_cut": 200},
    "qfi-sweep": {"n_min": 10, "n_max": 200, "parity": "even", "eta": 1.0, "inset": None},
    "sequence": {"N": 16, "eta": 0.7, "pulses": 50, "samples": 1000, "true_S": None, "snapshots": "1,2,3,5,10,20,50"},
    "dynamics": {"S": 3, "coupling": 0.05, "n_max": None, "t_final": None, "trajectories": 100, "direction": "tc", "checkpoints": 401},
    "fit": {"input": None, "n_min": None, "n_max": None, "x_column": "N", "y_column": "avg_qfi"},
}


class NumericalQualityError(RuntimeError):
    pass


def _fmt(x) -> str:
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return repr(float(x))


def _write_table(path: Path, schema: str, columns: list[str], rows) -> Path:
    with open(path, "w", newline="") as fh:
        fh.write(f"# spinherald {schema}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for row in rows:
            w.writerow([v if isinstance(v, str) else _fmt(v) for v in row])
    return path


def _pmap(fn, items, threads):
    if threads <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))


# ---------------------------------------------------------------- subcommands


def cmd_decompose(p, out: Path, manifest: dict) -> None:
    dist = decompose(p["N"])
    path = out / f"decompose_N{p['N']}.csv"
    write_decomposition(dist, path)
    manifest["outputs"].append(str(path))
    result = {"most_probable_S": most_probable_S(dist)}
    if p["tail_cut"] is not None and p["tail_cut"] <= dist.N:
        result["tail_mass"] = tail_mass(dist, p["tail_cut"])
        print(f"tail mass sum_(S>{p['tail_cut']}) |c_S|^2 = {result['tail_mass']:.6e}")
    print(f"most probable S = {result['most_probable_S']}")
    manifest["results"] = result


def _sweep_values(p):
    lo, hi = p["n_min"], p["n_max"]
    Ns = list(range(lo, hi + 1))
    if p["parity"] == "even":
        Ns = [N for N in Ns if N % 2 == 0]
    elif p["parity"] == "odd":
        Ns = [N for N in Ns if N % 2 == 1]
    if len(Ns) < 3:
        raise ValueError("need at least 3 atom numbers in the sweep range to fit a power law")
    return Ns


def cmd_qfi_sweep(p, out: Path, manifest: dict) -> None:
    eta = p["eta"]
    if not 0.0 <= eta <= 1.0:
        raise ValueError("eta must lie in [0, 1]")
    Ns = _sweep_values(p)
    det = DetectorModel(eta)
    if eta == 1.0:
        values = _pmap(average_qfi_ideal, Ns, p["threads"])
    else:
        values = _pmap(lambda N: average_qfi_imperfect(N, det), Ns, p["threads"])
    path = _write_table(
        out / f"qfi_sweep_{p['parity']}_eta{eta:g}.csv", "qfi-sweep v1", ["N", "avg_qfi"], zip(Ns, values)
    )
    manifest["outputs"].append(str(path))
    fit = fit_power_law(zip(Ns, values))
    if not all(map(math.isfinite, (fit.prefactor, fit.exponent))):
        raise NumericalQualityError("degenerate power-law fit")
    manifest["results"] = {
        "fit_range": [Ns[0], Ns[-1]],
        "fit_points": len(Ns),
        "prefactor": fit.prefactor,
        "exponent": fit.exponent,
        "log_rms_residual": fit.residual,
    }
    print(f"avg QFI ~ {fit.prefactor:.4g} N^{fit.exponent:.4f} over N in [{Ns[0]}, {Ns[-1]}] ({p['parity']}, eta={eta:g})")

    if p["inset"]:
        N = p["inset"]
        dist = decompose(N)
        table = extremal_table(N)
        rows = [(S, dist.populations[S], table.qfi[S]) for S in dist.support]
        manifest["outputs"].append(
            str(_write_table(out / f"qfi_states_N{N}.csv", "qfi-states v1", ["S", "population", "qfi"], rows))
        )
        if eta < 1.0:
            p_n, f_n = first_pulse_table(N, det)
            rows = [(n, p_n[n], f_n[n]) for n in range(N + 1)]
            manifest["outputs"].append(
                str(_write_table(out / f"first_pulse_N{N}_eta{eta:g}.csv", "first-pulse v1", ["n", "p_n", "qfi"], rows))
            )


def cmd_sequence(p, out: Path, manifest: dict) -> None:
    if p["samples"] < 1 or p["pulses"] < 1:
        raise ValueError("samples and pulses must be at least 1")
    det = DetectorModel(p["eta"])
    runs = sample_runs(p["N"], det, p["pulses"], p["samples"], p["seed"], threads=p["threads"], true_S=p["true_S"])
    trace = np.array([r.qfi_trace for r in runs])
    mean = sample_mean_qfi(runs)
    stderr = trace.std(axis=0, ddof=1) / math.sqrt(len(runs)) if len(runs) > 1 else np.zeros_like(mean)
    tag = f"N{p['N']}_eta{p['eta']:g}"
    rows = [(k + 1, mean[k], stderr[k]) for k in range(p["pulses"])]
    manifest["outputs"].append(
        str(_write_table(out / f"sequence_{tag}.csv", "sequence v1", ["pulses", "mean_qfi", "stderr"], rows))
    )
    rec_rows = [
        (i, rec.pulse_index, rec.direction, rec.detected_count, r.true_S)
        for i, r in enumerate(runs)
        for rec in r.records
    ]
    manifest["outputs"].append(
        str(_write_table(out / f"runs_{tag}.csv", "runs v1", ["run", "pulse", "direction", "n_i", "true_S"], rec_rows))
    )
    ideal = average_qfi_ideal(p["N"])
    manifest["results"] = {"ideal_avg_qfi": ideal, "final_mean_qfi": float(mean[-1]), "final_stderr": float(stderr[-1])}
    print(f"mean QFI after {p['pulses']} pulses: {mean[-1]:.6g} +- {stderr[-1]:.2g} (ideal detector {ideal:.6g})")

    if p["true_S"] is not None:
        # posterior snapshots of the first run, for the pinned spin length
        wanted = sorted({int(x) for x in str(p["snapshots"]).split(",") if x.strip()} & set(range(1, p["pulses"] + 1)))
        counts = [rec.detected_count for rec in runs[0].records]
        dist = decompose(p["N"])
        post = None
        rows = []
        for k, n in enumerate(counts):
            post = posterior_first_pulse(dist, n, det) if k == 0 else posterior_update_subsequent(post, n, det)
            if k + 1 in wanted:
                rows.extend((k + 1, S, post.weights[S]) for S in dist.support)
        manifest["outputs"].append(
            str(_write_table(out / f"posterior_{tag}_S{p['true_S']}.csv", "posterior v1", ["pulses", "S", "p"], rows))
        )
        manifest["results"]["final_posterior_at_true_S"] = float(runs[0].posterior.weights[p["true_S"]])


def cmd_dynamics(p, out: Path, manifest: dict) -> None:
    S, lam = p["S"], p["coupling"]
    gen = dyn.build_tc_liouvillian(S, lam, 1.0, p["n_max"], p["direction"])
    M0 = 0 if p["direction"] == dyn.TC else -S
    init = dyn.LadderCavityState.basis_state(S, M0, 0, gen.space.n_max)
    t_final = p["t_final"]
    if t_final is None:
        t_final = 10 * dyn.pulse_duration_estimate(max(S, 1), lam, 1.0).duration if lam > 0 else 10.0
    res = dyn.evolve_to_steady_state(gen, init, t_final, checkpoints=p["checkpoints"])
    tag = f"S{S}_{p['direction']}"
    rows = zip(res.times, res.photon_number, res.emitted, res.fidelity)
    manifest["outputs"].append(
        str(_write_table(out / f"dynamics_{tag}.csv", "dynamics v1", ["t", "photon_number", "emitted", "fidelity"], rows))
    )
    expected = S if p["direction"] == dyn.TC else 2 * S
    results = {
        "t_final": t_final,
        "n_max": gen.space.n_max,
        "emitted": float(res.emitted[-1]),
        "expected_photons": expected,
        "final_fidelity": float(res.fidelity[-1]),
        "trace_error": res.trace_error,
        "leakage": res.leakage,
    }
    manifest["results"] = results
    print(f"integrated emission {res.emitted[-1]:.6f} (expected {expected}), final fidelity {res.fidelity[-1]:.8f}")
    if res.leakage > dyn.LEAKAGE_TOL:
        raise NumericalQualityError(f"cavity truncation leakage {res.leakage:.2e}")

    if p["trajectories"] >= 1:
        recs = dyn.run_trajectories(gen, init, t_final, p["trajectories"], p["seed"])
        rows = [(r.seed, r.jump_count, ";".join(_fmt(t) for t in r.jump_times)) for r in recs]
        manifest["outputs"].append(
            str(_write_table(out / f"trajectories_{tag}.csv", "trajectories v1", ["seed", "jump_count", "jump_times"], rows))
        )
        counts = sorted({r.jump_count for r in recs})
        results["jump_counts"] = counts
        print(f"{len(recs)} trajectories, jump counts observed: {counts}")
        if counts != [expected] or not all(r.completed for r in recs):
            raise NumericalQualityError(f"jump-count law violated: expected exactly {expected}, got {counts}")


def cmd_fit(p, out: Path, manifest: dict) -> None:
    if not p["input"]:
        raise ValueError("fit needs --input")
    xs, ys = [], []
    with open(p["input"]) as fh:
        reader = csv.DictReader(line for line in fh if not line.startswith("#"))
        for row in reader:
            x, y = float(row[p["x_column"]]), float(row[p["y_column"]])
            if p["n_min"] is not None and x < p["n_min"]:
                continue
            if p["n_max"] is not None and x > p["n_max"]:
                continue
            xs.append(x)
            ys.append(y)
    fit = fit_power_law(zip(xs, ys))
    manifest["results"] = {
        "fit_range": [min(xs), max(xs)],
        "fit_points": len(xs),
        "prefactor": fit.prefactor,
        "exponent": fit.exponent,
        "log_rms_residual": fit.residual,
    }
    print(f"{p['y_column']} ~ {fit.prefactor:.6g} {p['x_column']}^{fit.exponent:.6f} ({len(xs)} points)")


COMMANDS = {
    "decompose": cmd_decompose,
    "qfi-sweep": cmd_qfi_sweep,
    "sequence": cmd_sequence,
    "dynamics": cmd_dynamics,
    "fit": cmd_fit,
}


# ---------------------------------------------------------------- parsing


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, help="master seed (default 0)")
    common.add_argument("--threads", type=int, help=f"worker threads (default 1, or ${THREADS_ENV})")
    common.add_argument("--out-dir", dest="out_dir", help="output directory (default .)")
    common.add_argument("--config", help="JSON file of parameter defaults; CLI flags take precedence")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="spinherald", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    s = sub.add_parser(
        "decompose",
        parents=[common],
        help="spin-length populations of |m=0>^N",
        description="Writes decompose_N<N>.csv with columns S,c_S,population.",
    )
    s.add_argument("--N", type=int)
    s.add_argument("--tail-cut", dest="tail_cut", type=int, help="report sum of populations above this S (default 200)")

    s = sub.add_parser(
        "qfi-sweep",
        parents=[common],
        help="average QFI over an N range plus power-law fit",
        description=(
            "Writes qfi_sweep_<parity>_eta<eta>.csv with columns N,avg_qfi. "
            "--inset N adds qfi_states_N<N>.csv (S,population,qfi) and, for eta<1, "
            "first_pulse_N<N>_eta<eta>.csv (n,p_n,qfi)."
        ),
    )
    s.add_argument("--n-min", dest="n_min", type=int)
    s.add_argument("--n-max", dest="n_max", type=int)
    s.add_argument("--parity", choices=["even", "odd", "all"])
    s.add_argument("--eta", type=float, help="detector efficiency (1 = ideal detector)")
    s.add_argument("--inset", type=int, help="also write per-S and per-n tables for this N")

    s = sub.add_parser(
        "sequence",
        parents=[common],
        help="Monte Carlo of alternating TC / anti-TC pulse sequences",
        description=(
            "Writes sequence_N<N>_eta<eta>.csv (pulses,mean_qfi,stderr), runs_*.csv "
            "(run,pulse,direction,n_i,true_S) and, with --true-S, posterior_*.csv (pulses,S,p)."
        ),
    )
    s.add_argument("--N", type=int)
    s.add_argument("--eta", type=float)
    s.add_argument("--pulses", type=int)
    s.add_argument("--samples", type=int)
    s.add_argument("--true-S", dest="true_S", type=int, help="pin the true spin length instead of sampling it")
    s.add_argument("--snapshots", help="comma-separated pulse counts for posterior snapshots")

    s = sub.add_parser(
        "dynamics",
        parents=[common],
        help="master equation and photon-counting trajectories for one spin-S sector",
        description=(
            "Times in units of 1/kappa. Writes dynamics_S<S>_<dir>.csv (t,photon_number,emitted,fidelity) "
            "and trajectories_S<S>_<dir>.csv (seed,jump_count,jump_times)."
        ),
    )
    s.add_argument("--S", type=int)
    s.add_argument("--coupling", type=float, help="lambda / kappa")
    s.add_argument("--n-max", dest="n_max", type=int)
    s.add_argument("--t-final", dest="t_final", type=float)
    s.add_argument("--trajectories", type=int)
    s.add_argument("--direction", choices=[dyn.TC, dyn.ANTI_TC])
    s.add_argument("--checkpoints", type=int)

    s = sub.add_parser(
        "fit",
        parents=[common],
        help="log-log power-law fit of a CSV column",
        description="Reads any spinherald CSV (comment lines skipped) and fits y = a x^b.",
    )
    s.add_argument("--input")
    s.add_argument("--n-min", dest="n_min", type=float)
    s.add_argument("--n-max", dest="n_max", type=float)
    s.add_argument("--x-column", dest="x_column")
    s.add_argument("--y-column", dest="y_column")
    return parser


def resolve_params(args: argparse.Namespace) -> dict:
    """CLI flags > config file > environment (threads only) > built-in defaults."""
    params = {**DEFAULTS["common"], **DEFAULTS[args.command]}
    if os.environ.get(THREADS_ENV):
        params["threads"] = int(os.environ[THREADS_ENV])
    if args.config:
        with open(args.config) as fh:
            cfg = json.load(fh)
        section = cfg.get(args.command, {})
        shared = {k: v for k, v in cfg.items() if not isinstance(v, dict)}
        for key, value in {**shared, **section}.items():
            key = key.replace("-", "_")
            if key not in params:
                raise ValueError(f"unknown config key {key!r} for {args.command}")
            params[key] = value
    for key in params:
        value = getattr(args, key, None)
        if value is not None:
            params[key] = value
    if params["threads"] < 1:
        raise ValueError("threads must be at least 1")
    return params


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")

    manifest = {
        "subcommand": args.command,
        "version": __version__,
        "started": datetime.now(timezone.utc).isoformat(),
        "parameters": None,
        "outputs": [],
        "status": "failed",
    }
    code = EXIT_OK
    out = None
    t0 = time.perf_counter()
    try:
        params = resolve_params(args)
        manifest["parameters"] = params
        out = Path(params["out_dir"])
        out.mkdir(parents=True, exist_ok=True)
        COMMANDS[args.command](params, out, manifest)
        manifest["status"] = "ok"
    except (NumericalQualityError, dyn.TruncationError, dyn.IntegrationError) as exc:
        log.error("%s", exc)
        manifest["error"] = str(exc)
        code = EXIT_NUMERICS
    except OSError as exc:
        log.error("I/O failure: %s", exc)
        manifest["error"] = f"I/O failure: {exc}"
        code = EXIT_IO
    except (ValueError, KeyError, json.JSONDecodeError) as exc:
        log.error("invalid parameters: %s", exc)
        manifest["error"] = str(exc)
        code = EXIT_PARAMS
    finally:
        manifest["wall_seconds"] = time.perf_counter() - t0
        target = (out or Path(".")) / f"{args.command}_manifest.json"
        try:
            with open(target, "w") as fh:
                json.dump(manifest, fh, indent=2, default=str)
        except OSError as exc:
            log.error("could not write manifest %s: %s", target, exc)
            code = code or EXIT_IO
    return code


if __name__ == "__main__":
    sys.exit(main())
