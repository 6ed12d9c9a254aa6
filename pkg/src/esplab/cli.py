"""Command-line entry point: ``esplab <subcommand> [options]``.

Non-convergence is data, never an error: the exit status is nonzero only for
misuse (2) and I/O failures (3).
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

from . import analysis, esp_harness, reservoir, sweep
from .activations import ALL_FAMILIES, ActivationSpec, ConfigurationError, Family, write_curve_csv
from .config import ConfigError, load_file, merge, parse_override

OUT_ENV = "ESPLAB_OUT"
EXIT_USAGE, EXIT_IO = 2, 3

log = logging.getLogger("esplab")

_ALL = [f.value for f in ALL_FAMILIES]
_DETERMINISTIC = [f.value for f in ALL_FAMILIES if f is not Family.BROWNIAN]

DEFAULTS = {
    "esp-test": {
        "activation": "tanh", "distribution": "gaussian", "n": 100, "rho": 0.95, "leak": 0.7,
        "density": 0.1, "input_scaling": 1.0, "input_dim": 1, "seed": 0, "trials": 1,
        "horizon": 200, "extended_horizon": 2000, "threshold": 0.1,
    },
    "sweep": {
        "activations": ["tanh"], "distributions": ["gaussian"], "n_values": [100],
        "rho_values": list(sweep.PAPER_RHO_GRID), "leak_values": list(sweep.PAPER_LEAK_GRID),
        "trials_per_cell": sweep.DESK_TRIALS, "seeds": list(sweep.DESK_SEEDS),
        "horizon": 200, "extended_horizon": 2000, "threshold": 0.1,
        "density": 0.1, "input_scaling": 1.0, "input_dim": 1,
    },
    "scaling": {
        "activations": list(_ALL), "n_values": list(sweep.PAPER_N_GRID), "rho": 0.95, "leak": 0.7,
        "trials": sweep.DESK_TRIALS, "seeds": [0], "distribution": "gaussian",
        "horizon": 200, "extended_horizon": 2000, "threshold": 0.1, "density": 0.1, "input_scaling": 1.0,
    },
    "extreme-rho": {
        "activation": "cantor-function", "rho_values": [1.0, 2.0, 5.0, 10.0, 20.0, 50.0, 100.0],
        "leak": 0.7, "n": 100, "trials": sweep.DESK_TRIALS, "seeds": [0], "distribution": "gaussian",
        "horizon": 200, "extended_horizon": 2000, "threshold": 0.1, "density": 0.1, "input_scaling": 1.0,
    },
    "lipschitz": {
        "families": list(_DETERMINISTIC), "epsilon": 1e-6, "samples": 100_000,
        "domain_lo": -5.0, "domain_hi": 5.0, "seed": 0,
    },
    "verify-spectral": {
        "n": 500, "rho": 10.0, "density": 0.1, "seed": 0, "dump_matrix": False,
    },
    "oracle": {
        "activation": "cantor-set", "n": 4, "rho": 0.95, "density": 0.5, "input_scaling": 1.0,
        "input_period": 3, "init_samples": 256, "seed": 0,
    },
    "curves": {
        "families": list(_ALL), "lo": -3.0, "hi": 3.0, "points": 10_001, "seed": 0,
    },
}


class UsageError(Exception):
    pass


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="PATH", help="TOML file whose keys mirror the subcommand's settings")
    common.add_argument("--set", metavar="KEY=VALUE", action="append", default=[],
                        help="override one setting (repeatable); lists as [a, b] or a,b")
    common.add_argument("--out", metavar="DIR", help=f"output directory (default ${OUT_ENV} or ./esplab-out)")
    common.add_argument("--parallelism", type=int, default=1, metavar="N", help="worker processes for sweeps")
    common.add_argument("--extended-horizon", action="store_true",
                        help="continue unconverged pairs to the extended horizon")
    common.add_argument("--full-paper-scale", action="store_true",
                        help="50 trials x 5 seeds per sweep cell, 1000 trials per scaling cell")
    common.add_argument("--seed", type=int, help="master seed")
    common.add_argument("--n", type=int, help="reservoir size")
    common.add_argument("--rho", type=float, help="spectral radius target")
    common.add_argument("--leak", type=float, help="leak rate a")
    common.add_argument("--trials", type=int, help="trials per cell")
    common.add_argument("--family", "--activation", dest="family", help="activation family")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="esplab", description="Echo-state diagnostics for non-smooth activations.")
    sub = p.add_subparsers(dest="command", metavar="SUBCOMMAND")
    sub.required = True
    helps = {
        "esp-test": "two-trajectory convergence test",
        "sweep": "(rho, leak, N) phase-diagram sweep",
        "scaling": "convergence across reservoir sizes at rho=0.95, a=0.7",
        "extreme-rho": "convergence far beyond rho = 1",
        "lipschitz": "empirical Lipschitz table",
        "verify-spectral": "build a reservoir and dump its eigenvalues",
        "oracle": "enumerate attractors of a small quantized reservoir (a = 1)",
        "curves": "export activation curves on [-3, 3]",
    }
    for name, text in helps.items():
        keys = ", ".join(DEFAULTS[name])
        sub.add_parser(name, parents=[common], help=text, description=f"{text}. Settings: {keys}.")
    return p


def _out_dir(args) -> Path:
    out = Path(args.out or os.environ.get(OUT_ENV) or "esplab-out")
    out.mkdir(parents=True, exist_ok=True)
    return out


def resolve_settings(args) -> dict:
    defaults = dict(DEFAULTS[args.command])
    if args.full_paper_scale:
        if args.command == "sweep":
            defaults.update(trials_per_cell=sweep.PAPER_TRIALS, seeds=list(sweep.PAPER_SEEDS))
        elif args.command == "scaling":
            defaults.update(trials=sweep.PAPER_SCALING_TRIALS)
        elif args.command == "extreme-rho":
            defaults.update(trials=sweep.PAPER_TRIALS, seeds=list(sweep.PAPER_SEEDS))
    file_values = load_file(args.config) if args.config else {}
    overrides = [parse_override(s) for s in args.set]
    flag_items = []
    for attr in ("n", "rho", "leak", "trials", "seed"):
        val = getattr(args, attr)
        if val is None:
            continue
        key = attr
        if key not in defaults:
            # on grid commands a scalar flag pins the whole axis
            plural = {"seed": "seeds", "trials": "trials_per_cell"}.get(attr, f"{attr}_values")
            if plural in defaults:
                key = plural
                val = val if attr == "trials" else [val]
        if key not in defaults:
            raise UsageError(f"--{attr} does not apply to {args.command}")
        flag_items.append((key, val))
    if args.family is not None:
        if "activation" in defaults:
            flag_items.append(("activation", args.family))
        elif "families" in defaults:
            flag_items.append(("families", [args.family]))
        elif "activations" in defaults:
            flag_items.append(("activations", [args.family]))
        else:
            raise UsageError(f"--family does not apply to {args.command}")
    return merge(defaults, file_values, overrides + flag_items)


# -- subcommands -----------------------------------------------------------------


def _summary(cell, st) -> str:
    t = "-" if st.median_convergence_time is None else f"{st.median_convergence_time:g}"
    return (f"{cell.activation.name:22s} dist={cell.distribution} n={cell.n} rho={cell.rho:g} "
            f"a={cell.leak:g} frac={st.convergence_fraction:.3f} median_t={t} "
            f"final={st.mean_final_distance:.3g} diverged={st.diverged_count}")


def cmd_esp_test(s, args, out: Path) -> None:
    cfg = reservoir.ReservoirConfig(
        n=s["n"], rho_target=s["rho"], leak=s["leak"], density=s["density"],
        input_scaling=s["input_scaling"], input_dim=s["input_dim"], seed=s["seed"],
    )
    spec = esp_harness.EspTestSpec(
        reservoir=cfg, activation=ActivationSpec.of(s["activation"]), distribution=s["distribution"],
        horizon=s["horizon"], extended_horizon=s["extended_horizon"], threshold=s["threshold"],
        trials=s["trials"], extend=args.extended_horizon,
    )
    records = []
    for trial in range(spec.trials):
        r = esp_harness.run_pair(spec, trial)
        esp_harness.write_trace_csv(r, out / f"trace_trial{trial}.csv")
        records.append({"trial": trial, **r.to_record()})
        ct = "-" if r.convergence_time is None else r.convergence_time
        print(f"trial {trial}: {spec.activation.name} n={cfg.n} rho={cfg.rho_target:g} a={cfg.leak:g} "
              f"converged={r.converged} t={ct} final={r.final_distance:.3g}")
    doc = {"settings": s, "results": records}
    (out / "esp_test.json").write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")


def _emit_diagram(diagram, out: Path, stem: str) -> None:
    sweep.emit(diagram, "csv", out / f"{stem}.csv")
    sweep.emit(diagram, "json", out / f"{stem}.json")
    sweep.emit_heatmaps(diagram, out, "fraction")
    sweep.emit_heatmaps(diagram, out, "all")
    if not diagram.complete:
        print(f"incomplete: {diagram.metadata['cells_done']} of {diagram.metadata['cells_total']} cells")


def _grid_kwargs(s, args) -> dict:
    return dict(horizon=s["horizon"], extended_horizon=s["extended_horizon"], threshold=s["threshold"],
                density=s["density"], input_scaling=s["input_scaling"], extend=args.extended_horizon)


def cmd_sweep(s, args, out: Path) -> None:
    grid = sweep.SweepGrid(
        rho_values=s["rho_values"], leak_values=s["leak_values"], n_values=s["n_values"],
        activations=s["activations"], distributions=s["distributions"],
        trials_per_cell=s["trials_per_cell"], seeds=s["seeds"], input_dim=s["input_dim"],
        **_grid_kwargs(s, args),
    )
    d = sweep.run_sweep(grid, args.parallelism, progress=lambda c, st: print(_summary(c, st), flush=True))
    _emit_diagram(d, out, "sweep")


def cmd_scaling(s, args, out: Path) -> None:
    d = sweep.scaling_run(
        s["activations"], s["n_values"], rho=s["rho"], leak=s["leak"], trials=s["trials"],
        seeds=s["seeds"], distribution=s["distribution"], parallelism=args.parallelism,
        **_grid_kwargs(s, args),
    )
    for c, st in d.cells:
        print(_summary(c, st))
    _emit_diagram(d, out, "scaling")


def cmd_extreme_rho(s, args, out: Path) -> None:
    d = sweep.extreme_rho_run(
        s["activation"], s["rho_values"], leak=s["leak"], n=s["n"], trials=s["trials"],
        seeds=s["seeds"], distribution=s["distribution"], parallelism=args.parallelism,
        **_grid_kwargs(s, args),
    )
    for c, st in d.cells:
        print(_summary(c, st))
    _emit_diagram(d, out, "extreme_rho")


def cmd_lipschitz(s, args, out: Path) -> None:
    rows = []
    for fam in s["families"]:
        spec = ActivationSpec.of(fam)
        st = analysis.estimate_lipschitz(spec, s["epsilon"], s["samples"], (s["domain_lo"], s["domain_hi"]), s["seed"])
        rows.append((spec.name, st))
        print(f"{spec.name:22s} max={st.max:.4g} median={st.median:.4g} p95={st.p95:.4g}")
    analysis.write_lipschitz_csv(rows, out / "lipschitz.csv")


def cmd_verify_spectral(s, args, out: Path) -> None:
    cfg = reservoir.ReservoirConfig(n=s["n"], rho_target=s["rho"], density=s["density"], seed=s["seed"])
    m = reservoir.build_reservoir(cfg)
    _, peak = reservoir.write_eigenvalue_csv(m.w_res, out / "eigenvalues.csv")
    if s["dump_matrix"]:
        reservoir.write_matrix_csv(m.w_res, out / "w_res.csv")
    rel = abs(peak - cfg.rho_target) / cfg.rho_target
    print(f"n={cfg.n} target={cfg.rho_target:g} max|lambda|={peak!r} relative error={rel:.2e}")


def cmd_oracle(s, args, out: Path) -> None:
    spec = ActivationSpec.of(s["activation"])
    cfg = reservoir.ReservoirConfig(n=s["n"], rho_target=s["rho"], leak=1.0, density=s["density"],
                                    input_scaling=s["input_scaling"], seed=s["seed"])
    m = reservoir.build_reservoir(cfg)
    u = reservoir.gen_inputs("uniform", s["input_period"], 1, [s["seed"], 1]).values
    rep = esp_harness.enumerate_quantized_attractors(m, spec, u, init_samples=s["init_samples"], seed=s["seed"])
    doc = {
        "settings": s,
        "unique": rep.unique,
        "cycles": [[c.tolist() for c in cyc] for cyc in rep.cycles],
        "cycle_lengths": [len(c) for c in rep.cycles],
        "basin_counts": rep.basin_counts,
    }
    (out / "attractors.json").write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")
    print(f"{spec.name} n={cfg.n}: {rep.n_cycles} cycle(s), lengths {doc['cycle_lengths']}, "
          f"basins {rep.basin_counts}, unique={rep.unique}")


def cmd_curves(s, args, out: Path) -> None:
    for fam in s["families"]:
        spec = ActivationSpec.of(fam)
        path = write_curve_csv(spec, out / f"curve_{spec.name}.csv", lo=s["lo"], hi=s["hi"],
                               points=s["points"], seed=s["seed"])
        print(f"{spec.name}: {path}")


COMMANDS = {
    "esp-test": cmd_esp_test, "sweep": cmd_sweep, "scaling": cmd_scaling,
    "extreme-rho": cmd_extreme_rho, "lipschitz": cmd_lipschitz,
    "verify-spectral": cmd_verify_spectral, "oracle": cmd_oracle, "curves": cmd_curves,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        settings = resolve_settings(args)
        out = _out_dir(args)
        COMMANDS[args.command](settings, args, out)
    except (UsageError, ConfigError, ConfigurationError, sweep.GridError, ValueError) as exc:
        print(f"esplab {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as exc:
        print(f"esplab {args.command}: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    return 0


if __name__ == "__main__":
    sys.exit(main())
