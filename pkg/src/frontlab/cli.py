"""Command line entry point: ``frontlab <subcommand> ...`` or ``python -m frontlab``.

Exit codes: 0 success, 2 invalid configuration or checkpoint, 3 numerical
blow-up or window overflow (a checkpoint path is printed), 4 estimation error.
"""

import argparse
import json
import sys
from pathlib import Path

from . import __version__
from .errors import (ConfigurationError, DomainError, EstimationError, NumericalBlowupError,
                     WindowOverflowError)
from .experiments import (DEFAULT_OPTIONS, ExperimentConfig, ResultSink, config_hash, emit_plot_data,
                          prepare_output, run_experiment, write_manifest)
from .field import dump_snapshot, front_edges, mass_w, xi
from .integrator import (SimParams, initial_state, load_checkpoint, make_checkpoint, original, rescaled,
                         restore, run, save_checkpoint)
from .noise import make_stream
from .nonlinearity import BUILTINS, NonlinearitySpec

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_ESTIMATE = 0, 2, 3, 4


def _floats(text):
    return [float(v) for v in text.split(",") if v.strip()]


def _nonlinearity(args) -> NonlinearitySpec:
    if args.f_json:
        return NonlinearitySpec.from_dict(json.loads(args.f_json))
    if args.f not in BUILTINS:
        raise ConfigurationError(f"unknown nonlinearity {args.f!r}; built-ins: {sorted(BUILTINS)}")
    f = BUILTINS[args.f]()
    if args.drift_mask:
        lo, hi = _floats(args.drift_mask)
        f = f.with_mask(lo, hi)
    return f


def _params(args, **override) -> SimParams:
    kw = dict(dt=args.dt, dx=args.dx, t_max=args.t_max, window=args.window, log_every=args.log_every,
              drift=not args.no_drift, noise_scheme=args.noise_scheme)
    kw.update(override)
    if args.epsilon is not None:
        return rescaled(args.epsilon, **kw)
    return original(args.sigma, **kw)


def _add_common(sp, need_out=True):
    sp.add_argument("--config", help="JSON experiment config (overrides the other flags)")
    sp.add_argument("--f", default="fisher_kpp", help=f"built-in nonlinearity: {', '.join(BUILTINS)}")
    sp.add_argument("--f-json", help="nonlinearity as JSON {kind, m?, knots?, gamma, k_tilde, drift_mask?}")
    sp.add_argument("--drift-mask", help="lo,hi interval where f is set to 0")
    sp.add_argument("--sigma", type=float, default=1.0, help="noise strength (original frame)")
    sp.add_argument("--epsilon", type=float, help="drift prefactor; selects the rescaled frame")
    sp.add_argument("--dt", type=float, default=0.004)
    sp.add_argument("--dx", type=float, default=0.1)
    sp.add_argument("--t-max", type=float, default=10.0)
    sp.add_argument("--window", type=float, default=400.0)
    sp.add_argument("--log-every", type=int, default=25, help="steps between log rows")
    sp.add_argument("--no-drift", action="store_true", help="run the voter dynamics")
    sp.add_argument("--noise-scheme", default="matched", choices=["matched", "clamp"])
    sp.add_argument("--seed", type=int, required=False)
    sp.add_argument("--replicas", type=int, default=1)
    sp.add_argument("--workers", type=int)
    sp.add_argument("--output-dir")
    sp.add_argument("--raw-logs", action="store_true", help="write one log CSV per replica")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="frontlab", description="Monte Carlo laboratory for noisy fronts")
    ap.add_argument("--version", action="version", version=__version__)
    sub = ap.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("simulate", help="run one replica and write its log, snapshot and results")
    _add_common(sp)
    sp.add_argument("--replica", type=int, default=0)
    sp.add_argument("--r0", type=float, default=0.0)
    sp.add_argument("--stop-at", type=float, help="interrupt at this time and write checkpoint.json")

    sp = sub.add_parser("speed", help="front speed: deterministic_kpp (sigma=0) or speed_vs_sigma")
    _add_common(sp)
    sp.add_argument("--sigmas", help="comma separated sigmas for speed_vs_sigma (rescaled frame)")
    sp.add_argument("--burn-frac", type=float)

    sp = sub.add_parser("stationary", help="stationary constants (stationary_cf) or voter_mass")
    _add_common(sp)
    sp.add_argument("--mode", choices=["cf", "mass"], default="cf")
    sp.add_argument("--burn-in", type=float)
    sp.add_argument("--sample-every", type=float)
    sp.add_argument("--t-window", help="lo,hi averaging window for --mode mass")

    sp = sub.add_parser("scaling", help="diffusive scaling of the voter functionals")
    _add_common(sp)
    sp.add_argument("--a-values", default="4,6,8")
    sp.add_argument("--burn-in", type=float, default=0.0)

    sp = sub.add_parser("girsanov", help="weight normalisation and importance vs direct sampling")
    _add_common(sp)
    sp.add_argument("--times", default="1,2,5")
    sp.add_argument("--r", type=float, default=1.0)
    sp.add_argument("--is-time", type=float, default=2.0)

    sp = sub.add_parser("frames", help="KS test of the rescaling map")
    _add_common(sp)
    sp.add_argument("--frame-sigma", type=float, default=1.5)
    sp.add_argument("--t-obs", type=float, default=2.0)

    sp = sub.add_parser("tails", help="tail probabilities of sup |R_t - R_0| for the voter dynamics")
    _add_common(sp)
    sp.add_argument("--b-values", default="8,12,16")

    sp = sub.add_parser("plot-data", help="tidy CSV for a plot from result directories")
    sp.add_argument("--plot", required=True, choices=["speed_vs_sigma", "mass_vs_t", "scaling_slopes",
                                                      "profile_snapshots"])
    sp.add_argument("--results", nargs="+", required=True, help="result directories")
    sp.add_argument("--out", required=True)

    sp = sub.add_parser("resume", help="continue a simulate run from its checkpoint")
    sp.add_argument("checkpoint")
    sp.add_argument("--output-dir", help="defaults to the checkpoint's directory")
    return ap


def _experiment_config(args, experiment, params, options) -> ExperimentConfig:
    if args.config:
        cfg = ExperimentConfig.load(args.config)
        if args.output_dir:
            cfg.output_dir = args.output_dir
        if args.workers is not None:
            cfg.workers = args.workers
        return cfg
    if args.seed is None:
        raise ConfigurationError("--seed is required")
    options = {k: v for k, v in options.items() if v is not None}
    if args.raw_logs:
        options["raw_logs"] = True
    return ExperimentConfig(experiment, _nonlinearity(args), params, args.replicas, args.seed, args.output_dir,
                            options, args.workers)


def _cmd_experiment(args) -> ExperimentConfig:
    c = args.command
    if c == "speed":
        if args.sigmas or args.epsilon is not None:
            opts = {"sigmas": _floats(args.sigmas) if args.sigmas else None, "burn_frac": args.burn_frac}
            p = _params(args) if args.epsilon is not None else rescaled(1.0, dt=args.dt, dx=args.dx,
                                                                        t_max=args.t_max, window=args.window,
                                                                        log_every=args.log_every,
                                                                        noise_scheme=args.noise_scheme)
            return _experiment_config(args, "speed_vs_sigma", p, opts)
        return _experiment_config(args, "deterministic_kpp", _params(args), {"burn_frac": args.burn_frac})
    if c == "stationary":
        if args.mode == "mass":
            tw = _floats(args.t_window) if args.t_window else None
            return _experiment_config(args, "voter_mass", _params(args), {"t_window": tw})
        return _experiment_config(args, "stationary_cf", _params(args),
                                  {"burn_in": args.burn_in, "sample_every": args.sample_every})
    if c == "scaling":
        return _experiment_config(args, "scaling_limit", _params(args),
                                  {"a_values": _floats(args.a_values), "burn_in": args.burn_in})
    if c == "girsanov":
        return _experiment_config(args, "girsanov_check", _params(args),
                                  {"times": _floats(args.times), "r": args.r, "is_time": args.is_time})
    if c == "frames":
        return _experiment_config(args, "frame_check", _params(args),
                                  {"sigma": args.frame_sigma, "t_obs": args.t_obs})
    if c == "tails":
        return _experiment_config(args, "interface_tails", _params(args), {"b_values": _floats(args.b_values)})
    raise ConfigurationError(f"unknown command {c}")


# --- single runs and checkpoints ---------------------------------------------

def _finish_simulation(out: Path, state, acc, log, p, f, seed, replica, run_cfg):
    log.to_csv(out / "log.csv")
    dump_snapshot(state, out / "snapshot.csv", seed=seed, replica=replica)
    cfg_hash = config_hash(run_cfg)
    edges = front_edges(state, p.eps_front)
    rid = f"simulate-{cfg_hash[:12]}"
    with open(out / "results.jsonl", "w") as fh:
        for name, value in (("R", edges.right), ("L", edges.left), ("xi", xi(state)), ("mass", mass_w(state)),
                            ("m_t", acc.m_t), ("a_t", acc.a_t), ("mf_t", acc.mf_t), ("af_t", acc.af_t),
                            ("z_t", acc.z_t)):
            rec = {"experiment_id": rid, "estimator": name, "value": float(value), "stderr": None,
                   "config_hash": cfg_hash, "seed": seed, "frame": p.frame, "t": state.t}
            fh.write(json.dumps(rec, sort_keys=True) + "\n")


def _simulate(args) -> int:
    if args.config:
        d = json.loads(Path(args.config).read_text())
        f = NonlinearitySpec.from_dict(d["nonlinearity"])
        p = SimParams.from_dict(d["params"])
        seed, replica, r0 = int(d["seed"]), int(d.get("replica", 0)), float(d.get("r0", 0.0))
    else:
        if args.seed is None:
            raise ConfigurationError("--seed is required")
        f, p, seed, replica, r0 = _nonlinearity(args), _params(args), args.seed, args.replica, args.r0
    out = prepare_output(args.output_dir)
    run_cfg = {"command": "simulate", "nonlinearity": f.to_dict(), "params": p.to_dict(), "seed": seed,
               "replica": replica, "r0": r0}
    write_manifest(out, run_cfg, seed)
    stream = make_stream(seed, replica)
    state = initial_state(p, r0)
    try:
        state, acc, log = run(state, f, p, stream, stop_at=args.stop_at)
    except (NumericalBlowupError, WindowOverflowError) as err:
        path = save_checkpoint(out / "checkpoint_error.json", err.checkpoint)
        print(f"error: {err}; checkpoint written to {path}", file=sys.stderr)
        return EXIT_NUMERIC
    if args.stop_at is not None and state.t < p.t_max - 1e-9:
        ckpt = make_checkpoint(state, acc, stream, p, f, log)
        ckpt["run"] = run_cfg
        path = save_checkpoint(out / "checkpoint.json", ckpt)
        print(f"interrupted at t={state.t}; checkpoint {path}")
        return EXIT_OK
    _finish_simulation(out, state, acc, log, p, f, seed, replica, run_cfg)
    return EXIT_OK


def _resume(args) -> int:
    path = Path(args.checkpoint)
    try:
        ckpt = load_checkpoint(path)
    except ValueError as err:
        raise ConfigurationError(str(err)) from err
    if ckpt.get("code_version") != __version__:
        raise ConfigurationError(f"checkpoint written by version {ckpt.get('code_version')}, this is {__version__}")
    if "run" not in ckpt:
        raise ConfigurationError("checkpoint does not describe a resumable simulate run")
    state, f, p, stream, acc, log = restore(ckpt)
    run_cfg = ckpt["run"]
    out = Path(args.output_dir) if args.output_dir else path.parent
    out = prepare_output(out)
    try:
        state, acc, log = run(state, f, p, stream, acc=acc, log=log)
    except (NumericalBlowupError, WindowOverflowError) as err:
        cp = save_checkpoint(out / "checkpoint_error.json", err.checkpoint)
        print(f"error: {err}; checkpoint written to {cp}", file=sys.stderr)
        return EXIT_NUMERIC
    write_manifest(out, run_cfg, run_cfg["seed"])
    _finish_simulation(out, state, acc, log, p, f, run_cfg["seed"], run_cfg["replica"], run_cfg)
    return EXIT_OK


def _dispatch(args) -> int:
    if args.command == "simulate":
        return _simulate(args)
    if args.command == "resume":
        return _resume(args)
    if args.command == "plot-data":
        path = emit_plot_data(args.results, args.plot, args.out)
        print(path)
        return EXIT_OK
    cfg = _cmd_experiment(args)
    try:
        run_experiment(cfg)
    except (NumericalBlowupError, WindowOverflowError) as err:
        msg = str(err)
        if err.checkpoint is not None:
            cp = save_checkpoint(Path(cfg.output_dir) / "checkpoint_error.json", err.checkpoint)
            msg += f"; checkpoint written to {cp}"
        print(f"error: {msg}", file=sys.stderr)
        return EXIT_NUMERIC
    print(Path(cfg.output_dir) / "results.jsonl")
    return EXIT_OK


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    try:
        return _dispatch(args)
    except (ConfigurationError, DomainError) as err:
        print(f"configuration error: {err}", file=sys.stderr)
        return EXIT_CONFIG
    except EstimationError as err:
        print(f"estimation error: {err}", file=sys.stderr)
        return EXIT_ESTIMATE
    except (NumericalBlowupError, WindowOverflowError) as err:
        print(f"numerical error: {err}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
