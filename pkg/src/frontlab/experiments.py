"""Experiment configurations, runners and their on-disk outputs.

An experiment writes into ``output_dir``:

* ``manifest.json``: the config, its content hash, the seed and code version,
* ``results.jsonl``: one JSON record per estimator, keys sorted, no timestamps,
  so reruns with the same config are byte-identical,
* experiment specific CSV tables (``series.csv``) and, with the ``raw_logs``
  option, one log CSV per replica under ``logs/``.

The content hash ignores ``output_dir`` and ``workers``: neither changes any
result.
"""

import csv
import datetime as _dt
import hashlib
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional

import numpy as np

from . import __version__
from .ensemble import run_ensemble, run_replica
from .errors import ConfigurationError, EstimationError
from .estimators import (batch_means, estimate_speed, estimate_stationary, eta_moment,
                         scaling_limit_check)
from .girsanov import weighted_estimate
from .integrator import SimParams
from .nonlinearity import NonlinearitySpec
from .scaling import FrameMap, frame_equivalence_test, map_observable

EXPERIMENTS = ("deterministic_kpp", "voter_mass", "stationary_cf", "scaling_limit", "speed_vs_sigma",
               "girsanov_check", "frame_check", "interface_tails")

DEFAULT_OPTIONS = {
    "deterministic_kpp": {"burn_frac": 0.2},
    "voter_mass": {"t_window": [20.0, 60.0]},
    "stationary_cf": {"burn_in": None, "sample_every": 1.0, "etas": [0.6, 0.8, 1.0]},
    "scaling_limit": {"a_values": [4.0, 6.0, 8.0], "burn_in": 0.0},
    "speed_vs_sigma": {"sigmas": [1.5, 2.0, 3.0], "burn_frac": 0.1},
    "girsanov_check": {"times": [1.0, 2.0, 5.0], "r": 1.0, "is_time": 2.0},
    "frame_check": {"sigma": 1.5, "t_obs": 2.0, "level": 0.01},
    "interface_tails": {"b_values": [8.0, 12.0, 16.0]},
}


@dataclass
class ExperimentConfig:
    experiment: str
    nonlinearity: NonlinearitySpec
    params: SimParams
    replicas: int = 1
    seed: int = 0
    output_dir: Optional[str] = None
    options: Dict = field(default_factory=dict)
    workers: Optional[int] = None

    def __post_init__(self):
        if self.experiment not in EXPERIMENTS:
            raise ConfigurationError(f"unknown experiment {self.experiment!r}")
        if int(self.replicas) < 1:
            raise ConfigurationError("replicas must be >= 1")
        unknown = set(self.options) - set(DEFAULT_OPTIONS[self.experiment]) - {"raw_logs"}
        if unknown:
            raise ConfigurationError(f"unknown options for {self.experiment}: {sorted(unknown)}")

    def option(self, name):
        if name in self.options:
            return self.options[name]
        return DEFAULT_OPTIONS[self.experiment].get(name)

    def to_dict(self) -> dict:
        return {"experiment": self.experiment, "nonlinearity": self.nonlinearity.to_dict(),
                "params": self.params.to_dict(), "replicas": int(self.replicas), "seed": int(self.seed),
                "output_dir": self.output_dir, "options": dict(self.options), "workers": self.workers}

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        try:
            return cls(experiment=d["experiment"], nonlinearity=NonlinearitySpec.from_dict(d["nonlinearity"]),
                       params=SimParams.from_dict(d["params"]), replicas=int(d.get("replicas", 1)),
                       seed=int(d["seed"]), output_dir=d.get("output_dir"), options=dict(d.get("options") or {}),
                       workers=d.get("workers"))
        except (KeyError, TypeError) as err:
            raise ConfigurationError(f"invalid config: {err}") from err

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=1, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "ExperimentConfig":
        try:
            return cls.from_dict(json.loads(text))
        except json.JSONDecodeError as err:
            raise ConfigurationError(f"config is not valid JSON: {err}") from err

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        try:
            text = Path(path).read_text()
        except OSError as err:
            raise ConfigurationError(f"cannot read config {path}: {err}") from err
        return cls.from_json(text)

    @property
    def config_hash(self) -> str:
        return config_hash(self.to_dict())


def config_hash(d: dict) -> str:
    d = {k: v for k, v in d.items() if k not in ("output_dir", "workers")}
    blob = json.dumps(d, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()


def _frame_label(p: SimParams) -> str:
    return p.frame


class ResultSink:
    """Append-only writer of ``results.jsonl`` (single writer, records in call order)."""

    def __init__(self, cfg: ExperimentConfig, path: Path):
        self.cfg = cfg
        self.path = path
        self.records: List[dict] = []
        self._id = f"{cfg.experiment}-{cfg.config_hash[:12]}"

    def add(self, estimator: str, value, stderr=None, frame: Optional[str] = None, **extra):
        rec = {"experiment_id": self._id, "estimator": estimator, "value": _num(value),
               "stderr": _num(stderr), "config_hash": self.cfg.config_hash, "seed": int(self.cfg.seed),
               "frame": frame or _frame_label(self.cfg.params)}
        rec.update({k: _num(v) for k, v in extra.items()})
        self.records.append(rec)

    def write(self):
        with open(self.path, "w") as fh:
            for rec in self.records:
                fh.write(json.dumps(rec, sort_keys=True) + "\n")


def _num(v):
    if v is None or isinstance(v, (str, bool, int)):
        return v
    if isinstance(v, (list, tuple)):
        return [_num(x) for x in v]
    v = float(v)
    return v if math.isfinite(v) else None


def _write_csv(path: Path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([repr(float(x)) if isinstance(x, (float, np.floating)) else x for x in row])


def _maybe_raw_logs(cfg: ExperimentConfig, out: Path, results, tag: str = ""):
    if not cfg.option("raw_logs"):
        return
    d = out / "logs"
    d.mkdir(exist_ok=True)
    for r in results:
        r.log.to_csv(d / f"{tag}replica_{r.replica:05d}.csv")


# --- experiments -----------------------------------------------------------

def _deterministic_kpp(cfg, out, sink):
    p = cfg.params
    if p.noise != 0:
        raise ConfigurationError("deterministic_kpp needs zero noise")
    res = run_replica(cfg.nonlinearity, p, cfg.seed, 0)
    _maybe_raw_logs(cfg, out, [res])
    est = estimate_speed(res.log, cfg.option("burn_frac"))
    for method, (v, se) in sorted(est.alternatives.items()):
        if method != "compensator":
            sink.add(f"v_hat_{method}", v, se, t_lo=est.t_window[0], t_hi=est.t_window[1])
    _write_csv(out / "series.csv", ["t", "R", "L", "xi"],
               zip(res.log["t"], res.log["R"], res.log["L"], res.log["xi"]))
    return {"v_hat": est.v_hat, "stderr": est.stderr}


def mass_series(results):
    """Replica mean and stderr of the mass at each log time."""
    t = results[0].log["t"]
    m = np.array([r.log["mass"] for r in results])
    se = m.std(axis=0, ddof=1) / math.sqrt(len(results)) if len(results) > 1 else np.zeros(len(t))
    return t, m.mean(axis=0), se


def _voter_mass(cfg, out, sink):
    p = cfg.params.replace(drift=False)
    lo, hi = (float(v) for v in cfg.option("t_window"))
    if p.t_max < hi - 1e-9:
        raise ConfigurationError(f"t_max={p.t_max} ends before the averaging window [{lo}, {hi}]")
    res = run_ensemble(cfg.nonlinearity, p, cfg.seed, range(cfg.replicas), workers=cfg.workers, keep_state=False)
    _maybe_raw_logs(cfg, out, res)
    per = []
    for r in res:
        t, m = r.log["t"], r.log["mass"]
        sel = (t >= lo - 1e-9) & (t <= hi + 1e-9)
        per.append(m[sel].mean())
    per = np.array(per)
    if len(per) > 1:
        value, se = float(per.mean()), float(per.std(ddof=1) / math.sqrt(len(per)))
    else:
        t, m = res[0].log["t"], res[0].log["mass"]
        value, se = batch_means(m[(t >= lo - 1e-9) & (t <= hi + 1e-9)])
    sink.add("mass_hat", value, se, t_lo=lo, t_hi=hi, replicas=cfg.replicas, dx=p.dx)
    t, mean, sem = mass_series(res)
    _write_csv(out / "series.csv", ["t", "mass", "stderr"], zip(t, mean, sem))
    return {"mass_hat": value, "stderr": se}


def _stationary_cf(cfg, out, sink):
    s = estimate_stationary(cfg.nonlinearity, cfg.params, cfg.seed, 0, burn_in=cfg.option("burn_in"),
                            sample_every=cfg.option("sample_every"))
    sink.add("c_f_hat", s.c_f_hat, s.c_f_stderr, burn_in=s.burn_in, n_samples=s.n_samples)
    sink.add("d_hat", s.d_hat, s.d_stderr, burn_in=s.burn_in, n_samples=s.n_samples)
    sink.add("mass_hat", s.mass_hat, s.mass_stderr, burn_in=s.burn_in, n_samples=s.n_samples)
    for eta in cfg.option("etas"):
        v, se = eta_moment(s.samples, float(eta))
        sink.add("eta_moment", v, se, eta=float(eta))
    for q, w in s.width_quantiles:
        sink.add("width_quantile", w, None, q=q)
    return s


def _scaling_limit(cfg, out, sink):
    a_values = [float(a) for a in cfg.option("a_values")]
    t0 = float(cfg.option("burn_in"))
    p = cfg.params.replace(drift=False)
    need = t0 + max(a_values) ** 2
    if p.t_max < need - 1e-9:
        raise ConfigurationError(f"t_max={p.t_max} < burn_in + max(a)^2 = {need}")
    res = run_ensemble(cfg.nonlinearity, p, cfg.seed, range(cfg.replicas), workers=cfg.workers, keep_state=False)
    _maybe_raw_logs(cfg, out, res)
    rep = scaling_limit_check([r.log for r in res], a_values, t0=t0)
    rows = []
    for key in ("var_slope_xi", "cov_slope", "a_slope", "af_slope"):
        sink.add(key, getattr(rep, key), rep.stderr[key], a_values=list(a_values), burn_in=t0)
        for a, v in zip(a_values, rep.per_a[key]):
            rows.append((a, v, key))
    _write_csv(out / "series.csv", ["a", "ratio", "series"], rows)
    return rep


def _speed_vs_sigma(cfg, out, sink):
    base = cfg.params
    if base.frame != "rescaled":
        raise ConfigurationError("speed_vs_sigma runs in the rescaled frame")
    burn = float(cfg.option("burn_frac"))
    rows = []
    for sigma in [float(s) for s in cfg.option("sigmas")]:
        fm = FrameMap(sigma)
        p = base.replace(epsilon=fm.epsilon, drift=True)
        res = run_ensemble(cfg.nonlinearity, p, cfg.seed, range(cfg.replicas), workers=cfg.workers,
                           keep_state=False)
        _maybe_raw_logs(cfg, out, res, tag=f"sigma_{sigma:g}_")
        ests = [estimate_speed(r.log, burn, method="compensator") for r in res]
        for method in ("compensator", "ls_fit"):
            vals = np.array([e.alternatives[method][0] for e in ests])
            if len(vals) > 1:
                v, se = float(vals.mean()), float(vals.std(ddof=1) / math.sqrt(len(vals)))
            else:
                v, se = ests[0].alternatives[method]
            # sigma^2 V(sigma) = sigma^4 V_rescaled
            s2v = sigma ** 2 * map_observable(fm, "speed", v)
            s2v_se = sigma ** 2 * map_observable(fm, "speed", se)
            name = "sigma2_v" if method == "compensator" else f"sigma2_v_{method}"
            sink.add(name, s2v, s2v_se, sigma=sigma, epsilon=fm.epsilon, v_rescaled=v, v_rescaled_stderr=se,
                     method=method)
            if method == "compensator":
                rows.append((sigma, s2v, s2v_se, "sigma2_v"))
    _write_csv(out / "series.csv", ["sigma", "sigma2_v", "stderr", "series"], rows)
    return rows


def _log_value(log, t, col):
    return float(np.interp(t, log["t"], log[col]))


def _girsanov_check(cfg, out, sink):
    p = cfg.params
    times = [float(t) for t in cfg.option("times")]
    is_time = float(cfg.option("is_time"))
    r_thr = float(cfg.option("r"))
    t_end = max(times + [is_time])
    pv = p.replace(drift=False, t_max=t_end)
    res = run_ensemble(cfg.nonlinearity, pv, cfg.seed, range(cfg.replicas), workers=cfg.workers, keep_state=False)
    _maybe_raw_logs(cfg, out, res, tag="voter_")
    for t in times:
        lw = np.array([_log_value(r.log, t, "z_t") for r in res])
        w = np.exp(lw)
        ess = w.sum() ** 2 / np.sum(w * w)
        sink.add("mean_weight", float(w.mean()), float(w.std(ddof=1) / math.sqrt(len(w))), t=t, ess=ess,
                 n=len(w))
    g = np.array([1.0 if _log_value(r.log, is_time, "R") > r_thr else 0.0 for r in res])
    lw = np.array([_log_value(r.log, is_time, "z_t") for r in res])
    est = weighted_estimate(g, lw, "full")
    sink.add("is_probability", est.value, est.stderr, t=is_time, r=r_thr, ess=est.ess, n=est.n,
             self_normalized=est.self_normalized, sn_stderr=est.sn_stderr)
    pd = p.replace(drift=True, t_max=is_time)
    direct = run_ensemble(cfg.nonlinearity, pd, cfg.seed, range(cfg.replicas, 2 * cfg.replicas),
                          workers=cfg.workers, keep_state=False)
    gd = np.array([1.0 if r.log["R"][-1] > r_thr else 0.0 for r in direct])
    sink.add("direct_probability", float(gd.mean()), float(gd.std(ddof=1) / math.sqrt(len(gd))), t=is_time,
             r=r_thr, n=len(gd))
    return est


def _frame_check(cfg, out, sink):
    p = cfg.params
    sigma = float(cfg.option("sigma"))
    rep = frame_equivalence_test(sigma, float(cfg.option("t_obs")), cfg.replicas, cfg.nonlinearity, cfg.seed,
                                 dx=p.dx, dt=p.dt, window=p.window, level=float(cfg.option("level")),
                                 workers=cfg.workers)
    sink.add("ks_statistic", rep.ks_statistic, None, frame="both", sigma=sigma, p_value=rep.p_value,
             passed=rep.passed)
    return rep


class SupEdgeObserver:
    """Tracks sup |R_t - R_0| and sup |L_t - L_0| over the logged times."""

    def __init__(self):
        self.r0 = self.l0 = None
        self.sup_r = self.sup_l = 0.0

    def __call__(self, state, acc, log):
        row = log.rows()[-1]
        r, l_ = row[log.columns.index("R")], row[log.columns.index("L")]
        if self.r0 is None:
            first = log.rows()[0]
            self.r0, self.l0 = first[log.columns.index("R")], first[log.columns.index("L")]
        self.sup_r = max(self.sup_r, abs(r - self.r0))
        self.sup_l = max(self.sup_l, abs(l_ - self.l0))
        return False

    def result(self):
        return (self.sup_r, self.sup_l)


def tail_probabilities(sups, b_values):
    sups = np.asarray(sups)
    return [float(np.mean(sups > b)) for b in b_values]


def _interface_tails(cfg, out, sink):
    p = cfg.params.replace(drift=False)
    b_values = [float(b) for b in cfg.option("b_values")]
    res = run_ensemble(cfg.nonlinearity, p, cfg.seed, range(cfg.replicas), workers=cfg.workers,
                       observer_factory=SupEdgeObserver, keep_state=False)
    sups = np.array([r.extra[0] for r in res])
    for b, prob in zip(b_values, tail_probabilities(sups, b_values)):
        sink.add("tail_probability", prob, math.sqrt(prob * (1 - prob) / len(sups)), b=b, t=p.t_max,
                 n=len(sups))
    _write_csv(out / "series.csv", ["replica", "sup_abs_dR", "sup_abs_dL"],
               [(r.replica, r.extra[0], r.extra[1]) for r in res])
    return sups


RUNNERS = {
    "deterministic_kpp": _deterministic_kpp,
    "voter_mass": _voter_mass,
    "stationary_cf": _stationary_cf,
    "scaling_limit": _scaling_limit,
    "speed_vs_sigma": _speed_vs_sigma,
    "girsanov_check": _girsanov_check,
    "frame_check": _frame_check,
    "interface_tails": _interface_tails,
}


def prepare_output(output_dir) -> Path:
    if not output_dir:
        raise ConfigurationError("output_dir is required")
    out = Path(output_dir)
    if not out.parent.exists():
        raise ConfigurationError(f"parent of output_dir {out} does not exist")
    out.mkdir(exist_ok=True)
    return out


def write_manifest(out: Path, cfg_dict: dict, seed: int):
    manifest = {"config": cfg_dict, "config_hash": config_hash(cfg_dict), "seed": int(seed),
                "code_version": __version__,
                "created": _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds")}
    (out / "manifest.json").write_text(json.dumps(manifest, indent=1, sort_keys=True))


def run_experiment(cfg: ExperimentConfig):
    """Run an experiment; returns the experiment's summary object.

    Raises :class:`ConfigurationError`, :class:`NumericalBlowupError`,
    :class:`WindowOverflowError` or :class:`EstimationError`; the command line
    maps them to exit codes 2, 3, 3 and 4.
    """
    out = prepare_output(cfg.output_dir)
    write_manifest(out, cfg.to_dict(), cfg.seed)
    sink = ResultSink(cfg, out / "results.jsonl")
    summary = RUNNERS[cfg.experiment](cfg, out, sink)
    sink.write()
    return summary


def read_results(path) -> List[dict]:
    path = Path(path)
    if path.is_dir():
        path = path / "results.jsonl"
    if not path.exists():
        return []
    return [json.loads(line) for line in path.read_text().splitlines() if line.strip()]


# --- plot data -------------------------------------------------------------

PLOTS = ("speed_vs_sigma", "mass_vs_t", "scaling_slopes", "profile_snapshots")


def _experiment_of(d: Path) -> Optional[str]:
    m = d / "manifest.json"
    if not m.exists():
        return None
    return json.loads(m.read_text())["config"].get("experiment")


def emit_plot_data(result_dirs, plot: str, out_path) -> Path:
    """Tidy CSV ``x,y,stderr,series`` for one plot from a set of result directories."""
    if plot not in PLOTS:
        raise ConfigurationError(f"unknown plot {plot!r}")
    rows = []
    for d in (Path(x) for x in result_dirs):
        exp = _experiment_of(d)
        if plot == "speed_vs_sigma" and exp == "speed_vs_sigma":
            for rec in read_results(d):
                if rec["estimator"] == "sigma2_v":
                    rows.append((rec["sigma"], rec["value"], rec["stderr"], rec["estimator"]))
        elif plot == "mass_vs_t" and exp == "voter_mass":
            with open(d / "series.csv") as fh:
                for row in csv.DictReader(fh):
                    rows.append((float(row["t"]), float(row["mass"]), float(row["stderr"]), d.name))
        elif plot == "scaling_slopes" and exp == "scaling_limit":
            with open(d / "series.csv") as fh:
                for row in csv.DictReader(fh):
                    rows.append((float(row["a"]), float(row["ratio"]), float("nan"), row["series"]))
        elif plot == "profile_snapshots":
            for snap in sorted(d.glob("**/*snapshot*.csv")):
                data = np.loadtxt(snap, delimiter=",", skiprows=1, ndmin=2)
                rows.extend((x, u, float("nan"), snap.stem) for x, u in data.tolist())
    if not rows:
        raise EstimationError(f"no results selected for plot {plot!r}")
    out_path = Path(out_path)
    _write_csv(out_path, ["x", "y", "stderr", "series"], rows)
    return out_path
