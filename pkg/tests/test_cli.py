import csv
import json
import math
import subprocess
import sys

import pytest

from frontlab import __version__
from frontlab.cli import main
from frontlab.experiments import read_results

COMMON = ["--seed", "7", "--window", "60"]


def _rows(path):
    with open(path) as fh:
        return list(csv.DictReader(fh))


def test_simulate_writes_outputs(tmp_path):
    out = tmp_path / "run"
    assert main(["simulate", *COMMON, "--t-max", "1", "--output-dir", str(out)]) == 0
    header = (out / "log.csv").read_text().splitlines()[0]
    assert header == "t,R,L,xi,mass,m_t,a_t,mf_t,af_t,z_t"
    recs = read_results(out)
    assert {r["estimator"] for r in recs} >= {"R", "xi", "mass", "z_t"}
    for r in recs:
        assert {"config_hash", "seed", "frame"} <= set(r)
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["code_version"] == __version__ and manifest["seed"] == 7


def test_missing_output_dir_is_a_config_error(tmp_path):
    assert main(["simulate", *COMMON, "--t-max", "1"]) == 2
    assert main(["simulate", *COMMON, "--t-max", "1", "--output-dir", str(tmp_path / "no" / "such")]) == 2


def test_missing_seed_and_bad_params(tmp_path):
    assert main(["simulate", "--t-max", "1", "--output-dir", str(tmp_path / "a")]) == 2
    assert main(["simulate", *COMMON, "--dt", "0.01", "--output-dir", str(tmp_path / "b")]) == 2
    assert main(["simulate", *COMMON, "--f", "cubic", "--output-dir", str(tmp_path / "c")]) == 2
    assert main(["bogus"]) == 2


def _interrupted(tmp_path, name):
    out = tmp_path / name
    args = ["simulate", *COMMON, "--t-max", "2", "--output-dir", str(out)]
    assert main(args + ["--stop-at", "1"]) == 0
    assert (out / "checkpoint.json").exists() and not (out / "log.csv").exists()
    return out


def test_resume_matches_uninterrupted_run_and_is_idempotent(tmp_path):
    full = tmp_path / "full"
    assert main(["simulate", *COMMON, "--t-max", "2", "--output-dir", str(full)]) == 0
    out = _interrupted(tmp_path, "part")
    assert main(["resume", str(out / "checkpoint.json")]) == 0
    assert (out / "log.csv").read_text() == (full / "log.csv").read_text()
    assert (out / "results.jsonl").read_bytes() == (full / "results.jsonl").read_bytes()
    first = (out / "results.jsonl").read_bytes()
    assert main(["resume", str(out / "checkpoint.json")]) == 0
    assert (out / "results.jsonl").read_bytes() == first
    assert (out / "log.csv").read_text() == (full / "log.csv").read_text()


def test_resume_refuses_other_code_version(tmp_path):
    out = _interrupted(tmp_path, "v")
    ck = json.loads((out / "checkpoint.json").read_text())
    ck["code_version"] = "0.0.0-other"
    (out / "checkpoint.json").write_text(json.dumps(ck))
    assert main(["resume", str(out / "checkpoint.json")]) == 2


def test_resume_refuses_corrupt_checkpoint(tmp_path):
    out = _interrupted(tmp_path, "c")
    (out / "checkpoint.json").write_text('{"state": ')
    assert main(["resume", str(out / "checkpoint.json")]) == 2
    assert main(["resume", str(tmp_path / "absent.json")]) == 2


def test_window_overflow_exits_3_with_checkpoint(tmp_path):
    out = tmp_path / "ovf"
    code = main(["simulate", "--seed", "7", "--window", "10", "--t-max", "20", "--no-drift",
                 "--noise-scheme", "clamp", "--output-dir", str(out)])
    assert code == 3
    assert (out / "checkpoint_error.json").exists()


def test_deterministic_kpp_record(tmp_path):
    out = tmp_path / "kpp"
    assert main(["speed", "--seed", "1", "--sigma", "0", "--t-max", "60", "--output-dir", str(out)]) == 0
    recs = {r["estimator"]: r for r in read_results(out)}
    assert recs["v_hat_ls_fit"]["value"] == pytest.approx(math.sqrt(2), rel=0.05)


def test_voter_mass_record_and_plot(tmp_path):
    out = tmp_path / "mass"
    assert main(["stationary", "--mode", "mass", "--no-drift", "--seed", "3", "--replicas", "8", "--t-max", "6",
                 "--window", "80", "--t-window", "2,6", "--workers", "1", "--output-dir", str(out)]) == 0
    recs = [r for r in read_results(out) if r["estimator"] == "mass_hat"]
    assert len(recs) == 1 and 0 < recs[0]["value"] < 2
    plot = tmp_path / "mass.csv"
    assert main(["plot-data", "--plot", "mass_vs_t", "--results", str(out), "--out", str(plot)]) == 0
    rows = _rows(plot)
    assert rows and set(rows[0]) == {"x", "y", "stderr", "series"}


def test_speed_vs_sigma_plot_has_three_rows(tmp_path):
    out = tmp_path / "svs"
    assert main(["speed", "--seed", "2", "--sigmas", "1.5,2,3", "--t-max", "30", "--workers", "1",
                 "--output-dir", str(out)]) == 0
    plot = tmp_path / "svs.csv"
    assert main(["plot-data", "--plot", "speed_vs_sigma", "--results", str(out), "--out", str(plot)]) == 0
    rows = _rows(plot)
    assert [float(r["x"]) for r in rows] == [1.5, 2.0, 3.0]
    assert all(r["series"] == "sigma2_v" for r in rows)


def test_empty_plot_selection_exits_4(tmp_path):
    empty = tmp_path / "empty"
    empty.mkdir()
    assert main(["plot-data", "--plot", "scaling_slopes", "--results", str(empty),
                 "--out", str(tmp_path / "x.csv")]) == 4


def _tails(tmp_path, name, workers):
    out = tmp_path / name
    assert main(["tails", "--seed", "9", "--replicas", "6", "--t-max", "2", "--window", "60",
                 "--b-values", "1,2,3", "--workers", str(workers), "--output-dir", str(out)]) == 0
    return (out / "results.jsonl").read_bytes()


def test_results_reproducible_across_reruns_and_workers(tmp_path):
    a = _tails(tmp_path, "a", 1)
    b = _tails(tmp_path, "b", 1)
    c = _tails(tmp_path, "c", 2)
    assert a == b == c


def test_config_file_round_trip(tmp_path):
    out = tmp_path / "cfgrun"
    assert main(["tails", "--seed", "9", "--replicas", "4", "--t-max", "1", "--window", "60",
                 "--b-values", "1,2,3", "--workers", "1", "--output-dir", str(out)]) == 0
    manifest = json.loads((out / "manifest.json").read_text())
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps(manifest["config"]))
    out2 = tmp_path / "cfgrun2"
    assert main(["tails", "--config", str(cfg), "--output-dir", str(out2)]) == 0
    assert (out / "results.jsonl").read_bytes() == (out2 / "results.jsonl").read_bytes()


def test_module_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "frontlab", "--version"], capture_output=True, text=True)
    assert proc.returncode == 0 and __version__ in proc.stdout
