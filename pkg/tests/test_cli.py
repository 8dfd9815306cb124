import hashlib
import math
import shutil

import numpy as np
import pytest

from dlczsim import fit_decay
from dlczsim.cli import main
from dlczsim.datafiles import read_counts_csv, read_kv

CONFIG = """\
experiment.chi = 0.05
experiment.noise_b = 1e-5
experiment.noise_c = 1e-4
experiment.eta_s = 0.5
experiment.eta_as = 0.5
experiment.visibility = 0.8838834764831843
decay.r0 = 0.77
decay.tau0 = 1e-3

chain.t_oc = 0.20
chain.cavity_loss = 0.13
chain.eta_smf = 0.71
chain.eta_filter = 0.56
chain.eta_mmf = 0.92
chain.eta_d = 0.68

geometry.wavelength = 795e-9
geometry.temperature = 100e-6
geometry.atomic_mass = 1.4446689879e-25
geometry.bd_separation = 5.5e-3
geometry.f_btd = 2
geometry.f0 = 1.5

timing.prep_duration = 42e-3
timing.run_duration = 8e-3
timing.trial_period = 2000e-9
"""


@pytest.fixture
def config(tmp_path):
    path = tmp_path / "lab.conf"
    path.write_text(CONFIG)
    return str(path)


def kv_floats(path):
    entries, _ = read_kv(path)
    out = {}
    for key, value in entries.items():
        try:
            out[key] = float(value)
        except ValueError:
            out[key] = value
    return out


def hash_dir(path):
    digests = {}
    for child in sorted(path.iterdir()):
        digests[child.name] = hashlib.sha256(child.read_bytes()).hexdigest()
    return digests


def test_budget_reproduces_detection_chain(config, tmp_path):
    out = tmp_path / "budget"
    assert main(["budget", "--config", config, "--out", str(out)]) == 0
    report = kv_floats(out / "budget.kv")
    assert report["eta_esp"] == pytest.approx(0.606, abs=1e-3)
    assert report["eta_t"] == pytest.approx(0.366, abs=1e-3)
    assert report["eta_td"] == pytest.approx(0.150, abs=2e-3)


def test_lifetime_reports_angle_and_tau(config, tmp_path):
    out = tmp_path / "lifetime"
    assert main(["lifetime", "--config", config, "--out", str(out)]) == 0
    report = kv_floats(out / "lifetime.kv")
    assert report["coupling_angle_deg"] == pytest.approx(0.0525, abs=5e-4)
    assert report["motional_lifetime_s"] == pytest.approx(1.4e-3, abs=1e-4)


def test_fit_decay_command(config, tmp_path):
    data = tmp_path / "decay.csv"
    data.write_text("t_seconds,R\n0,0.77\n0.00023,0.667\n0.00054,0.50\n")
    out = tmp_path / "fit"
    assert main(["fit-decay", str(data), "--out", str(out)]) == 0
    report = kv_floats(out / "decay_fit.kv")
    assert report["r0"] == pytest.approx(0.77, abs=0.03)
    assert report["tau0_s"] == pytest.approx(1.0e-3, abs=0.15e-3)
    # csv format variant
    assert main(["fit-decay", str(data), "--out", str(out),
                 "--format", "csv"]) == 0
    assert (out / "decay_fit.csv").exists()


def test_simulate_writes_counts_with_provenance(config, tmp_path):
    out = tmp_path / "sim"
    assert main(["simulate", "--config", config, "--seed", "42",
                 "--trials", "20000", "--t", "0,0.00054",
                 "--out", str(out)]) == 0
    names = sorted(p.name for p in out.iterdir())
    assert names == ["counts_t00_a00.csv", "counts_t01_a00.csv",
                     "run_manifest.kv"]
    tables, provenance = read_counts_csv(out / "counts_t01_a00.csv")
    assert provenance["seed"] == "42"
    assert provenance["config_hash"].startswith("sha256:")
    assert tables[0].storage_time == 0.00054
    assert tables[0].n_pulses == 20000


def test_simulate_rerun_is_byte_identical(config, tmp_path):
    out = tmp_path / "sim"
    args = ["simulate", "--config", config, "--seed", "7", "--trials",
            "20000", "--out", str(out)]
    assert main(args) == 0
    first = hash_dir(out)
    shutil.rmtree(out)
    assert main(args) == 0
    assert hash_dir(out) == first


def test_simulate_workers_do_not_change_outputs(config, tmp_path):
    out = tmp_path / "sim"
    base = ["simulate", "--config", config, "--seed", "7", "--trials",
            "20000", "--out", str(out)]
    assert main(base + ["--workers", "1"]) == 0
    first = hash_dir(out)
    shutil.rmtree(out)
    assert main(base + ["--workers", "4"]) == 0
    assert hash_dir(out) == first


def test_simulate_records_gate_feed_forward(config, tmp_path):
    out = tmp_path / "sim"
    assert main(["simulate", "--config", config, "--seed", "3", "--trials",
                 "5000", "--records", "--out", str(out)]) == 0
    lines = (out / "trials_t00_a00.csv").read_text().splitlines()
    header = [ln for ln in lines if ln.startswith("trial_index")][0]
    cols = header.split(",")
    s_idx, as_idx = cols.index("stokes_click"), cols.index("antistokes_click")
    rows = [ln.split(",") for ln in lines
            if ln and not ln.startswith(("#", "trial_index"))]
    assert len(rows) == 5000
    for row in rows:
        if row[as_idx] != "none":
            assert row[s_idx] != "none"


def test_simulate_validation_errors(config, tmp_path):
    out = str(tmp_path / "x")
    assert main(["simulate", "--config", config, "--seed", "1",
                 "--trials", "0", "--out", out]) == 2
    bad = tmp_path / "bad.conf"
    bad.write_text(CONFIG + "experiment.unknown = 1\n")
    assert main(["simulate", "--config", str(bad), "--seed", "1",
                 "--trials", "100", "--out", out]) == 2
    assert main(["simulate", "--config", str(tmp_path / "nope.conf"),
                 "--seed", "1", "--trials", "100", "--out", out]) == 4


def test_estimate_single_matched_file(config, tmp_path, capsys):
    out = tmp_path / "sim"
    assert main(["simulate", "--config", config, "--seed", "11", "--trials",
                 "200000", "--out", str(out)]) == 0
    est_out = tmp_path / "est"
    assert main(["estimate", str(out / "counts_t00_a00.csv"),
                 "--eta-td", "0.5", "--replicas", "2000",
                 "--out", str(est_out)]) == 0
    report = kv_floats(est_out / "estimates.kv")
    assert report["s.available"] == "false"
    r_q = report["table00.r_qubit"]
    sigma = report["table00.r_qubit_sigma"]
    assert abs(r_q - 0.77) < 4 * sigma
    assert report["table00.r_l"] == pytest.approx(r_q, abs=4 * sigma)
    # retrieval.csv feeds fit-decay directly
    assert (est_out / "retrieval.csv").exists()


def test_estimate_canonical_run_yields_bell_parameter(config, tmp_path):
    out = tmp_path / "sim"
    assert main(["simulate", "--config", config, "--seed", "13", "--trials",
                 "200000", "--angles", "canonical", "--out", str(out)]) == 0
    est_out = tmp_path / "est"
    files = sorted(str(p) for p in out.glob("counts_*.csv"))
    assert len(files) == 4
    assert main(["estimate", *files, "--eta-td", "0.5",
                 "--replicas", "2000", "--out", str(est_out)]) == 0
    report = kv_floats(est_out / "estimates.kv")
    assert report["s.available"] == "true"
    assert abs(report["s.value"] - 2.5) < 4 * report["s.sigma"]
    assert report["visibility.value"] == pytest.approx(
        report["s.value"] / (2 * math.sqrt(2)), rel=1e-12)


def test_estimate_schema_error_names_column(config, tmp_path, capsys):
    bad = tmp_path / "bad.csv"
    bad.write_text("theta_s_deg,theta_as_deg\n0,0\n")
    assert main(["estimate", str(bad), "--eta-td", "0.5",
                 "--out", str(tmp_path / "e")]) == 2
    assert "storage_time_s" in capsys.readouterr().err


def test_estimate_needs_eta_td(config, tmp_path):
    out = tmp_path / "sim"
    assert main(["simulate", "--config", config, "--seed", "11",
                 "--trials", "10000", "--out", str(out)]) == 0
    assert main(["estimate", str(out / "counts_t00_a00.csv"),
                 "--out", str(tmp_path / "e")]) == 2
    # the config's chain section is an accepted source for eta_td
    assert main(["estimate", str(out / "counts_t00_a00.csv"),
                 "--config", config, "--out", str(tmp_path / "e2")]) == 0


def test_repeater_sweep_preset(tmp_path):
    out = tmp_path / "sweep"
    assert main(["repeater-sweep", "--preset", "fig8", "--threshold",
                 "1e-4", "--l-min", "2e5", "--l-max", "1.5e6",
                 "--steps", "30", "--out", str(out)]) == 0
    text = (out / "repeater_sweep.csv").read_text()
    assert "cpe" in text and "cie" in text
    assert "calibrated" in text  # chi provenance, never a published value
    summary = kv_floats(out / "repeater_summary.kv")
    ratio = (summary["cpe.threshold_crossing_m"]
             / summary["cie.threshold_crossing_m"])
    assert abs(ratio - 2.3) <= 0.15 * 2.3
    assert summary["cpe.monotone_non_increasing"] == "true"
    # byte-identical rerun
    first = hash_dir(out)
    shutil.rmtree(out)
    assert main(["repeater-sweep", "--preset", "fig8", "--threshold",
                 "1e-4", "--l-min", "2e5", "--l-max", "1.5e6",
                 "--steps", "30", "--out", str(out)]) == 0
    assert hash_dir(out) == first


def test_simulate_estimate_fit_round_trip(tmp_path):
    # recover the configured (r0, tau0) through the whole artifact chain;
    # unit visibility so the matched-pair estimator inverts R(t) directly
    cal = tmp_path / "cal.conf"
    cal.write_text(CONFIG.replace(
        "experiment.visibility = 0.8838834764831843",
        "experiment.visibility = 1.0"))
    config = str(cal)
    out = tmp_path / "sim"
    times = [0.0, 0.2e-3, 0.5e-3, 0.9e-3, 1.4e-3, 2.0e-3]
    assert main(["simulate", "--config", config, "--seed", "101",
                 "--trials", "400000",
                 "--t", ",".join(repr(t) for t in times),
                 "--out", str(out)]) == 0
    est_out = tmp_path / "est"
    files = sorted(str(p) for p in out.glob("counts_*.csv"))
    assert main(["estimate", *files, "--eta-td", "0.5", "--replicas",
                 "1000", "--out", str(est_out)]) == 0
    fit_out = tmp_path / "fit"
    assert main(["fit-decay", str(est_out / "retrieval.csv"),
                 "--out", str(fit_out)]) == 0
    report = kv_floats(fit_out / "decay_fit.kv")

    # combined standard errors via a parametric bootstrap of the samples
    samples = []
    for line in (est_out / "retrieval.csv").read_text().splitlines():
        if line and not line.startswith(("#", "t_seconds")):
            t, r, sigma = (float(x) for x in line.split(","))
            samples.append((t, r, sigma))
    rng = np.random.default_rng(0)
    boots = []
    for _ in range(200):
        jittered = [(t, r + sigma * rng.standard_normal(), sigma)
                    for t, r, sigma in samples]
        fitted, _ = fit_decay(jittered)
        boots.append((fitted.r0, fitted.tau0))
    sig_r0 = float(np.std([b[0] for b in boots]))
    sig_tau = float(np.std([b[1] for b in boots]))
    assert abs(report["r0"] - 0.77) < 3 * sig_r0
    assert abs(report["tau0_s"] - 1e-3) < 3 * sig_tau
