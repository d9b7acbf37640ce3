import csv
import io
import json
import math

import pytest

from cavity_cz import SystemParams
from cavity_cz import cli
from cavity_cz.errors import ConfigError
from cavity_cz.qalgebra import HBAR

SYSTEM = """[system]
g_A = 0.1
g_B = 0.08
Omega_A = 10.0
Omega_B = 13.75
Delta_A = 200.0
Delta_B = 220.0
delta = 0.2
nu = 1.2
tau_c = 1.0
tau_e = 1.4
"""

IDLE = """[system]
g_A = 0
g_B = 0
Omega_A = 0
Omega_B = 0
Delta_A = 0
Delta_B = 0
delta = 0
nu = 0
tau_c = 1
tau_e = 1.4
"""


def _write(tmp_path, text, name="run.ini"):
    path = tmp_path / name
    path.write_text(text)
    return str(path)


def _run(tmp_path, command, text, *extra, out="out"):
    target = tmp_path / out
    rc = cli.main([command, "--config", _write(tmp_path, text), "--out", str(target), *extra])
    return rc, target


def _rows(path):
    return list(csv.DictReader(io.StringIO(path.read_text())))


# ---------------------------------------------------------------- parsing


def test_shipped_reference_config():
    cfg = cli.parse_config(cli.load_config_text("paper_sec5"))
    assert cfg.system == SystemParams.paper_sec5()
    assert cfg.integrator is None
    assert "exact-eigen" in cfg.echo["integrator_defaults"]
    assert cfg.echo["run"]["engine"] == "static-exact"


def test_missing_coupling_names_key(tmp_path, caplog):
    text = SYSTEM.replace("g_B = 0.08\n", "")
    with pytest.raises(ConfigError, match=r"system\.g_B"):
        cli.parse_config(text)
    rc, _ = _run(tmp_path, "derive", text)
    assert rc == 1
    assert "system.g_B" in caplog.text


@pytest.mark.parametrize("text, key", [
    (SYSTEM + "bogus = 1\n", "system.bogus"),
    (SYSTEM.replace("nu = 1.2", "nu = nan"), "system.nu"),
    (SYSTEM.replace("nu = 1.2", "nu = inf"), "system.nu"),
    (SYSTEM + "[run]\nhorizon = -1\n", "run.horizon"),
    (SYSTEM + "[integrator]\nstep = 1\n", "integrator.step"),
    (SYSTEM + "[extra]\nx = 1\n", "extra"),
])
def test_config_errors_name_key(text, key):
    with pytest.raises(ConfigError, match=key.replace(".", r"\.")):
        cli.parse_config(text)


def test_complex_couplings_parse():
    cfg = cli.parse_config(SYSTEM.replace("g_A = 0.1", "g_A = 0.1+0.05j"))
    assert cfg.system.g_A == complex(0.1, 0.05)


def test_sweep_range():
    cfg = cli.parse_config(SYSTEM + "[sweep]\nparameter = nu\nrange = 0.6:1.8:0.6\n")
    assert cfg.sweep.values == pytest.approx((0.6, 1.2, 1.8))
    with pytest.raises(ConfigError):
        cli.parse_config(SYSTEM + "[sweep]\nparameter = nu\nvalues = 1\nrange = 0:1:1\n")


def test_unknown_config_file(tmp_path):
    assert cli.main(["derive", "--config", str(tmp_path / "missing.ini")]) == 1


# ---------------------------------------------------------------- derive


def test_derive_reference(tmp_path):
    rc, out = _run(tmp_path, "derive", SYSTEM)
    assert rc == 0
    doc = json.loads(out.read_text())
    d = doc["derived"]
    assert d["eta"] == pytest.approx(2.14e-5, rel=5e-3)
    assert abs(complex(*d["lambda_A1"])) == pytest.approx(0.0025, rel=0.05)
    assert d["t_gate_half"] == pytest.approx(d["t_gate"] / 2)


def test_derive_without_drive(tmp_path):
    text = SYSTEM.replace("Omega_A = 10.0", "Omega_A = 0").replace("Omega_B = 13.75", "Omega_B = 0")
    rc, _ = _run(tmp_path, "derive", text)
    assert rc == 2


def test_regime_threshold_and_strict(tmp_path):
    assert _run(tmp_path, "derive", SYSTEM, "--regime-threshold", "1000")[0] == 0
    assert _run(tmp_path, "derive", SYSTEM, "--regime-threshold", "1000", "--strict")[0] == 3
    assert _run(tmp_path, "derive", SYSTEM, "--strict")[0] == 0


def test_bad_thread_count(tmp_path):
    assert _run(tmp_path, "derive", SYSTEM, "--threads", "0")[0] == 1


# ---------------------------------------------------------------- evolve


def test_evolve_idle_is_constant(tmp_path):
    rc, out = _run(tmp_path, "evolve", IDLE + "[run]\nhorizon = 1.0\ninitial = gf\n")
    assert rc == 0
    rows = _rows(out)
    assert list(rows[0]) == list(cli.EVOLVE_COLUMNS)
    for col in cli.EVOLVE_COLUMNS[1:]:
        assert len({r[col] for r in rows}) == 1, col
    assert float(rows[0]["re_overlap"]) == 1.0


def test_evolve_is_byte_identical(tmp_path):
    text = SYSTEM + "[run]\nhorizon = 0.05\n"
    _, a = _run(tmp_path, "evolve", text, out="a.csv")
    _, b = _run(tmp_path, "evolve", text, out="b.csv")
    assert a.read_bytes() == b.read_bytes()


def test_evolve_maxima_match_population_stats(tmp_path, sec5):
    from cavity_cz.dynamics import IntegratorConfig, evolve_state
    from cavity_cz.gate import population_stats
    rc, out = _run(tmp_path, "evolve", SYSTEM + "[run]\nhorizon = 2.0\n[integrator]\ndt = 5e-4\n")
    assert rc == 0
    rows = _rows(out)
    tr = evolve_state("static", sec5, sec5.space("a").basis_state("g", "g", 0, 0), 2.0, IntegratorConfig(dt=5e-4))
    pa, pb, ph = population_stats(tr)
    assert max(float(r["Pe_B"]) for r in rows) == pytest.approx(pb, rel=1e-12)
    assert max(float(r["n_photon_total"]) for r in rows) == pytest.approx(ph, rel=1e-12)


def test_evolve_full_precision(tmp_path):
    _, out = _run(tmp_path, "evolve", SYSTEM + "[run]\nhorizon = 0.01\n")
    row = _rows(out)[-1]
    assert float(row["Pe_B"]) == float(repr(float(row["Pe_B"])))
    assert len(row["Pe_B"]) > 12


def test_evolve_engine_error(tmp_path):
    text = SYSTEM + "[run]\nsource = eq3\nhorizon = 0.001\n[integrator]\nmethod = rk4-fixed\ndt = 1e-5\n"
    assert _run(tmp_path, "evolve", text)[0] == 4


def test_evolve_custom_density(tmp_path):
    text = SYSTEM + "[run]\nhorizon = 0.1\ninitial = custom\namplitudes = 1, 0, 0, 1\nwith_decay = true\n"
    rc, out = _run(tmp_path, "evolve", text)
    assert rc == 0
    assert all(abs(float(r["norm_or_trace"]) - 1) < 1e-8 for r in _rows(out))


# ---------------------------------------------------------------- gate and sweep


def test_gate_vacuum_engine(tmp_path, capsys):
    rc, out = _run(tmp_path, "gate", SYSTEM + "[run]\nengine = eff-vacuum\n")
    assert rc == 0
    doc = json.loads(out.read_text())
    assert abs(doc["conditional_phase"]) == pytest.approx(math.pi, abs=1e-9)
    assert "conditional phase" in capsys.readouterr().out


def test_gate_with_decay_budget(tmp_path):
    text = SYSTEM + "[run]\nwith_decay = true\ngate_time = 0.5\nn_trajectories = 20\n"
    rc, out = _run(tmp_path, "gate", text, "--seed", "3")
    assert rc == 0
    doc = json.loads(out.read_text())
    assert doc["budget"]["t_e"] == pytest.approx(358.4)
    assert doc["decay"]["seed"] == 3


def test_sweep_hopping(tmp_path):
    text = SYSTEM + "[run]\nengine = eff-vacuum\n[sweep]\nparameter = nu\nvalues = 0.6, 1.2, 2.4\n"
    rc, out = _run(tmp_path, "sweep", text)
    assert rc == 0
    rows = _rows(out)
    assert [r["nu"] for r in rows] == ["0.6", "1.2", "2.4"]
    etas = [float(r["eta_meV"]) for r in rows]
    assert len(set(etas)) == 3
    for r, eta in zip(rows, etas):
        assert float(r["t_gate_ns"]) == pytest.approx(math.pi * HBAR / abs(eta), rel=1e-12)


def test_sweep_skips_resonance(tmp_path):
    text = SYSTEM + "[run]\nengine = eff-vacuum\n[sweep]\nparameter = nu\nvalues = 0.2, 1.2\n"
    rc, out = _run(tmp_path, "sweep", text)
    assert rc == 0
    rows = _rows(out)
    assert rows[0]["status"] == "skipped" and "resonance" in rows[0]["reason"]
    assert rows[1]["status"] == "ok"


def test_empty_sweep(tmp_path):
    text = SYSTEM + "[run]\nengine = eff-vacuum\n[sweep]\nparameter = nu\nvalues = 0.2\n"
    assert _run(tmp_path, "sweep", text)[0] == 5


def test_single_point_sweep_matches_gate(tmp_path):
    base = SYSTEM + "[run]\nengine = eff-vacuum\n"
    _, g = _run(tmp_path, "gate", base, out="g.json")
    _, s = _run(tmp_path, "sweep", base + "[sweep]\nparameter = nu\nvalues = 1.2\n", out="s.csv")
    doc = json.loads(g.read_text())
    row = _rows(s)[0]
    assert float(row["conditional_phase"]) == doc["conditional_phase"]
    assert float(row["fidelity_avg"]) == doc["fidelity_avg"]
    assert float(row["t_gate_ns"]) == doc["t_gate_used"]


def test_threaded_sweep_is_identical(tmp_path):
    text = SYSTEM + "[run]\nengine = eff-vacuum\n[sweep]\nparameter = delta\nvalues = 0.1, 0.2, 0.3, 0.4\n"
    _, a = _run(tmp_path, "sweep", text, out="a.csv")
    _, b = _run(tmp_path, "sweep", text, "--threads", "3", out="b.csv")
    assert a.read_bytes() == b.read_bytes()


# ---------------------------------------------------------------- validate


def test_validate_idle_engines_agree(tmp_path):
    rc, out = _run(tmp_path, "validate", IDLE + "[run]\nvalidate_horizon = 0.001\n")
    assert rc == 0
    doc = json.loads(out.read_text())
    assert all(row["block_overlap"] == pytest.approx(1, abs=1e-12) for row in doc["pairwise"])
    assert all(c["pass"] for c in doc["checks"].values())


def test_validate_budget_exceeded(tmp_path, caplog):
    text = SYSTEM + "[integrator]\nmethod = rk4-fixed\ndt = 5e-7\nmax_steps = 1000\n"
    assert _run(tmp_path, "validate", text)[0] == 6
    assert "largest horizon" in caplog.text
