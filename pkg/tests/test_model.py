import math

import numpy as np
import pytest
import scipy.linalg

from cavity_cz import model as mdl
from cavity_cz.errors import GateTimeUndefinedError, ResonanceError
from cavity_cz.qalgebra import HBAR, HermitianSpectrum, hermiticity_defect

from conftest import random_params


@pytest.fixture(scope="module")
def d5(sec5):
    return mdl.derived_couplings(sec5)


def _elem(H, space, bra, ket):
    return H.matrix[space.index(*bra), space.index(*ket)]


# ---------------------------------------------------------------- derived couplings


def test_reference_couplings(d5):
    assert d5.lambda_A1 == pytest.approx(2.4913e-3, rel=1e-4)
    for lam in (d5.lambda_A1, d5.lambda_A2, d5.lambda_B1, d5.lambda_B2):
        assert abs(lam) == pytest.approx(0.0025, rel=0.05)
    assert d5.l_A3 == pytest.approx(0.5)
    assert d5.k_A == pytest.approx(1.249e-5, rel=1e-3)
    assert d5.eta == pytest.approx(2.14e-5, rel=5e-3)
    assert d5.t_gate == pytest.approx(96.5, rel=5e-3)
    assert d5.t_gate_half == pytest.approx(d5.t_gate / 2)
    assert d5.Phi_A == pytest.approx(-0.49999, abs=5e-5)
    assert d5.Phi_A - (-d5.l_A3) == pytest.approx(abs(d5.lambda_A2) ** 2 / -1.0 + abs(d5.lambda_A1) ** 2 / 1.4)


def test_no_drive_has_no_gate_time(sec5):
    p = sec5.replace(Omega_A=0, Omega_B=0)
    with pytest.raises(GateTimeUndefinedError):
        mdl.derived_couplings(p)
    d = mdl.derived_couplings(p, strict=False)
    assert d.lambda_A1 == d.lambda_B2 == 0
    assert d.l_A3 == d.l_B3 == 0 and d.eta == 0 and math.isinf(d.t_gate)


def test_resonance_names_denominator(sec5):
    with pytest.raises(ResonanceError, match="nu-delta|delta-nu") as exc:
        mdl.derived_couplings(sec5.replace(nu=sec5.delta))
    assert exc.value.value == 0
    with pytest.raises(ResonanceError, match="Delta_A"):
        mdl.derived_couplings(sec5.replace(Delta_A=0.0))


def test_complex_couplings_enter_through_theta(sec5):
    p = sec5.replace(g_A=0.1 * np.exp(0.7j))
    d = mdl.derived_couplings(p)
    assert d.theta_1 == pytest.approx(0.7) and d.theta_2 == pytest.approx(0.7)
    assert d.eta == pytest.approx(mdl.derived_couplings(sec5).eta * math.cos(0.7), rel=1e-12)


def test_joint_scaling_of_second_order_couplings(sec5, d5):
    s = 0.5
    ds = mdl.derived_couplings(sec5.scaled(s))
    for name in ("lambda_A1", "lambda_A2", "lambda_B1", "lambda_B2", "k_A", "k_B",
                 "l_A1", "l_A2", "l_A3", "l_B1", "l_B2", "l_B3"):
        assert getattr(ds, name) == pytest.approx(s ** 2 * getattr(d5, name), rel=1e-12)


def test_eta_is_quartic_in_joint_scaling(sec5, d5):
    # eta is a product of two lambdas, each quadratic in (g, Omega)
    for s in (0.5, 2.0):
        ds = mdl.derived_couplings(sec5.scaled(s))
        assert ds.eta == pytest.approx(s ** 4 * d5.eta, rel=1e-12)
        assert ds.t_gate == pytest.approx(d5.t_gate / s ** 4, rel=1e-12)


@pytest.mark.xfail(strict=True, raises=AssertionError, reason="eta is a product of two degree-2 couplings, so it scales as s**4")
def test_eta_degree_two_homogeneity_claim(sec5, d5):
    ds = mdl.derived_couplings(sec5.scaled(0.5))
    assert ds.eta == pytest.approx(0.25 * d5.eta, rel=1e-6)


# ---------------------------------------------------------------- Hamiltonians


def test_eq1_at_zero_time(sec5):
    sa = sec5.space("a")
    H = mdl.hamiltonian_eq1(0.0, sec5)
    assert _elem(H, sa, ("e", "g", 0, 0), ("g", "g", 1, 0)) == pytest.approx(sec5.g_A)
    assert _elem(H, sa, ("g", "g", 1, 0), ("g", "g", 0, 1)) == pytest.approx(sec5.nu)


def test_eq1_without_couplings_is_hopping(sec5):
    p = sec5.replace(g_A=0, g_B=0, Omega_A=0, Omega_B=0)
    sa = p.space("a")
    H = mdl.hamiltonian_eq1(1.3, p).matrix
    idx = [sa.index("g", "g", 1, 0), sa.index("g", "g", 0, 1)]
    block = H[np.ix_(idx, idx)]
    assert np.allclose(np.linalg.eigvalsh(block), [-p.nu, p.nu])
    assert np.allclose(H, mdl.normal_mode_splitting(p, sa).matrix)


def test_eq3_sign_of_dot_b_on_c1(sec5):
    sc = sec5.space("c")
    H = mdl.hamiltonian_eq3(0.0, sec5)
    a = _elem(H, sc, ("e", "g", 0, 0), ("g", "g", 1, 0))
    b = _elem(H, sc, ("g", "e", 0, 0), ("g", "g", 1, 0))
    assert a == pytest.approx(sec5.g_A / math.sqrt(2))
    assert b == pytest.approx(-sec5.g_B / math.sqrt(2))
    assert _elem(H, sc, ("g", "e", 0, 0), ("g", "g", 0, 1)) == pytest.approx(sec5.g_B / math.sqrt(2))


def test_drive_sign_flip_after_half_period(sec5):
    t = math.pi * HBAR / sec5.Delta_A
    for fn, basis in ((mdl.hamiltonian_eq3, "c"), (mdl.hamiltonian_eq1, "a")):
        s = sec5.space(basis)
        H = fn(t, sec5)
        assert _elem(H, s, ("e", "g", 0, 0), ("g", "g", 0, 0)) == pytest.approx(-sec5.Omega_A, abs=1e-12)


def test_basis_map_at_zero_time(rng):
    for _ in range(5):
        p = random_params(rng)
        sa = p.space("a")
        recon = mdl.normal_mode_splitting(p, sa).matrix + mdl.hamiltonian_eq3(0.0, p, sa).matrix
        e1 = mdl.hamiltonian_eq1(0.0, p, sa).matrix
        assert np.abs(recon - e1).max() < 1e-12 * np.abs(e1).max()


def _faithful(p, sa):
    m = mdl.mode_operators(sa)
    n = np.diag(m["aA"].conj().T @ m["aA"] + m["aB"].conj().T @ m["aB"]).real
    keep = n <= p.n_max + 1e-9
    return np.ix_(keep, keep)


def test_basis_map_in_interaction_picture(rng):
    # eq1 = H0 + U0 eq3 U0^+ with U0 = exp(-i H0 t/hbar), on the sectors
    # where the truncated hopping is exact
    for _ in range(10):
        p = random_params(rng)
        sa = p.space("a")
        t = rng.uniform(0, 20)
        H0 = mdl.normal_mode_splitting(p, sa).matrix
        U0 = scipy.linalg.expm(-1j * H0 * t / HBAR)
        recon = H0 + U0 @ mdl.hamiltonian_eq3(t, p, sa).matrix @ U0.conj().T
        e1 = mdl.hamiltonian_eq1(t, p, sa).matrix
        assert np.abs((recon - e1)[_faithful(p, sa)]).max() < 1e-10 * np.abs(e1).max()


@pytest.mark.xfail(strict=True, raises=AssertionError, reason="the two pictures differ by the H0 rotation at t > 0")
def test_basis_map_literal_at_random_times(rng):
    p = random_params(rng)
    sa = p.space("a")
    for t in rng.uniform(0.1, 20, 10):
        recon = mdl.normal_mode_splitting(p, sa).matrix + mdl.hamiltonian_eq3(t, p, sa).matrix
        e1 = mdl.hamiltonian_eq1(t, p, sa).matrix
        assert np.abs(recon - e1).max() < 1e-12 * np.abs(e1).max()


def test_frame_equivalence(sec5, rng):
    sc = sec5.space("c")
    hs = mdl.hamiltonian_static(sec5, sc).matrix
    hd = mdl.frame_generator(sec5, sc).matrix
    scale = np.abs(hs - hd).max()
    for t in rng.uniform(0, 0.5, 10):
        W = np.diag(np.exp(1j * np.diag(hd).real * t / HBAR))
        diff = W @ (hs - hd) @ W.conj().T - mdl.hamiltonian_eq3(t, sec5, sc).matrix
        assert np.abs(diff).max() < 1e-10 * scale


def test_constructors_are_hermitian(sec5):
    ops = [mdl.hamiltonian_eq1(0.37, sec5), mdl.hamiltonian_eq3(0.37, sec5), mdl.hamiltonian_static(sec5),
           mdl.h_eff_stage1(0.37, sec5), mdl.h_eff_stage2(sec5), mdl.h_eff_vacuum(sec5)]
    for H in ops:
        assert hermiticity_defect(H) < 1e-12 * H.scale


def test_static_without_couplings_is_diagonal(sec5):
    p = sec5.replace(g_A=0, g_B=0, Omega_A=0, Omega_B=0, nu=0.0)
    sa = p.space("a")
    H = mdl.hamiltonian_static(p).matrix
    assert np.count_nonzero(H - np.diag(np.diag(H))) == 0
    assert H[sa.index("e", "g", 0, 0)] [sa.index("e", "g", 0, 0)] == p.Delta_A
    assert H[sa.index("g", "e", 2, 0), sa.index("g", "e", 2, 0)] == pytest.approx(p.Delta_B - 2 * p.delta)


def test_reference_drive_ratio(sec5):
    ratios = [abs(sec5.Omega_A / sec5.Delta_A), abs(sec5.Omega_B / sec5.Delta_B),
              abs(sec5.g_A / sec5.Delta_A), abs(sec5.g_B / sec5.Delta_B)]
    assert max(ratios) == pytest.approx(0.0625)
    assert ratios[0] == pytest.approx(0.05)


def _dressed_ground(p):
    sa = p.space("a")
    spec = HermitianSpectrum(mdl.hamiltonian_static(p))
    out = []
    for lab in ("ff", "fg", "gf", "gg"):
        v = sa.basis_state(lab[0], lab[1], 0, 0).data
        out.append(spec.energies[np.argmax(np.abs(spec.vectors.conj().T @ v))])
    return np.array(out)


def test_static_ground_manifold_offset_is_quartic_light_shift(sec5):
    # the residual against the effective energies is the next order of the
    # drive light shift, |Omega|^4 / Delta^3 per dot in g
    E = _dressed_ground(sec5)
    pred = np.diag(mdl.h_eff_vacuum(sec5).matrix).real
    qA = abs(sec5.Omega_A) ** 4 / sec5.Delta_A ** 3
    qB = abs(sec5.Omega_B) ** 4 / sec5.Delta_B ** 3
    assert abs(E[0]) < 1e-12
    assert E[1] - pred[1] == pytest.approx(qB, rel=0.03)
    assert E[2] - pred[2] == pytest.approx(qA, rel=0.03)


@pytest.mark.xfail(strict=True, raises=AssertionError, reason="fourth-order drive light shifts (~1e-3 meV) exceed the |lambda|^2 scale")
def test_static_ground_manifold_within_lambda_squared_scale(sec5, d5):
    E = _dressed_ground(sec5)
    pred = np.diag(mdl.h_eff_vacuum(sec5).matrix).real
    lam = max(abs(d5.lambda_A1), abs(d5.lambda_A2), abs(d5.lambda_B1), abs(d5.lambda_B2))
    scale = lam ** 2 / abs(sec5.nu - sec5.delta)
    assert np.max(np.abs(E - pred)) < 10 * scale


# ---------------------------------------------------------------- effective models


def test_stage1_vanishes_with_both_dots_in_f(sec5):
    sc = sec5.space("c")
    H = mdl.h_eff_stage1(0.2, sec5).matrix
    ff = [sc.index("f", "f", n1, n2) for n1 in range(3) for n2 in range(3)]
    assert np.abs(H[np.ix_(ff, ff)]).max() == 0
    assert np.abs(H[ff, :]).max() == 0


def test_stage1_c2_coefficient(sec5, d5):
    sc = sec5.space("c")
    H = mdl.h_eff_stage1(0.0, sec5)
    assert _elem(H, sc, ("g", "f", 0, 0), ("g", "f", 0, 1)) == pytest.approx(-d5.lambda_A2)


def test_stage2_conserves_mode_numbers(sec5):
    sc = sec5.space("c")
    H = mdl.h_eff_stage2(sec5).matrix
    m = mdl.mode_operators(sc)
    for k in ("c1", "c2"):
        n = m[k].conj().T @ m[k]
        assert np.abs(H @ n - n @ H).max() == 0


def test_stage2_vacuum_sector_is_vacuum_model(sec5):
    sc = sec5.space("c")
    idx = sc.qubit_vacuum_indices()
    H = mdl.h_eff_stage2(sec5).matrix
    assert np.allclose(H[np.ix_(idx, idx)], mdl.h_eff_vacuum(sec5).matrix, rtol=0, atol=1e-15)


def test_stage2_one_photon_shift(sec5, d5):
    sc = sec5.space("c")
    H = mdl.h_eff_stage2(sec5).matrix
    i0, i1 = sc.index("g", "g", 0, 0), sc.index("g", "g", 1, 0)
    expected = (d5.k_A - d5.k_B) ** 2 / (2 * sec5.nu) - d5.l_A1 - d5.l_B1
    assert (H[i1, i1] - H[i0, i0]).real == pytest.approx(expected, rel=1e-12)


def test_vacuum_model_is_diagonal_with_eta(sec5, d5):
    H = mdl.h_eff_vacuum(sec5).matrix
    assert np.count_nonzero(H - np.diag(np.diag(H))) == 0
    e = np.diag(H).real
    assert e[0] == 0
    assert e[1] == pytest.approx(d5.Phi_B) and e[2] == pytest.approx(d5.Phi_A)
    assert e[3] - e[2] - e[1] + e[0] == pytest.approx(d5.eta, rel=1e-9)
    assert np.all(mdl.h_eff_vacuum(sec5.replace(Omega_A=0, Omega_B=0)).matrix == 0)


def test_stage1_and_stage2_vacuum_rates_agree(sec5):
    from cavity_cz.dynamics import IntegratorConfig, evolve_state
    from cavity_cz.gate import conditional_rate, extract_phases
    sc = sec5.space("c")
    T = 0.5
    runs = {}
    for src, cfg in (("eff1", IntegratorConfig("rk4-fixed", 2.5e-5, 10)), ("eff2", IntegratorConfig(dt=2.5e-4))):
        trajs = {lab: evolve_state(src, sec5, sc.basis_state(lab[0], lab[1], 0, 0), T, cfg)
                 for lab in ("ff", "fg", "gf", "gg")}
        runs[src] = conditional_rate(extract_phases(trajs))
    # stage 1 keeps bounded virtual-photon oscillations that stage 2 averages out
    assert runs["eff1"] == pytest.approx(runs["eff2"], rel=1e-2)


# ---------------------------------------------------------------- collapse and regime


def test_collapse_rates(sec5):
    chans = mdl.collapse_operators(sec5)
    rates = {c.name: c.rate for c in chans}
    assert rates["a_A"] == rates["a_B"] == 1.0
    assert rates["sigma_A"] == pytest.approx(1 / 1.4) and rates["sigma_B"] == pytest.approx(0.714, abs=1e-3)
    names = [c.name for c in mdl.collapse_operators(sec5, sec5.space("c"))]
    assert names[:2] == ["c_1", "c_2"]


def test_cavity_dissipator_is_basis_invariant(sec5):
    sa, sc = sec5.space("a"), sec5.space("c")
    ma = mdl.mode_operators(sa)
    total_a = sum(ma[k].conj().T @ ma[k] for k in ("aA", "aB"))
    total_c = sum(ma[k].conj().T @ ma[k] for k in ("c1", "c2"))
    assert np.allclose(total_a, total_c)
    assert len(mdl.collapse_operators(sec5, sc)) == 4


def test_regime_reference(sec5):
    rep = mdl.regime_report(sec5)
    assert rep.ok and rep.min_ratio >= 16
    rows = {name: ratio for name, _, _, ratio in rep.rows()}
    assert rows["|Delta_A| >> max(nu, delta, |g_A|, |Omega_A|)"] == pytest.approx(20)
    assert rows["|nu-delta| >> max(|lambda|, k)"] == pytest.approx(400, rel=0.01)
    assert all(r > 0 for r in rows.values())


def test_regime_warns_on_degenerate_detuning(sec5):
    rep = mdl.regime_report(sec5.replace(nu=sec5.delta))
    assert not rep.ok
    assert any(c.name.startswith("|nu-delta|") and c.ratio == 0 for c in rep.warnings)


def test_regime_trivial_without_couplings(sec5):
    rep = mdl.regime_report(sec5.replace(g_A=0, g_B=0, Omega_A=0, Omega_B=0))
    assert rep.ok


def test_params_validation():
    with pytest.raises(ValueError):
        mdl.SystemParams(0.1, 0.1, 1, 1, 10, 10, 0.2, float("nan"), 1, 1)
    with pytest.raises(ValueError):
        mdl.SystemParams(0.1, 0.1, 1, 1, 10, 10, 0.2, 1.2, tau_c=0)
    with pytest.raises(ValueError):
        mdl.SystemParams(0.1, 0.1, 1, 1, 10, 10, 0.2, 1.2, n_max=0)
