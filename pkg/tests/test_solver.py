import math
import struct

import numpy as np
import pytest
import sympy as sp
from hypothesis import given, settings, strategies as st

from conftest import trig_fields
from norminflation import norms
from norminflation.construction import build_frequency_family, build_initial_data
from norminflation.errors import ConfigError, NumericalError
from norminflation.planewave import (TrigField, advect, evaluate, first_iterate, heat_flow,
                                     leray_project, split_u1)
from norminflation.solver import (GridField, SolverConfig, bilinear_quadrature, compute_remainder,
                                  diagnostics, evolve, forcing_terms, load_snapshot, nonlinear_term,
                                  save_snapshot, spectralize)


def grid_points(shape):
    axes = [2 * np.pi * np.arange(n) / n for n in shape]
    return np.meshgrid(*axes, indexing="ij")


def test_spectralize_single_mode():
    g = spectralize(TrigField.mode([0, 0, 1], [3, 0, 0]), 0.0, 16)
    full = np.fft.fftn(g.physical(), axes=(1, 2, 3), norm="forward")
    assert np.count_nonzero(np.abs(full) > 1e-14) == 2
    assert not spectralize(TrigField.zero(), 0.0, 8).coeffs.any()


def test_spectralize_datum_round_trip():
    f = build_initial_data(build_frequency_family(2, 1), 1.0).field
    g = spectralize(f, 0.0, 64)
    full = np.fft.fftn(g.physical(), axes=(1, 2, 3), norm="forward")
    assert np.count_nonzero(np.abs(full).max(axis=0) > 1e-12) == 4
    X, Y, Z = grid_points((64, 64, 64))
    pts = np.stack([X, Y, Z], -1).reshape(-1, 3)[::97]
    ref = evaluate(f, pts)
    got = g.physical().reshape(3, -1).T[::97]
    assert np.abs(got - ref).max() <= 1e-12 * np.abs(ref).max()
    assert abs(norms.linf_norm(g) - norms.linf_norm(f)) <= 1e-12 * norms.linf_norm(f)


def test_spectralize_band_error():
    with pytest.raises(ConfigError):
        spectralize(TrigField.mode([0, 0, 1], [11, 0, 0]), 0.0, 32)


@given(trig_fields(max_modes=4, div_free=True, rates=True), st.floats(0, 0.3))
def test_to_trigfield_round_trip(f, t):
    g = spectralize(f, t, (20, 19, 18))
    back = g.to_trigfield()
    x = np.random.default_rng(3).uniform(0, 2 * np.pi, (6, 3))
    np.testing.assert_allclose(evaluate(back, x), evaluate(f, x, t), atol=1e-12 * (1 + f.max_abs_coef()))


def test_nonlinear_single_mode_vanishes():
    g = spectralize(TrigField.mode([0, 0.6, 0.8], [4, 0, 0]), 0.0, 16)
    assert np.abs(nonlinear_term(g)).max() <= 1e-12


def test_nonlinear_matches_calculus():
    f = build_initial_data(build_frequency_family(2, 1), 1.0).field
    g = spectralize(f, 0.0, 64)
    exact = leray_project(advect(f, f)) * -1.0
    ref = spectralize(exact, 0.0, 64).coeffs
    assert np.abs(nonlinear_term(g) - ref).max() <= 1e-10 * np.abs(ref).max()
    assert np.abs(nonlinear_term(g.with_coeffs(3 * g.coeffs)) - 9 * nonlinear_term(g)).max() <= 1e-10 * np.abs(ref).max() * 9


def test_single_mode_exact_decay():
    f = TrigField.mode([0, 0, 7.0], [2, 1, 0])
    g = spectralize(f, 0.0, 16)
    traj = evolve(g, SolverConfig(N=16, T_end=1.0, dt=0.05), times=[0.5, 1.0])
    ref = g.coeffs * math.exp(-5.0)
    assert np.abs(traj.fields[-1].coeffs - ref).max() <= 1e-10 * np.abs(ref).max()


def test_taylor_green_residual_is_gradient():
    x, y, t, nu = sp.symbols("x y t nu")
    F = sp.exp(-2 * nu * t)
    u = sp.Matrix([sp.cos(x) * sp.sin(y) * F, -sp.sin(x) * sp.cos(y) * F])
    p = -(sp.cos(2 * x) + sp.cos(2 * y)) / 4 * F**2
    res = [sp.simplify(sp.diff(u[i], t) + u[0] * sp.diff(u[i], x) + u[1] * sp.diff(u[i], y)
                       + sp.diff(p, [x, y][i]) - nu * (sp.diff(u[i], x, 2) + sp.diff(u[i], y, 2)))
           for i in range(2)]
    assert res == [0, 0]
    assert sp.simplify(sp.diff(u[0], x) + sp.diff(u[1], y)) == 0


def test_taylor_green_2d():
    N = 32
    X, Y, Z = grid_points((N, N, N))
    u = np.array([np.cos(X) * np.sin(Y), -np.sin(X) * np.cos(Y), 0 * X])
    traj = evolve(GridField.from_physical(u), SolverConfig(N=N, T_end=0.5, dt=0.01), times=[0.5])
    assert np.abs(traj.fields[0].physical() - u * math.exp(-1.0)).max() <= 1e-6


def test_rk4_order_taylor_green_3d():
    N, nu, T = 16, 0.1, 1.0
    X, Y, Z = grid_points((N, N, N))
    u = 2.0 * np.array([np.sin(X) * np.cos(Y) * np.cos(Z), -np.cos(X) * np.sin(Y) * np.cos(Z), 0 * X])
    g = GridField.from_physical(u, nu=nu)

    def run(n):
        return evolve(g, SolverConfig(N=N, nu=nu, T_end=T, dt_policy="fixed", dt=T / n), times=[T]).fields[0].coeffs

    ref = run(512)
    errs = [np.abs(run(n) - ref).max() for n in (16, 32, 64)]
    orders = [math.log2(errs[i] / errs[i + 1]) for i in range(2)]
    assert abs(orders[-1] - 4) <= 0.2, orders


def _desk(Q=1.0, mags=(8, 16)):
    fam = build_frequency_family(2, len(mags), magnitudes=list(mags))
    return fam, build_initial_data(fam, Q)


def test_energy_monotone_and_divergence():
    fam, data = _desk(2.0)
    cfg = SolverConfig(N=(64, 64, 1), T_end=0.2, snapshot_t_min=1e-5)
    traj = evolve(spectralize(data.field, 0.0, (64, 64, 1)), cfg)
    e = [f.energy() for f in traj.fields]
    assert all(b <= a * (1 + 1e-12) for a, b in zip(e, e[1:]))
    assert max(f.max_divergence() for f in traj.fields) <= 1e-10


def test_linear_limit_matches_heat_flow():
    _, data = _desk(3.0)
    g = spectralize(data.field, 0.0, (64, 64, 1))
    traj = evolve(g, SolverConfig(N=(64, 64, 1), T_end=0.01, nonlinear=False), times=[0.001, 0.01])
    ref = spectralize(heat_flow(data.field), 0.01, (64, 64, 1)).coeffs
    assert np.abs(traj.fields[-1].coeffs - ref).max() <= 1e-12 * np.abs(g.coeffs).max()


def test_thin_axis_matches_cube():
    _, data = _desk(1.0, (4, 8))
    cfg = SolverConfig(N=32, T_end=0.02)
    cube = evolve(spectralize(data.field, 0.0, 32), cfg, times=[0.02]).fields[0]
    thin = evolve(spectralize(data.field, 0.0, (32, 32, 1)), cfg, times=[0.02]).fields[0]
    np.testing.assert_allclose(cube.coeffs[..., 0], thin.coeffs[..., 0], atol=1e-12)
    assert np.abs(cube.coeffs[..., 1:]).max() <= 1e-14


def test_resolution_independence():
    _, data = _desk(0.5, (4, 8))
    vals = []
    for n in (64, 128):
        traj = evolve(spectralize(data.field, 0.0, (n, n, 1)), SolverConfig(N=(n, n, 1), T_end=0.05), times=[0.01, 0.05])
        vals.append([norms.linf_norm(f) for f in traj.fields])
    assert np.abs(np.subtract(*vals)).max() <= 1e-6


def test_picard_consistency():
    fam, _ = _desk(1.0)
    t = 0.02
    ratios = []
    for Q in (0.25, 0.5, 1.0):
        data = build_initial_data(fam, Q)
        fi = first_iterate(data)
        traj = evolve(spectralize(data.field, 0.0, (96, 96, 1)), SolverConfig(N=(96, 96, 1), T_end=t), times=[t])
        approx = heat_flow(data.field) - fi.u1
        diff = traj.fields[0].with_coeffs(traj.fields[0].coeffs - spectralize(approx, t, (96, 96, 1), check_band=False).coeffs)
        ratios.append(norms.linf_norm(diff) / norms.linf_norm(fi.u1, t=t))
    assert ratios[0] < ratios[1] < ratios[2]


def test_remainder_small_and_resolved():
    fam, data = _desk(1.0)
    fi = first_iterate(data)
    k1 = fam.magnitudes[0]
    ts = [1e-5, 0.1 / k1**2]
    ys = []
    for n in (128, 192):  # 192 keeps the third-order interactions (|k_x| <= 48) in band
        traj = evolve(spectralize(data.field, 0.0, (n, n, 1)), SolverConfig(N=(n, n, 1), T_end=ts[-1]), times=[0.0] + ts)
        y, dropped = compute_remainder(traj, data.field, fi.u1)
        assert max(dropped) == 0.0
        assert np.abs(y.fields[0].coeffs).max() <= 1e-12
        ys.append(norms.linf_norm(y.fields[-1]))
    assert ys[1] <= 0.05 * norms.linf_norm(fi.u1, t=ts[-1])
    assert abs(ys[0] - ys[1]) <= 1e-3 * ys[1]


def test_forcing_terms_zero_remainder():
    fam, data = _desk(1.0, (4, 8))
    fi = first_iterate(data)
    y = GridField.zeros((64, 64, 1))
    G = forcing_terms(y, heat_flow(data.field), fi.u1, 0.01)
    assert G["G2"] == 0 and G["G3"] == 0 and G["G1"] > 0


def test_bilinear_quadrature_matches_u1():
    fam, data = _desk(1.0, (4, 8))
    fi = first_iterate(data)
    ts = [0.003, 0.05]
    gs = bilinear_quadrature(heat_flow(data.field), ts, (64, 64, 1))
    x = np.random.default_rng(0).uniform(0, 2 * np.pi, (10, 3))
    for t, g in zip(ts, gs):
        ref = evaluate(fi.u1, x, t)
        assert np.abs(evaluate(g.to_trigfield(), x) - ref).max() <= 1e-9 * norms.linf_norm(fi.u1, t=t)


def test_instability_detected():
    _, data = _desk(40.0, (4, 8))
    g = spectralize(data.field, 0.0, (32, 32, 1), nu=1e-4)
    with pytest.raises(NumericalError):
        evolve(g, SolverConfig(N=(32, 32, 1), nu=1e-4, T_end=1.0, dt_policy="fixed", dt=0.5), times=[1.0])


def test_diagnostics():
    z = diagnostics(GridField.zeros(8))
    assert z["energy"] == 0 and z["enstrophy"] == 0 and z["max_divergence"] == 0
    d = diagnostics(spectralize(TrigField.mode([0, 0, 1], [1, 0, 0]), 0.0, 32))
    assert abs(d["energy"] - (2 * np.pi) ** 3 / 4) <= 1e-12
    fam, data = _desk(1.0)
    inv = diagnostics(spectralize(data.field, 0.0, (64, 64, 1)), shells=[s.k for s in fam.shells])
    assert sorted(map(tuple, inv["active_wavevectors"])) == sorted(data.field.wavevectors())


def test_snapshot_file_layout(tmp_path):
    _, data = _desk(1.0, (4, 8))
    g = spectralize(data.field, 0.0, (32, 16, 1), nu=0.5)
    g.time = 0.25
    path = tmp_path / "s.nsgf"
    save_snapshot(g, path)
    raw = path.read_bytes()
    assert raw[:4] == b"NSGF" and raw[4:5] in (b"<", b">") and raw[5:8] == b"\0\0\0"
    e = raw[4:5].decode()
    assert struct.unpack(e + "3q", raw[8:32]) == (32, 16, 1)
    assert struct.unpack(e + "2d", raw[32:48]) == (0.25, 0.5)
    assert len(raw) == 48 + 3 * 32 * 16 * 8
    back = load_snapshot(path)
    assert back.time == 0.25 and back.nu == 0.5 and back.shape == (32, 16, 1)
    assert np.abs(back.coeffs - g.coeffs).max() <= 1e-15
    assert (tmp_path / "s.nsgf.json").exists()


def test_config_validation():
    with pytest.raises(ConfigError):
        SolverConfig(N=16).validate(kmax=[8, 1, 0])
    with pytest.raises(ConfigError):
        SolverConfig(dt_policy="adaptive").validate()
    s = SolverConfig(T_end=1.0, snapshots_per_decade=16).schedule(k1=8)
    assert s[0] == 0 and s[-1] == 1.0
    per_decade = (len(s) - 2) / math.log10(1.0 / (1e-4 / 64))
    assert per_decade >= 15.9
