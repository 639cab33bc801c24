import itertools
import json
import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy import integrate

from conftest import trig_fields
from norminflation.construction import build_frequency_family, build_initial_data, geometric_magnitudes
from norminflation.errors import BudgetExceeded
from norminflation.planewave import (COS, SIN, TrigField, advect, duhamel_integrate, evaluate,
                                     first_iterate, heat_flow, leray_project, sample, split_u1)


def fd_advect(u, w, x, t=0.0, h=1e-6):
    """(u.grad)w at points x by central differences of evaluate."""
    uval = evaluate(u, x, t)
    out = np.zeros_like(uval)
    for j in range(3):
        e = np.zeros(3)
        e[j] = h
        dw = (evaluate(w, x + e, t) - evaluate(w, x - e, t)) / (2 * h)
        out += uval[:, j:j + 1] * dw
    return out


def test_canonical_sign_and_merge():
    a = TrigField.mode([1, 0, 0], [-2, 1, 0], "sin")
    b = TrigField.mode([1, 0, 0], [2, -1, 0], "sin")
    assert a == -b
    assert (a + b).n_terms == 0
    assert TrigField.mode([1, 2, 3], [0, 0, 0], "sin").n_terms == 0
    x = np.array([[0.3, 1.1, -0.4]])
    np.testing.assert_allclose(evaluate(a, x), [[math.sin(-0.6 + 1.1), 0, 0]])


def test_heat_flow_single_mode():
    f = heat_flow(TrigField.mode([0, 1, 0], [8, 0, 0]))
    assert f.rate.tolist() == [64.0]
    x = np.array([0.1, 0.2, 0.3])
    np.testing.assert_allclose(evaluate(f, x, 0.01), math.exp(-0.64) * evaluate(f, x, 0.0), rtol=1e-14)
    assert heat_flow(TrigField.zero()).n_terms == 0


@given(trig_fields())
def test_heat_semigroup_rate_additivity(f):
    h2 = heat_flow(heat_flow(f))
    k2 = (f.k.astype(float) ** 2).sum(axis=1)
    np.testing.assert_array_equal(h2.rate, f.rate + 2 * k2)


def test_leray_examples():
    f = leray_project(TrigField.mode([1, 1, 0], [2, 0, 0]))
    np.testing.assert_allclose(f.amplitudes()[2], [[0, 1, 0]])
    assert leray_project(TrigField.mode([2, 0, 0], [2, 0, 0])).n_terms == 0


@given(trig_fields())
def test_leray_matches_symbol(f):
    p = leray_project(f)
    k, ph, a = f.amplitudes()
    x = np.random.default_rng(0).uniform(0, 2 * np.pi, (7, 3))
    expected = np.zeros((7, 3))
    for kk, phh, aa in zip(k, ph, a):
        khat = kk / np.linalg.norm(kk)
        g = TrigField.mode((np.eye(3) - np.outer(khat, khat)) @ aa, kk, "cos" if phh == COS else "sin")
        expected += evaluate(g, x)
    np.testing.assert_allclose(evaluate(p, x), expected, atol=1e-12)
    assert (leray_project(p) - p).max_abs_coef() <= 1e-15 * max(1.0, p.max_abs_coef())
    assert p.is_divergence_free()


@given(trig_fields(max_modes=3, div_free=True), trig_fields(max_modes=3))
def test_advect_matches_finite_differences(u, w):
    x = np.random.default_rng(1).uniform(0, 2 * np.pi, (5, 3))
    got = evaluate(advect(u, w), x)
    scale = 1 + np.abs(got).max()
    np.testing.assert_allclose(got, fd_advect(u, w, x), atol=1e-6 * scale * 40)


@given(trig_fields(max_modes=3, div_free=True), trig_fields(max_modes=3, div_free=True),
       trig_fields(max_modes=3), st.floats(-3, 3), st.floats(-3, 3))
def test_advect_bilinear(u, v, w, a, b):
    lhs = advect(u * a + v * b, w)
    rhs = advect(u, w) * a + advect(v, w) * b
    x = np.random.default_rng(2).uniform(0, 2 * np.pi, (4, 3))
    np.testing.assert_allclose(evaluate(lhs, x), evaluate(rhs, x), atol=1e-10 * (1 + abs(a) + abs(b)) * 100)
    lhs2 = advect(u, v * a + w * b)
    rhs2 = advect(u, v) * a + advect(u, w) * b
    np.testing.assert_allclose(evaluate(lhs2, x), evaluate(rhs2, x), atol=1e-10 * (1 + abs(a) + abs(b)) * 100)


def test_single_plane_wave_self_interaction_is_gradient():
    u = TrigField.mode([0, 0.6, 0.8], [3, 0, 0])
    assert leray_project(advect(u, u)).n_terms == 0


def test_advect_budget():
    u = TrigField.mode([0, 1, 0], [1, 0, 0]) + TrigField.mode([0, 0, 1], [2, 0, 0])
    with pytest.raises(BudgetExceeded):
        advect(u, TrigField.mode([1, 0, 0], [0, 1, 0]) + TrigField.mode([1, 0, 0], [0, 2, 0]), budget=3)


def test_duhamel_examples():
    f = TrigField.mode([1, 0, 0], [0, 1, 0], rate=4.0)
    d = duhamel_integrate(f)
    for t in (0.1, 1.0, 5.0):
        got = evaluate(d, [0, 0, 0], t)[0]
        assert abs(got - (math.exp(-t) - math.exp(-4 * t)) / 3) <= 1e-15
        quad = integrate.quad(lambda s: math.exp(-(t - s)) * math.exp(-4 * s), 0, t, epsabs=0, epsrel=1e-13)[0]
        assert abs(got - quad) <= 1e-10 * abs(quad)
    r = duhamel_integrate(TrigField.mode([1, 0, 0], [0, 2, 0], rate=4.0))
    assert r.power.tolist() == [1]
    assert abs(evaluate(r, [0, 0, 0], 0.7)[0] - 0.7 * math.exp(-2.8)) < 1e-15
    assert duhamel_integrate(TrigField.zero()).n_terms == 0


@given(trig_fields(rates=True))
def test_duhamel_vanishes_at_zero(f):
    d = duhamel_integrate(f)
    assert np.all(d.amplitudes(0.0)[2] == 0)


def test_near_resonance_logged():
    log = []
    duhamel_integrate(TrigField.mode([1, 0, 0], [0, 1, 0], rate=1.0 + 1e-12), log=log)
    assert len(log) == 1 and log[0]["error_bound"] < 1e-11


def test_duhamel_rejects_power_one():
    with pytest.raises(ValueError):
        duhamel_integrate(TrigField.mode([1, 0, 0], [0, 1, 0], rate=1.0, power=1))


def _family(r):
    return build_frequency_family(2, r, magnitudes=geometric_magnitudes(2, r, 4))


def test_first_iterate_r1():
    fam = build_frequency_family(2, 1)
    fi = first_iterate(build_initial_data(fam, 1.0))
    assert fi.N3.n_terms == 0
    u10, u11 = split_u1(fi.u1, fam)
    assert u10.n_modes == 1 and u10.wavevectors() == {(0, 1, 0)}
    assert (u10 + u11) == fi.u1


def test_first_iterate_eta_mode_against_quadrature():
    fam = build_frequency_family(2, 1)
    data = build_initial_data(fam, 1.0)
    fi = first_iterate(data)
    u10, _ = split_u1(fi.u1, fam)
    x, t = np.array([0.0, math.pi / 2, 0.0]), 0.1
    # integrand: heat kernel on the eta mode (|eta| = 1) acting on P N1 at time s
    pn1 = leray_project(fi.N1)
    quad = integrate.quad_vec(lambda s: math.exp(-(t - s)) * evaluate(pn1, x, s), 0, t, epsabs=0, epsrel=1e-12)[0]
    np.testing.assert_allclose(evaluate(u10, x, t), quad, rtol=1e-10)


def test_N1_exact_constant():
    fam = build_frequency_family(2, 1)
    Q = 1.7
    fi = first_iterate(build_initial_data(fam, Q))
    sh = fam.shells[0]
    m = sh.magnitude
    k, ph, a = fi.N1.amplitudes(0.0)
    assert ph.tolist() == [SIN]
    expected = -0.25 * Q**2 * m**2 * (np.array(sh.v) + np.array(sh.v_prime))
    np.testing.assert_allclose(a[0], expected, rtol=1e-13)
    assert fi.N1.rate.tolist() == [2 * m * m + 1]


@pytest.mark.parametrize("r", [1, 2, 3])
def test_first_iterate_inventory(r):
    fam = _family(r)
    fi = first_iterate(build_initial_data(fam, 1.3))
    ks = [np.array(s.k) for s in fam.shells]
    kps = [np.array(s.k_prime) for s in fam.shells]
    allowed = {tuple(fam.eta)}
    for s in range(r):
        allowed.add(tuple(ks[s] + kps[s]))
        for s2 in range(r):
            if s2 != s:
                for a, b in itertools.product((ks[s], kps[s]), (ks[s2], kps[s2])):
                    allowed.add(tuple(a + b))
                    allowed.add(tuple(a - b))
    from norminflation.planewave import canonical_wavevector
    allowed = {canonical_wavevector(k) for k in allowed}
    assert fi.u1.wavevectors() <= allowed
    assert (fi.N1 + fi.N2 + fi.N3 - fi.advection).max_abs_coef() <= 1e-12 * fi.advection.max_abs_coef()


@pytest.mark.parametrize("r", [1, 2, 4])
def test_eta_direction_close_to_v(r):
    fam = _family(r)
    fi = first_iterate(build_initial_data(fam, 2.0))
    a = fi.N1.amplitudes(0.0)[2].sum(axis=0)
    v = np.array(fam.shells[0].v)
    cos = -a @ v / np.linalg.norm(a)
    assert math.acos(min(cos, 1.0)) <= 1.0 / fam.magnitudes[0]


@given(trig_fields(rates=True))
def test_json_round_trip(f):
    assert TrigField.from_dict(json.loads(json.dumps(f.to_dict()))) == f


@given(trig_fields(rates=True), st.floats(0, 2))
def test_sampling_matches_evaluate(f, t):
    shape = (13, 14, 15)
    vals = sample(f, t, shape)
    idx = [(0, 0, 0), (3, 7, 2), (12, 13, 14)]
    for i in idx:
        x = 2 * np.pi * np.array(i) / np.array(shape)
        np.testing.assert_allclose(vals[(slice(None),) + i], evaluate(f, x, t), atol=1e-12 * (1 + f.max_abs_coef()))


def test_pretty_printer():
    text = TrigField.mode([0, 1, 0], [2, 0, 0], rate=4.0).pretty()
    assert text == "[(0, 1, 0) e^(-4 t)] cos((2,0,0).x)"
