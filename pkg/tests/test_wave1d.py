import mpmath
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from ornn import wave1d
from ornn.errors import DomainError, StabilityError
from ornn.wave1d import TimeBasis, WaveGrid, WaveSpeedProfile, constant_profile, solve_wave


def pulse(t, a=0.1, b=0.6):
    r = (t - 0.5 * (a + b)) / (0.5 * (b - a))
    out = np.zeros_like(t)
    m = np.abs(r) < 1
    out[m] = np.cos(np.pi * r[m] / 2) ** 4
    return out


def interp_quad(x, c, hi, power):
    """int_0^hi interp(c)^-power by mpmath with breakpoints at the nodes."""
    pts = [float(v) for v in x[x < hi]] + [float(hi)]
    f = lambda y: mpmath.mpf(float(np.interp(float(y), x, c))) ** -power  # noqa: E731
    return float(mpmath.quad(f, pts))


@pytest.fixture(scope="module")
def cosine_maps(flat):
    basis = TimeBasis(1.0, 64, "cosine")
    tr = wave1d.boundary_traces(flat, basis)
    return basis, tr, wave1d.nd_map(flat, basis=basis, traces=tr), wave1d.lambda_op(flat, basis=basis, traces=tr)


# -- bases -------------------------------------------------------------------

@pytest.mark.parametrize("kind", ["cosine", "box"])
def test_basis_orthonormal(kind):
    b = TimeBasis(1.0, 32, kind)
    nodes, w = b.gauss_grid()
    V = b.values(nodes)
    assert np.abs((V * w) @ V.T - np.eye(32)).max() <= 1e-10


@pytest.mark.parametrize("kind", ["cosine", "box"])
def test_antiderivatives_match_quadrature(kind):
    b = TimeBasis(1.0, 8, kind)
    t = np.array([0.3, 1.0, 1.7])
    fine = np.linspace(0, 2, 200001)
    vals = b.values(fine)
    for tk, col in zip(t, b.antideriv(t).T):
        m = fine <= tk
        ref = np.trapezoid(vals[:, m], fine[m], axis=1)
        assert np.abs(col - ref).max() <= 1e-4


def test_basis_errors():
    with pytest.raises(DomainError):
        TimeBasis(1.0, 8, "wavelet")
    with pytest.raises(DomainError):
        TimeBasis(0.0, 8)


# -- solver ------------------------------------------------------------------

def test_zero_source_gives_zero(flat):
    g = WaveGrid(nt=256)
    f = solve_wave(flat, np.zeros(g.t.size), g, record="full")
    assert not np.any(f.u)


def test_initial_state_at_rest(flat):
    g = WaveGrid(nt=256)
    f = solve_wave(flat, pulse(g.t, 0.0, 0.5), g, record="full")
    assert not np.any(f.u[:, 0])


def test_cfl_violation(flat):
    g = WaveGrid(nt=256)
    with pytest.raises(StabilityError):
        solve_wave(flat, np.zeros(g.t.size), g, dx=g.dt * 0.5)


def test_short_domain():
    prof = constant_profile(1.0, 1.0, X_max=1.5)
    g = WaveGrid(nt=256)
    with pytest.raises(DomainError):
        solve_wave(prof, np.zeros(g.t.size), g)


def test_source_length_checked(flat):
    with pytest.raises(DomainError):
        solve_wave(flat, np.zeros(10), WaveGrid(nt=256))


def test_finite_propagation(flat):
    g = WaveGrid(nt=512)
    f = solve_wave(flat, pulse(g.t), g, record="full")
    X, TT = np.meshgrid(f.x, g.t, indexing="ij")
    assert np.abs(f.u[X > TT + 3 * f.dx]).max() <= 1e-10


def test_energy_conserved_after_source(bump):
    g = WaveGrid(nt=1024)
    f = solve_wave(bump, pulse(g.t, 0.05, 0.4), g, record="full")
    E = wave1d.discrete_energy(f)
    after = E[g.t[:-1] >= 0.45]
    growth = (after[1:] - after[:-1]).max() / after.max()
    assert growth * 1000 <= 1e-6


def test_superposition(bump):
    g = WaveGrid(nt=256)
    b = TimeBasis(1.0, 8)
    src = b.source_samples(g.t)
    both = solve_wave(bump, src[1] + src[2], g).trace
    sep = solve_wave(bump, src[1:3], g).trace
    assert np.abs(both - sep.sum(axis=0)).max() <= 1e-10 * np.abs(both).max()


def test_solver_bitwise_reproducible(bump):
    g = WaveGrid(nt=256)
    h = pulse(g.t)
    assert np.array_equal(solve_wave(bump, h, g).trace, solve_wave(bump, h, g).trace)


# -- boundary maps -------------------------------------------------------------

def test_nd_map_is_minus_integration(cosine_maps):
    basis, _, M, _ = cosine_maps
    S = wave1d.integration_matrix(basis)
    assert np.linalg.norm(M + S, 2) / np.linalg.norm(S, 2) <= 0.02


def test_lambda_near_minus_identity(cosine_maps):
    _, _, _, lam = cosine_maps
    assert np.linalg.norm(lam + np.eye(64), 2) <= 0.05
    sym = 0.5 * (lam + lam.T)
    assert np.abs(np.diag(sym) + 1).max() <= 0.05
    off = sym - np.diag(np.diag(sym))
    assert np.all(np.abs(np.diag(sym)) > np.abs(off).sum(axis=1))


def test_nd_map_nesting(flat, cosine_maps):
    _, _, M64, _ = cosine_maps
    M32 = wave1d.nd_map(flat, basis=TimeBasis(1.0, 32), grid=WaveGrid(nt=1024))
    assert np.abs(M64[:32, :32] - M32).max() <= 1e-10


def _lambda_norms(prior, seeds):
    basis = TimeBasis(1.0, 32, "box")
    g = WaveGrid(nt=512)
    return [np.linalg.norm(wave1d.lambda_op(wave1d.sample_prior(s, dict(prior, nx=2001)), basis=basis, grid=g), 2)
            for s in seeds]


def test_lambda_norm_mild_prior():
    assert max(_lambda_norms({"amplitude": 0.05}, range(4))) <= 1.1


@pytest.mark.xfail(strict=True, reason="||Lambda|| grows with the speed contrast: 1.19-1.28 for the "
                   "default prior at every resolution tried; the CLI rescales Lambda instead")
def test_lambda_norm_default_prior():
    assert max(_lambda_norms({}, range(3))) <= 1.1


def test_horizon_mismatch(flat):
    with pytest.raises(DomainError):
        wave1d.boundary_traces(flat, TimeBasis(0.5, 8), WaveGrid(T=1.0, nt=256))


# -- travel time and volumes ----------------------------------------------------

@pytest.mark.parametrize("value", [1.0, 2.0])
def test_travel_time_constant(value):
    prof = constant_profile(value, 1.0)
    tau, chi = wave1d.travel_time(prof)
    x = np.linspace(0, 2, 11)
    assert np.abs(tau(x) - x / value).max() <= 1e-12
    assert np.abs(chi(x / value) - x).max() <= 1e-12


def test_travel_time_steps_vs_quadrature():
    x = np.linspace(0, 3, 31)
    c = np.where(x < 1, 1.0, np.where(x < 2, 1.5, 0.8))
    tau, _ = wave1d.travel_time(WaveSpeedProfile(x, c, 0.8, 1.5))
    for xq in (0.55, 1.42, 2.93):
        assert abs(tau(xq) - interp_quad(x, c, xq, 1)) <= 1e-10


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2 ** 32 - 1))
def test_travel_time_round_trip(seed):
    prof = wave1d.sample_prior(seed, {"nx": 801})
    tau, chi = wave1d.travel_time(prof)
    s = np.random.default_rng(seed).uniform(0, 1, 20)
    assert np.abs(tau(chi(s)) - s).max() <= 1e-8


def test_true_volume_closed_forms():
    s = np.array([0.0, 0.3, 1.0])
    assert np.abs(wave1d.true_volume(constant_profile(1.0), s) - s).max() <= 1e-12
    assert np.abs(wave1d.true_volume(constant_profile(2.0), s) - s / 2).max() <= 1e-12


def test_true_volume_vs_quadrature():
    prof = wave1d.sample_prior(7, {"nx": 201, "amplitude": 0.3})
    _, chi = wave1d.travel_time(prof)
    for s in (0.2, 0.55, 0.9):
        ref = interp_quad(prof.x, prof.c, float(chi(s)), 2)
        assert abs(wave1d.true_volume(prof, s) - ref) <= 1e-9


# -- profiles and prior ------------------------------------------------------------

def test_prior_amplitude_zero():
    prof = wave1d.sample_prior(3, {"amplitude": 0.0, "nx": 401})
    assert np.all(prof.c == 1.0)


def test_prior_bounds_and_support():
    prior = {"C0": 0.8, "C1": 1.2, "I0": (0.2, 0.7), "amplitude": 0.5, "nx": 401}
    for seed in range(1000):
        p = wave1d.sample_prior(seed, prior)
        assert p.c.min() >= 0.8 and p.c.max() <= 1.2 and p.c[0] == 1.0
        out = (p.x <= 0.2) | (p.x >= 0.7)
        assert np.all(p.c[out] == 1.0)


def test_prior_deterministic():
    a = wave1d.sample_prior(11, {})
    b = wave1d.sample_prior(11, {})
    assert np.array_equal(a.c, b.c)
    assert not np.array_equal(a.c, wave1d.sample_prior(12, {}).c)


def test_prior_infeasible():
    with pytest.raises(DomainError):
        wave1d.sample_prior(0, {"C0": 1.1})
    with pytest.raises(DomainError):
        wave1d.sample_prior(0, {"M": 1e-3, "nx": 401})


def test_prior_smoothness_bound():
    p = wave1d.sample_prior(5, {"M": 5e3, "nx": 801})
    assert wave1d.c3_proxy(p) <= 5e3


def test_profile_round_trip(tmp_path, bump):
    q = WaveSpeedProfile.load(bump.save(tmp_path, "b"))
    assert np.array_equal(q.c, bump.c) and np.array_equal(q.x, bump.x)
    assert (q.C0, q.C1, q.I0) == (bump.C0, bump.C1, bump.I0)


def test_profile_validation():
    with pytest.raises(DomainError):
        WaveSpeedProfile(np.linspace(0, 1, 3), np.array([1.0, 0.0, 1.0]))
