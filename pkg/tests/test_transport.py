import math

import numpy as np
import pytest

from kinemix.transport import (
    ProfileSpec,
    SchemeConfig,
    SimState,
    SimulationAborted,
    SpatialGrid,
    config_hash,
    fluid_totals,
    kinetic_mode,
    make_initial,
    mollifier,
    run,
    split_state,
    step_direct,
    step_micromacro,
    transport_term,
)

PERIODIC = SpatialGrid(-10.0, 10.0, 32, "periodic")
OUTFLOW = SpatialGrid(-10.0, 10.0, 32, "outflow")


def _initial(ops, sgrid=PERIODIC, amplitude=1e-2, shape="sine", **kw):
    spec = ProfileSpec(amplitude=amplitude, shape=shape, width=kw.pop("width", 2.0),
                       fluid=kw.pop("fluid", {"rho1": 1.0, "rho2": -0.5, "e": 1.0}),
                       kinetic=kw.pop("kinetic", {"heat": 1.0}), **kw)
    return make_initial(spec, ops.params, ops.vgrid, ops.basis, sgrid, ops.projector)


def _sq(f, sgrid, grid):
    return float(np.sum(f * f) * grid.w * sgrid.dx)


# ------------------------------------------------------------ grids and config


def test_spatial_grid_cells():
    g = SpatialGrid(0.0, 1.0, 10)
    assert g.dx == pytest.approx(0.1)
    np.testing.assert_allclose(g.x, np.linspace(0.05, 0.95, 10))
    for bad in (dict(x_hi=-1.0), dict(N=4), dict(boundary="reflect")):
        with pytest.raises(ValueError):
            SpatialGrid(**{**dict(x_lo=0.0, x_hi=1.0, N=10), **bad})


def test_scheme_validation_and_cfl(grid8):
    cfg = SchemeConfig(cfl=0.5)
    lim = cfg.max_dt(PERIODIC, grid8)
    assert lim == pytest.approx(0.5 * PERIODIC.dx / np.abs(grid8.v1).max())
    assert cfg.resolve_dt(PERIODIC, grid8) == lim
    with pytest.raises(ValueError, match="CFL"):
        SchemeConfig(dt=10 * lim).resolve_dt(PERIODIC, grid8)
    for bad in (dict(mode="spectral"), dict(collision="explicit"), dict(order=3),
                dict(order=2, collision="nu-implicit"), dict(cfl=1.5)):
        with pytest.raises(ValueError):
            SchemeConfig(**bad)


def test_step_rejects_cfl_violation(ops8):
    st = _initial(ops8)
    with pytest.raises(ValueError, match="CFL"):
        step_direct(st, ops8, PERIODIC, SchemeConfig(), dt=1.0)


def test_config_hash_stable():
    a = config_hash({"b": 1, "a": [1, 2]})
    assert a == config_hash({"a": [1, 2], "b": 1})
    assert a != config_hash({"a": [1, 2], "b": 2})
    assert len(a) == 16


# ------------------------------------------------------------ upwind


@pytest.mark.parametrize("sgrid", [PERIODIC, OUTFLOW], ids=["periodic", "outflow"])
def test_transport_of_constant_is_zero(grid8, sgrid):
    f = np.ones((sgrid.N, 2, grid8.Nv))
    assert np.abs(transport_term(f, grid8.v1, sgrid)).max() == 0


def test_transport_periodic_is_conservative(grid8, rng):
    f = rng.normal(size=(PERIODIC.N, 2, grid8.Nv))
    T = transport_term(f, grid8.v1, PERIODIC)
    assert np.abs(T.sum(axis=0)).max() < 1e-12 * np.abs(T).max()


def test_transport_upwind_shift_at_unit_cfl(grid8, rng):
    # at |v1| dx/dt = 1 the update f - dt T is an exact one-cell shift
    f = rng.normal(size=(PERIODIC.N, 1, grid8.Nv))
    v1 = grid8.v1
    dt = PERIODIC.dx / np.abs(v1).max()
    fast = np.abs(v1) == np.abs(v1).max()
    new = f - dt * transport_term(f, v1, PERIODIC)
    pos = fast & (v1 > 0)
    neg = fast & (v1 < 0)
    np.testing.assert_allclose(new[:, :, pos], np.roll(f, 1, axis=0)[:, :, pos], atol=1e-13)
    np.testing.assert_allclose(new[:, :, neg], np.roll(f, -1, axis=0)[:, :, neg], atol=1e-13)


# ------------------------------------------------------------ stepping


@pytest.mark.parametrize("mode", ["direct", "micromacro"])
def test_zero_is_fixed_point(ops8, mode):
    st = SimState(0.0, np.zeros((PERIODIC.N, 2, ops8.vgrid.Nv)))
    states = list(run(st, ops8, PERIODIC, SchemeConfig(mode=mode), 0.5))
    assert np.abs(states[-1].f).max() == 0


@pytest.mark.parametrize("collision", ["full-implicit", "nu-implicit"])
def test_uniform_equilibrium_perturbation_is_steady(ops8, collision, rng):
    c = rng.normal(size=ops8.basis.K) * 1e-2
    f = np.broadcast_to(ops8.basis.combine(c), (PERIODIC.N, 2, ops8.vgrid.Nv)).copy()
    cfg = SchemeConfig(collision=collision, nonlinear=False)
    st = SimState(0.0, f)
    for _ in range(3):
        st = step_direct(st, ops8, PERIODIC, cfg)
    np.testing.assert_allclose(st.f, f, atol=1e-13)


def test_linear_periodic_norm_nonincreasing(ops8):
    st = _initial(ops8, amplitude=1.0)
    cfg = SchemeConfig(nonlinear=False)
    norms = [_sq(s.f, PERIODIC, ops8.vgrid) for s in run(st, ops8, PERIODIC, cfg, 1.0)]
    assert np.all(np.diff(norms) <= 1e-13 * norms[0])
    assert norms[-1] < norms[0]


@pytest.mark.parametrize("order", [1, 2])
def test_periodic_totals_conserved(ops8, order):
    st = _initial(ops8, amplitude=5e-2, shape="cosine-offset")
    tot0 = fluid_totals(st, ops8.basis, PERIODIC)
    cfg = SchemeConfig(order=order)
    *_, last = run(st, ops8, PERIODIC, cfg, 1.0)
    drift = np.abs(fluid_totals(last, ops8.basis, PERIODIC) - tot0).max()
    assert drift < 1e-12 * np.abs(tot0).max()


def test_micromacro_matches_direct(ops8):
    st = _initial(ops8, amplitude=5e-2)
    cfg_d = SchemeConfig(cfl=0.5)
    cfg_m = SchemeConfig(cfl=0.5, mode="micromacro")
    a = list(run(st, ops8, PERIODIC, cfg_d, 0.5))[-1]
    b = list(run(st, ops8, PERIODIC, cfg_m, 0.5))[-1]
    np.testing.assert_allclose(b.f, a.f, atol=1e-12 * np.abs(a.f).max())
    np.testing.assert_allclose(b.f0 + b.f1, b.f, atol=1e-15)
    assert np.abs(ops8.basis.coords(b.f1)).max() < 1e-12
    assert b.drift < SchemeConfig().tol_drift


def test_micromacro_needs_split(ops8):
    st = _initial(ops8)
    with pytest.raises(ValueError, match="split"):
        step_micromacro(st, ops8, PERIODIC, SchemeConfig())
    sp = split_state(st, ops8)
    np.testing.assert_allclose(sp.f0 + sp.f1, st.f)


def test_nu_implicit_micromacro_reprojects(ops8):
    st = split_state(_initial(ops8, amplitude=5e-2), ops8)
    cfg = SchemeConfig(mode="micromacro", collision="nu-implicit")
    new = step_micromacro(st, ops8, PERIODIC, cfg)
    assert np.abs(ops8.basis.coords(new.f1)).max() < 1e-12
    assert new.drift >= 0


def test_run_hits_final_time(ops8):
    st = _initial(ops8)
    cfg = SchemeConfig(cfl=0.9)
    out = list(run(st, ops8, PERIODIC, cfg, 0.7, every=2))
    assert out[0] is st
    assert out[-1].t == pytest.approx(0.7, abs=1e-14)
    nsteps = math.ceil(0.7 / cfg.resolve_dt(PERIODIC, ops8.vgrid) - 1e-9)
    assert out[-1].step == nsteps


def test_nan_aborts_with_last_finite_state(ops8):
    st = _initial(ops8)
    bad = st.copy()
    bad.f[3, 0, 5] = np.nan
    with pytest.raises(SimulationAborted) as exc:
        step_direct(bad, ops8, PERIODIC, SchemeConfig(nonlinear=False))
    assert exc.value.state is bad


def test_blowup_aborts(ops8):
    st = _initial(ops8, amplitude=1.0)
    with pytest.raises(SimulationAborted, match="exceeded"):
        step_direct(st, ops8, PERIODIC, SchemeConfig(blowup=1e-3, nonlinear=False))


def test_checkpoint_roundtrip(ops8, tmp_path):
    st = split_state(_initial(ops8), ops8)
    st.step, st.t, st.config_hash = 7, 0.25, "abc"
    st.save(tmp_path / "s.npz")
    back = SimState.load(tmp_path / "s.npz")
    assert (back.t, back.step, back.config_hash) == (0.25, 7, "abc")
    np.testing.assert_array_equal(back.f, st.f)
    np.testing.assert_array_equal(back.f1, st.f1)
    np.savez(tmp_path / "other.npz", kind="something", f=st.f)
    with pytest.raises(ValueError):
        SimState.load(tmp_path / "other.npz")


# ------------------------------------------------------------ initial data


def test_profile_amplitude_must_be_positive():
    for a in (0.0, -1e-3):
        with pytest.raises(ValueError):
            ProfileSpec(amplitude=a)
    with pytest.raises(ValueError):
        ProfileSpec(shape="square")


def test_initial_linear_in_amplitude(ops8):
    a = _initial(ops8, OUTFLOW, amplitude=1e-3, shape="gaussian")
    b = _initial(ops8, OUTFLOW, amplitude=3e-3, shape="gaussian")
    np.testing.assert_allclose(b.f, 3 * a.f, rtol=1e-12, atol=1e-18)


def test_odd_bump_has_zero_totals(ops8):
    st = _initial(ops8, OUTFLOW, shape="odd-bump")
    assert np.abs(fluid_totals(st, ops8.basis, OUTFLOW)).max() < 1e-15
    g = _initial(ops8, OUTFLOW, shape="gaussian")
    assert np.abs(fluid_totals(g, ops8.basis, OUTFLOW)).max() > 1e-3


def test_zero_mean_flag_removes_totals(ops8):
    st = _initial(ops8, OUTFLOW, shape="gaussian", zero_mean=True)
    assert np.abs(fluid_totals(st, ops8.basis, OUTFLOW)).max() < 1e-15


def test_unknown_fluid_label(ops8):
    with pytest.raises(ValueError, match="unknown fluid"):
        _initial(ops8, fluid={"rho9": 1.0})


def test_mollifier_unit_integral_compact():
    psi = mollifier(OUTFLOW)
    assert psi.sum() * OUTFLOW.dx == pytest.approx(1.0, abs=1e-14)
    assert psi[0] == 0 and psi[-1] == 0 and np.all(psi >= 0)


@pytest.mark.parametrize("name", ["heat", "shear"])
def test_kinetic_modes_orthogonal_unit(ops8, name):
    g = kinetic_mode(name, ops8.basis, ops8.projector)
    assert np.sum(g * g) * ops8.vgrid.w == pytest.approx(1.0)
    assert np.abs(ops8.basis.coords(g)).max() < 1e-12
    with pytest.raises(ValueError):
        kinetic_mode("sound", ops8.basis, ops8.projector)
