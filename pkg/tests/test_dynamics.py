import numpy as np
import pytest
from scipy.integrate import solve_ivp

import qflab as qf
from qflab.dynamics import (
    Potential,
    chi_square_gof,
    compare_bohm_rdmp,
    derive_seed,
    ks_gof,
    mean_step_displacement,
)


def free_gaussian_frames(sigma0=1.0, t_end=2.0, dt=0.002, n=512, span=24.0):
    ax = qf.uniform_axis(-span, span, n)
    w0 = qf.gaussian_packet((ax,), [0.0], [sigma0])
    return qf.evolve_frames(w0, Potential.free(), dt, int(round(t_end / dt)), store_every=10)


def gaussian_width(w):
    dens = qf.born_density(w) * w.cell_volume
    x = w.axes[0]
    mean = np.sum(x * dens)
    return np.sqrt(np.sum((x - mean) ** 2 * dens))


# ---------------------------------------------------------------------------
# potentials and seeds
# ---------------------------------------------------------------------------


def test_potential_json_round_trip():
    for p in (
        Potential.free(),
        Potential.box([-1.0], [1.0], 1e4),
        Potential.table(np.linspace(0, 3, 8)),
    ):
        back = Potential.from_json(p.to_json())
        ax = qf.uniform_axis(-2, 2, 8)
        assert np.allclose(back.on_grid((ax,)), p.on_grid((ax,)))


def test_custom_potential_not_serializable():
    p = Potential.custom(lambda mesh: mesh[0] ** 2)
    with pytest.raises((TypeError, ValueError)):
        p.to_json()


def test_derive_seed_is_injective_enough():
    seeds = {derive_seed(42, i) for i in range(10000)}
    assert len(seeds) == 10000
    assert derive_seed(42, 3) == derive_seed(42, 3)
    assert derive_seed(42, 3) != derive_seed(43, 3)


# ---------------------------------------------------------------------------
# split-step evolution
# ---------------------------------------------------------------------------


def test_plane_wave_picks_up_exact_kinetic_phase():
    ax = qf.uniform_axis(0, 2 * np.pi, 64)
    mode = 3
    w = qf.plane_wave(ax, mode)
    dt = 0.01
    k = 2 * np.pi * mode / (2 * np.pi)
    evolved = qf.evolve_step(w, Potential.free(), dt)
    expect = w.amplitudes * np.exp(-0.5j * k**2 * dt)
    assert np.max(np.abs(evolved.amplitudes - expect)) < 1e-13


def test_norm_drift_below_1e10_over_1000_steps():
    ax = qf.uniform_axis(-16, 16, 256)
    w = qf.two_lobe_packet(ax, 7.0, 0.7)
    p = Potential.box([-14.0], [14.0], 1e4)
    frames = qf.evolve_frames(w, p, 1e-3, 1000, store_every=100)
    norms = [frames.wavefunction(i).norm() for i in range(frames.n_frames)]
    assert max(abs(n - 1.0) for n in norms) < 1e-10


def test_free_gaussian_width_matches_closed_form():
    sigma0, t_end = 1.0, 2.0
    frames = free_gaussian_frames(sigma0, t_end)
    got = gaussian_width(frames.wavefunction(-1))
    expect = sigma0 * np.sqrt(1 + (t_end / (2 * sigma0**2)) ** 2)
    assert abs(got - expect) / expect < 1e-3


def test_box_ground_state_density_constant():
    # discrete-Hamiltonian eigenstate oracle; leftover drift is pure
    # second-order splitting error, measured 3.5e-7 at this dt
    ax = qf.uniform_axis(-2, 2, 512)
    box = Potential.box([-1.0], [1.0], 1e4)
    w = qf.stationary_state(ax, box, 0)
    frames = qf.evolve_frames(w, box, 2e-6, 25000, store_every=5000)
    drift = max(
        np.max(np.abs(frames.density(i) - frames.density(0)))
        for i in range(frames.n_frames)
    )
    assert drift < 1e-6


def test_box_wall_splitting_error_scales_quadratically():
    ax = qf.uniform_axis(-2, 2, 512)
    box = Potential.box([-1.0], [1.0], 1e4)
    w = qf.stationary_state(ax, box, 0)

    def drift(dt):
        steps = int(round(0.1 / dt))
        fr = qf.evolve_frames(w, box, dt, steps, store_every=steps)
        return np.max(np.abs(fr.density(-1) - fr.density(0)))

    ratio = drift(2e-4) / drift(2e-5)
    assert 50 < ratio < 200


def test_split_propagator_eigenstate_is_stationary_at_run_dt():
    ax = qf.uniform_axis(-2, 2, 512)
    box = Potential.box([-1.0], [1.0], 1e4)
    dt = 2e-4
    w = qf.stationary_state(ax, box, 0, dt=dt)
    assert np.all(w.amplitudes.imag == 0)
    frames = qf.evolve_frames(w, box, dt, 1000, store_every=200)
    drift = np.max(np.abs(frames.density(-1) - frames.density(0)))
    assert drift < 1e-10


def test_momentum_resolution_warning_for_fast_packet():
    ax = qf.uniform_axis(-8, 8, 64)
    w = qf.gaussian_packet((ax,), [0.0], [1.0], [12.0])
    with pytest.warns(qf.MomentumResolutionWarning):
        qf.evolve_frames(w, Potential.free(), 1e-3, 2)


def test_frames_index_lookup():
    frames = free_gaussian_frames(t_end=0.2)
    i = frames.index_at(0.1)
    assert abs(frames.times[i] - 0.1) < 1e-9
    with pytest.raises(ValueError):
        frames.index_at(0.1234567)


# ---------------------------------------------------------------------------
# guiding velocity
# ---------------------------------------------------------------------------


def test_real_state_velocity_below_1e12():
    ax = qf.uniform_axis(-2, 2, 512)
    box = Potential.box([-1.0], [1.0], 1e4)
    w = qf.stationary_state(ax, box, 0)
    pts = [[-0.7], [-0.3], [0.0], [0.25], [0.6]]
    v = np.array([qf.guiding_velocity(w, q) for q in pts])
    assert np.max(np.abs(v)) < 1e-12


def test_velocity_against_refined_finite_difference_oracle():
    """Two asymmetric lobes; the midpoint value is checked against a
    five-point finite difference on an eight-fold finer grid."""
    span, n = 16.0, 1024
    c1, s1, k1 = -2.0, 0.6, 0.8
    c2, s2, k2 = 2.0, 0.9, -0.3

    def amps(x):
        g1 = np.exp(-((x - c1) ** 2) / (4 * s1**2) + 1j * k1 * x)
        g2 = np.exp(-((x - c2) ** 2) / (4 * s2**2) + 1j * k2 * x)
        return g1 + g2

    ax = qf.uniform_axis(-span, span, n)
    w = qf.GridWaveFunction((ax,), amps(ax))
    got = qf.guiding_velocity(w, [0.0])[0]

    fine = qf.uniform_axis(-span, span, 8 * n)
    h = fine[1] - fine[0]
    psi = amps(fine)
    i = np.argmin(np.abs(fine))
    assert fine[i] == 0.0
    dpsi = (-psi[i + 2] + 8 * psi[i + 1] - 8 * psi[i - 1] + psi[i - 2]) / (12 * h)
    oracle = np.imag(dpsi / psi[i])
    assert abs(got - oracle) < 1e-6


def test_node_query_raises():
    ax = qf.uniform_axis(-10, 10, 256)
    g = np.exp(-((ax - 3.0) ** 2) / 4) - np.exp(-((ax + 3.0) ** 2) / 4)
    w = qf.GridWaveFunction((ax,), g.astype(complex))
    with pytest.raises(qf.NodeProximity):
        qf.guiding_velocity(w, [0.0])


# ---------------------------------------------------------------------------
# trajectories
# ---------------------------------------------------------------------------


def test_packet_center_moves_at_group_velocity():
    ax = qf.uniform_axis(-24, 24, 512)
    k0 = 1.5
    w0 = qf.gaussian_packet((ax,), [-2.0], [2.0], [k0])
    traj = qf.integrate_trajectory(w0, Potential.free(), [-2.0], 1.0, 0.002)
    travelled = traj.configurations[-1, 0] - traj.configurations[0, 0]
    assert abs(travelled - k0 * 1.0) / (k0 * 1.0) < 0.01


def test_free_gaussian_trajectory_follows_scaling_law():
    sigma0, x0, t_end = 1.0, 1.5, 2.0
    ax = qf.uniform_axis(-24, 24, 512)
    w0 = qf.gaussian_packet((ax,), [0.0], [sigma0])
    traj = qf.integrate_trajectory(w0, Potential.free(), [x0], t_end, 0.002)
    sigma_t = np.sqrt(1 + (t_end / (2 * sigma0**2)) ** 2)
    expect = x0 * sigma_t / sigma0
    assert abs(traj.configurations[-1, 0] - expect) / expect < 0.01


def test_rk4_endpoint_matches_independent_integrator():
    # identical interpolated field; only the ODE integrator differs
    ax = qf.uniform_axis(-24, 24, 512)
    w0 = qf.gaussian_packet((ax,), [0.0], [1.0])
    frames = qf.evolve_frames(w0, Potential.free(), 0.002, 500)
    field = qf.VelocityField(frames)

    def rhs(t, y):
        v, _ = field.velocity(np.atleast_2d(y), t)
        return v[0]

    x0 = 0.9
    sol = solve_ivp(rhs, (0.0, 1.0), [x0], rtol=1e-10, atol=1e-12, max_step=0.02)
    ens = qf.run_bohm_ensemble(frames, np.array([[x0]]), seed=0)
    assert abs(ens.trajectories[0].configurations[-1, 0] - sol.y[0, -1]) < 1e-6


def test_one_dimensional_trajectories_never_cross():
    ax = qf.uniform_axis(-16, 16, 512)
    w0 = qf.two_lobe_packet(ax, 7.0, 0.7)
    frames = qf.evolve_frames(w0, Potential.free(), 0.002, 750, store_every=5)
    q0 = np.linspace(-5.0, 5.0, 9)[:, None]
    ens = qf.run_bohm_ensemble(frames, q0, seed=0)
    paths = np.stack([t.configurations[:, 0] for t in ens.trajectories])
    assert np.all(np.diff(paths, axis=0) > 0)


def test_trajectory_seed_determinism():
    frames = free_gaussian_frames(t_end=0.5)
    q0 = np.array([[0.3], [-1.1]])
    a = qf.run_bohm_ensemble(frames, q0, seed=7)
    b = qf.run_bohm_ensemble(frames, q0, seed=7)
    for ta, tb in zip(a.trajectories, b.trajectories):
        assert np.array_equal(ta.configurations, tb.configurations)
        assert np.array_equal(ta.times, tb.times)


def test_exact_node_start_truncates_single_trajectory():
    ax = qf.uniform_axis(-10, 10, 256)
    g = np.exp(-((ax - 3.0) ** 2) / 4) - np.exp(-((ax + 3.0) ** 2) / 4)
    w0 = qf.GridWaveFunction((ax,), g.astype(complex))
    traj = qf.integrate_trajectory(w0, Potential.free(), [0.0], 0.1, 0.01)
    assert traj.times[-1] < 0.1
    assert traj.notes


def test_exact_node_start_freezes_ensemble_member():
    ax = qf.uniform_axis(-10, 10, 256)
    g = np.exp(-((ax - 3.0) ** 2) / 4) - np.exp(-((ax + 3.0) ** 2) / 4)
    w0 = qf.GridWaveFunction((ax,), g.astype(complex))
    frames = qf.evolve_frames(w0, Potential.free(), 0.01, 10)
    ens = qf.run_bohm_ensemble(frames, np.array([[0.0], [3.0]]), seed=1)
    frozen, healthy = ens.trajectories[0], ens.trajectories[1]
    # all members keep the shared time grid; the bad one is flagged
    assert np.array_equal(frozen.times, healthy.times)
    assert frozen.notes and not healthy.notes
    assert np.all(frozen.configurations == frozen.configurations[0])


# ---------------------------------------------------------------------------
# Born sampling and RDMP
# ---------------------------------------------------------------------------


def test_born_sample_degenerate_density():
    ax = qf.uniform_axis(-4, 4, 64)
    amps = np.full(64, 1e-12, dtype=complex)
    amps[40] = 1.0
    w = qf.GridWaveFunction((ax,), amps)
    dx = ax[1] - ax[0]
    pts = qf.born_sample_many(w, 50, seed=2)
    assert np.all(np.abs(pts[:, 0] - ax[40]) <= dx / 2 + 1e-12)


def test_born_sample_symmetric_double_bump():
    ax = qf.uniform_axis(-16, 16, 512)
    w = qf.two_lobe_packet(ax, 8.0, 0.7)
    pts = qf.born_sample_many(w, 100000, seed=3)
    left = np.sum(pts[:, 0] < 0)
    # binomial 3 sigma around the exact half split
    assert abs(left - 50000) < 3 * np.sqrt(100000 * 0.25)


def test_born_sample_gaussian_moments():
    ax = qf.uniform_axis(-24, 24, 512)
    sigma = 1.3
    w = qf.gaussian_packet((ax,), [0.4], [sigma])
    n = 100000
    pts = qf.born_sample_many(w, n, seed=4)[:, 0]
    dx = ax[1] - ax[0]
    se_mean = sigma / np.sqrt(n)
    assert abs(pts.mean() - 0.4) < 3 * se_mean
    expect_var = sigma**2 + dx**2 / 12  # jitter adds a uniform cell variance
    se_var = expect_var * np.sqrt(2.0 / (n - 1))
    assert abs(pts.var() - expect_var) < 3 * se_var


def test_rdmp_samples_iid_from_stationary_density():
    ax = qf.uniform_axis(-2, 2, 512)
    box = Potential.box([-1.0], [1.0], 1e4)
    dt = 2e-4
    w = qf.stationary_state(ax, box, 0, dt=dt)
    times = np.round(np.linspace(0.05, 0.5, 10), 4)
    frames = qf.evolve_frames(w, box, dt, 2500, store_every=25)
    ens = qf.rdmp_ensemble(frames, times, 300, seed=5)
    for j, t in enumerate(times):
        pos = ens.positions_at(t)
        r = chi_square_gof(pos, w)
        assert r.passed, f"time {t}: p={r.p_value}"


def test_rdmp_jumps_between_disjoint_bumps():
    ax = qf.uniform_axis(-16, 16, 512)
    w0 = qf.two_lobe_packet(ax, 10.0, 0.6)
    times = np.round(np.linspace(0.01, 0.2, 20), 3)
    traj = qf.rdmp_trajectory(w0, Potential.free(), times, seed=6, dt=1e-3)
    sides = traj.configurations[:, 0] > 0
    flips = np.sum(sides[1:] != sides[:-1])
    # independent fair draws flip about half the time; 19 transitions
    assert 3 <= flips <= 16


def test_rdmp_mean_step_matches_iid_draw_statistic():
    ax = qf.uniform_axis(-2, 2, 512)
    box = Potential.box([-1.0], [1.0], 1e4)
    dt = 2e-4
    w = qf.stationary_state(ax, box, 0, dt=dt)
    times = np.round(np.linspace(0.05, 0.5, 10), 4)
    frames = qf.evolve_frames(w, box, dt, 2500, store_every=25)
    ens = qf.rdmp_ensemble(frames, times, 300, seed=7)
    steps = np.array([mean_step_displacement(t) for t in ens.trajectories])

    pair = qf.born_sample_many(w, 8000, seed=8)[:, 0]
    iid = np.abs(pair[::2] - pair[1::2])
    se = iid.std() / np.sqrt(iid.size) + steps.std() / np.sqrt(steps.size)
    assert abs(steps.mean() - iid.mean()) < 4 * se


def test_bohm_step_shrinks_with_dt_rdmp_does_not():
    ax = qf.uniform_axis(-24, 24, 512)
    w0 = qf.gaussian_packet((ax,), [0.0], [1.0])

    def bohm_step(dt):
        traj = qf.integrate_trajectory(w0, Potential.free(), [1.2], 1.0, dt)
        return mean_step_displacement(traj)

    coarse, fine = bohm_step(0.01), bohm_step(0.005)
    assert fine < 0.6 * coarse  # continuous path: step scales with dt

    def rdmp_step(n_times):
        times = np.round(np.linspace(0.1, 1.0, n_times), 4)
        traj = qf.rdmp_trajectory(w0, Potential.free(), times, seed=9, dt=0.002)
        return mean_step_displacement(traj)

    s10, s20 = rdmp_step(10), rdmp_step(20)
    floor = 0.5  # two i.i.d. draws from sigma~1 densities sit ~1 apart
    assert s10 > floor and s20 > floor


def test_equivariance_report_and_underpowered_refusal():
    frames = free_gaussian_frames(t_end=0.5)
    w0 = frames.wavefunction(0)
    q0 = qf.born_sample_many(w0, 500, seed=10)
    ens = qf.run_bohm_ensemble(frames, q0, seed=10)
    t = frames.times[-1]
    rep = qf.equivariance_test(ens, frames.wavefunction(-1), t)
    assert rep.passed and rep.chi_square.passed
    assert all(k.passed for k in rep.ks_marginals)

    small = qf.run_bohm_ensemble(frames, q0[:50], seed=10)
    with pytest.raises(ValueError):
        qf.equivariance_test(small, frames.wavefunction(-1), t)


def test_compare_bohm_rdmp_tv_within_threshold():
    ax = qf.uniform_axis(-24, 24, 512)
    w0 = qf.gaussian_packet((ax,), [0.0], [1.0])
    frames = qf.evolve_frames(w0, Potential.free(), 0.002, 500, store_every=10)
    times = np.round(np.linspace(0.2, 1.0, 5), 3)
    rep = compare_bohm_rdmp(frames, times, 400, seed=11)
    assert rep.tv_passed
    assert np.all(rep.tv_distance <= rep.tv_threshold)
    assert rep.rdmp_mean_step > 5 * rep.bohm_mean_step


def test_gof_calibration_on_iid_draws():
    ax = qf.uniform_axis(-24, 24, 512)
    w = qf.gaussian_packet((ax,), [0.3], [2.2], [0.5])
    ps = []
    for s in range(10):
        smp = qf.born_sample_many(w, 5000, seed=100 + s)
        ps.append((chi_square_gof(smp, w).p_value, ks_gof(smp, w).p_value))
    arr = np.array(ps)
    # null draws: no systematic rejection at the 1e-3 working significance
    assert arr.min() > 1e-3
    assert np.median(arr[:, 0]) > 0.05
    assert np.median(arr[:, 1]) > 0.05
