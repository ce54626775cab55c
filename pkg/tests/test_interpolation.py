import numpy as np

import qflab as qf
from qflab.interpolation import CubicGridInterpolator


def test_exact_on_grid_points():
    ax = qf.uniform_axis(-3, 3, 48)
    vals = np.sin(ax) + 1j * np.cos(2 * ax)
    interp = CubicGridInterpolator((ax,), vals)
    got = interp(ax[:, None])
    assert np.max(np.abs(got - vals)) < 1e-12


def test_smooth_function_off_grid():
    # periodic function on the domain so grid-wrap is exact
    ax = qf.uniform_axis(0, 2 * np.pi, 256)
    interp = CubicGridInterpolator((ax,), np.sin(ax))
    pts = np.linspace(0.1, 6.0, 77)[:, None]
    err = np.max(np.abs(interp(pts) - np.sin(pts[:, 0])))
    # cubic convergence: h^4 with h = 2pi/256
    assert err < 1e-7


def test_periodic_wrap_consistency():
    ax = qf.uniform_axis(0, 2 * np.pi, 128)
    interp = CubicGridInterpolator((ax,), np.exp(1j * ax))
    period = 2 * np.pi
    a = interp(np.array([[0.3], [5.9]]))
    b = interp(np.array([[0.3 + period], [5.9 - period]]))
    assert np.max(np.abs(a - b)) < 1e-12


def test_blend_is_linear_in_weight():
    ax = qf.uniform_axis(-2, 2, 64)
    f = CubicGridInterpolator((ax,), np.sin(ax))
    g = CubicGridInterpolator((ax,), np.cos(ax))
    pts = np.array([[0.123], [-1.4], [1.97]])
    mid = f.blend(g, 0.25)(pts)
    expect = 0.75 * f(pts) + 0.25 * g(pts)
    assert np.max(np.abs(mid - expect)) < 1e-12


def test_two_dimensional_separable():
    ax = qf.uniform_axis(0, 2 * np.pi, 96)
    X, Y = np.meshgrid(ax, ax, indexing="ij")
    interp = CubicGridInterpolator((ax, ax), np.sin(X) * np.cos(Y))
    pts = np.array([[1.0, 2.0], [0.4, 5.5], [3.1, 0.05]])
    expect = np.sin(pts[:, 0]) * np.cos(pts[:, 1])
    assert np.max(np.abs(interp(pts) - expect)) < 1e-6
