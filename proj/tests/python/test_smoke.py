"""Smoke tests for the python surface of the C++ core."""

import numpy as np
import pytest

import reglearn as rl


def test_forward_matches_numpy_reference():
    arch = rl.Architecture([2, 3, 1], "tanh")
    w = rl.random_weights(arch, stddev=0.5, seed=7)
    flat = w.flatten()
    a1 = flat[:6].reshape(3, 2)
    b1 = flat[6:9]
    a2 = flat[9:12].reshape(1, 3)
    b2 = flat[12:]
    u = np.array([0.3, -0.8])
    want = a2 @ np.tanh(a1 @ u + b1) + b2
    got = rl.forward(arch, w, u)
    assert np.allclose(got, want, rtol=1e-14, atol=1e-14)


def test_jacobian_matches_finite_differences():
    arch = rl.Architecture([3, 5, 2], "softplus")
    w = rl.random_weights(arch, stddev=0.7, seed=11)
    u = np.array([0.1, -0.4, 0.9])
    jac = rl.jacobian_u(arch, w, u)
    h = 1e-6
    for j in range(3):
        e = np.zeros(3)
        e[j] = h
        fd = (rl.forward(arch, w, u + e) - rl.forward(arch, w, u - e)) / (2 * h)
        assert np.allclose(jac[:, j], fd, rtol=1e-6, atol=1e-9)


def test_solve_state_harmonic_ramp():
    y = rl.solve_state(np.array([1.0]), cells=10, f=0.0, g_left=0.0, g_right=1.0)
    assert np.allclose(y, np.linspace(0.0, 1.0, 11), atol=1e-13)


def test_dataset_and_inner_solve():
    data = rl.gen_l2_dataset(count=2, groups=1, cells=20, f=8.0, seed=3)
    assert data.size == 2
    assert data.control_dim == 1
    arch = rl.Architecture([1, 4, 1], "tanh")
    sol = rl.solve_inner(data, arch, rl.zero_weights(arch), task=0)
    assert sol.converged
    assert sol.grad_norm <= 1e-10


def test_tiny_training_run_records_misfits():
    data = rl.gen_l2_dataset(count=2, groups=1, cells=20, f=8.0, seed=5)
    arch = rl.Architecture([1, 4, 1], "tanh")
    w0 = rl.random_weights(arch, stddev=0.01, seed=9)
    report = rl.train(data, arch, w0, max_steps=3)
    assert len(report.misfit_percent) == 4
    assert all(np.isfinite(report.misfit_percent))
    assert all(np.isfinite(report.grad_norm))


def test_weights_roundtrip(tmp_path):
    arch = rl.Architecture([2, 4, 1], "identity")
    w = rl.random_weights(arch, stddev=1.0, seed=13)
    path = str(tmp_path / "weights.json")
    rl.save_weights(path, arch, w)
    arch2, w2 = rl.load_weights(path)
    assert arch2.widths == [2, 4, 1]
    assert np.array_equal(w.flatten(), w2.flatten())


def test_shape_errors_surface_as_value_errors():
    arch = rl.Architecture([2, 3, 1], "tanh")
    w = rl.zero_weights(arch)
    with pytest.raises(ValueError):
        rl.forward(arch, w, np.zeros(5))
