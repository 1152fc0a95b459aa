"""Simulation, exact moment propagation and the collected data matrices."""

import csv
import io
import math

import numpy as np
import pytest

from mnlqr import (
    DimensionError,
    ExplorationSignal,
    MomentAccuracyError,
    RolloutConfig,
    SimulationBlowupError,
    SystemModel,
    collect_data_exact,
    collect_data_mc,
    collect_data_mc_streamed,
    eta_Kx,
    eval_exploration,
    propagate_moments,
    simulate_paths,
)


def scalar_model(a, c, b=0.0, d=0.0) -> SystemModel:
    return SystemModel(A=[[a]], B=[[b]], C=[[c]], D=[[d]])


K0_SCALAR = np.zeros((1, 1))


def small_cfg(**kw) -> RolloutConfig:
    base = dict(x0_list=[[0.5, -0.1]], q=4, interval_len=0.05, sde_step=5e-3,
                paths=2100, seed=9)
    base.update(kw)
    return RolloutConfig(**base)


def test_signal_eval_frozen_value(three_sine):
    t = 0.3
    expected = (
        0.8 * math.sin(1.0 * t + 0.0)
        + 0.5 * math.sin(3.7 * t + 0.9)
        + 0.3 * math.sin(7.3 * t + 1.7)
    )
    assert np.isclose(three_sine.eval(t)[0], expected, rtol=0, atol=1e-15)
    assert np.isclose(eval_exploration(three_sine, t)[0], expected, atol=1e-15)


def test_signal_shapes_and_zero():
    sig = ExplorationSignal(amplitudes=[[1.0], [2.0]],
                            frequencies=[[1.0], [1.0]],
                            phases=[[0.0], [0.5]])
    assert sig.eval(0.1).shape == (2,)
    assert sig.eval(np.linspace(0, 1, 7)).shape == (7, 2)
    z = ExplorationSignal.zero(3)
    assert z.is_zero and z.n_inputs == 3
    assert not sig.is_zero
    with pytest.raises(DimensionError):
        ExplorationSignal(amplitudes=[[1.0]], frequencies=[[1.0, 2.0]],
                          phases=[[0.0]])


def test_rollout_config_grid():
    cfg = RolloutConfig(x0_list=[[1.0]], q=60, interval_len=0.05, sde_step=1e-3)
    assert cfg.substeps == 50
    assert len(cfg.grid) == 61 and len(cfg.times) == 3001
    assert np.isclose(cfg.grid[-1], 3.0)
    assert np.isclose(cfg.times[1] - cfg.times[0], 1e-3)


def test_rollout_config_rejects_non_divisible_step():
    with pytest.raises(DimensionError):
        RolloutConfig(x0_list=[[1.0]], q=10, interval_len=0.05, sde_step=7e-4)


def test_euler_matches_deterministic_decay():
    # no noise, no input: x(t) = x0 exp(-t), first-order accurate in h
    model = scalar_model(-1.0, 0.0)
    cfg = RolloutConfig(x0_list=[[0.5]], q=20, interval_len=0.05, sde_step=1e-3,
                        paths=1, seed=0)
    batch = simulate_paths(model, K0_SCALAR, ExplorationSignal.zero(1), cfg)
    assert abs(batch.states[0, -1, 0] - 0.5 * math.exp(-1.0)) <= 5e-3 * 0.5


def test_single_path_without_noise_matches_exact_engine():
    # with C = D = 0 one sampled path is the deterministic ODE; at a fine
    # step the two engines agree to quadrature accuracy
    model = scalar_model(-1.0, 0.0, b=1.0)
    sig = ExplorationSignal(amplitudes=[[0.5]], frequencies=[[2.0]], phases=[[0.3]])
    cfg = RolloutConfig(x0_list=[[1.0]], q=10, interval_len=0.01, sde_step=1e-5,
                        paths=1, seed=1)
    mc = collect_data_mc_streamed(model, K0_SCALAR, sig, cfg, workers=1)
    exact = collect_data_exact(propagate_moments(model, K0_SCALAR, sig, cfg))
    for name in ("eta_xbar", "eta_ubar", "eta_xx", "eta_xu"):
        a, b = getattr(mc, name), getattr(exact, name)
        assert np.linalg.norm(a - b) <= 1e-6 * max(1.0, np.linalg.norm(b)), name


def test_sampled_second_moment_matches_closed_form():
    # dx = -x ds + x dw has E[x(1)^2] = x0^2 exp(-1); the fourth-moment
    # closed form E[x^4](t) = x0^4 exp((4a + 6c^2) t) gives the standard
    # error bound for the sample mean
    model = scalar_model(-1.0, 1.0)
    cfg = RolloutConfig(x0_list=[[1.0]], q=20, interval_len=0.05, sde_step=1e-3,
                        paths=100_000, seed=7)
    data = collect_data_mc_streamed(model, K0_SCALAR, ExplorationSignal.zero(1), cfg)
    # eta_xbar rows telescope to E[x(1)^2] - x0^2
    sampled = 1.0 + float(data.eta_xbar.sum())
    expected = math.exp(-1.0)
    variance = math.exp(4.0 * -1.0 + 6.0) - expected**2
    three_se = 3.0 * math.sqrt(variance / cfg.paths)
    assert abs(sampled - expected) <= three_se


def test_reruns_are_bit_identical(example2d_model, three_sine, zero_gain):
    cfg = small_cfg()
    one = collect_data_mc_streamed(example2d_model, zero_gain, three_sine, cfg)
    two = collect_data_mc_streamed(example2d_model, zero_gain, three_sine, cfg)
    for name in ("eta_xbar", "eta_ubar", "eta_xx", "eta_xu"):
        assert np.array_equal(getattr(one, name), getattr(two, name)), name


def test_worker_count_does_not_change_results(example2d_model, three_sine, zero_gain):
    cfg = small_cfg()
    one = collect_data_mc_streamed(example2d_model, zero_gain, three_sine, cfg,
                                   workers=1)
    three = collect_data_mc_streamed(example2d_model, zero_gain, three_sine, cfg,
                                     workers=3)
    for name in ("eta_xbar", "eta_ubar", "eta_xx", "eta_xu"):
        assert np.array_equal(getattr(one, name), getattr(three, name)), name


def test_streamed_equals_dense_collection(example2d_model, three_sine, zero_gain):
    cfg = small_cfg(paths=1500)
    streamed = collect_data_mc_streamed(example2d_model, zero_gain, three_sine, cfg)
    batch = simulate_paths(example2d_model, zero_gain, three_sine, cfg)
    dense = collect_data_mc(batch, cfg)
    for name in ("eta_xbar", "eta_ubar", "eta_xx", "eta_xu"):
        assert np.array_equal(getattr(streamed, name), getattr(dense, name)), name


def test_multiple_initial_states_stack_rows(example2d_model, three_sine, zero_gain):
    cfg_one = small_cfg(paths=600)
    cfg_two = small_cfg(paths=600, x0_list=[[0.5, -0.1], [1.0, 0.0]])
    one = collect_data_mc_streamed(example2d_model, zero_gain, three_sine, cfg_one)
    two = collect_data_mc_streamed(example2d_model, zero_gain, three_sine, cfg_two)
    assert two.rows == 2 * cfg_two.q
    # the first rollout reuses the same path ids, so its rows match exactly
    for name in ("eta_xbar", "eta_ubar", "eta_xx", "eta_xu"):
        np.testing.assert_array_equal(
            getattr(two, name)[: cfg_two.q], getattr(one, name), err_msg=name
        )


def test_exact_engine_stacks_rollouts(example2d_model, three_sine, zero_gain):
    cfg_pair = small_cfg(paths=1, x0_list=[[0.5, -0.1], [1.0, 0.0]])
    both = collect_data_exact(
        propagate_moments(example2d_model, zero_gain, three_sine, cfg_pair)
    )
    for r, x0 in enumerate(cfg_pair.x0_list):
        single = collect_data_exact(
            propagate_moments(
                example2d_model, zero_gain, three_sine, small_cfg(paths=1, x0_list=[x0])
            )
        )
        sl = slice(r * cfg_pair.q, (r + 1) * cfg_pair.q)
        np.testing.assert_array_equal(both.eta_xx[sl], single.eta_xx)
        np.testing.assert_array_equal(both.eta_xbar[sl], single.eta_xbar)


def test_dump_paths_csv(example2d_model, three_sine, zero_gain):
    cfg = small_cfg(paths=3, q=2)
    buf = io.StringIO()
    collect_data_mc_streamed(example2d_model, zero_gain, three_sine, cfg,
                             dump_file=buf)
    buf.seek(0)
    rows = list(csv.reader(buf))
    assert rows[0] == ["t", "path_id", "x_1", "x_2", "u_1"]
    body = rows[1:]
    assert len(body) == 3 * len(cfg.times)
    assert sorted({r[1] for r in body}) == ["0", "1", "2"]
    float(body[0][0]), float(body[0][2])  # cells parse as numbers


def test_blowup_raises_with_location():
    model = scalar_model(30.0, 0.0)  # x grows like exp(30 t)
    cfg = RolloutConfig(x0_list=[[1.0]], q=20, interval_len=0.05, sde_step=1e-3,
                        paths=2, seed=3)
    with pytest.raises(SimulationBlowupError) as excinfo:
        simulate_paths(model, K0_SCALAR, ExplorationSignal.zero(1), cfg)
    assert excinfo.value.path is not None
    assert excinfo.value.time == pytest.approx(0.921, abs=0.05)


def test_moment_blowup_raises():
    model = scalar_model(30.0, 0.0)
    cfg = RolloutConfig(x0_list=[[1.0]], q=20, interval_len=0.05, sde_step=1e-3,
                        paths=1)
    with pytest.raises(SimulationBlowupError) as excinfo:
        propagate_moments(model, K0_SCALAR, ExplorationSignal.zero(1), cfg)
    assert excinfo.value.time == pytest.approx(0.46, abs=0.05)


def test_moment_accuracy_guard_trips_on_coarse_step():
    # a fast rotation integrated with a far-too-coarse step loses the
    # positive semidefiniteness of the rank-one second moment
    model = SystemModel(A=[[0.0, 10.0], [-10.0, 0.0]], B=[[0.0], [1.0]],
                        C=np.zeros((2, 2)), D=np.zeros((2, 1)))
    cfg = RolloutConfig(x0_list=[[1.0, 0.0]], q=5, interval_len=0.4, sde_step=0.2,
                        paths=1)
    with pytest.raises(MomentAccuracyError):
        propagate_moments(model, np.zeros((1, 2)), ExplorationSignal.zero(1), cfg)


def test_zero_input_zero_state_gives_zero_data():
    model = scalar_model(-1.0, 0.5, b=1.0)
    cfg = RolloutConfig(x0_list=[[0.0]], q=5, interval_len=0.05, sde_step=1e-3,
                        paths=16, seed=11)
    for data in (
        collect_data_mc_streamed(model, K0_SCALAR, ExplorationSignal.zero(1), cfg),
        collect_data_exact(
            propagate_moments(model, K0_SCALAR, ExplorationSignal.zero(1), cfg)
        ),
    ):
        for name in ("eta_xbar", "eta_ubar", "eta_xx", "eta_xu"):
            assert np.all(getattr(data, name) == 0.0), name


def test_without_exploration_input_moments_are_gain_images(example2d_model):
    # u = K0 x exactly, so eta_ubar must equal the gain transform of eta_xx
    K0 = np.array([[0.3, -0.2]])
    cfg = small_cfg(paths=1)
    data = collect_data_exact(
        propagate_moments(example2d_model, K0, ExplorationSignal.zero(1), cfg)
    )
    np.testing.assert_allclose(eta_Kx(data, K0), data.eta_ubar,
                               rtol=1e-9, atol=1e-14)


def test_exact_second_moment_scalar_closed_form():
    # zero exploration: S(t) = x0^2 exp((2a + c^2) t)
    model = scalar_model(-1.0, 1.0)
    cfg = RolloutConfig(x0_list=[[1.0]], q=20, interval_len=0.05, sde_step=1e-3,
                        paths=1)
    trace = propagate_moments(model, K0_SCALAR, ExplorationSignal.zero(1), cfg)
    expected = np.exp(-trace.times)
    np.testing.assert_allclose(trace.second[0, :, 0, 0], expected,
                               rtol=1e-10, atol=1e-12)


def test_dimension_mismatches_rejected(example2d_model, three_sine):
    cfg = small_cfg(paths=1)
    with pytest.raises(DimensionError):
        simulate_paths(example2d_model, np.zeros((1, 3)), three_sine, cfg)
    with pytest.raises(DimensionError):
        simulate_paths(example2d_model, np.zeros((1, 2)),
                       ExplorationSignal.zero(2), cfg)
    with pytest.raises(DimensionError):
        simulate_paths(
            example2d_model, np.zeros((1, 2)), three_sine,
            small_cfg(paths=1, x0_list=[[1.0, 2.0, 3.0]]),
        )
