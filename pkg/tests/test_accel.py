import math
from dataclasses import replace

import numpy as np
import pytest

from micromacro.core import accel
from micromacro.core.accel import (
    AccelConfig,
    InitialCondition,
    SweepAxis,
    SweepConfig,
    convergence_sweep,
    increment,
    lipschitz_probe,
    perturbed_prior,
    run_accelerated,
    run_reference,
    run_reference_on_mesh,
    weak_error,
)
from micromacro.core.ensemble import (
    WeightedEnsemble,
    bootstrap_standard_error,
    expectation,
    sample_initial,
)
from micromacro.core.matching import MatchStatus, SolverOptions
from micromacro.core.micro import MicroConfig, propagate
from micromacro.core.restriction import restrict, trig_family
from micromacro.core.space_model import (
    ConfigurationSpace,
    ornstein_uhlenbeck,
    ou_reference_moments,
    periodic_drift,
    pure_diffusion,
    zero_dynamics,
)
from micromacro.core.streams import StreamFactory
from micromacro.errors import MatchFailed, PreconditionViolated


def wrapped_normal(size, seed=0):
    return sample_initial(
        "wrapped-normal", size, ConfigurationSpace.torus(), np.random.default_rng(seed), std=0.25
    )


def small_config(**overrides):
    values = dict(
        horizon=0.2,
        dt_macro=0.05,
        micro=MicroConfig(0.0125, 5),
        restriction=trig_family(2),
        seed=3,
    )
    values.update(overrides)
    return AccelConfig(**values)


def test_config_mesh():
    assert small_config().step_count == 4
    assert small_config(horizon=0.21).step_count == 5
    with pytest.raises(ValueError):
        small_config(micro=MicroConfig(0.1, 5))
    with pytest.raises(ValueError):
        small_config(horizon=0.0)


def test_increment_records_the_burst():
    cfg = small_config()
    step, burst = increment(wrapped_normal(300), pure_diffusion(), cfg, StreamFactory(1).macro_step(0))
    assert len(burst) == cfg.micro.steps + 1
    assert step.outcome.converged
    assert step.dt_used == cfg.dt_macro


def test_run_takes_the_mesh_steps():
    cfg = small_config()
    trajectory = run_accelerated(cfg, pure_diffusion(), wrapped_normal(500))
    assert len(trajectory.steps) == cfg.step_count
    assert trajectory.final_time == pytest.approx(cfg.horizon)
    assert all(s.entropy >= 0.0 for s in trajectory.steps)
    assert all(s.status is MatchStatus.CONVERGED for s in trajectory.steps)
    assert trajectory.max_entropy == max(s.entropy for s in trajectory.steps)


def test_run_is_reproducible():
    cfg = small_config()
    first = run_accelerated(cfg, pure_diffusion(), wrapped_normal(400))
    second = run_accelerated(cfg, pure_diffusion(), wrapped_normal(400))
    np.testing.assert_array_equal(first.terminal.positions, second.terminal.positions)
    np.testing.assert_array_equal(first.terminal.weights, second.terminal.weights)
    assert [s.entropy for s in first.steps] == [s.entropy for s in second.steps]


def test_window_equal_to_step_is_plain_micro_simulation():
    micro = MicroConfig(0.05, 5)
    cfg = small_config(dt_macro=0.05, micro=micro)
    initial = wrapped_normal(500)
    trajectory = run_accelerated(cfg, pure_diffusion(), initial)
    streams = StreamFactory(cfg.seed)
    ens = initial
    for n in range(cfg.step_count):
        ens = propagate(ens, pure_diffusion(), micro, streams.macro_step(n))[-1]
    np.testing.assert_array_equal(trajectory.terminal.positions, ens.positions)
    for record in trajectory.steps:
        assert record.lambda_norm == 0.0
        np.testing.assert_allclose(record.extrapolated.m, record.end.m, atol=1e-8)


def test_zero_dynamics_keeps_macro_states(torus):
    initial = wrapped_normal(300)
    trajectory = run_accelerated(small_config(), zero_dynamics(torus), initial)
    m0 = restrict(trig_family(2), initial).m
    for record in trajectory.steps:
        assert record.entropy == 0.0
        np.testing.assert_allclose(record.extrapolated.m, m0)


def test_unconverged_matching_stops_the_run():
    cfg = small_config(solver=SolverOptions(max_iter=1))
    initial = wrapped_normal(300)
    with pytest.raises(MatchFailed) as info:
        run_accelerated(cfg, pure_diffusion(), initial)
    assert info.value.step_index == 0
    assert info.value.partial.steps == []
    assert info.value.partial.terminal is initial


def test_observer_sees_every_step():
    seen = []
    cfg = small_config()
    run_accelerated(cfg, pure_diffusion(), wrapped_normal(200), observer=lambda r, e: seen.append(r.step))
    assert seen == list(range(cfg.step_count))


@pytest.mark.slow
def test_terminal_moments_agree_with_reference():
    model = pure_diffusion()
    cfg = small_config(dt_macro=0.01, micro=MicroConfig(0.0025, 25))
    streams = StreamFactory(cfg.seed)
    initial = InitialCondition().sample(10_000, model, streams)
    trajectory = run_accelerated(cfg, model, initial, streams)
    reference = run_reference(model, initial, cfg.horizon, cfg.micro.dt_micro, streams.reference())
    rng = streams.bootstrap()
    for f in cfg.restriction.functions:
        noise = math.hypot(
            bootstrap_standard_error(trajectory.terminal, f, rng),
            bootstrap_standard_error(reference, f, rng),
        )
        assert weak_error(trajectory.terminal, reference, f) <= 4.0 * noise + 1e-3


def test_reference_zero_dynamics(torus):
    initial = wrapped_normal(50)
    final = run_reference(zero_dynamics(torus), initial, 1.0, 0.1, np.random.default_rng(0))
    np.testing.assert_array_equal(final.positions, initial.positions)


def test_reference_needs_dividing_step(torus):
    with pytest.raises(PreconditionViolated):
        run_reference(pure_diffusion(), wrapped_normal(10), 0.1, 0.03, np.random.default_rng(0))


def test_reference_ou_mean(real_line):
    model = ornstein_uhlenbeck()
    initial = sample_initial("point", 20_000, real_line, np.random.default_rng(0), mean=1.0)
    final = run_reference(model, initial, 1.0, 0.01, np.random.default_rng(1))
    mean, variance = ou_reference_moments(1.0, math.sqrt(2.0), 1.0, 0.0, 1.0)
    tolerance = 4.0 * math.sqrt(variance / 20_000) + 0.002
    assert expectation(final, lambda x: x[:, 0]) == pytest.approx(mean, abs=tolerance)


def test_reference_on_mesh():
    initial = wrapped_normal(100)
    rng_a, rng_b = np.random.default_rng(4), np.random.default_rng(4)
    snapshots = run_reference_on_mesh(pure_diffusion(), initial, [0.1, 0.2], 0.01, rng_a)
    assert len(snapshots) == 2
    final = run_reference(pure_diffusion(), initial, 0.2, 0.01, rng_b)
    np.testing.assert_allclose(snapshots[-1].positions, final.positions)
    with pytest.raises(PreconditionViolated):
        run_reference_on_mesh(pure_diffusion(), initial, [0.2, 0.1], 0.01, rng_a)


def test_weak_error(torus):
    positions = np.array([0.1, 0.6])
    a = WeightedEnsemble(positions, np.array([0.25, 0.75]), torus)
    b = WeightedEnsemble(positions, np.array([0.5, 0.5]), torus)
    assert weak_error(a, b, lambda x: x[:, 0]) == pytest.approx(0.125)
    assert weak_error(a, a, lambda x: x[:, 0]) == 0.0
    assert weak_error(a, b, lambda x: np.full(len(x), 3.0)) == pytest.approx(0.0, abs=1e-15)


def sweep_config(**overrides):
    values = dict(
        model=pure_diffusion(),
        base=small_config(horizon=0.1),
        family="trigonometric",
        particles=200,
        initial=InitialCondition(std=0.25),
    )
    values.update(overrides)
    return SweepConfig(**values)


def test_singleton_sweep_matches_a_direct_run():
    sweep = sweep_config(bootstrap_replicates=20)
    (row,) = convergence_sweep(sweep, SweepAxis.PARTICLES, [200])
    assert not row.failed
    cfg = sweep.base
    streams = StreamFactory(cfg.seed)
    initial = sweep.initial.sample(200, sweep.model, streams)
    matched = []
    trajectory = run_accelerated(cfg, sweep.model, initial, streams, lambda r, e: matched.append(e))
    reference = run_reference_on_mesh(
        sweep.model, initial, trajectory.times, cfg.micro.dt_micro, streams.reference()
    )
    for column, f in enumerate(sweep.observables()):
        expected = max(weak_error(a, b, f) for a, b in zip(matched, reference))
        assert row.errors[column] == pytest.approx(expected, abs=1e-14)
    assert row.steps == len(trajectory.steps)
    assert row.noise > 0.0


def test_sweep_marks_failed_rows_and_keeps_order():
    sweep = sweep_config(bootstrap_replicates=10, workers=2)
    rows = convergence_sweep(sweep, SweepAxis.LEVEL, [2, 3, 4])
    assert [r.value for r in rows] == [2, 3, 4]
    assert [r.failed for r in rows] == [False, True, False]
    assert all(math.isnan(e) for e in rows[1].errors)
    assert "even level" in rows[1].note


def test_sweep_workers_do_not_change_rows():
    serial = convergence_sweep(sweep_config(bootstrap_replicates=10), SweepAxis.PARTICLES, [100, 150])
    parallel = convergence_sweep(
        sweep_config(bootstrap_replicates=10, workers=2), SweepAxis.PARTICLES, [100, 150]
    )
    assert [r.errors for r in serial] == [r.errors for r in parallel]


def test_macro_step_axis_rebuilds_the_burst():
    cfg, particles = sweep_config().row(SweepAxis.MACRO_STEP, 0.1)
    assert cfg.dt_macro == 0.1
    assert cfg.window == pytest.approx(0.025)
    assert cfg.micro.steps == 40
    assert particles == 200


def test_sweep_needs_values():
    with pytest.raises(PreconditionViolated):
        convergence_sweep(sweep_config(), SweepAxis.LEVEL, [])


def test_perturbed_prior_distance(uniform_ensemble):
    direction = np.linspace(1.0, 2.0, uniform_ensemble.size)
    perturbed = perturbed_prior(uniform_ensemble, direction, 0.1)
    assert np.sum(np.abs(perturbed.weights - uniform_ensemble.weights)) == pytest.approx(0.1)
    with pytest.raises(ValueError):
        perturbed_prior(uniform_ensemble, direction, 1.5)


def test_lipschitz_estimate(uniform_ensemble):
    cfg = small_config()
    direction = 1.0 + np.cos(2.0 * np.pi * uniform_ensemble.positions[:, 0]) / 2.0
    perturbed = perturbed_prior(uniform_ensemble, direction, 0.1)
    estimate = lipschitz_probe(uniform_ensemble, perturbed, pure_diffusion(), cfg, StreamFactory(0))
    assert estimate.tv_in == pytest.approx(0.1)
    assert 0.0 <= estimate.tv_out <= 2.0
    assert math.isfinite(estimate.constant)
    again = lipschitz_probe(uniform_ensemble, perturbed, pure_diffusion(), cfg, StreamFactory(0))
    assert again.tv_out == estimate.tv_out


def test_lipschitz_estimate_uses_a_common_step(uniform_ensemble, monkeypatch):
    direction = 1.0 + np.cos(2.0 * np.pi * uniform_ensemble.positions[:, 0]) / 2.0
    perturbed = perturbed_prior(uniform_ensemble, direction, 0.1)
    model = pure_diffusion()
    reference = lipschitz_probe(
        uniform_ensemble, perturbed, model, small_config(dt_macro=0.05), StreamFactory(0)
    )

    real_increment = accel.increment
    calls = []

    def halving_increment(ens, model, cfg, rng):
        calls.append((ens is perturbed, cfg.dt_macro))
        if ens is perturbed and cfg.dt_macro == 0.1:
            cfg = replace(cfg, dt_macro=0.05)
        return real_increment(ens, model, cfg, rng)

    monkeypatch.setattr(accel, "increment", halving_increment)
    estimate = lipschitz_probe(
        uniform_ensemble, perturbed, model, small_config(dt_macro=0.1), StreamFactory(0)
    )
    assert calls == [(False, 0.1), (True, 0.1), (False, 0.05), (True, 0.05)]
    assert estimate.dt_used == 0.05
    assert estimate.tv_out == reference.tv_out


@pytest.mark.parametrize("dt", [0.1, 0.05, 0.025])
def test_lipschitz_ratio_is_bounded(dt):
    prior = wrapped_normal(2000, seed=5)
    direction = np.exp(np.cos(2.0 * np.pi * prior.positions[:, 0]))
    cfg = small_config(horizon=dt, dt_macro=dt, micro=MicroConfig.quadratic(dt / 4.0))
    for eps in [0.2, 0.1, 0.05]:
        perturbed = perturbed_prior(prior, direction, eps)
        estimate = lipschitz_probe(prior, perturbed, periodic_drift(), cfg, StreamFactory(11))
        assert estimate.tv_in == pytest.approx(eps)
        assert estimate.dt_used == dt
        assert math.isfinite(estimate.constant)
        assert 0.0 < estimate.tv_out <= 1.5 * eps


@pytest.mark.slow
def test_macro_step_sweep_error_decreases():
    base = small_config(horizon=0.2, dt_macro=0.2, micro=MicroConfig(0.05, 20), restriction=trig_family(4))
    sweep = sweep_config(
        base=base, particles=100_000, initial=InitialCondition(std=0.25), bootstrap_replicates=50
    )
    rows = convergence_sweep(sweep, SweepAxis.MACRO_STEP, [0.2, 0.1, 0.05, 0.025])
    assert not any(row.failed for row in rows)
    slack = 2.0 * max(row.noise for row in rows)
    for coarse, fine in zip(rows, rows[1:]):
        for k in range(4):
            assert fine.errors[k] <= coarse.errors[k] + slack


@pytest.mark.slow
def test_level_sweep_keeps_matching():
    base = small_config(horizon=0.2, dt_macro=0.05, restriction=trig_family(8))
    sweep = sweep_config(
        base=base, particles=20_000, initial=InitialCondition(std=0.25), bootstrap_replicates=20
    )
    rows = convergence_sweep(sweep, SweepAxis.LEVEL, [2, 4, 6, 8])
    assert not any(row.failed for row in rows)
    assert all(math.isfinite(row.mean_lambda_norm) for row in rows)
