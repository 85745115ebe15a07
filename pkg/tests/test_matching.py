import math

import numpy as np
import pytest
from pydantic import ValidationError

from micromacro.core.ensemble import WeightedEnsemble, discrete_relative_entropy
from micromacro.core.matching import (
    MatchStatus,
    SolverOptions,
    best_candidate,
    candidate_gains,
    dual_gradient,
    dual_hessian,
    entropy_gain,
    greedy_select,
    log_partition,
    match,
    pythagorean_residual,
    solve_dual,
    transitivity_check,
)
from micromacro.core.restriction import (
    MacroState,
    candidate_function,
    custom_family,
    restrict,
    trig_family,
)
from micromacro.errors import AllInfeasible, InvalidRestriction, PreconditionViolated

OPTS = SolverOptions()
TWO_POINT_PHI = np.array([[0.0], [0.5]])


def tilted_target(prior, restriction, rng, scale=0.5):
    """Moments of a random exponential tilt of the prior, hence feasible."""
    lam = scale * rng.standard_normal(restriction.level)
    phi = restriction.evaluate(prior.positions)
    tilted = prior.reweighted(prior.weights * np.exp(phi @ lam))
    return restrict(restriction, tilted)


@pytest.fixture
def two_points(torus):
    return WeightedEnsemble.uniform([0.1, 0.6], torus)


@pytest.fixture
def identity_line(real_line):
    return custom_family([lambda x: x[:, 0]], ["x"], real_line)


def test_log_partition_two_points(two_points):
    lam = np.array([2.0])
    assert log_partition(lam, two_points, TWO_POINT_PHI) == pytest.approx(0.620115, abs=1e-6)
    assert log_partition(np.zeros(1), two_points, TWO_POINT_PHI) == pytest.approx(0.0, abs=1e-15)


def test_log_partition_does_not_overflow(two_points):
    value = log_partition(np.array([2000.0]), two_points, TWO_POINT_PHI)
    assert value == pytest.approx(1000.0 + math.log(0.5))


def test_dual_gradient_and_hessian(two_points):
    lam = np.array([2.0])
    p = math.e / (1.0 + math.e)
    gradient = dual_gradient(lam, two_points, TWO_POINT_PHI)
    assert gradient[0] == pytest.approx(0.365529, abs=1e-6)
    hessian = dual_hessian(lam, two_points, TWO_POINT_PHI)
    assert hessian.shape == (1, 1)
    assert hessian[0, 0] == pytest.approx(0.25 * p * (1.0 - p))


def test_match_closed_form(real_line, identity_line):
    prior = WeightedEnsemble.uniform([0.0, 1.0], real_line)
    outcome = match(MacroState([0.75]), prior, identity_line, OPTS)
    assert outcome.status is MatchStatus.CONVERGED
    np.testing.assert_allclose(outcome.matched.weights, [0.25, 0.75], atol=1e-10)
    assert outcome.multipliers.lam[0] == pytest.approx(math.log(3.0), abs=1e-8)
    assert outcome.entropy == pytest.approx(0.130812, abs=1e-6)
    assert outcome.residual <= OPTS.tol_moment


def test_match_target_already_met(uniform_ensemble, torus):
    R = trig_family(2, torus)
    outcome = match(restrict(R, uniform_ensemble), uniform_ensemble, R, OPTS)
    assert outcome.iterations == 0
    assert outcome.matched is uniform_ensemble
    assert outcome.entropy == 0.0
    assert outcome.lambda_norm == 0.0


def test_match_outside_hull_is_infeasible(real_line, identity_line):
    prior = WeightedEnsemble.uniform([0.0, 1.0], real_line)
    outcome = match(MacroState([1.5]), prior, identity_line, OPTS)
    assert outcome.status is MatchStatus.INFEASIBLE
    assert not outcome.converged


def test_match_level_mismatch(uniform_ensemble, torus):
    with pytest.raises(PreconditionViolated):
        match(MacroState([0.0]), uniform_ensemble, trig_family(2, torus), OPTS)


@pytest.mark.parametrize("level", [2, 4, 6])
def test_match_random_feasible_targets(uniform_ensemble, torus, level):
    R = trig_family(level, torus)
    rng = np.random.default_rng(level)
    for _ in range(10):
        m = tilted_target(uniform_ensemble, R, rng)
        outcome = match(m, uniform_ensemble, R, OPTS)
        assert outcome.converged
        assert outcome.residual <= 1e-10
        assert outcome.iterations <= 30
        exact = discrete_relative_entropy(outcome.matched, uniform_ensemble)
        assert abs(outcome.entropy - exact) <= 1e-10
        assert np.max(np.abs(restrict(R, outcome.matched).m - m.m)) <= 1e-10


def test_objective_trace_decreases(uniform_ensemble, torus):
    R = trig_family(4, torus)
    m = tilted_target(uniform_ensemble, R, np.random.default_rng(11), scale=1.5)
    trace = np.array(match(m, uniform_ensemble, R, OPTS).objective_trace)
    assert trace.size >= 2
    assert np.all(np.diff(trace) <= 1e-12)


def test_pythagorean_identity(uniform_ensemble, torus):
    R = trig_family(4, torus)
    rng = np.random.default_rng(3)
    for _ in range(10):
        m = tilted_target(uniform_ensemble, R, rng)
        outcome = match(m, uniform_ensemble, R, OPTS)
        other_prior = uniform_ensemble.reweighted(rng.uniform(0.5, 1.5, uniform_ensemble.size))
        nu = match(m, other_prior, R, OPTS).matched
        assert abs(pythagorean_residual(nu, uniform_ensemble, outcome, R)) <= 1e-8


def test_pythagorean_needs_the_constraints(uniform_ensemble, torus):
    R = trig_family(2, torus)
    m = tilted_target(uniform_ensemble, R, np.random.default_rng(4))
    outcome = match(m, uniform_ensemble, R, OPTS)
    with pytest.raises(PreconditionViolated):
        pythagorean_residual(uniform_ensemble, uniform_ensemble, outcome, R)


def test_transitivity(uniform_ensemble, torus):
    R = trig_family(4, torus)
    rng = np.random.default_rng(8)
    for _ in range(5):
        m_ext = tilted_target(uniform_ensemble, R, rng)
        assert transitivity_check(m_ext, uniform_ensemble, R, OPTS) <= 1e-8


def test_entropy_gain_is_entropy_between_matchings(uniform_ensemble, torus):
    R = trig_family(4, torus)
    base_set = R.prefix(3)
    rng = np.random.default_rng(21)
    for _ in range(5):
        m_ext = tilted_target(uniform_ensemble, R, rng)
        gain = entropy_gain(uniform_ensemble, base_set, R, m_ext, OPTS)
        base = match(m_ext.prefix(3), uniform_ensemble, base_set, OPTS)
        extended = match(m_ext, uniform_ensemble, R, OPTS)
        assert gain >= 0.0
        assert gain == pytest.approx(
            discrete_relative_entropy(extended.matched, base.matched), abs=1e-8
        )


def test_greedy_select_prefers_informative_candidate(uniform_ensemble, torus):
    R = trig_family(2, torus)
    m = restrict(R, uniform_ensemble)
    candidates = [
        candidate_function("sin", 1, space=torus),
        candidate_function("cos", 2, space=torus),
        candidate_function("sin", 2, space=torus),
    ]
    current = [float(uniform_ensemble.weights @ c(uniform_ensemble.positions)) for c in candidates]
    targets = [current[0], current[1], current[2] + 0.05]
    gains = candidate_gains(uniform_ensemble, R, m, candidates, targets, OPTS)
    assert math.isnan(gains[0])
    assert gains[1] == pytest.approx(0.0, abs=1e-12)
    assert gains[2] > 1e-4
    assert greedy_select(uniform_ensemble, R, m, candidates, targets, OPTS) == 2


def test_best_candidate_ties_and_failures():
    assert best_candidate([0.1, 0.3, 0.3]) == 1
    assert best_candidate([math.nan, 0.0]) == 1
    with pytest.raises(AllInfeasible):
        best_candidate([math.nan, math.nan])
    with pytest.raises(AllInfeasible):
        best_candidate([])


def test_greedy_select_needs_candidates(uniform_ensemble, torus):
    R = trig_family(2, torus)
    with pytest.raises(PreconditionViolated):
        greedy_select(uniform_ensemble, R, restrict(R, uniform_ensemble), [], [], OPTS)


def test_solver_options_validate():
    with pytest.raises(ValidationError):
        SolverOptions(tol_moment=0.0)
    assert SolverOptions(max_iter=5).max_iter == 5


def test_dual_derivatives_match_finite_differences(uniform_ensemble, torus):
    phi = trig_family(4, torus).evaluate(uniform_ensemble.positions)
    lam = np.array([0.7, -0.4, 0.3, 1.1])
    step = 1e-6
    gradient = dual_gradient(lam, uniform_ensemble, phi)
    hessian = dual_hessian(lam, uniform_ensemble, phi)
    for k in range(lam.size):
        shift = np.zeros(lam.size)
        shift[k] = step
        forward = log_partition(lam + shift, uniform_ensemble, phi)
        backward = log_partition(lam - shift, uniform_ensemble, phi)
        assert (forward - backward) / (2.0 * step) == pytest.approx(gradient[k], rel=1e-6, abs=1e-9)
        column = (
            dual_gradient(lam + shift, uniform_ensemble, phi)
            - dual_gradient(lam - shift, uniform_ensemble, phi)
        ) / (2.0 * step)
        np.testing.assert_allclose(column, hessian[:, k], rtol=1e-5, atol=1e-8)


def test_match_is_invariant_under_scaling(uniform_ensemble, torus):
    R = trig_family(4, torus)
    scales = np.array([10.0, 0.1, 3.0, 0.5])
    scaled = custom_family(
        [lambda x, f=f, c=c: c * f(x) for f, c in zip(R.functions, scales)],
        [f"{c}{f.name}" for f, c in zip(R.functions, scales)],
        torus,
    )
    m = tilted_target(uniform_ensemble, R, np.random.default_rng(13))
    plain = match(m, uniform_ensemble, R, OPTS)
    rescaled = match(MacroState(scales * m.m), uniform_ensemble, scaled, OPTS)
    assert plain.converged and rescaled.converged
    np.testing.assert_allclose(rescaled.matched.weights, plain.matched.weights, atol=1e-10)
    np.testing.assert_allclose(scales * rescaled.multipliers.lam, plain.multipliers.lam, atol=1e-8)


def test_match_keeps_the_support_of_the_prior(uniform_ensemble, torus):
    weights = uniform_ensemble.weights.copy()
    weights[::3] = 0.0
    prior = WeightedEnsemble(uniform_ensemble.positions, weights / weights.sum(), torus)
    R = trig_family(4, torus)
    outcome = match(tilted_target(prior, R, np.random.default_rng(17)), prior, R, OPTS)
    assert outcome.converged
    empty = prior.weights == 0.0
    assert np.all(outcome.matched.weights[empty] == 0.0)
    assert np.all(outcome.matched.weights[~empty] > 0.0)


def test_duplicated_restriction_function(uniform_ensemble, torus):
    R = trig_family(2, torus)
    phi = R.evaluate(uniform_ensemble.positions)
    doubled = np.column_stack([phi, phi[:, :1]])
    assert np.linalg.eigvalsh(dual_hessian(np.zeros(3), uniform_ensemble, doubled))[0] == pytest.approx(
        0.0, abs=1e-12
    )
    m = tilted_target(uniform_ensemble, R, np.random.default_rng(19)).m
    solution = solve_dual(np.append(m, m[0]), uniform_ensemble.weights, doubled, OPTS)
    assert solution.status is MatchStatus.CONVERGED
    with pytest.raises(InvalidRestriction):
        custom_family([R.functions[0], R.functions[1], R.functions[0]], ["sin1", "cos1", "again"], torus)


def test_entropy_gain_through_a_third_measure(uniform_ensemble, torus):
    R = trig_family(4, torus)
    base_set = R.prefix(3)
    rng = np.random.default_rng(23)
    for _ in range(5):
        m_ext = tilted_target(uniform_ensemble, R, rng)
        gain = entropy_gain(uniform_ensemble, base_set, R, m_ext, OPTS)
        base = match(m_ext.prefix(3), uniform_ensemble, base_set, OPTS)
        extended = match(m_ext, uniform_ensemble, R, OPTS)
        other_prior = uniform_ensemble.reweighted(rng.uniform(0.5, 1.5, uniform_ensemble.size))
        nu = match(m_ext, other_prior, R, OPTS).matched
        difference = discrete_relative_entropy(nu, base.matched) - discrete_relative_entropy(
            nu, extended.matched
        )
        assert difference == pytest.approx(gain, abs=1e-8)
