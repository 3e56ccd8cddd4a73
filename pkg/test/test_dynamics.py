"""
Tests for the repeated-play engine and convergence checks. The long
reproduction runs are marked slow.
"""
import numpy as np
import pytest

from Agents import (AgentSpec, external_regret, make_agent,
                    make_oscillating_schedule)
from Dynamics import (InsufficientCheckpointsError, check_approach,
                      check_converges_to, check_self_convergent,
                      checkpoint_grid, cournot_grid_game, mape,
                      run_cournot_dynamics, run_dynamics, run_ensemble)
from Equilibrium import cournot_ne
from GameCore import (CournotScenario, JointDistribution, MixedProfile,
                      battle_of_sexes, coordination_game, g_ds, g_oi,
                      matching_pennies)


HALF_DIAGONAL = [['1/2', 0], [0, '1/2']]
GOI_NE = MixedProfile.from_pq(2 / 3, 2 / 5).outer()


@pytest.fixture
def schedule_trace():
    spec = AgentSpec('schedule', dist=HALF_DIAGONAL)
    return run_dynamics(coordination_game(), [spec, spec], 400, seed=0)


@pytest.fixture(scope='module')
def mw_trace():
    spec = AgentSpec('mw', eta=0.05)
    return run_dynamics(matching_pennies(), [spec, spec], 2000, seed=3)


def test_checkpoint_grid():
    grid = checkpoint_grid(1000, 10, extra=[7, 5000])
    assert grid[0] == 1 and grid[-1] == 1000
    assert 7 in grid and 5000 not in grid
    assert np.all(np.diff(grid) > 0)
    with pytest.raises(ValueError):
        checkpoint_grid(0)


def test_schedule_dynamics_are_exact(schedule_trace):
    assert schedule_trace.counts.tolist() == [[200, 0], [0, 200]]
    assert schedule_trace.final_distribution().probs.tolist() == [[0.5, 0.0], [0.0, 0.5]]
    assert schedule_trace.distribution_at(400).probs.tolist() == [[0.5, 0.0], [0.0, 0.5]]
    assert np.all(schedule_trace.regret_per_round() <= 0.0)


def test_schedule_closed_form_matches_round_by_round_play(schedule_trace):
    spec = AgentSpec('schedule', dist=HALF_DIAGONAL)
    rng = np.random.default_rng(0)
    row = make_agent(spec, coordination_game(), 'row', 400, rng)
    col = make_agent(spec, coordination_game(), 'col', 400, rng)
    played = []
    for t in range(1, 401):
        joint = (row.act(t), col.act(t))
        row.observe(t, joint)
        col.observe(t, joint)
        played.append(joint)
    assert schedule_trace.log.tolist() == [list(j) for j in played]


def test_runs_are_deterministic(mw_trace):
    spec = AgentSpec('mw', eta=0.05)
    again = run_dynamics(matching_pennies(), [spec, spec], 2000, seed=3)
    assert np.array_equal(again.log, mw_trace.log)
    assert np.array_equal(again.regrets, mw_trace.regrets)
    other = run_dynamics(matching_pennies(), [spec, spec], 2000, seed=4)
    assert not np.array_equal(other.log, mw_trace.log)


def test_regrets_and_payoffs_match_the_log(mw_trace):
    game = matching_pennies()
    for player in (0, 1):
        assert mw_trace.regrets[-1, player] == pytest.approx(external_regret(game, mw_trace.log, player))
    rows, cols = mw_trace.log[:, 0], mw_trace.log[:, 1]
    assert mw_trace.payoffs[-1, 0] == pytest.approx(game.u1[rows, cols].sum())
    assert mw_trace.counts.sum() == 2000


def test_strategies_are_recorded(mw_trace):
    assert np.all((mw_trace.strategies >= 0.0) & (mw_trace.strategies <= 1.0))


def test_ensemble_keeps_seed_order():
    spec = AgentSpec('rm')
    traces = run_ensemble(matching_pennies(), [spec, spec], 300, [5, 6, 7], workers=2)
    assert [trace.seed for trace in traces] == [5, 6, 7]
    single = run_dynamics(matching_pennies(), [spec, spec], 300, seed=6)
    assert np.array_equal(traces[1].log, single.log)


def test_spec_count_is_checked():
    with pytest.raises(ValueError):
        run_dynamics(matching_pennies(), [AgentSpec('mw')], 10, seed=0)


def test_check_approach(schedule_trace):
    target = JointDistribution([[0.5, 0.0], [0.0, 0.5]])
    assert check_approach(schedule_trace, [target], 0.01)
    assert check_approach(schedule_trace, 'cce', 0.01, game=coordination_game())
    far = JointDistribution([[0.0, 0.5], [0.5, 0.0]])
    result = check_approach(schedule_trace, [far], 0.5)
    assert not result and result.value == pytest.approx(2.0)
    with pytest.raises(ValueError):
        check_approach(schedule_trace, 'cce', 0.01)


def test_check_approach_flags_non_cce():
    # all-(top, left) on the dominance-solvable game: the row player gains 1 by moving down
    spec = AgentSpec('schedule', dist=[[1, 0], [0, 0]])
    trace = run_dynamics(g_ds(), [spec, spec], 50, seed=0)
    result = check_approach(trace, 'cce', 0.05, game=g_ds())
    assert not result
    assert result.value == pytest.approx(1.0)


def test_check_approach_bound_is_strict(schedule_trace):
    spec = AgentSpec('schedule', dist=[[1, 0], [0, 0]])
    trace = run_dynamics(g_ds(), [spec, spec], 50, seed=0)
    assert not check_approach(trace, 'cce', 1.0, game=g_ds())
    assert check_approach(trace, 'cce', 1.0 + 1e-9, game=g_ds())
    far = JointDistribution([[0.0, 0.5], [0.5, 0.0]])
    assert not check_approach(schedule_trace, [far], 2.0)
    assert check_approach(schedule_trace, [far], 2.0 + 1e-9)


def test_self_convergence(schedule_trace):
    assert check_self_convergent(schedule_trace, 0.2, min_window=10)
    with pytest.raises(InsufficientCheckpointsError):
        check_self_convergent(schedule_trace, 0.2, min_window=1000)
    target = JointDistribution([[0.5, 0.0], [0.0, 0.5]])
    assert check_converges_to(schedule_trace, target, 0.2, min_window=10)


def test_distribution_at_needs_a_checkpoint():
    spec = AgentSpec('schedule', dist=HALF_DIAGONAL)
    trace = run_dynamics(coordination_game(), [spec, spec], 400, seed=0, checkpoints=[100, 200, 300])
    assert trace.checkpoints.tolist() == [1, 100, 200, 300, 400]
    assert trace.distribution_at(200).probs[0, 0] == pytest.approx(0.5)
    with pytest.raises(InsufficientCheckpointsError):
        trace.distribution_at(150)


def test_mape():
    uniform = JointDistribution.uniform((2, 2))
    assert mape(uniform, uniform) == 0.0
    tilted = JointDistribution([[0.3, 0.2], [0.2, 0.3]])
    assert mape(tilted, uniform) == pytest.approx(0.2)
    with pytest.raises(ValueError):
        mape(uniform, JointDistribution.point_mass((2, 2), (0, 0)))


def test_mape_of_published_tables():
    # tables are listed column-major: TL, BL, TR, BR
    empirical = JointDistribution(np.array([0.270, 0.135, 0.395, 0.200]).reshape(2, 2, order='F'))
    reference = JointDistribution(np.array([0.267, 0.133, 0.400, 0.200]).reshape(2, 2, order='F'))
    assert mape(empirical, reference) == pytest.approx(0.0097, abs=1e-4)


def test_goi_equilibrium_table_order():
    assert GOI_NE.probs.ravel(order='F') == pytest.approx([0.267, 0.133, 0.4, 0.2], abs=1e-3)


def test_cournot_dynamics_reject_mixed_agents():
    scn = CournotScenario(1.0, 1.0, 0.5, 0.5)
    with pytest.raises(ValueError):
        run_cournot_dynamics(scn, scn.costs, [AgentSpec('ogd'), AgentSpec('mw')], 100, seed=0)


@pytest.mark.slow
def test_mw_reproduces_goi_equilibrium_table():
    spec = AgentSpec('mw', eta=0.01)
    traces = run_ensemble(g_oi(), [spec, spec], 50000, list(range(1, 21)), workers=4, keep_log=False)
    close = [np.all(np.abs(trace.final_distribution().probs - GOI_NE.probs) <= 0.02) for trace in traces]
    assert sum(close) >= 18
    for trace in traces:
        assert np.all(trace.regret_per_round() <= 0.05)


@pytest.mark.slow
def test_mape_shrinks_with_horizon():
    spec = AgentSpec('mw', eta=0.01)
    horizons = [10000, 20000, 50000, 100000]
    means = []
    for horizon in horizons:
        traces = run_ensemble(g_oi(), [spec, spec], horizon, list(range(20)), workers=4,
                              keep_log=False, record_distributions=False)
        means.append(np.mean([mape(trace.final_distribution(), GOI_NE) for trace in traces]))
    for horizon, value in zip(horizons, means):
        assert value <= 4.0 / np.sqrt(horizon)
    assert means[-1] < means[0]


def quantity_errors(reached, target):
    """Relative error per firm; a firm that should stay out is measured against the producer."""
    scale = max(target)
    return [abs(q - t) / t if t > 0 else abs(q) / scale for q, t in zip(reached, target)]


@pytest.mark.slow
@pytest.mark.parametrize('algo', ['ogd', 'mw'])
@pytest.mark.parametrize('declared', [(0.5, 0.5), (0.4, 0.4), (0.2, 0.8)])
def test_cournot_dynamics_reach_equilibrium(algo, declared):
    scn = CournotScenario(1.0, 1.0, 0.5, 0.5)
    target = cournot_ne(scn, declared)
    trace = run_cournot_dynamics(scn, declared, [AgentSpec(algo), AgentSpec(algo)], 100000, seed=1)
    errors = quantity_errors(trace.final, (target.q1, target.q2))
    assert max(errors) <= 0.05, (declared, trace.final, errors)


def test_cournot_equilibrium_targets():
    scn = CournotScenario(1.0, 1.0, 0.5, 0.5)
    assert tuple(cournot_ne(scn, (0.4, 0.4)))[:2] == pytest.approx((0.2, 0.2))
    assert cournot_ne(scn, (0.2, 0.8)).region == 'B'
    assert quantity_errors((0.19, 0.01), (0.2, 0.0)) == pytest.approx([0.05, 0.05])


def test_cournot_utilities_average_realized_profits():
    scn = CournotScenario(1.0, 1.0, 0.5, 0.5)
    declared = (0.3, 0.5)
    spec = AgentSpec('mw', eta=0.02)
    trace = run_cournot_dynamics(scn, declared, [spec, spec], 100, seed=4, grid_points=5)

    game, grid = cournot_grid_game(scn, declared, 5)
    play = run_dynamics(game, [spec, spec], 100, seed=4, keep_log=True)
    quantities = grid[play.log]
    price = 1.0 - quantities.sum(axis=1)
    realized = (quantities * (price[:, None] - np.array(scn.costs))).mean(axis=0)
    assert trace.mean_utilities == pytest.approx(tuple(realized), abs=1e-12)
    assert trace.final == pytest.approx(tuple(quantities.mean(axis=0)))

    # noisy play earns less than the profit at its average quantities
    q1, q2 = trace.final
    assert trace.mean_utilities[0] < q1 * (1.0 - q1 - q2 - 0.5) - 0.01


def test_ogd_utilities_are_realized_profits():
    scn = CournotScenario(1.0, 1.0, 0.5, 0.5)
    trace = run_cournot_dynamics(scn, scn.costs, [AgentSpec('ogd'), AgentSpec('ogd')], 2000, seed=0)
    assert trace.mean_utilities[0] == pytest.approx(1 / 36, abs=2e-3)
    assert trace.mean_utilities == pytest.approx(trace.mean_utilities[::-1])

@pytest.mark.slow
def test_oscillating_schedule_is_not_self_convergent():
    first, second = [[1, 0], [0, 0]], [[0, 0], [0, 1]]
    spec = make_oscillating_schedule(battle_of_sexes(), first, second, 100)
    ends = [200, 40200, 8040200]
    grid = checkpoint_grid(ends[-1], 2000, extra=ends + [10**6])
    trace = run_dynamics(battle_of_sexes(), [spec, spec], ends[-1], seed=0, checkpoints=grid)
    targets = [JointDistribution(first), JointDistribution(second)]
    assert trace.distribution_at(200).l1_distance(targets[0]) == pytest.approx(0.0)
    assert trace.distribution_at(40200).l1_distance(targets[1]) < 0.1
    assert trace.distribution_at(8040200).l1_distance(targets[0]) < 0.1
    assert np.all(trace.regret_per_round() <= 0.1)
    # mid-phase horizons break self-convergence, phase ends alone do not
    assert check_self_convergent(trace, 0.1, [40200, 8040200])
    assert not check_self_convergent(trace, 0.1, [40200, 10**6, 8040200])
