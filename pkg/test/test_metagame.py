"""
Tests for the meta-game layer: user utilities over declarations, best
responses, closed-form meta-equilibria and certificates.
"""
import numpy as np
import pytest

from Agents import AgentSpec
from Dynamics import run_cournot_dynamics
from Equilibrium import (NoUniqueEquilibriumError, cournot_ne,
                         cournot_outcome_at, mixed_ne_2x2)
from GameCore import (BimatrixGame, CournotScenario, Declaration,
                      DeclarationError, NotOpposingInterestsError,
                      ParamGame2x2, battle_of_sexes, expected_utilities_2x2,
                      g_ds, g_ds_family, g_oi_family, matching_pennies_family,
                      prisoners_dilemma)
from MetaGame import (MetaGameScenario, UnnaturalSpaceError, best_response,
                      construct_dominant_declaration, cournot_meta_equilibrium,
                      cournot_meta_profile, cournot_region_map,
                      declared_equilibrium, epsilon_equilibrium_check,
                      iterated_best_response, manipulation_free,
                      meta_best_response, meta_utility, oi_meta_equilibrium,
                      oi_targets)


@pytest.fixture(scope='module')
def goi():
    return MetaGameScenario.build(g_oi_family())


@pytest.fixture(scope='module')
def gds():
    return MetaGameScenario.build(g_ds_family())


def cournot(c1, c2, points=101):
    return MetaGameScenario.build(CournotScenario(1.0, 1.0, c1, c2), points=points)


def random_oi_family(rng):
    """Row prefers the diagonal, column the off-diagonal; row declares A1, column C2."""
    a1, d1 = rng.uniform(1.0, 3.0, size=2)
    b1, c1 = rng.uniform(-3.0, 0.0, size=2)
    a2, d2 = rng.uniform(-3.0, 0.0, size=2)
    b2, c2 = rng.uniform(1.0, 3.0, size=2)
    game = BimatrixGame([[a1, b1], [c1, d1]], [[a2, b2], [c2, d2]], name='random_oi')
    return ParamGame2x2(game, {'row': ['A'], 'col': ['C']})


@pytest.mark.parametrize('row, col, expected', [
    (2.0, 3.0, (1 / 5, 1 / 3)),
    (1.0, 3.0, (1 / 3, 1 / 3)),
    (2.0, 1.0, (1 / 5, 2 / 5)),
    (1.0, 1.0, (1 / 4, 1 / 2)),
    (3.0, 1 / 3, (1 / 5, 1 / 3)),
])
def test_goi_meta_utilities(goi, row, col, expected):
    assert meta_utility(goi, Declaration.of(row, col)) == pytest.approx(expected)


def test_gds_meta_utilities(gds):
    assert meta_utility(gds, gds.truth) == pytest.approx((2.0, 3.0))
    # c > 2 makes the declared game fully mixed: p = 1/2, q = 1/(c-1)
    assert meta_utility(gds, Declaration.of(5.0, 3.0))[0] == pytest.approx(3.0)


def test_meta_utility_rejects_outside_declarations():
    scn = MetaGameScenario.build(g_oi_family(bounds={'row': [(0.0, 10.0)], 'col': [(0.0, 10.0)]}))
    with pytest.raises(DeclarationError):
        meta_utility(scn, Declaration.of(-1.0, 3.0))


def test_declared_equilibrium():
    assert declared_equilibrium(g_ds()).p == 0.0
    assert declared_equilibrium(g_ds()).q == 1.0
    with pytest.raises(NoUniqueEquilibriumError):
        declared_equilibrium(battle_of_sexes())


def test_analytic_mode_needs_unique_cce_family():
    family = ParamGame2x2(battle_of_sexes(), {'row': ['A'], 'col': ['D']})
    with pytest.raises(NoUniqueEquilibriumError):
        MetaGameScenario.build(family, points=5, bounds={'row': [(0, 4)], 'col': [(0, 4)]})


def test_simulated_mode_needs_agents():
    with pytest.raises(ValueError):
        MetaGameScenario.build(g_oi_family(), points=5, mode='simulated')


def test_scenario_from_json():
    scn = MetaGameScenario.from_json({
        'family': 'g_oi',
        'grids': {'points': 11, 'row': {'bounds': [[0, 10]]}, 'col': {'bounds': [[0, 10]]}},
    })
    assert len(scn.grids[0]) == 11
    assert scn.truth == Declaration.of(2.0, 3.0)
    assert scn.mode == 'analytic'


def test_goi_row_best_response_is_the_lower_bound(goi):
    response = best_response(goi, 'row', goi.truth)
    assert response.declaration.row == pytest.approx((0.0,))
    assert response.declaration.col == (3.0,)
    assert response.utility == pytest.approx(5 / 9)


def test_goi_column_best_response(goi):
    response = best_response(goi, 'col', goi.truth)
    assert response.declaration.col == pytest.approx((0.0,))
    assert response.utility == pytest.approx(7 / 15)


def test_goi_best_response_iteration_cycles(goi):
    result = iterated_best_response(goi)
    assert result.cycle
    assert not result.converged


def test_oi_meta_equilibrium():
    report = oi_meta_equilibrium(g_oi_family())
    assert report.declaration.row == pytest.approx((3.0,))
    assert report.declaration.col == pytest.approx((1 / 3,))
    assert (report.outcome.p, report.outcome.q) == pytest.approx((2 / 5, 1 / 3))
    assert report.utilities == pytest.approx((1 / 5, 1 / 3))
    assert report.tag == 'meta-NE'
    assert oi_targets(g_oi_family().base) == pytest.approx((2 / 5, 1 / 3))


def test_oi_meta_equilibrium_needs_natural_space():
    with pytest.raises(UnnaturalSpaceError):
        oi_meta_equilibrium(g_oi_family(bounds={'row': [(0.0, 10.0)], 'col': [(0.0, 10.0)]}))
    with pytest.raises(NotOpposingInterestsError):
        oi_meta_equilibrium(ParamGame2x2(battle_of_sexes(), {'row': ['A'], 'col': ['D']}))


def test_oi_meta_equilibrium_on_random_games():
    rng = np.random.default_rng(21)
    for _ in range(100):
        family = random_oi_family(rng)
        report = oi_meta_equilibrium(family)
        p, q = oi_targets(family.base)
        induced = mixed_ne_2x2(family.instantiate(report.declaration))
        assert (induced.p, induced.q) == pytest.approx((p, q))
        # each user is indifferent to the mix its own declaration controls
        for other in rng.random(3):
            assert expected_utilities_2x2(family.base, (p, other))[0] == pytest.approx(report.utilities[0])
            assert expected_utilities_2x2(family.base, (other, q))[1] == pytest.approx(report.utilities[1])


def test_manipulation_free_goi(goi):
    verdict = manipulation_free(goi)
    assert not verdict.free
    assert verdict.method == 'opposing-interests'
    assert verdict.gain == pytest.approx(5 / 9 - 1 / 5)
    assert verdict.witness.row == pytest.approx((0.0,))


def test_manipulation_free_matching_pennies():
    verdict = manipulation_free(MetaGameScenario.build(matching_pennies_family(), points=21))
    assert verdict.free
    assert verdict.witness is None


def random_zero_sum_oi_family(rng):
    """Zero-sum opposing-interests games: both users already sit at their meta-equilibrium mix."""
    a1, d1 = rng.uniform(1.0, 3.0, size=2)
    b1, c1 = rng.uniform(-3.0, 0.0, size=2)
    u1 = np.array([[a1, b1], [c1, d1]])
    return ParamGame2x2(BimatrixGame(u1, -u1, name='random_zero_sum_oi'), {'row': ['A'], 'col': ['C']})


def test_oi_classification_agrees_with_grid_certification():
    rng = np.random.default_rng(8)
    for k in range(100):
        zero_sum = k % 2 == 0
        family = random_zero_sum_oi_family(rng) if zero_sum else random_oi_family(rng)
        truth = family.truth()
        bounds = {'row': [(truth.row[0] - 10.0, truth.row[0] + 10.0)],
                  'col': [(truth.col[0] - 10.0, truth.col[0] + 10.0)]}
        scn = MetaGameScenario.build(family, points=41, bounds=bounds)
        verdict = manipulation_free(scn)
        certificate = epsilon_equilibrium_check(scn, truth, 1e-3)
        assert verdict.method == 'opposing-interests'
        assert verdict.free is zero_sum
        assert verdict.free == (certificate.gain <= 1e-9), (k, verdict, certificate.gains)
        if not verdict.free:
            assert verdict.gain > 0
            assert any(d is not None for d in certificate.deviations)


def test_manipulation_free_gds(gds):
    verdict = manipulation_free(gds, eps=0.05)
    assert not verdict.free
    assert verdict.method == 'grid'
    assert verdict.gain == pytest.approx(1.5, abs=1e-3)


@pytest.mark.parametrize('costs, free', [((0.2, 0.8), True), ((0.0, 0.0), True), ((0.3, 0.6), False)])
def test_manipulation_free_cournot(costs, free):
    verdict = manipulation_free(cournot(*costs))
    assert verdict.free is free
    assert verdict.method == 'cournot'


def test_cournot_manipulation_witness():
    verdict = manipulation_free(cournot(0.3, 0.6))
    assert verdict.witness.row == pytest.approx((0.2,))
    assert verdict.gain == pytest.approx(0.12 - 1 / 9)


def test_cournot_closed_form_values():
    scn = cournot(0.5, 0.5)
    truthful = cournot_outcome_at(scn.family, (0.5, 0.5))
    assert (truthful.q1, truthful.q2, truthful.price) == pytest.approx((1 / 6, 1 / 6, 2 / 3), abs=1e-9)
    assert (truthful.u1, truthful.u2) == pytest.approx((1 / 36, 1 / 36), abs=1e-9)

    deviation = meta_best_response(scn, 'row', scn.truth)
    assert deviation.row == pytest.approx((3 / 8,), abs=1e-9)
    assert deviation.col == (0.5,)
    assert meta_utility(scn, deviation)[0] == pytest.approx(1 / 32, abs=1e-9)

    profile, region = cournot_meta_profile(scn.family)
    assert region == 'both-declare'
    assert profile == pytest.approx((2 / 5, 2 / 5), abs=1e-9)
    outcome = cournot_outcome_at(scn.family, profile)
    assert (outcome.q1, outcome.q2) == pytest.approx((1 / 5, 1 / 5), abs=1e-9)
    assert (outcome.u1, outcome.u2) == pytest.approx((1 / 50, 1 / 50), abs=1e-9)
    # neither user moves away from (2/5, 2/5)
    assert meta_best_response(scn, 'col', Declaration.of(0.4, 0.5)).col == pytest.approx((0.4,), abs=1e-9)
    assert meta_best_response(scn, 'row', Declaration.of(0.5, 0.4)).row == pytest.approx((0.4,), abs=1e-9)


def both_produce_costs(rng, count):
    """Cost pairs (a = b = 1) at which both firms produce under truthful declarations."""
    pairs = []
    while len(pairs) < count:
        c1, c2 = rng.uniform(0.0, 1.0, size=2)
        if 1.0 - 2.0 * c1 + c2 > 0.0 and 1.0 - 2.0 * c2 + c1 > 0.0:
            pairs.append((float(c1), float(c2)))
    return pairs


def test_cournot_meta_equilibrium_comparative_statics():
    rng = np.random.default_rng(17)
    regions = set()
    for c1, c2 in both_produce_costs(rng, 200):
        scn = CournotScenario(1.0, 1.0, c1, c2)
        profile, region = cournot_meta_profile(scn)
        regions.add(region)
        meta = cournot_outcome_at(scn, profile)
        truthful = cournot_ne(scn)
        assert meta.q1 + meta.q2 >= truthful.q1 + truthful.q2 - 1e-9, (c1, c2, region)
        gains = (meta.u1 - truthful.u1, meta.u2 - truthful.u2)
        if region.startswith('drive-out'):
            producer = 1 if meta.q1 <= 1e-12 else 0
            assert gains[producer] >= -1e-9, (c1, c2, region, gains)
        else:
            # never better for both users; with both declaring, the higher-cost user loses
            assert min(gains) <= 1e-9, (c1, c2, region, gains)
            if region == 'both-declare':
                assert gains[0 if c1 >= c2 else 1] <= 1e-9, (c1, c2, gains)
    assert {'both-declare', 'drive-out-1', 'drive-out-2'} <= regions


def test_lower_cost_user_can_gain_at_the_meta_equilibrium():
    scn = CournotScenario(1.0, 1.0, 0.5254, 0.3102)
    profile, region = cournot_meta_profile(scn)
    assert region == 'both-declare'
    meta, truthful = cournot_outcome_at(scn, profile), cournot_ne(scn)
    assert meta.u2 > truthful.u2
    assert meta.u1 < truthful.u1


@pytest.mark.parametrize('costs, declared, case', [
    ((0.2, 0.8), (0.2, 0.8), 'truthful'),
    ((0.3, 0.6), (0.2, 0.6), 'drive-out-1'),
    ((0.6, 0.3), (0.6, 0.2), 'drive-out-2'),
    ((0.4, 0.4), (0.28, 0.28), 'both-declare'),
    ((0.1, 0.4), (0.0, 0.35), 'x1=0'),
    ((0.4, 0.15), (0.35, 0.0), 'x2=0'),
    ((0.1, 0.1), (0.0, 0.0), '0,0'),
])
def test_cournot_meta_profile(costs, declared, case):
    profile, region = cournot_meta_profile(CournotScenario(1.0, 1.0, *costs))
    assert region == case
    assert profile == pytest.approx(declared)


def test_cournot_meta_equilibrium_report():
    report = cournot_meta_equilibrium(cournot(0.3, 0.6))
    assert report.region == 'drive-out-1'
    assert report.tag == 'meta-NE'
    assert report.utilities[0] == pytest.approx(0.12)
    assert report.outcome.q2 == pytest.approx(0.0, abs=1e-12)
    truthful = cournot_meta_equilibrium(CournotScenario(1.0, 1.0, 0.2, 0.8))
    assert truthful.tag == 'truthful'


def test_cournot_iterated_best_response_agrees():
    result = iterated_best_response(cournot(0.3, 0.6))
    assert result.converged
    assert result.declaration.row == pytest.approx((0.2,))
    assert result.declaration.col == pytest.approx((0.6,))
    truthful = iterated_best_response(cournot(0.2, 0.8))
    assert truthful.converged and truthful.iterations == 1
    assert truthful.declaration == Declaration.of(0.2, 0.8)


def test_cournot_meta_profiles_are_grid_equilibria():
    rng = np.random.default_rng(2)
    for c1, c2 in rng.uniform(0.1, 0.45, size=(15, 2)):
        scn = cournot(float(c1), float(c2))
        profile, _ = cournot_meta_profile(scn.family)
        certificate = epsilon_equilibrium_check(scn, Declaration.of(*profile), 1e-9)
        assert certificate.passed, (c1, c2, certificate.gains)


def test_cournot_region_map():
    regions = cournot_region_map(1.0, 1.0, 5)
    assert len(regions) == 25
    assert dict(((c1, c2), r) for c1, c2, r in regions)[(0.0, 1.0)] == 'truthful'
    assert {r for _, _, r in regions} <= {'truthful', 'drive-out-1', 'drive-out-2', 'both-declare',
                                          'x1=0', 'x2=0', '0,0'}


def test_gds_epsilon_equilibrium(gds):
    certificate = epsilon_equilibrium_check(gds, Declaration.of(1e4, 3.999), 0.05)
    assert certificate.passed
    assert certificate.utilities == pytest.approx((3.0, 4.0), abs=0.01)
    assert certificate.gain == pytest.approx(0.0, abs=1e-9)
    truthful = epsilon_equilibrium_check(gds, gds.truth, 0.05)
    assert not truthful.passed
    assert truthful.deviations[0] is not None


def test_dominant_declaration_wide_space():
    family = g_ds_family(wide=True, bounds={'row': [(0.0, 10.0), (0.0, 10.0)], 'col': [(0.0, 8.0)]})
    result = construct_dominant_declaration(family, 'row')
    assert result.feasible
    assert result.declaration.row == (3.0, 5.0)
    outcome = declared_equilibrium(family.instantiate(result.declaration))
    assert (outcome.p, outcome.q) == (1.0, 0.0)
    assert expected_utilities_2x2(g_ds(), outcome)[0] == pytest.approx(3.0)


def test_dominant_declaration_narrow_space():
    family = g_ds_family(bounds={'row': [(0.0, 10.0)], 'col': [(0.0, 8.0)]})
    result = construct_dominant_declaration(family, 'row')
    assert not result.feasible
    assert result.constraint == 'B1 > D1'


def test_dominant_declaration_already_dominant():
    family = g_ds_family()
    result = construct_dominant_declaration(family, 'row', target_action=1)
    assert result.feasible and result.declaration == family.truth()
    pd = ParamGame2x2(prisoners_dilemma(), {'row': ['A', 'B'], 'col': ['A']})
    assert construct_dominant_declaration(pd, 'row').constraint == 'already dominant'
    cooperate = construct_dominant_declaration(pd, 'row', target_action=0)
    assert cooperate.declaration.row == (5.0, 2.0)


@pytest.mark.slow
def test_simulated_utilities_track_the_analytic_limit():
    spec = AgentSpec('mw', eta=0.01)
    scn = MetaGameScenario.build(g_oi_family(), points=5, mode='simulated', specs=(spec, spec),
                                 horizon=50000, seeds=(1, 2, 3, 4), workers=4)
    assert meta_utility(scn, scn.truth) == pytest.approx((1 / 5, 1 / 3), abs=0.05)


def test_simulated_cournot_utilities_average_over_seeds():
    spec = AgentSpec('mw', eta=0.02)
    scn = MetaGameScenario.build(CournotScenario(1.0, 1.0, 0.5, 0.5), points=5, mode='simulated',
                                 specs=(spec, spec), horizon=200, seeds=(3, 5))
    decl = Declaration.of(0.4, 0.5)
    per_seed = [run_cournot_dynamics(scn.family, (0.4, 0.5), scn.specs, 200, seed).mean_utilities
                for seed in (3, 5)]
    expected = tuple(np.mean(per_seed, axis=0))
    assert meta_utility(scn, decl) == pytest.approx(expected, abs=1e-12)
