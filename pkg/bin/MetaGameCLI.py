'''
Experiment harness for meta-games of learning agents.

  python3 bin/MetaGameCLI.py <simulate|equilibrium|metagame|oscillate|scaling>
      --scenario <path> [--seeds a..b] [--horizon T] [--out <dir>]
      [--format csv,json,svg] [--check] [--workers N] [-v|-q]

Exit codes: 0 success, 1 error, 2 failed acceptance check.
'''
import argparse
import json
import logging
import math
import os
import pathlib
import sys
from dataclasses import dataclass
from typing import Any, Dict, List, Optional, Tuple

import numpy as np

from Agents import (AgentSpec, OscillatingScheduleAgent, alpha_for_epsilon,
                    as_joint, build_schedule, make_oscillating_schedule,
                    rational_matrix)
from Dynamics import (MIN_WINDOW, check_approach, check_self_convergent,
                      checkpoint_grid, mape, run_dynamics, run_ensemble)
from Equilibrium import (cce_violation, cournot_ne, iterated_elimination,
                         mixed_ne_2x2, pure_ne, stackelberg)
from GameCore import (COL, ROW, BimatrixGame, CournotScenario, Declaration,
                      DegenerateGameError, JointDistribution, ParamGame2x2,
                      is_opposing_interests, joint_expected_utilities,
                      load_family, load_game)
from MetaGame import (MetaGameScenario, construct_dominant_declaration,
                      cournot_meta_equilibrium, cournot_region_map,
                      epsilon_equilibrium_check, iterated_best_response,
                      manipulation_free, meta_utility, oi_meta_equilibrium)
from TraceExport import (parametric_svg, scaling_svg, strategies_svg,
                         trace_summary, write_json, write_rows_csv,
                         write_trace_csv)
from utils import (configure_logging, default_output_dir, parse_seeds,
                   resolve_scenario_path, resolve_workers)


logger = logging.getLogger('MetaGameCLI')

COMMANDS = ('simulate', 'equilibrium', 'metagame', 'oscillate', 'scaling')
FORMATS = ('csv', 'json', 'svg')
EXIT_OK, EXIT_ERROR, EXIT_CHECK_FAILED = 0, 1, 2


@dataclass(frozen=True)
class ExperimentConfig:
    command: str
    scenario_path: pathlib.Path
    scenario: Dict[str, Any]
    seeds: Tuple[int, ...]
    horizon: Optional[int]
    out_dir: pathlib.Path
    formats: Tuple[str, ...]
    check: bool
    workers: int

    def __post_init__(self):
        if self.command not in COMMANDS:
            raise ValueError(f'Unknown command {self.command!r}.')
        if not self.seeds:
            raise ValueError('At least one seed is required.')
        unknown = set(self.formats) - set(FORMATS)
        if unknown:
            raise ValueError(f'Unknown output formats {sorted(unknown)}; expected a subset of {FORMATS}.')

    def wants(self, fmt: str) -> bool:
        return fmt in self.formats

    def out(self, name: str) -> pathlib.Path:
        return self.out_dir / name


def load_scenario_game(data: Dict[str, Any]) -> Tuple[BimatrixGame, BimatrixGame]:
    """(declared game the agents play, true game users are paid by)."""
    if 'family' in data and 'declaration' in data:
        family = load_family(data['family'])
        decl = Declaration.from_json(data['declaration'])
        return family.instantiate(decl), family.base
    game = load_game(data['game'])
    return game, game


def reference_distribution(game: BimatrixGame) -> Optional[JointDistribution]:
    """The unique equilibrium of a 2x2 game as a joint distribution, if any."""
    if not game.is_2x2:
        return None
    trace = iterated_elimination(game)
    if trace.is_singleton:
        return JointDistribution.point_mass(game.shape, trace.profile)
    try:
        profile = mixed_ne_2x2(game)
    except DegenerateGameError:
        return None
    return profile.outer() if profile is not None else None


def agent_specs(data: Dict[str, Any], key: str = 'agents') -> Tuple[AgentSpec, AgentSpec]:
    specs = data.get(key, [{'algo': 'mw'}, {'algo': 'mw'}])
    if len(specs) != 2:
        raise ValueError(f'"{key}" must list exactly two agent specs.')
    return AgentSpec.from_json(specs[0]), AgentSpec.from_json(specs[1])


def cmd_simulate(config: ExperimentConfig) -> bool:
    """Seed ensemble of one dynamics configuration with traces, plots and a summary."""
    data = config.scenario
    game, true_game = load_scenario_game(data)
    specs = agent_specs(data)
    horizon = config.horizon or int(data.get('horizon', 1000))
    traces = run_ensemble(game, specs, horizon, config.seeds, workers=config.workers)
    reference = reference_distribution(game)

    if config.wants('csv'):
        for trace in traces:
            write_trace_csv(trace, config.out(f'trace_seed{trace.seed}.csv'))
        if game.is_2x2:
            write_rows_csv(
                config.out('seed_marginals.csv'), ['seed', 'p', 'q'],
                [[trace.seed, float(trace.row_marginals[-1, 0]), float(trace.col_marginals[-1, 0])]
                 for trace in traces],
            )
    if config.wants('svg') and game.is_2x2:
        ne = None
        if reference is not None:
            marg = reference.marginals()
            ne = (marg.p, marg.q)
        strategies_svg(traces[0], config.out('strategies.svg'), reference=ne)
        parametric_svg(traces[0], config.out('parametric.svg'))

    cell_tol = float(data.get('cell_tolerance', 0.02))
    regret_tol = float(data.get('regret_tolerance', 0.05))
    pass_fraction = float(data.get('pass_fraction', 0.9))
    seeds_summary, cell_passes, regret_ok = [], 0, True
    for trace in traces:
        summary = trace_summary(trace)
        summary['true_utilities'] = list(joint_expected_utilities(true_game, trace.final_distribution()))
        if reference is not None:
            gap = float(np.abs(trace.final_distribution().probs - reference.probs).max())
            summary['max_cell_gap'] = gap
            cell_passes += gap <= cell_tol
            if np.all(reference.probs > 0):
                summary['mape'] = mape(trace.final_distribution(), reference)
            summary['approach'] = check_approach(trace, [reference], 2 * cell_tol)
        regret_ok &= bool(np.all(trace.regret_per_round() <= regret_tol))
        seeds_summary.append(summary)

    mean_dist = np.mean([trace.final_distribution().probs for trace in traces], axis=0)
    checks = {'regret_per_round_ok': regret_ok}
    passed = regret_ok
    if reference is not None:
        required = math.ceil(pass_fraction * len(traces))
        checks['cell_passes'] = cell_passes
        checks['cell_passes_required'] = required
        passed &= cell_passes >= required
    checks['passed'] = passed
    if config.wants('json'):
        write_json(config.out('summary.json'), {
            'scenario': data.get('name', config.scenario_path.stem),
            'horizon': horizon,
            'agents': [spec.to_json() for spec in specs],
            'reference': reference.probs if reference is not None else None,
            'reference_column_major': reference.probs.T.ravel() if reference is not None else None,
            'mean_distribution': mean_dist,
            'seeds': seeds_summary,
            'checks': checks,
        })
    logger.info('Simulated %d seeds; checks passed: %s', len(traces), passed)
    return passed


def _cournot_equilibrium(data: Dict[str, Any]) -> Dict[str, Any]:
    scn = CournotScenario.from_json(data)
    costs = data.get('costs')
    return {'cournot': cournot_ne(scn, costs).to_json()}


def cmd_equilibrium(config: ExperimentConfig) -> bool:
    """Closed-form analysis of one game: pure/mixed NE, elimination, Stackelberg, CCE checks."""
    data = config.scenario
    if 'cournot' in data:
        result = _cournot_equilibrium(data)
    else:
        game, _ = load_scenario_game(data)
        trace = iterated_elimination(game, data.get('order_policy', 'row-first'))
        result: Dict[str, Any] = {
            'game': game,
            'pure_ne': [list(p) for p in pure_ne(game)],
            'elimination': trace,
            'dominance_solvable': trace.is_singleton,
            'stackelberg': {
                'row': stackelberg(game, ROW)._asdict(),
                'col': stackelberg(game, COL)._asdict(),
            },
        }
        if game.is_2x2:
            try:
                profile = mixed_ne_2x2(game)
                result['mixed_ne'] = None if profile is None else {'p': profile.p, 'q': profile.q}
            except DegenerateGameError as exc:
                result['mixed_ne'] = {'degenerate': str(exc)}
            result['opposing_interests'] = is_opposing_interests(game)
        reference = reference_distribution(game)
        if reference is not None:
            result['reference_cce_violation'] = cce_violation(game, reference)
    if config.wants('json'):
        write_json(config.out('equilibrium.json'), result)
    return True


def _profile_rows(scn: MetaGameScenario, data: Dict[str, Any], config: ExperimentConfig) -> Tuple[List[list], bool]:
    """Analytic and simulated utilities for each listed declaration profile."""
    rows, consistent = [], True
    tolerance = float(data.get('mode_tolerance', 0.05))
    agent_sets = data.get('profile_agents', [])
    horizon = config.horizon or int(data.get('profile_horizon', 10000))
    for entry in data.get('profiles', []):
        decl = Declaration.of(entry[0], entry[1])
        analytic = meta_utility(scn, decl)
        rows.append([json.dumps(list(decl.row)), json.dumps(list(decl.col)), 'analytic',
                     float(analytic[0]), float(analytic[1])])
        for specs in agent_sets:
            simulated_scn = scn.with_mode(
                'simulated',
                specs=(AgentSpec.from_json(specs[0]), AgentSpec.from_json(specs[1])),
                horizon=horizon,
                seeds=tuple(config.seeds),
                workers=config.workers,
            )
            simulated = meta_utility(simulated_scn, decl)
            rows.append([json.dumps(list(decl.row)), json.dumps(list(decl.col)), specs[0]['algo'],
                         float(simulated[0]), float(simulated[1])])
            if max(abs(simulated[0] - analytic[0]), abs(simulated[1] - analytic[1])) > tolerance:
                consistent = False
                logger.warning('Simulated utilities %s differ from analytic %s at %s',
                               simulated, analytic, decl.to_json())
    return rows, consistent


def cmd_metagame(config: ExperimentConfig) -> bool:
    """Meta-equilibrium report, manipulation verdict and optional tables for one scenario."""
    data = config.scenario
    scn = MetaGameScenario.from_json(data, workers=config.workers)
    family = scn.family
    result: Dict[str, Any] = {'scenario': data.get('name', config.scenario_path.stem), 'mode': scn.mode}
    check_eps = float(data.get('check_epsilon', 0.05))
    passed = True

    if scn.mode == 'analytic':
        if scn.is_cournot:
            report = cournot_meta_equilibrium(scn)
        elif is_opposing_interests(family.base):
            report = oi_meta_equilibrium(family, scenario=scn)
        else:
            fixed = iterated_best_response(scn)
            certificate = epsilon_equilibrium_check(scn, fixed.declaration, check_eps)
            result['best_response_iteration'] = fixed._asdict()
            result['certificate'] = certificate
            report = None
        if report is not None:
            result['meta_equilibrium'] = report
            passed &= report.epsilon <= check_eps
        verdict = manipulation_free(scn)
        result['manipulation_free'] = verdict._asdict()
        result['truthful_utilities'] = list(meta_utility(scn, scn.truth))

    for entry in data.get('epsilon_profiles', []):
        decl = Declaration.of(entry[0], entry[1])
        certificate = epsilon_equilibrium_check(scn, decl, check_eps)
        result.setdefault('epsilon_profiles', []).append({'declaration': decl, 'certificate': certificate})
        passed &= certificate.passed

    if 'dominant' in data and isinstance(family, ParamGame2x2):
        spec = data['dominant']
        construction = construct_dominant_declaration(family, spec.get('player', 'row'), spec.get('target'))
        entry = construction._asdict()
        if construction.feasible:
            entry['utilities'] = list(meta_utility(scn, construction.declaration))
        result['dominant_declaration'] = entry

    if data.get('profiles'):
        rows, consistent = _profile_rows(scn, data, config)
        result['modes_consistent'] = consistent
        passed &= consistent
        if config.wants('csv'):
            write_rows_csv(config.out('profiles.csv'), ['row_decl', 'col_decl', 'mode', 'u1', 'u2'], rows)

    if scn.is_cournot and 'region_map' in data and config.wants('csv'):
        points = int(data['region_map'].get('points', 21))
        write_rows_csv(config.out('cournot_regions.csv'), ['c1', 'c2', 'region'],
                       cournot_region_map(family.a, family.b, points))

    result['checks'] = {'passed': passed}
    if config.wants('json'):
        write_json(config.out('metagame.json'), result)
    return passed


def cmd_oscillate(config: ExperimentConfig) -> bool:
    """Oscillating-schedule dynamics across phases, compared to a single schedule."""
    data = config.scenario
    game, _ = load_scenario_game(data)
    eps = float(data.get('epsilon', 0.1))
    phases = int(data.get('phases', 3))
    alpha = int(data.get('alpha', alpha_for_epsilon(eps)))
    dists = (rational_matrix(data['dist1']), rational_matrix(data['dist2']))
    spec = make_oscillating_schedule(game, dists[0], dists[1], alpha)

    # Phase ends come from the schedule itself; the agent never draws random numbers.
    phase_agent = OscillatingScheduleAgent(game.u1, ROW, None, build_schedule(dists[0]), build_schedule(dists[1]), alpha)
    ends = [phase_agent.phase_end(c) for c in range(1, phases + 1)]
    horizon = ends[-1]
    points = int(data.get('checkpoints', 2000))
    grid = checkpoint_grid(horizon, points, extra=ends)
    candidates = sorted({int(t) for t in grid[::100] if t >= 1000} | set(ends))
    # Early horizons whose window is too sparse to judge are skipped.
    horizons = [h for h in candidates
                if np.count_nonzero((grid > eps * h) & (grid <= h)) >= MIN_WINDOW]
    if not horizons:
        raise ValueError(f'No horizon up to {horizon} has {MIN_WINDOW} checkpoints in its window.')

    seed = config.seeds[0]
    trace = run_dynamics(game, (spec, spec), horizon, seed, checkpoints=grid)
    single = AgentSpec('schedule', dist=dists[0])
    single_trace = run_dynamics(game, (single, single), horizon, seed, checkpoints=grid)

    targets = [as_joint(d) for d in dists]
    phase_rows, passed = [], True
    for c, end in enumerate(ends, start=1):
        dist = trace.distribution_at(end)
        active = (c - 1) % 2
        distances = [dist.l1_distance(target) for target in targets]
        idx = int(np.searchsorted(trace.checkpoints, end))
        regret = trace.regrets[idx] / end
        ok = distances[active] < eps and bool(np.all(regret <= eps))
        passed &= ok
        phase_rows.append({
            'phase': c,
            'end': end,
            'active': f'dist{active + 1}',
            'distances': distances,
            'regret_per_round': regret,
            'ok': ok,
        })
        logger.info('Phase %d ends at %d: distances %s', c, end, distances)

    oscillating = check_self_convergent(trace, eps, horizons)
    baseline = check_self_convergent(single_trace, eps, horizons)
    passed &= (not oscillating.passed) and baseline.passed
    if config.wants('json'):
        write_json(config.out('oscillation.json'), {
            'alpha': alpha,
            'epsilon': eps,
            'phase_ends': ends,
            'phases': phase_rows,
            'self_convergent': oscillating,
            'single_schedule_self_convergent': baseline,
            'checks': {'passed': passed},
        })
    if config.wants('csv'):
        write_trace_csv(trace, config.out(f'trace_seed{seed}.csv'))
    return passed


def cmd_scaling(config: ExperimentConfig) -> bool:
    """Mean MAPE against the equilibrium for a ladder of horizons."""
    data = config.scenario
    game, _ = load_scenario_game(data)
    specs = agent_specs(data)
    reference = reference_distribution(game)
    if reference is None or np.any(reference.probs <= 0):
        raise ValueError('Scaling needs a game with a fully mixed unique equilibrium.')
    horizons = [config.horizon] if config.horizon else [int(t) for t in data.get('horizons', [10000])]
    rows, marginal_rows, means = [], [], []
    for horizon in horizons:
        traces = run_ensemble(game, specs, horizon, config.seeds, workers=config.workers,
                              record_distributions=False, keep_log=False)
        errors = np.array([mape(trace.final_distribution(), reference) for trace in traces])
        means.append(float(errors.mean()))
        rows.append([horizon, float(errors.mean()), float(errors.std())])
        marginal_rows += [[horizon, trace.seed, float(trace.row_marginals[-1, 0]),
                           float(trace.col_marginals[-1, 0])] for trace in traces]
        logger.info('T=%d: mean MAPE %.5f over %d seeds', horizon, errors.mean(), len(traces))

    bound_ok = all(m <= 4.0 / math.sqrt(t) for t, m in zip(horizons, means))
    monotone = all(later <= earlier for earlier, later in zip(means, means[1:]))
    if config.wants('csv'):
        write_rows_csv(config.out('scaling.csv'), ['T', 'mean_mape', 'std_mape'], rows)
        write_rows_csv(config.out('seed_marginals.csv'), ['T', 'seed', 'p', 'q'], marginal_rows)
    if config.wants('svg'):
        scaling_svg(horizons, means, config.out('scaling.svg'))
    if config.wants('json'):
        write_json(config.out('summary.json'), {
            'horizons': horizons,
            'mean_mape': means,
            'checks': {'bound_ok': bound_ok, 'monotone': monotone, 'passed': bound_ok and monotone},
        })
    return bound_ok and monotone


HANDLERS = {
    'simulate': cmd_simulate,
    'equilibrium': cmd_equilibrium,
    'metagame': cmd_metagame,
    'oscillate': cmd_oscillate,
    'scaling': cmd_scaling,
}


def parse_cli_args(argv: Optional[List[str]] = None) -> argparse.Namespace:
    """
    Parse command line arguments using argparse library.
    """
    arg_parser = argparse.ArgumentParser(
        prog='MetaGameCLI',
        description=(
            'Simulates learning agents and analyzes the meta-game between the '
            'users who configure them.'
        )
    )
    arg_parser.add_argument('command', choices=COMMANDS, help='Experiment to run.')
    arg_parser.add_argument(
        '-s', '--scenario',
        type=pathlib.Path,
        required=True,
        help='Scenario JSON file, or the name of a bundled scenario in params/scenarios.'
    )
    arg_parser.add_argument(
        '--seeds',
        type=str,
        default=None,
        help='Seeds as a range "a..b", a list "1,2,3" or a single integer (default: scenario seeds or 1).'
    )
    arg_parser.add_argument('--horizon', type=int, default=None, help='Override the scenario horizon.')
    arg_parser.add_argument(
        '-o', '--out',
        type=pathlib.Path,
        default=default_output_dir(),
        help='Destination directory for generated files.'
    )
    arg_parser.add_argument(
        '--format',
        type=str,
        default='csv,json,svg',
        help='Comma separated output formats (csv, json, svg).'
    )
    arg_parser.add_argument('--check', action='store_true', help='Exit with code 2 when acceptance checks fail.')
    arg_parser.add_argument('--workers', type=int, default=None, help='Worker pool size.')
    verbosity = arg_parser.add_mutually_exclusive_group()
    verbosity.add_argument('-v', '--verbose', action='count', default=0, help='More logging (repeatable).')
    verbosity.add_argument('-q', '--quiet', action='store_true', help='Warnings and errors only.')
    return arg_parser.parse_args(argv)


def build_config(args: argparse.Namespace) -> ExperimentConfig:
    scenario_path = resolve_scenario_path(args.scenario)
    with open(scenario_path) as f:
        scenario = json.load(f)
    seeds_text = args.seeds if args.seeds is not None else scenario.get('seeds', '1')
    seeds = parse_seeds(seeds_text) if isinstance(seeds_text, str) else [int(s) for s in seeds_text]
    if isinstance(scenario.get('seeds'), str) or args.seeds is not None:
        scenario = dict(scenario, seeds=seeds)
    return ExperimentConfig(
        command=args.command,
        scenario_path=scenario_path,
        scenario=scenario,
        seeds=tuple(seeds),
        horizon=args.horizon,
        out_dir=args.out,
        formats=tuple(fmt.strip() for fmt in args.format.split(',') if fmt.strip()),
        check=args.check,
        workers=resolve_workers(args.workers),
    )


def prepare_output_dir(output_path: pathlib.Path) -> None:
    # Create output dir if needed (and make sure it doesn't point to a file).
    if os.path.isfile(output_path):
        raise OSError(f'File exists at output dir path: {output_path}.')
    if not os.path.isdir(output_path):
        logger.info('Creating output dir: %s', output_path)
        os.makedirs(output_path)


def main(argv: Optional[List[str]] = None) -> int:
    args = parse_cli_args(argv)
    configure_logging(-1 if args.quiet else args.verbose)
    try:
        config = build_config(args)
        prepare_output_dir(config.out_dir)
        passed = HANDLERS[config.command](config)
    except (ValueError, OSError, KeyError) as exc:
        logger.error('ERROR: %s (scenario %s)', exc, args.scenario)
        return EXIT_ERROR
    if config.check and not passed:
        logger.error('Acceptance checks failed for %s', args.scenario)
        return EXIT_CHECK_FAILED
    return EXIT_OK


if __name__ == '__main__':
    sys.exit(main())
