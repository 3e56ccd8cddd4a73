'''
Writers for run artifacts: trace CSVs, JSON summaries, generic tables, and
SVG line charts drawn with reportlab graphics.
'''
import csv
import json
import logging
import math
from pathlib import Path
from typing import Any, Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np
from reportlab.graphics import renderSVG
from reportlab.graphics.charts.legends import Legend
from reportlab.graphics.charts.lineplots import LinePlot
from reportlab.graphics.shapes import Drawing, String
from reportlab.lib import colors

from Dynamics import DynamicsTrace


logger = logging.getLogger(__name__)

SERIES_COLORS = (colors.steelblue, colors.firebrick, colors.darkgreen, colors.darkorange, colors.purple)
CHART_SIZE = (520, 320)


def trace_header(shape: Tuple[int, int]) -> List[str]:
    cells = [f'cell_{i}{j}' for i in range(shape[0]) for j in range(shape[1])]
    return ['t'] + cells + ['regret_1', 'regret_2', 'payoff_1', 'payoff_2']


def trace_rows(trace: DynamicsTrace) -> List[List[Any]]:
    if trace.distributions is None:
        raise ValueError('Trace was recorded without joint distributions; nothing to export.')
    rows = []
    for idx, t in enumerate(trace.checkpoints):
        rows.append(
            [int(t)]
            + [float(v) for v in trace.distributions[idx].ravel()]
            + [float(v) for v in trace.regrets[idx]]
            + [float(v) for v in trace.payoffs[idx]]
        )
    return rows


def write_rows_csv(path: Path, header: Sequence[str], rows: Iterable[Sequence[Any]]) -> Path:
    """Floats are written with repr so values re-parse exactly."""
    path = Path(path)
    with open(path, 'w', newline='') as f:
        writer = csv.writer(f)
        writer.writerow(header)
        for row in rows:
            writer.writerow([repr(v) if isinstance(v, float) else v for v in row])
    logger.info('Wrote %s', path)
    return path


def write_trace_csv(trace: DynamicsTrace, path: Path) -> Path:
    return write_rows_csv(path, trace_header(trace.shape), trace_rows(trace))


def read_trace_csv(path: Path) -> Dict[str, np.ndarray]:
    """Columns of a trace CSV keyed by header name."""
    with open(path, newline='') as f:
        reader = csv.reader(f)
        header = next(reader)
        values = [[float(v) for v in row] for row in reader]
    data = np.array(values, dtype=float).reshape(-1, len(header))
    return {name: data[:, k] for k, name in enumerate(header)}


def _jsonable(value: Any) -> Any:
    # NamedTuple records keep their field names.
    if hasattr(value, 'to_json'):
        return _jsonable(value.to_json())
    if isinstance(value, tuple) and hasattr(value, '_asdict'):
        return _jsonable(value._asdict())
    if isinstance(value, dict):
        return {str(k): _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    if isinstance(value, np.ndarray):
        return _jsonable(value.tolist())
    if isinstance(value, (np.floating,)):
        return float(value)
    if isinstance(value, (np.integer,)):
        return int(value)
    if isinstance(value, (np.bool_,)):
        return bool(value)
    if isinstance(value, float) and not math.isfinite(value):
        return None
    return value


def write_json(path: Path, data: Any, indent: Optional[int] = 2) -> Path:
    path = Path(path)
    with open(path, 'w') as f:
        json.dump(_jsonable(data), f, indent=indent)
        f.write('\n')
    logger.info('Wrote %s', path)
    return path


def trace_summary(trace: DynamicsTrace) -> Dict[str, Any]:
    final = trace.final_distribution()
    marginals = final.marginals()
    return {
        'seed': trace.seed,
        'horizon': trace.horizon,
        'final_distribution': final.probs,
        'marginals': {'row': marginals.row, 'col': marginals.col},
        'regrets': trace.regrets[-1],
        'regret_per_round': trace.regret_per_round(),
        'average_payoffs': trace.payoffs[-1] / trace.horizon,
    }


def line_chart_svg(
        path: Path,
        series: Sequence[Tuple[str, Sequence[float], Sequence[float]]],
        title: str,
        x_label: str = '',
        y_label: str = '',
        y_range: Optional[Tuple[float, float]] = None) -> Path:
    """Plain line chart with a legend, one polyline per series."""
    width, height = CHART_SIZE
    drawing = Drawing(width, height)
    plot = LinePlot()
    plot.x, plot.y = 60, 50
    plot.width, plot.height = width - 180, height - 90
    data = []
    for _, xs, ys in series:
        points = [(float(x), float(y)) for x, y in zip(xs, ys) if math.isfinite(x) and math.isfinite(y)]
        data.append(points or [(0.0, 0.0)])
    plot.data = data
    plot.joinedLines = 1
    for k in range(len(series)):
        plot.lines[k].strokeColor = SERIES_COLORS[k % len(SERIES_COLORS)]
        plot.lines[k].strokeWidth = 1.2
    if y_range is not None:
        plot.yValueAxis.valueMin, plot.yValueAxis.valueMax = y_range
    plot.xValueAxis.labels.fontSize = 8
    plot.yValueAxis.labels.fontSize = 8
    drawing.add(plot)

    legend = Legend()
    legend.x, legend.y = width - 110, height - 50
    legend.fontSize = 8
    legend.colorNamePairs = [
        (SERIES_COLORS[k % len(SERIES_COLORS)], name) for k, (name, _, _) in enumerate(series)
    ]
    drawing.add(legend)
    drawing.add(String(width / 2, height - 20, title, fontSize=12, textAnchor='middle'))
    if x_label:
        drawing.add(String(60 + plot.width / 2, 15, x_label, fontSize=9, textAnchor='middle'))
    if y_label:
        drawing.add(String(10, height - 35, y_label, fontSize=9))

    path = Path(path)
    renderSVG.drawToFile(drawing, str(path))
    logger.info('Wrote %s', path)
    return path


def _strategy_series(trace: DynamicsTrace) -> Tuple[np.ndarray, np.ndarray]:
    # Agents' current mixed strategies where they expose one, else empirical marginals.
    p, q = trace.row_marginals[:, 0].copy(), trace.col_marginals[:, 0].copy()
    if trace.strategies is not None:
        have_p, have_q = np.isfinite(trace.strategies[:, 0]), np.isfinite(trace.strategies[:, 1])
        p[have_p], q[have_q] = trace.strategies[have_p, 0], trace.strategies[have_q, 1]
    return p, q


def strategies_svg(trace: DynamicsTrace, path: Path, reference: Optional[Tuple[float, float]] = None) -> Path:
    """Row top-probability p and column left-probability q over (log10) time."""
    x = np.log10(trace.checkpoints.astype(float))
    p, q = _strategy_series(trace)
    series = [('p (row top)', x, p), ('q (col left)', x, q)]
    if reference is not None:
        series += [('p* ', x, np.full_like(x, reference[0])), ('q* ', x, np.full_like(x, reference[1]))]
    return line_chart_svg(path, series, f'Mixed strategies, seed {trace.seed}', 'log10 t', 'probability',
                          y_range=(0.0, 1.0))


def parametric_svg(trace: DynamicsTrace, path: Path) -> Path:
    """The (p, q) path traced by the dynamics."""
    p, q = _strategy_series(trace)
    return line_chart_svg(path, [('(p, q)', p, q)], f'Strategy path, seed {trace.seed}', 'p', 'q',
                          y_range=(0.0, 1.0))


def scaling_svg(horizons: Sequence[int], means: Sequence[float], path: Path) -> Path:
    x = np.log10(np.asarray(horizons, dtype=float))
    reference = 2.0 / np.sqrt(np.asarray(horizons, dtype=float))
    return line_chart_svg(
        path,
        [('mean MAPE', x, means), ('2/sqrt(T)', x, reference)],
        'MAPE against horizon', 'log10 T', 'MAPE',
    )
