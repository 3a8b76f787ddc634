from typing import Dict, List, Sequence, Tuple

from .types import EpisodeResult, SummaryRow

FAMILY_TITLES = {
    "empty": "Empty",
    "cwall": "C-Wall",
    "hole": "Hole",
    "fourwall": "4-Wall",
}

CONTROLLER_TITLES = {"tracking-mppi": "Tracking MPPI", "pa-mppi": "PA-MPPI"}

_OUTCOMES = (("Success", "success_pct"), ("Stuck", "stuck_pct"), ("Collision", "collision_pct"))


def format_episode_line(result: EpisodeResult) -> str:
    line = f"{result.termination.value}"
    if result.time_to_goal is not None:
        line += f" time_to_goal={result.time_to_goal:.2f}s"
    else:
        line += f" after={result.duration:.2f}s"
    line += f" max_penetration={result.max_penetration:.3f}m"
    if result.error:
        line += f" error={result.error}"
    return line


def format_summary_table(rows: Sequence[SummaryRow]) -> str:
    """Controllers down the side, (family, size) columns grouped by family."""
    if not rows:
        return "(no episodes)"

    columns: List[Tuple[str, float]] = []
    controllers: List[str] = []
    cells: Dict[Tuple[str, str, float], SummaryRow] = {}
    for row in rows:
        key = (row.family, row.size)
        if key not in columns:
            columns.append(key)
        if row.controller not in controllers:
            controllers.append(row.controller)
        cells[(row.controller, row.family, row.size)] = row

    label_width = max(len(CONTROLLER_TITLES.get(c, c)) for c in controllers)
    head_a = " " * (label_width + 12)
    head_b = " " * (label_width + 12)
    last_family = None
    for family, size in columns:
        title = FAMILY_TITLES.get(family, family) if family != last_family else ""
        head_a += f" {title:>9}"
        head_b += f" {size:>8g}m"
        last_family = family

    lines = [head_a.rstrip(), head_b.rstrip(), "-" * len(head_b)]
    for controller in controllers:
        title = CONTROLLER_TITLES.get(controller, controller)
        for i, (label, attr) in enumerate(_OUTCOMES):
            line = f"{(title if i == 0 else ''):<{label_width}}  {label:<10}"
            for family, size in columns:
                row = cells.get((controller, family, size))
                line += f" {'-':>9}" if row is None else f" {getattr(row, attr):>8.0f}%"
            lines.append(line)
        lines.append("-" * len(head_b))
    return "\n".join(lines)
