"""Timeline rendering: ASCII Gantt lanes and minimal SVG.

One lane per device.  Compute tasks draw in the main lane; collectives draw in
a sub-lane below it (they run on a separate stream, so they may overlap
compute).  Zero-duration tasks are invisible by design — an infinite-bandwidth
collective occupies no time.

Glyphs are fixed so golden-file tests stay stable:
F forward, B input gradient, W weight gradient, r recompute, O optimizer
step, ``~`` communication, ``.`` idle.
"""

from __future__ import annotations

import logging
from enum import Enum

from .config import ConfigError
from .simulation import SimResult
from .tasks import Schedule, Task, TaskKind

logger = logging.getLogger(__name__)

_GLYPH = {
    TaskKind.F: "F",
    TaskKind.B: "B",
    TaskKind.W: "W",
    TaskKind.R: "r",
    TaskKind.OPT: "O",
}

_SVG_FILL = {
    TaskKind.F: "#4c72b0",
    TaskKind.B: "#dd8452",
    TaskKind.W: "#55a868",
    TaskKind.R: "#c44e52",
    TaskKind.OPT: "#8172b3",
}
_SVG_COMM_FILL = "#937860"

# ASCII rendering caps the column count; beyond this we fall back to
# proportional mode so a long trace still fits on a screen.
_MAX_SLOT_COLUMNS = 4000
_FALLBACK_COLUMNS = 120


class RenderFormat(str, Enum):
    ASCII = "ascii"
    SVG = "svg"


def _lane_tasks(result: SimResult, sched: Schedule):
    """Per device: (compute cells, comm cells) with nonzero duration, by start."""
    lanes = []
    for lst in sched.per_device:
        compute, comm = [], []
        for task in lst:
            start, end = result.task_times[task]
            if end <= start:
                continue
            (compute if task.is_compute else comm).append((start, end, task))
        compute.sort(key=lambda c: c[0])
        comm.sort(key=lambda c: c[0])
        lanes.append((compute, comm))
    return lanes


def _slot_width(result: SimResult, sched: Schedule) -> float | None:
    """Largest column width that places every task on exact column borders."""
    durations = set()
    points = set()
    for task in sched.tasks():
        start, end = result.task_times[task]
        if end > start:
            durations.add(end - start)
            points.add(start)
            points.add(end)
    if not durations:
        return None
    slot = min(durations)
    if slot <= 0:
        return None
    for p in points:
        k = p / slot
        if abs(k - round(k)) > 1e-6:
            return None
    if result.makespan / slot > _MAX_SLOT_COLUMNS:
        return None
    return slot


def _paint(cells, n_cols: int, to_col, glyph_of) -> list[str]:
    row = ["."] * n_cols
    for start, end, task in cells:
        c0 = to_col(start)
        c1 = max(to_col(end) - 1, c0)
        g = glyph_of(task)
        for c in range(c0, min(c1, n_cols - 1) + 1):
            row[c] = g
    return row


def render_ascii(result: SimResult, sched: Schedule) -> str:
    lanes = _lane_tasks(result, sched)
    slot = _slot_width(result, sched)
    if slot is not None:
        n_cols = round(result.makespan / slot)
        to_col = lambda t: round(t / slot)
        header = f"makespan={result.makespan:.10g} columns={n_cols} slot={slot:.10g}"
    else:
        logger.warning(
            "task durations are not commensurate; falling back to "
            "proportional column widths"
        )
        n_cols = _FALLBACK_COLUMNS
        scale = n_cols / result.makespan if result.makespan > 0 else 0.0
        to_col = lambda t: min(int(t * scale), n_cols)
        header = f"makespan={result.makespan:.10g} columns={n_cols} (proportional)"

    label_w = len(f"d{len(lanes) - 1}") + 1
    out = [header]
    for d, (compute, comm) in enumerate(lanes):
        row = _paint(compute, n_cols, to_col, lambda t: _GLYPH[t.kind])
        out.append(f"d{d}".ljust(label_w) + "|" + "".join(row) + "|")
        if comm:
            row = _paint(comm, n_cols, to_col, lambda t: "~")
            out.append("~".rjust(label_w - 1).ljust(label_w) + "|" + "".join(row) + "|")
    out.append("legend: F=forward B=input-grad W=weight-grad r=recompute "
               "O=optimizer ~=comm .=idle")
    return "\n".join(out) + "\n"


def render_svg(result: SimResult, sched: Schedule) -> str:
    lanes = _lane_tasks(result, sched)
    width, row_h, comm_h, gap, left = 1000.0, 18, 8, 6, 40
    scale = width / result.makespan if result.makespan > 0 else 0.0
    lane_h = row_h + comm_h + gap
    height = len(lanes) * lane_h + gap

    def rect(x, y, w, h, fill, title):
        return (f'<rect x="{x:.2f}" y="{y}" width="{max(w, 0.5):.2f}" '
                f'height="{h}" fill="{fill}"><title>{title}</title></rect>')

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{left + width:.0f}" '
        f'height="{height}" font-family="monospace" font-size="10">'
    ]
    for d, (compute, comm) in enumerate(lanes):
        y = gap // 2 + d * lane_h
        parts.append(f'<text x="2" y="{y + row_h - 5}">d{d}</text>')
        for start, end, task in compute:
            parts.append(rect(left + start * scale, y, (end - start) * scale,
                              row_h, _SVG_FILL[task.kind], task.task_id))
        for start, end, task in comm:
            parts.append(rect(left + start * scale, y + row_h + 1,
                              (end - start) * scale, comm_h,
                              _SVG_COMM_FILL, task.task_id))
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def render_timeline(result: SimResult, sched: Schedule,
                    format: RenderFormat = RenderFormat.ASCII) -> str:
    """Render a simulated schedule as a deterministic text document."""
    fmt = RenderFormat(format)
    if fmt is RenderFormat.ASCII:
        return render_ascii(result, sched)
    if fmt is RenderFormat.SVG:
        return render_svg(result, sched)
    raise ConfigError(f"unknown render format: {format}")
