"""Self-contained SVG rendering for training runs.

Two panels: validation-metric curves over epochs (one polyline per run)
and the accuracy-versus-compute scatter (one labeled point per run, log
FLOPs axis).  No plotting dependencies; output is a standalone file.
"""

import math
from xml.sax.saxutils import escape

PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e",
           "#8c564b", "#17becf", "#7f7f7f")

W, H = 880, 420
PANEL = dict(left=(60, 40, 400, 340), right=(520, 40, 320, 340))


def _scale(value, lo, hi, out_lo, out_hi):
    if hi == lo:
        return (out_lo + out_hi) / 2
    return out_lo + (value - lo) / (hi - lo) * (out_hi - out_lo)


def _axis(parts, x, y, w, h, title):
    parts.append(f'<rect x="{x}" y="{y}" width="{w}" height="{h}" '
                 f'fill="none" stroke="#444" stroke-width="1"/>')
    parts.append(f'<text x="{x + w / 2:.1f}" y="{y - 12}" text-anchor="middle" '
                 f'font-size="14" fill="#222">{escape(title)}</text>')


def _ticks(lo, hi, n=5):
    if hi <= lo:
        return [lo]
    step = (hi - lo) / (n - 1)
    return [lo + i * step for i in range(n)]


def render_runs_svg(runs) -> str:
    """`runs`: list of dicts with label, metric, curve [(epoch, value)...],
    gflops, best."""
    parts = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" '
             f'viewBox="0 0 {W} {H}">',
             f'<rect width="{W}" height="{H}" fill="white"/>']

    metric = runs[0]["metric"] if runs else "metric"
    all_epochs = [e for r in runs for e, _ in r["curve"]]
    all_values = [v for r in runs for _, v in r["curve"]] + \
                 [r["best"] for r in runs]
    e_lo, e_hi = (min(all_epochs), max(all_epochs)) if all_epochs else (0, 1)
    v_lo, v_hi = (min(all_values), max(all_values)) if all_values else (0, 1)
    pad = 0.05 * (v_hi - v_lo or 1.0)
    v_lo, v_hi = v_lo - pad, v_hi + pad

    x0, y0, pw, ph = PANEL["left"]
    _axis(parts, x0, y0, pw, ph, f"validation {metric} by epoch")
    for tick in _ticks(v_lo, v_hi):
        ty = _scale(tick, v_lo, v_hi, y0 + ph, y0)
        parts.append(f'<text x="{x0 - 6}" y="{ty + 4:.1f}" text-anchor="end" '
                     f'font-size="10" fill="#555">{tick:.2f}</text>')
    for i, run in enumerate(runs):
        color = PALETTE[i % len(PALETTE)]
        points = " ".join(
            f"{_scale(e, e_lo, e_hi, x0, x0 + pw):.1f},"
            f"{_scale(v, v_lo, v_hi, y0 + ph, y0):.1f}"
            for e, v in run["curve"])
        parts.append(f'<polyline fill="none" stroke="{color}" stroke-width="2" '
                     f'points="{points}"><title>{escape(run["label"])}</title>'
                     f'</polyline>')
        parts.append(f'<text x="{x0 + 8}" y="{y0 + 18 + 16 * i}" font-size="12" '
                     f'fill="{color}">{escape(run["label"])}</text>')

    x0, y0, pw, ph = PANEL["right"]
    _axis(parts, x0, y0, pw, ph, f"best {metric} vs GFLOPs")
    logs = [math.log10(max(r["gflops"], 1e-6)) for r in runs]
    g_lo, g_hi = (min(logs) - 0.2, max(logs) + 0.2) if logs else (-1, 1)
    for i, run in enumerate(runs):
        color = PALETTE[i % len(PALETTE)]
        cx = _scale(logs[i], g_lo, g_hi, x0, x0 + pw)
        cy = _scale(run["best"], v_lo, v_hi, y0 + ph, y0)
        parts.append(f'<circle cx="{cx:.1f}" cy="{cy:.1f}" r="5" fill="{color}">'
                     f'<title>{escape(run["label"])}: {run["best"]:.3f} @ '
                     f'{run["gflops"]:.3f} GFLOPs</title></circle>')
        parts.append(f'<text x="{cx + 8:.1f}" y="{cy + 4:.1f}" font-size="11" '
                     f'fill="#333">{escape(run["label"])}</text>')
    parts.append(f'<text x="{x0 + pw / 2:.1f}" y="{y0 + ph + 28}" '
                 f'text-anchor="middle" font-size="11" fill="#555">'
                 f'GFLOPs (log scale)</text>')

    parts.append("</svg>")
    return "\n".join(parts) + "\n"
