"""
Heatmap Rendering - Standalone SVG figures without a plotting dependency
Similarity-grid heatmaps and the projected trajectory field
"""

from html import escape
from pathlib import Path

import numpy as np

from .styles import COLORS, GROUP_COLORS, SVG_STYLE, VIRIDIS_STOPS, ramp_color

CELL_SIZE = 48
MARGIN = 36
COLORBAR_WIDTH = 14

SVG_HEADER = """<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}">
<style>{style}</style>
<rect width="100%" height="100%" fill="{background}"/>
"""


def _number(value):
    return f"{value:.3g}"


def render_heatmap_svg(matrix, title="", vmin=None, vmax=None, annotate=True):
    """
    Render a 2-D array as an SVG heatmap on the viridis ramp.
    NaN cells are drawn grey and left unannotated. Returns the SVG text.
    """
    matrix = np.asarray(matrix, dtype=np.float64)
    if matrix.ndim != 2:
        raise ValueError(f"heatmap needs a 2-D array, got shape {matrix.shape}")
    n_rows, n_cols = matrix.shape

    finite = matrix[np.isfinite(matrix)]
    low = vmin if vmin is not None else (float(finite.min()) if finite.size else 0.0)
    high = vmax if vmax is not None else (float(finite.max()) if finite.size else 1.0)
    span = high - low if high > low else 1.0

    width = 2 * MARGIN + n_cols * CELL_SIZE + 3 * COLORBAR_WIDTH + 40
    height = 2 * MARGIN + n_rows * CELL_SIZE
    parts = [SVG_HEADER.format(width=width, height=height, style=SVG_STYLE,
                               background=COLORS['background'])]
    if title:
        parts.append(f'<text class="title" x="{MARGIN}" y="{MARGIN - 12}">{escape(title)}</text>\n')

    for r in range(n_rows):
        for c in range(n_cols):
            value = matrix[r, c]
            x = MARGIN + c * CELL_SIZE
            y = MARGIN + r * CELL_SIZE
            fill = COLORS['missing'] if not np.isfinite(value) else ramp_color((value - low) / span)
            parts.append(f'<rect class="cell" x="{x}" y="{y}" width="{CELL_SIZE}" '
                         f'height="{CELL_SIZE}" fill="{fill}"/>\n')
            if annotate and np.isfinite(value):
                text_fill = '#ffffff' if (value - low) / span < 0.6 else COLORS['text']
                parts.append(f'<text x="{x + CELL_SIZE / 2}" y="{y + CELL_SIZE / 2 + 4}" '
                             f'text-anchor="middle" style="fill:{text_fill}">{_number(value)}</text>\n')

    # colour bar, high end at the top
    bar_x = MARGIN + n_cols * CELL_SIZE + COLORBAR_WIDTH
    bar_height = n_rows * CELL_SIZE
    step = bar_height / len(VIRIDIS_STOPS)
    for i, color in enumerate(reversed(VIRIDIS_STOPS)):
        parts.append(f'<rect x="{bar_x}" y="{MARGIN + i * step:.2f}" width="{COLORBAR_WIDTH}" '
                     f'height="{step:.2f}" fill="{color}"/>\n')
    parts.append(f'<text x="{bar_x + COLORBAR_WIDTH + 4}" y="{MARGIN + 8}">{_number(high)}</text>\n')
    parts.append(f'<text x="{bar_x + COLORBAR_WIDTH + 4}" y="{MARGIN + bar_height}">{_number(low)}</text>\n')

    parts.append('</svg>\n')
    return ''.join(parts)


def render_trajectory_field_svg(projection, title="", group_labels=None, size=480,
                                arrow_scale=1.0):
    """
    Draw a PCA projection: the SOM lattice in orange, reference trajectories
    in blue from each node, and subject trajectories in grey from each sample.
    """
    nodes = np.asarray(projection.nodes)
    clouds = [nodes, projection.points]
    if projection.reference_arrows is not None:
        clouds.append(nodes + arrow_scale * projection.reference_arrows)
    if projection.arrows is not None:
        clouds.append(projection.points + arrow_scale * projection.arrows)
    extent = np.vstack([c for c in clouds if len(c)])
    low, high = extent.min(axis=0), extent.max(axis=0)
    span = np.where(high - low > 0, high - low, 1.0)
    inner = size - 2 * MARGIN

    def to_canvas(point):
        x = MARGIN + (point[0] - low[0]) / span[0] * inner
        y = MARGIN + (1.0 - (point[1] - low[1]) / span[1]) * inner
        return x, y

    parts = [SVG_HEADER.format(width=size, height=size, style=SVG_STYLE,
                               background=COLORS['background'])]
    if title:
        parts.append(f'<text class="title" x="{MARGIN}" y="{MARGIN - 12}">{escape(title)}</text>\n')

    if projection.arrows is not None:
        for i, (start, arrow) in enumerate(zip(projection.points, projection.arrows)):
            (x1, y1), (x2, y2) = to_canvas(start), to_canvas(start + arrow_scale * arrow)
            style = ''
            if group_labels is not None and group_labels[i] in GROUP_COLORS:
                style = f' style="stroke:{GROUP_COLORS[group_labels[i]]}"'
            parts.append(f'<line class="subject" x1="{x1:.2f}" y1="{y1:.2f}" '
                         f'x2="{x2:.2f}" y2="{y2:.2f}"{style}/>\n')

    for a, b in projection.edges:
        (x1, y1), (x2, y2) = to_canvas(nodes[a]), to_canvas(nodes[b])
        parts.append(f'<line class="lattice" x1="{x1:.2f}" y1="{y1:.2f}" '
                     f'x2="{x2:.2f}" y2="{y2:.2f}"/>\n')

    for i, node in enumerate(nodes):
        x, y = to_canvas(node)
        parts.append(f'<circle class="node" cx="{x:.2f}" cy="{y:.2f}" r="3"/>\n')
        if projection.reference_arrows is not None and projection.reference_mask[i]:
            x2, y2 = to_canvas(node + arrow_scale * projection.reference_arrows[i])
            parts.append(f'<line class="reference" x1="{x:.2f}" y1="{y:.2f}" '
                         f'x2="{x2:.2f}" y2="{y2:.2f}"/>\n')

    parts.append('</svg>\n')
    return ''.join(parts)


def write_svg(path, svg):
    path = Path(path)
    path.write_text(svg)
    return path
