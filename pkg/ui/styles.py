"""
UI Styles - Colour ramp and stylesheet for the SVG figures
Heatmaps of similarity grids and the PCA trajectory field
"""

SVG_STYLE = """
/* Shared figure styling */
text {
    font-family: 'DejaVu Sans', Arial, sans-serif;
    font-size: 11px;
    fill: #1e1e1e;
}

.title {
    font-size: 13px;
    font-weight: 600;
}

.cell {
    stroke: #ffffff;
    stroke-width: 1;
}

.lattice {
    stroke: #f28e2b;
    stroke-width: 1.5;
    fill: none;
}

.node {
    fill: #f28e2b;
}

.reference {
    stroke: #1f77b4;
    stroke-width: 1.5;
}

.subject {
    stroke: #9e9e9e;
    stroke-width: 0.6;
    opacity: 0.6;
}
"""

# Eight stops sampled from viridis, low to high
VIRIDIS_STOPS = [
    '#440154',
    '#46327e',
    '#365c8d',
    '#277f8e',
    '#1fa187',
    '#4ac16d',
    '#a0da39',
    '#fde725'
]

COLORS = {
    'lattice': '#f28e2b',
    'reference': '#1f77b4',
    'subject': '#9e9e9e',
    'missing': '#bdbdbd',
    'background': '#ffffff',
    'text': '#1e1e1e'
}

# Marker colour per diagnostic group in the trajectory field
GROUP_COLORS = {
    'NC': '#4caf50',
    'sMCI': '#17a2b8',
    'pMCI': '#ffb84a',
    'AD': '#ff6b6b'
}


def _hex_to_rgb(color):
    color = color.lstrip('#')
    return tuple(int(color[i:i + 2], 16) for i in (0, 2, 4))


def ramp_color(fraction):
    """Linear interpolation along VIRIDIS_STOPS for fraction in [0, 1]."""
    fraction = min(max(float(fraction), 0.0), 1.0)
    position = fraction * (len(VIRIDIS_STOPS) - 1)
    lower = int(position)
    upper = min(lower + 1, len(VIRIDIS_STOPS) - 1)
    weight = position - lower
    a, b = _hex_to_rgb(VIRIDIS_STOPS[lower]), _hex_to_rgb(VIRIDIS_STOPS[upper])
    rgb = [round(x + (y - x) * weight) for x, y in zip(a, b)]
    return '#{:02x}{:02x}{:02x}'.format(*rgb)
