"""
UI Package for lsor
SVG rendering of similarity grids and trajectory fields
"""

from .heatmap import render_heatmap_svg, render_trajectory_field_svg, write_svg
from .styles import COLORS, GROUP_COLORS, VIRIDIS_STOPS, ramp_color

__all__ = [
    'render_heatmap_svg',
    'render_trajectory_field_svg',
    'write_svg',
    'COLORS',
    'GROUP_COLORS',
    'VIRIDIS_STOPS',
    'ramp_color'
]
