"""
Visualization modules for plotting and rendering
"""

from .contact_sheet import make_contact_sheet, save_contact_sheet
from .tradeoff_plotter import plot_history, plot_oracle_curve, plot_tradeoff, save_figure

__all__ = ['make_contact_sheet', 'save_contact_sheet',
           'plot_history', 'plot_oracle_curve', 'plot_tradeoff', 'save_figure']
