"""
Training-history, privacy/utility trade-off and oracle-curve plots using Plotly
"""

import os

import plotly.graph_objects as go
from plotly.subplots import make_subplots

from utils import get_logger

logger = get_logger(__name__)


def plot_history(history, title="Training history"):
    """
    Loss and validation curves of a training stage

    Parameters:
    -----------
    history : pandas.DataFrame
        Columns epoch plus any of l_util, l_recon, fpr95, val_ssim
    title : str
        Plot title

    Returns:
    --------
    plotly.graph_objects.Figure
    """
    fig = make_subplots(specs=[[{"secondary_y": True}]])
    loss_colors = {'l_util': 'blue', 'l_recon': 'red'}
    metric_colors = {'fpr95': 'green', 'val_ssim': 'purple'}

    for column, color in loss_colors.items():
        if column in history:
            fig.add_trace(
                go.Scatter(x=history['epoch'], y=history[column], name=column,
                           line=dict(color=color, width=2), mode='lines+markers'),
                secondary_y=False
            )
    for column, color in metric_colors.items():
        if column in history:
            fig.add_trace(
                go.Scatter(x=history['epoch'], y=history[column], name=column,
                           line=dict(color=color, width=2, dash='dash'), mode='lines+markers'),
                secondary_y=True
            )

    fig.update_xaxes(title_text="Epoch")
    fig.update_yaxes(title_text="Loss", secondary_y=False)
    fig.update_yaxes(title_text="Validation metric", secondary_y=True)
    fig.update_layout(title=title, template='plotly_white', height=450, width=700)
    return fig


def plot_tradeoff(table, title="Privacy vs. utility"):
    """
    Scatter of privacy (1 - SSIM) against delta-mAP, one point per lambda

    Parameters:
    -----------
    table : pandas.DataFrame
        Sweep rows with lambda, privacy and delta_map

    Returns:
    --------
    plotly.graph_objects.Figure
    """
    fig = go.Figure()
    fig.add_trace(
        go.Scatter(
            x=table['delta_map'], y=table['privacy'],
            mode='lines+markers+text',
            text=[f"λ={lam:g}" for lam in table['lambda']],
            textposition='top center',
            marker=dict(size=10, color='red'),
            line=dict(color='red', width=1, dash='dot'),
            name='NinjaDesc'
        )
    )
    fig.add_trace(
        go.Scatter(x=[0.0], y=[float(table.attrs.get('raw_privacy', float('nan')))],
                   mode='markers', marker=dict(size=12, color='black', symbol='star'),
                   name='raw descriptor')
    )
    fig.update_xaxes(title_text="Δ mAP (NinjaDesc − raw)")
    fig.update_yaxes(title_text="Privacy (1 − SSIM)")
    fig.update_layout(title=title, template='plotly_white', height=500, width=650)
    return fig


def plot_oracle_curve(curves, title="Oracle attack"):
    """
    Mean best-candidate distance vs K

    Parameters:
    -----------
    curves : dict
        variant name -> DataFrame with columns k, mean_min_dist
    """
    fig = go.Figure()
    for name, curve in curves.items():
        fig.add_trace(go.Scatter(x=curve['k'], y=curve['mean_min_dist'], name=name, mode='lines+markers'))
    fig.update_xaxes(title_text="K", type='log')
    fig.update_yaxes(title_text="Mean distance to the original descriptor")
    fig.update_layout(title=title, template='plotly_white', height=450, width=650)
    return fig


def save_figure(fig, path):
    """
    Write a static image; falls back to HTML next to it when no static
    export engine is available

    Returns:
    --------
    str
        Path actually written
    """
    os.makedirs(os.path.dirname(path) or '.', exist_ok=True)
    try:
        fig.write_image(path)
        return path
    except (ValueError, RuntimeError, ImportError) as e:
        fallback = os.path.splitext(path)[0] + '.html'
        logger.warning(f"[WARN] static export failed ({e}); wrote {fallback}")
        fig.write_html(fallback)
        return fallback
