"""Report rendering: the CSV tables plus diagnostic figures next to them.

Every figure lands beside the CSV, named ``<csv stem>_<figure>.png``, so a
single ``--report`` flag yields the full desk-review bundle.
"""

from __future__ import annotations

from pathlib import Path
from typing import Sequence

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .data import CalibrationDataset
from .io import write_report, write_stability_report
from .model import _ep_poly, _radial_poly
from .optim import CalibrationResult, compute_statistics, pack_parameters, residual_vector
from .synth import STABILITY_GROUPS, StabilityResult

_DPI = 120


def _figure_path(csv_path, suffix: str) -> Path:
    p = Path(csv_path)
    return p.with_name(f"{p.stem}_{suffix}.png")


def per_view_rms(result: CalibrationResult, dataset: CalibrationDataset) -> np.ndarray:
    """Reprojection RMS of each view under a fitted model."""
    params = pack_parameters(result.model, result.poses)
    res = residual_vector(params, dataset, result.model.kind, result.model.theta_max)
    out = np.empty(dataset.n_views)
    start = 0
    for j, view in enumerate(dataset.views):
        stop = start + 2 * view.n_points
        out[j] = compute_statistics(res[start:stop])[0]
        start = stop
    return out


def render_calibration_report(
    results: Sequence[CalibrationResult],
    labels: Sequence[str],
    dataset: CalibrationDataset,
    csv_path,
) -> list[Path]:
    """Write the parameter CSV and its companion figures; returns all paths."""
    write_report(results, labels, csv_path)
    written = [Path(csv_path)]

    fig, ax = plt.subplots(figsize=(6, 4))
    for result, label in zip(results, labels):
        ax.semilogy(np.arange(result.cost_trace.size), result.cost_trace, label=label)
    ax.set_xlabel("accepted iteration")
    ax.set_ylabel("cost (px$^2$)")
    ax.set_title("Optimization convergence")
    ax.legend()
    path = _figure_path(csv_path, "convergence")
    fig.savefig(path, dpi=_DPI, bbox_inches="tight")
    plt.close(fig)
    written.append(path)

    fig, ax = plt.subplots(figsize=(5, 5))
    for result, label in zip(results, labels):
        params = pack_parameters(result.model, result.poses)
        res = residual_vector(params, dataset, result.model.kind,
                              result.model.theta_max).reshape(-1, 2)
        ax.scatter(res[:, 0], res[:, 1], s=4, alpha=0.5, label=label)
    ax.axhline(0.0, color="0.6", lw=0.5)
    ax.axvline(0.0, color="0.6", lw=0.5)
    ax.set_xlabel(r"$\Delta u$ (px)")
    ax.set_ylabel(r"$\Delta v$ (px)")
    ax.set_title("Reprojection residuals")
    ax.set_aspect("equal")
    ax.legend()
    path = _figure_path(csv_path, "residuals")
    fig.savefig(path, dpi=_DPI, bbox_inches="tight")
    plt.close(fig)
    written.append(path)

    fig, ax = plt.subplots(figsize=(6, 4))
    rms = {label: per_view_rms(result, dataset) for result, label in zip(results, labels)}
    width = 0.8 / len(results)
    x = np.arange(dataset.n_views)
    for i, (label, values) in enumerate(rms.items()):
        ax.bar(x + i * width, values, width=width, label=label)
    ax.set_xlabel("view")
    ax.set_ylabel("RMS (px)")
    ax.set_title("Per-view reprojection RMS")
    ax.legend()
    path = _figure_path(csv_path, "per_view_rms")
    fig.savefig(path, dpi=_DPI, bbox_inches="tight")
    plt.close(fig)
    written.append(path)

    fig, (ax_r, ax_e) = plt.subplots(1, 2, figsize=(9, 4))
    for result, label in zip(results, labels):
        theta = np.linspace(0.0, result.model.theta_max, 256)
        ax_r.plot(theta, _radial_poly(theta, *result.model.radial.as_array()), label=label)
        ax_e.plot(theta, _ep_poly(theta, *result.model.ep.as_array()), label=label)
    ax_r.set_xlabel(r"$\theta$ (rad)")
    ax_r.set_ylabel(r"$r(\theta)$")
    ax_r.set_title("Radial mapping")
    ax_e.set_xlabel(r"$\theta$ (rad)")
    ax_e.set_ylabel(r"$E(\theta)$ (mm)")
    ax_e.set_title("Entrance-pupil shift")
    ax_r.legend()
    fig.tight_layout()
    path = _figure_path(csv_path, "model_curves")
    fig.savefig(path, dpi=_DPI, bbox_inches="tight")
    plt.close(fig)
    written.append(path)

    return written


def render_stability_report(results: Sequence[StabilityResult], csv_path) -> list[Path]:
    """Write the grouped-scatter CSV and a bar-chart figure beside it."""
    write_stability_report(results, csv_path)
    written = [Path(csv_path)]

    fig, ax = plt.subplots(figsize=(6, 4))
    names = [name for name, _ in STABILITY_GROUPS]
    x = np.arange(len(names))
    width = 0.8 / len(results)
    for i, result in enumerate(results):
        values = [result.group_std[name] for name in names]
        ax.bar(x + i * width, values, width=width, label=result.kind.value)
    ax.set_xticks(x + 0.4 - width / 2)
    ax.set_xticklabels(names)
    ax.set_yscale("log")
    ax.set_ylabel("std of recovered parameter")
    ax.set_title("Parameter stability")
    ax.legend()
    path = _figure_path(csv_path, "groups")
    fig.savefig(path, dpi=_DPI, bbox_inches="tight")
    plt.close(fig)
    written.append(path)

    return written
