"""Cubic-spline reference paths through waypoints, parametrized by cumulative
chord length and sampled at a fixed arc step."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.interpolate import CubicSpline


@dataclass(frozen=True)
class ReferencePath:
    """Dense samples of the planned path: position, heading, curvature."""

    s: np.ndarray
    x: np.ndarray
    y: np.ndarray
    yaw: np.ndarray
    curvature: np.ndarray

    def __post_init__(self) -> None:
        # Unwrapped once so per-query interpolation stays cheap and continuous
        # across the +-pi seam.
        object.__setattr__(self, "_yaw_unwrapped", np.unwrap(self.yaw))

    @property
    def length(self) -> float:
        return float(self.s[-1])

    def state_at(self, s_query: float) -> tuple[float, float, float, float]:
        """(x, y, yaw, curvature) linearly interpolated at arc position s;
        queries are clamped to the path."""
        s_query = min(max(s_query, 0.0), self.length)
        x = float(np.interp(s_query, self.s, self.x))
        y = float(np.interp(s_query, self.s, self.y))
        yaw = float(np.interp(s_query, self.s, self._yaw_unwrapped))
        yaw = float(np.arctan2(np.sin(yaw), np.cos(yaw)))
        curvature = float(np.interp(s_query, self.s, self.curvature))
        return x, y, yaw, curvature

    def project(self, px: float, py: float) -> float:
        """Arc position of the dense sample nearest to (px, py)."""
        d2 = (self.x - px) ** 2 + (self.y - py) ** 2
        return float(self.s[int(np.argmin(d2))])


def cubic_spline_plan(waypoints, ds: float) -> ReferencePath:
    """Natural cubic splines x(s), y(s) through the waypoints, sampled every ds.

    Heading is atan2(y', x') and curvature is (x' y'' - y' x'') / |v|^3 from
    the spline derivatives.
    """
    pts = np.asarray(waypoints, dtype=float)
    if pts.ndim != 2 or pts.shape[1] != 2 or pts.shape[0] < 2:
        raise ValueError("need at least two (x, y) waypoints")
    if ds <= 0:
        raise ValueError("arc step ds must be positive")
    seg = np.linalg.norm(np.diff(pts, axis=0), axis=1)
    if np.any(seg == 0.0):
        raise ValueError("duplicate consecutive waypoints")
    knots = np.concatenate([[0.0], np.cumsum(seg)])
    sx = CubicSpline(knots, pts[:, 0], bc_type="natural")
    sy = CubicSpline(knots, pts[:, 1], bc_type="natural")

    total = float(knots[-1])
    # Keep the knots among the samples so the path provably passes through
    # every waypoint.
    s = np.union1d(np.arange(0.0, total, ds), knots)
    dx, dy = sx(s, 1), sy(s, 1)
    ddx, ddy = sx(s, 2), sy(s, 2)
    yaw = np.arctan2(dy, dx)
    speed2 = dx * dx + dy * dy
    curvature = (dx * ddy - dy * ddx) / np.power(speed2, 1.5)
    return ReferencePath(s, sx(s), sy(s), yaw, curvature)
