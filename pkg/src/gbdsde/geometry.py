"""Smooth bounded convex domains described by a defining function.

A domain is the set {phi > 0} with boundary {phi = 0}; the gradient of phi
on the boundary is the unit normal pointing inward.  Only convex built-ins
are provided (interval, ball) so that the Euclidean projection used by the
reflection scheme is single-valued.  The defining functions are signed
distances mollified away from the boundary to stay twice continuously
differentiable; the mollification never touches a neighbourhood of the
boundary, so |grad phi| = 1 there exactly.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

Region = str  # "interior" | "boundary" | "exterior"


@dataclass(frozen=True)
class SmoothDomain:
    """Convex domain with a C^2 defining function.

    phi, grad_phi, hess_phi act on points of shape (..., dim); projection
    returns the closest point of the closure plus the displacement norm.
    """

    dim: int
    phi: Callable[[np.ndarray], np.ndarray]
    grad_phi: Callable[[np.ndarray], np.ndarray]
    hess_phi: Callable[[np.ndarray], np.ndarray]
    project_fn: Callable[[np.ndarray], np.ndarray]
    boundary_tol: float
    diameter: float
    name: str = "domain"

    def classify(self, x: np.ndarray) -> np.ndarray:
        """Classify points as interior / boundary / exterior by the sign of phi."""
        x = np.asarray(x, dtype=float)
        if not np.all(np.isfinite(x)):
            raise ValueError("cannot classify non-finite points")
        val = self.phi(x)
        out = np.where(val > self.boundary_tol, "interior",
                       np.where(val < -self.boundary_tol, "exterior", "boundary"))
        return out

    def project(self, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Euclidean projection onto the closure and the distance moved."""
        x = np.asarray(x, dtype=float)
        proj = self.project_fn(x)
        dist = np.linalg.norm(proj - x, axis=-1)
        return proj, dist

    def inward_normal(self, x: np.ndarray) -> np.ndarray:
        """Unit inward normal grad phi at a boundary point."""
        x = np.asarray(x, dtype=float)
        labels = self.classify(x)
        if not np.all(labels == "boundary"):
            raise ValueError("inward_normal requires boundary points")
        return self.grad_phi(x)

    def contains(self, x: np.ndarray) -> np.ndarray:
        return self.phi(np.asarray(x, dtype=float)) >= -self.boundary_tol


def _smooth_abs_poly(s2: np.ndarray, r0: float) -> np.ndarray:
    """C^2 even replacement for |s| on |s| < r0, given s^2.

    Polynomial in u^2 = s^2/r0^2 matching |s|, its first and second
    derivative at |s| = r0, with zero slope at 0.
    """
    u2 = s2 / (r0 * r0)
    return r0 * (0.375 + 0.75 * u2 - 0.125 * u2 * u2)


def _smooth_abs(s: np.ndarray, r0: float) -> np.ndarray:
    a = np.abs(s)
    return np.where(a >= r0, a, _smooth_abs_poly(s * s, r0))


def _smooth_abs_d1(s: np.ndarray, r0: float) -> np.ndarray:
    a = np.abs(s)
    inner = (1.5 / r0 - 0.5 * s * s / r0**3) * s
    return np.where(a >= r0, np.sign(s), inner)


def _smooth_abs_d2(s: np.ndarray, r0: float) -> np.ndarray:
    a = np.abs(s)
    inner = 1.5 / r0 - 1.5 * s * s / r0**3
    return np.where(a >= r0, 0.0, inner)


def interval_domain(a: float, b: float, boundary_tol: float | None = None) -> SmoothDomain:
    """The interval (a, b) with phi = mollified signed distance to the boundary."""
    if not (np.isfinite(a) and np.isfinite(b) and a < b):
        raise ValueError(f"need finite a < b, got ({a}, {b})")
    mid = 0.5 * (a + b)
    half = 0.5 * (b - a)
    r0 = half / 4.0
    tol = boundary_tol if boundary_tol is not None else 1e-9 * (b - a)

    def phi(x: np.ndarray) -> np.ndarray:
        s = np.asarray(x, dtype=float)[..., 0] - mid
        return half - _smooth_abs(s, r0)

    def grad(x: np.ndarray) -> np.ndarray:
        s = np.asarray(x, dtype=float)[..., 0] - mid
        return (-_smooth_abs_d1(s, r0))[..., None]

    def hess(x: np.ndarray) -> np.ndarray:
        s = np.asarray(x, dtype=float)[..., 0] - mid
        return (-_smooth_abs_d2(s, r0))[..., None, None]

    def project(x: np.ndarray) -> np.ndarray:
        return np.clip(np.asarray(x, dtype=float), a, b)

    return SmoothDomain(
        dim=1, phi=phi, grad_phi=grad, hess_phi=hess, project_fn=project,
        boundary_tol=tol, diameter=b - a, name=f"interval({a},{b})",
    )


def ball_domain(center, radius: float, boundary_tol: float | None = None) -> SmoothDomain:
    """Ball of given center and radius, phi = radius - |x - c| mollified near c."""
    c = np.atleast_1d(np.asarray(center, dtype=float))
    if radius <= 0 or not np.isfinite(radius):
        raise ValueError(f"radius must be positive and finite, got {radius}")
    dim = c.shape[0]
    r0 = radius / 4.0
    tol = boundary_tol if boundary_tol is not None else 1e-9 * (2 * radius)

    def rho(x: np.ndarray) -> np.ndarray:
        return np.linalg.norm(np.asarray(x, dtype=float) - c, axis=-1)

    def phi(x: np.ndarray) -> np.ndarray:
        return radius - _smooth_abs(rho(x), r0)

    def grad(x: np.ndarray) -> np.ndarray:
        xv = np.asarray(x, dtype=float)
        diff = xv - c
        r = np.linalg.norm(diff, axis=-1)
        outer_region = r >= r0
        # smooth branch: phi = radius - r0 q(r / r0), with q polynomial in (r/r0)^2,
        # so the gradient is an analytic multiple of (x - c) that vanishes at c.
        inner_coef = -(1.5 / r0 - 0.5 * r * r / r0**3)
        with np.errstate(invalid="ignore", divide="ignore"):
            outer_coef = np.where(r > 0, -1.0 / np.where(r > 0, r, 1.0), 0.0)
        coef = np.where(outer_region, outer_coef, inner_coef)
        return coef[..., None] * diff

    def hess(x: np.ndarray) -> np.ndarray:
        xv = np.asarray(x, dtype=float)
        diff = xv - c
        r = np.linalg.norm(diff, axis=-1)
        eye = np.eye(dim)
        outer_prod = diff[..., :, None] * diff[..., None, :]
        safe_r = np.where(r > 0, r, 1.0)
        h_outer = -(eye / safe_r[..., None, None] - outer_prod / safe_r[..., None, None] ** 3)
        h_inner = -(1.5 / r0 - 0.5 * r[..., None, None] ** 2 / r0**3) * eye + (
            1.0 / r0**3
        ) * outer_prod
        return np.where((r >= r0)[..., None, None], h_outer, h_inner)

    def project(x: np.ndarray) -> np.ndarray:
        xv = np.asarray(x, dtype=float)
        diff = xv - c
        r = np.linalg.norm(diff, axis=-1)
        outside = r > radius
        scale = np.where(outside, radius / np.where(r > 0, r, 1.0), 1.0)
        return c + scale[..., None] * diff

    return SmoothDomain(
        dim=dim, phi=phi, grad_phi=grad, hess_phi=hess, project_fn=project,
        boundary_tol=tol, diameter=2 * radius, name=f"ball({tuple(c)},{radius})",
    )


def make_domain(spec: dict) -> SmoothDomain:
    """Build a named built-in domain from a config mapping."""
    kind = spec.get("kind")
    if kind == "interval":
        return interval_domain(float(spec["a"]), float(spec["b"]))
    if kind == "ball":
        return ball_domain(spec.get("center", [0.0]), float(spec["r"]))
    raise ValueError(f"unknown domain kind: {kind!r} (supported: interval, ball)")
