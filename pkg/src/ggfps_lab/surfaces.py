"""Analytic benchmark surfaces with exact gradients.

Two surfaces are provided: the d-dimensional Styblinski-Tang function (a
separable multi-well landscape on a box domain) and a "bump" surface whose
label variance is concentrated inside a small sub-region of an otherwise
flat plane. Both expose value and gradient so samplers and generators can
use force-norm information.
"""
from __future__ import annotations

import io
from dataclasses import dataclass, field

import numpy as np

from .dataset import LabeledSet, format_float

DEFAULT_DOMAIN = (-4.0, 4.0)

SURFACE_KINDS = ("styblinski_tang", "adversarial_toy")


@dataclass(frozen=True)
class SurfaceSpec:
    """Declarative description of a benchmark surface."""

    kind: str
    dim: int = 2
    domain: tuple[float, float] = DEFAULT_DOMAIN

    def __post_init__(self):
        if self.kind not in SURFACE_KINDS:
            raise ValueError(f"kind: must be one of {SURFACE_KINDS}, got {self.kind!r}")
        if self.dim < 1:
            raise ValueError("dim: must be >= 1")
        lo, hi = self.domain
        if not lo < hi:
            raise ValueError("domain: lower bound must be strictly below upper bound")


def _as_points(x) -> tuple[np.ndarray, bool]:
    """Coerce input to an (n, d) array; a 1-D array is a single point."""
    arr = np.asarray(x, dtype=float)
    if arr.ndim == 1:
        return arr[None, :], True
    if arr.ndim != 2:
        raise ValueError("expected a point (d,) or a stack of points (n, d)")
    return arr, False


def st_value(x):
    """Styblinski-Tang value: half the sum over coordinates of x^4 - 16 x^2 + 5 x."""
    pts, single = _as_points(x)
    vals = 0.5 * np.sum(pts**4 - 16.0 * pts**2 + 5.0 * pts, axis=1)
    return float(vals[0]) if single else vals


def st_gradient(x):
    """Componentwise derivative (4 x^3 - 32 x + 5) / 2 of the Styblinski-Tang value."""
    pts, single = _as_points(x)
    grad = 0.5 * (4.0 * pts**3 - 32.0 * pts + 5.0)
    return grad[0] if single else grad


def adversarial_value_and_gradient(x, bump_center, bump_radius, bump_amp, bump_freq):
    """Gaussian-windowed sine product: amp * exp(-||x-c||^2 / (2 r^2)) * sin(w x0) * sin(w x1).

    Returns (value, gradient). Away from the bump center both decay like the
    Gaussian window, so labels and gradients are negligible outside a few
    radii; all the label variance lives near ``bump_center``.
    """
    pts, single = _as_points(x)
    if pts.shape[1] != 2:
        raise ValueError("the bump surface is defined for 2-D points only")
    c = np.asarray(bump_center, dtype=float)
    r = float(bump_radius)
    if r <= 0:
        raise ValueError("bump_radius must be positive")
    w = float(bump_freq)
    diff = pts - c
    window = np.exp(-np.sum(diff**2, axis=1) / (2.0 * r * r))
    s0 = np.sin(w * pts[:, 0])
    s1 = np.sin(w * pts[:, 1])
    value = bump_amp * window * s0 * s1

    # d/dx0 = window' * sin sin + window * w cos(w x0) sin(w x1), and symmetric in x1
    g0 = bump_amp * window * (-diff[:, 0] / (r * r) * s0 * s1 + w * np.cos(w * pts[:, 0]) * s1)
    g1 = bump_amp * window * (-diff[:, 1] / (r * r) * s0 * s1 + w * np.cos(w * pts[:, 1]) * s0)
    grad = np.stack([g0, g1], axis=1)
    if single:
        return float(value[0]), grad[0]
    return value, grad


@dataclass(frozen=True)
class StyblinskiTang:
    """Callable Styblinski-Tang surface bound to a box domain."""

    dim: int = 2
    domain: tuple[float, float] = DEFAULT_DOMAIN

    def value(self, x):
        return st_value(x)

    def gradient(self, x):
        return st_gradient(x)

    def value_and_gradient(self, x):
        return st_value(x), st_gradient(x)


@dataclass(frozen=True)
class AdversarialToy:
    """Flat 2-D surface with a localized high-variance bump."""

    bump_center: tuple[float, float] = (2.0, 2.0)
    bump_radius: float = 0.7
    bump_amp: float = 50.0
    bump_freq: float = 6.0
    domain: tuple[float, float] = DEFAULT_DOMAIN
    dim: int = field(default=2, init=False)

    def value(self, x):
        return self.value_and_gradient(x)[0]

    def gradient(self, x):
        return self.value_and_gradient(x)[1]

    def value_and_gradient(self, x):
        return adversarial_value_and_gradient(
            x, self.bump_center, self.bump_radius, self.bump_amp, self.bump_freq
        )


def surface_from_spec(spec: SurfaceSpec, bump_params: dict | None = None):
    """Instantiate the surface described by ``spec``.

    ``bump_params`` may override bump_center/bump_radius/bump_amp/bump_freq
    for the adversarial kind; it is rejected for the Styblinski-Tang kind.
    """
    if spec.kind == "styblinski_tang":
        if bump_params:
            raise ValueError("bump parameters are only valid for the adversarial_toy kind")
        return StyblinskiTang(dim=spec.dim, domain=spec.domain)
    if spec.dim != 2:
        raise ValueError("dim: adversarial_toy is defined for dim=2 only")
    params = dict(bump_params or {})
    allowed = {"bump_center", "bump_radius", "bump_amp", "bump_freq"}
    unknown = set(params) - allowed
    if unknown:
        raise ValueError(f"unknown bump parameters: {sorted(unknown)}")
    if "bump_center" in params:
        params["bump_center"] = tuple(float(v) for v in params["bump_center"])
    return AdversarialToy(domain=spec.domain, **params)


def uniform_domain_sample(surface, n: int, seed: int, id_prefix: str = "u") -> LabeledSet:
    """Draw n points i.i.d. uniform over the surface's box domain.

    Labels are surface values, gradient norms are Euclidean norms of the
    exact gradient. Deterministic per seed.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    lo, hi = surface.domain
    rng = np.random.default_rng(seed)
    pts = rng.uniform(lo, hi, size=(n, surface.dim))
    values, grads = surface.value_and_gradient(pts)
    gnorms = np.linalg.norm(grads, axis=1)
    ids = [f"{id_prefix}{i:05d}" for i in range(n)]
    return LabeledSet(descriptors=pts, labels=values, gradient_norms=gnorms, ids=ids)


def surface_grid_csv(surface, grid_size: int) -> str:
    """Render a 2-D surface on a regular grid as CSV rows (x0, x1, value, grad_norm)."""
    if surface.dim != 2:
        raise ValueError("grid export is defined for 2-D surfaces only")
    lo, hi = surface.domain
    axis = np.linspace(lo, hi, grid_size)
    xx, yy = np.meshgrid(axis, axis, indexing="ij")
    pts = np.stack([xx.ravel(), yy.ravel()], axis=1)
    values, grads = surface.value_and_gradient(pts)
    gnorms = np.linalg.norm(grads, axis=1)
    out = io.StringIO()
    out.write("x0,x1,value,grad_norm\n")
    for p, v, g in zip(pts, values, gnorms):
        out.write(
            f"{format_float(p[0])},{format_float(p[1])},{format_float(v)},{format_float(g)}\n"
        )
    return out.getvalue()
