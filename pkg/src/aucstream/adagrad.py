"""Diagonal adaptive preconditioning and ball projections.

The accumulator stores per-coordinate sums of squared gradients; the
derived scale is their square root, so coordinates with small historical
gradients (rare features) keep large effective step sizes.
"""

from __future__ import annotations

import numpy as np

from .exceptions import NumericError

__all__ = [
    "AdaGradState",
    "project_euclidean_ball",
    "project_mahalanobis_ball",
]


class AdaGradState:
    """Per-coordinate accumulated squared gradients with smoothing delta.

    ``sumsq`` holds the defining quantity exactly; the root-sum scale and
    the preconditioner diagonal delta + sqrt(sumsq) are derived on demand.
    """

    def __init__(self, dim: int, delta: float = 1e-8):
        if delta < 0:
            raise NumericError(f"delta must be >= 0, got {delta}")
        self.dim = dim
        self.delta = delta
        self.sumsq = np.zeros(dim)
        self.rounds_absorbed = 0

    def accumulate(self, g: np.ndarray) -> None:
        """Add g squared, coordinate-wise."""
        if g.shape != (self.dim,):
            raise NumericError(f"gradient shape {g.shape} != ({self.dim},)")
        if not np.all(np.isfinite(g)):
            raise NumericError("non-finite gradient component")
        self.sumsq += g * g
        self.rounds_absorbed += 1

    def scale(self) -> np.ndarray:
        """Per-coordinate root of the accumulated squared gradients."""
        return np.sqrt(self.sumsq)

    def h_diag(self) -> np.ndarray:
        """Preconditioner diagonal delta + sqrt(sumsq)."""
        return self.delta + self.scale()

    def direction(self, g: np.ndarray) -> np.ndarray:
        """Preconditioned gradient g / (delta + sqrt(sumsq))."""
        h = self.h_diag()
        bad = (h == 0.0) & (g != 0.0)
        if np.any(bad):
            raise NumericError(
                "zero preconditioner entry with nonzero gradient (delta=0 and "
                "no accumulated history)"
            )
        out = np.zeros_like(g)
        nz = h > 0.0
        out[nz] = g[nz] / h[nz]
        return out


def project_euclidean_ball(u: np.ndarray, radius: float) -> np.ndarray:
    """Nearest point of the L2 ball of the given radius."""
    n = float(np.linalg.norm(u))
    if n <= radius:
        return u
    return u * (radius / n)


def project_mahalanobis_ball(
    u: np.ndarray,
    h: np.ndarray,
    radius: float,
    tol: float = 1e-10,
    max_iter: int = 200,
) -> np.ndarray:
    """Project u onto the L2 ball under the diagonal quadratic distance
    sum_i h_i (w_i - u_i)^2 with all h_i > 0.

    The KKT conditions give w_i = h_i u_i / (h_i + nu) for a multiplier
    nu >= 0 chosen so that ||w|| = radius (or nu = 0 if u is feasible).
    phi(nu) = ||w(nu)||^2 - radius^2 is strictly decreasing, so nu is
    found by bisection on the certified bracket [0, max(h) ||u|| / radius].
    """
    h = np.asarray(h, dtype=np.float64)
    if np.any(h <= 0.0):
        raise NumericError("Mahalanobis projection requires strictly positive h")
    norm_u = float(np.linalg.norm(u))
    if norm_u <= radius:
        return u

    def w_of(nu: float) -> np.ndarray:
        return h * u / (h + nu)

    # bisect from the feasible side: the accepted point satisfies
    # radius - tol <= ||w|| <= radius, so re-projecting it is an exact no-op
    lo = 0.0
    hi = float(h.max()) * norm_u / radius
    for _ in range(max_iter):
        nu = 0.5 * (lo + hi)
        w = w_of(nu)
        n = float(np.linalg.norm(w))
        if radius - tol <= n <= radius:
            return w
        if n > radius:
            lo = nu
        else:
            hi = nu
    raise NumericError(
        f"Mahalanobis projection did not converge in {max_iter} bisection steps"
    )
