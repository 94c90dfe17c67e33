"""Closed-form reference solution of the disc benchmark.

Benchmark setup: a disc of radius R about a single tracking point placed at
its center, homogeneous Dirichlet conditions, one target value, and box
bounds on the control.  The optimal adjoint is then the disc's Green's
function at the center,

    d=2:  z(r) = ln(R/r) / (2 pi),
    d=3:  z(r) = (1/r - 1/R) / (4 pi),

the optimal state is chosen as cos(pi r) with r the distance to the center,
the optimal control follows from the projection formula
q(x) = clamp(-z(x)/alpha, a, b), and the source term f is manufactured so
that the optimality system holds exactly for the state equation
-Laplace(u) = f + q.  With R = 1/2 the target is state(center) - 1 = 0, so
the adjoint coefficient (tracking misfit at the center) equals 1.

All formulas are radial; d=3 is provided as formulas only (the finite
element part of the package is two-dimensional).
"""

import numpy as np

__all__ = ["ExactSolution"]


class ExactSolution:
    """Exact optimal triple (state, adjoint, control) and manufactured source.

    Parameters
    ----------
    center : sequence of floats
        Tracking point = domain center; length ``dim``.
    radius : float
        Disc radius.
    alpha : float
        Regularization weight (positive).
    lower, upper : float
        Control bounds, lower < upper; either may be infinite.
    dim : int
        2 or 3 (3 gives formulas only).

    All evaluation methods accept a single point of shape (dim,) or a batch
    of shape (m, dim) and return a scalar or an (m,) array accordingly.
    """

    def __init__(
        self,
        center=(0.5, 0.5),
        radius=0.5,
        alpha=1.0,
        lower=-1.0,
        upper=1.0,
        dim=2,
    ):
        if dim not in (2, 3):
            raise ValueError("dim must be 2 or 3")
        if not radius > 0:
            raise ValueError("radius must be positive")
        if not alpha > 0:
            raise ValueError("alpha must be positive")
        if not lower < upper:
            raise ValueError("bounds must satisfy lower < upper")
        self.center = np.asarray(center, dtype=float).reshape(dim)
        self.center.setflags(write=False)
        self.radius = float(radius)
        self.alpha = float(alpha)
        self.lower = float(lower)
        self.upper = float(upper)
        self.dim = dim

    def _radius_of(self, x):
        x = np.asarray(x, dtype=float)
        if x.shape == (self.dim,):
            return float(np.linalg.norm(x - self.center))
        if x.ndim == 2 and x.shape[1] == self.dim:
            return np.linalg.norm(x - self.center, axis=1)
        raise ValueError(f"points must have shape ({self.dim},) or (m, {self.dim})")

    def greens_radial(self, r):
        """Adjoint value at distance r from the center; +inf at r = 0."""
        r = np.asarray(r, dtype=float)
        with np.errstate(divide="ignore"):
            if self.dim == 2:
                out = np.log(self.radius / r) / (2.0 * np.pi)
            else:
                out = (1.0 / r - 1.0 / self.radius) / (4.0 * np.pi)
        return out if out.ndim else float(out)

    def greens(self, x):
        """Optimal adjoint = Green's function of the disc at the center.

        Singular at the center: returns +inf there (the flag value).
        """
        return self.greens_radial(self._radius_of(x))

    def state(self, x):
        """Optimal state cos(pi r)."""
        r = self._radius_of(x)
        out = np.cos(np.pi * np.asarray(r))
        return out if out.ndim else float(out)

    def target(self):
        """Tracking target: state(center) - 1 (zero, so the misfit coefficient is 1)."""
        return self.state(self.center) - 1.0

    def control_radial(self, r):
        """Optimal control at distance r: clamp(-greens/alpha); equals lower at r=0."""
        z = np.asarray(self.greens_radial(r))
        out = np.clip(-z / self.alpha, self.lower, self.upper)
        return out if out.ndim else float(out)

    def control(self, x):
        """Optimal control by the projection formula clamp(-greens/alpha, a, b)."""
        return self.control_radial(self._radius_of(x))

    def active_radius(self):
        """Radius inside which the control sits at the lower bound.

        Solves greens(r) = -lower * alpha in closed form; returns 0.0 if the
        lower bound is never active (e.g. lower = -inf).
        """
        level = -self.lower * self.alpha
        if not np.isfinite(level) or level <= 0:
            return 0.0
        if self.dim == 2:
            return self.radius * np.exp(-2.0 * np.pi * level)
        return 1.0 / (1.0 / self.radius + 4.0 * np.pi * level)

    def source_radial(self, r):
        """Manufactured source at distance r from the center.

        f = -Laplace(state) - control with the radial Laplacian of cos(pi r):
        f = pi^2 cos(pi r) + (dim-1) (pi/r) sin(pi r) - control(r).  The
        middle term is continued by its series limit (dim-1) pi^2 for
        r < 1e-8, so f(center) = dim * pi^2 - lower (2 pi^2 - lower in 2D).
        """
        r = np.asarray(r, dtype=float)
        small = r < 1e-8
        safe = np.where(small, 1.0, r)
        factor = self.dim - 1
        radial = factor * np.where(
            small, np.pi**2, np.pi * np.sin(np.pi * safe) / safe
        )
        out = np.pi**2 * np.cos(np.pi * r) + radial - np.asarray(self.control_radial(r))
        return out if out.ndim else float(out)

    def source(self, x):
        """Manufactured source term of the state equation -Laplace(u) = f + q."""
        return self.source_radial(self._radius_of(x))

    def __repr__(self):
        return (
            f"ExactSolution(center={tuple(map(float, self.center))}, radius={self.radius}, "
            f"alpha={self.alpha}, bounds=({self.lower}, {self.upper}), dim={self.dim})"
        )
