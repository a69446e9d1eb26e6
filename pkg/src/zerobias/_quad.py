"""Gauss-Legendre panel quadrature used throughout the package.

Two flavours are provided:

* ``integrate_panels`` integrates one function over a single interval cut
  into panels, with extra cuts at given breakpoints.
* ``integrate_rows`` integrates a batch of integrals at once, each row with
  its own interval and its own breakpoints.  The number of panels is the same
  for every row, so everything stays a dense numpy array.

No panel ever straddles a breakpoint, so piecewise-smooth integrands keep
spectral accuracy on each piece.
"""
from __future__ import annotations

import numpy as np

GL_ORDER = 20
_NODES, _WEIGHTS = np.polynomial.legendre.leggauss(GL_ORDER)


def _edges(lo, hi, n_panels, breaks):
    edges = np.linspace(lo, hi, n_panels + 1)
    if len(breaks):
        inner = np.asarray([b for b in breaks if lo < b < hi], dtype=float)
        edges = np.union1d(edges, inner)
    return edges


def integrate_panels(f, lo, hi, n_panels, breaks=()):
    """Integrate vectorised ``f`` over [lo, hi] with GL panels cut at ``breaks``."""
    edges = _edges(lo, hi, n_panels, breaks)
    mid = 0.5 * (edges[1:] + edges[:-1])
    half = 0.5 * (edges[1:] - edges[:-1])
    x = mid[:, None] + half[:, None] * _NODES[None, :]
    vals = np.asarray(f(x.ravel()), dtype=float).reshape(x.shape)
    return float(np.sum(half * (vals @ _WEIGHTS)))


def integrate_rows(f, lo, hi, n_panels, breaks=None):
    """Integrate a batch of one-dimensional integrals, one per row.

    Parameters
    ----------
    f : callable
        ``f(nodes)`` receives an array of shape (rows, k) and returns the
        integrand on it; row ``r`` belongs to the r-th integral.
    lo, hi : array of shape (rows,)
        Integration limits per row.
    n_panels : int
        Uniform panels per row before breakpoints are inserted.
    breaks : array of shape (rows, b), optional
        Row-specific breakpoints. Values outside (lo, hi) are clipped, which
        only creates zero-width panels.
    """
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    t = np.linspace(0.0, 1.0, n_panels + 1)
    edges = lo[:, None] + (hi - lo)[:, None] * t[None, :]
    if breaks is not None and np.size(breaks):
        b = np.clip(np.asarray(breaks, dtype=float), lo[:, None], hi[:, None])
        edges = np.sort(np.concatenate([edges, b], axis=1), axis=1)
    mid = 0.5 * (edges[:, 1:] + edges[:, :-1])
    half = 0.5 * (edges[:, 1:] - edges[:, :-1])
    nodes = mid[:, :, None] + half[:, :, None] * _NODES[None, None, :]
    rows = nodes.shape[0]
    vals = np.asarray(f(nodes.reshape(rows, -1)), dtype=float).reshape(nodes.shape)
    return np.einsum("rp,rpk,k->r", half, vals, _WEIGHTS)


def gauss_legendre(lo, hi, order=GL_ORDER):
    """Nodes and weights of an ``order``-point rule on [lo, hi]."""
    x, w = np.polynomial.legendre.leggauss(order)
    half = 0.5 * (hi - lo)
    return 0.5 * (hi + lo) + half * x, half * w
