"""Sparse assembly of the frozen-coefficient diffusion operator."""

import numpy as np
from scipy import sparse


def diffusion_matrix(grid, c_face, c_well, diag_shift=None):
    """Matrix of ``u -> sum_f c_f (u_i - u_j) + sum_w c_w u_i (+ shift*u_i)``.

    ``c_face``/``c_well`` are face conductances (transmissibility times
    mobility).  The Dirichlet values on the well enter the right-hand side
    as ``c_w * g_w`` and are handled by the caller.
    """
    n = grid.n_cells
    i, j = grid.f_left, grid.f_right
    diag = np.zeros(n)
    np.add.at(diag, i, c_face)
    np.add.at(diag, j, c_face)
    np.add.at(diag, grid.w_cell, c_well)
    if diag_shift is not None:
        diag = diag + diag_shift
    rows = np.concatenate([np.arange(n), i, j])
    cols = np.concatenate([np.arange(n), j, i])
    vals = np.concatenate([diag, -c_face, -c_face])
    return sparse.csr_matrix((vals, (rows, cols)), shape=(n, n))


def well_rhs(grid, c_well, g_well):
    rhs = np.zeros(grid.n_cells)
    np.add.at(rhs, grid.w_cell, c_well * g_well)
    return rhs


def face_fluxes(grid, values, well_values, c_face, c_well):
    """Face fluxes ``(interior left->right, well outward)`` for conductances."""
    f = -c_face * (values[grid.f_right] - values[grid.f_left])
    w = c_well * (values[grid.w_cell] - well_values)
    return f, w
