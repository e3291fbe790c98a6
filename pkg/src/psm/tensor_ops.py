"""Axis-wise application of 1D matrices to flattened tensor-product data.

Flat vectors over a tensor grid follow the index-set ordering: the first
coordinate varies fastest.  A vector of length prod(shape) therefore maps
onto a tensor of ``shape`` in Fortran order, with tensor axis i holding
coordinate i.  Operators of the form  M_m (x) ... (x) M_1  are applied one
axis at a time without materialising the Kronecker product.
"""

from __future__ import annotations

from functools import reduce

import numpy as np


def apply_axis(values: np.ndarray, mat: np.ndarray, shape: tuple, axis: int) -> np.ndarray:
    """Apply ``mat`` along one coordinate axis of a flat tensor vector.

    ``values`` has shape (N,) or (N, B) with N = prod(shape); the result is
    flat again, with axis ``axis`` resized to mat.shape[0].
    """
    values = np.asarray(values)
    batched = values.ndim == 2
    nb = values.shape[1] if batched else 1
    tensor = values.reshape((*shape, nb), order="F")
    tensor = np.moveaxis(tensor, axis, 0)
    lead = tensor.shape[0]
    rest = tensor.shape[1:]
    out = mat @ tensor.reshape(lead, -1)
    out = np.moveaxis(out.reshape((mat.shape[0], *rest)), 0, axis)
    new_shape = list(shape)
    new_shape[axis] = mat.shape[0]
    flat = out.reshape((int(np.prod(new_shape)), nb), order="F")
    return flat if batched else flat[:, 0]


def apply_per_axis(values: np.ndarray, mats, shape: tuple) -> np.ndarray:
    """Apply one matrix per axis in sequence (entries may be None = skip)."""
    shape = list(shape)
    out = values
    for axis, mat in enumerate(mats):
        if mat is None:
            continue
        out = apply_axis(out, mat, tuple(shape), axis)
        shape[axis] = mat.shape[0]
    return out


def kron_dense(mats) -> np.ndarray:
    """Dense matrix of M_m (x) ... (x) M_1 in the first-axis-fastest layout."""
    return reduce(np.kron, list(mats)[::-1])


def contract_points(coeff_tensor_flat: np.ndarray, basis_mats, shape: tuple) -> np.ndarray:
    """Evaluate sum_alpha c_alpha prod_i B_i[p, alpha_i] for a batch of points.

    ``basis_mats[i]`` has shape (P, shape[i]).  Returns an array of length P.
    """
    m = len(shape)
    tensor = np.asarray(coeff_tensor_flat).reshape(shape, order="F")
    out = np.tensordot(basis_mats[0], tensor, axes=(1, 0))  # (P, rest...)
    for i in range(1, m):
        out = np.einsum("pa...,pa->p...", out, basis_mats[i])
    return out
