"""Coupled RGB/spectral dictionary learning and l1 sparse coding.

Both modalities share one abundance matrix: the RGB image and the initialized
cube are stacked row-wise and factorized jointly, alternating iterative
shrinkage-thresholding for the coefficients with a least-squares dictionary
update projected onto the unit column-norm ball. Used to initialize the
fusion solver.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .core import SamplingMask, SelectionOperator, SpectralCube, _as_matrix
from .errors import DimensionMismatchError, ParameterError
from .harmonic import harmonic_inpaint_cube


def soft_threshold(x: np.ndarray, amount: float) -> np.ndarray:
    return np.sign(x) * np.maximum(np.abs(x) - amount, 0.0)


def coding_objective(dictionary: np.ndarray, targets: np.ndarray, coeffs: np.ndarray, sparsity: float) -> float:
    fit = targets - dictionary @ coeffs
    return float((fit * fit).sum() + sparsity * np.abs(coeffs).sum())


def sparse_code(dictionary: np.ndarray, targets: np.ndarray, sparsity: float,
                max_iter: int = 200, tol: float = 1e-8, warm_start: np.ndarray | None = None) -> np.ndarray:
    """Iterative shrinkage-thresholding for the l1-penalized fit.

    Columns of ``targets`` are coded independently (a single column is
    accepted too). The step is the inverse squared operator norm of the
    dictionary; iteration stops when the coefficient change drops below
    ``tol``.
    """
    if sparsity < 0.0:
        raise ParameterError("sparsity weight must be nonnegative")
    d = np.asarray(dictionary, dtype=np.float64)
    y = np.asarray(targets, dtype=np.float64)
    single = y.ndim == 1
    if single:
        y = y[:, None]
    if d.shape[0] != y.shape[0]:
        raise DimensionMismatchError(f"dictionary rows {d.shape[0]} != target rows {y.shape[0]}")
    lipschitz = float(np.linalg.norm(d, 2) ** 2)
    coeffs = np.zeros((d.shape[1], y.shape[1])) if warm_start is None else warm_start.astype(np.float64).copy()
    if lipschitz == 0.0:
        return coeffs[:, 0] if single else coeffs
    step = 1.0 / lipschitz
    gram = d.T @ d
    dty = d.T @ y
    for _ in range(max_iter):
        grad = gram @ coeffs - dty
        updated = soft_threshold(coeffs - step * grad, step * sparsity / 2.0)
        delta = np.abs(updated - coeffs).max()
        coeffs = updated
        if delta < tol:
            break
    return coeffs[:, 0] if single else coeffs


@dataclass
class CoupledDictionaries:
    rgb: np.ndarray
    cube: np.ndarray
    abundances: np.ndarray
    objective_trace: list[float] = field(default_factory=list)
    reseeded_atoms: list[tuple[int, int]] = field(default_factory=list)


def _unit_ball_columns(d: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(d, axis=0)
    scale = np.where(norms > 1.0, norms, 1.0)
    return d / scale


def _update_dictionary(dictionary: np.ndarray, targets: np.ndarray, coeffs: np.ndarray) -> np.ndarray:
    """Sweep the atoms with exact single-column least-squares updates.

    For one column with the others fixed, the ball projection of the
    unconstrained least-squares solution is the exact constrained minimizer,
    so every sweep is non-increasing in the fit. Atoms with zero coefficient
    energy are left for the reseeding step.
    """
    d = dictionary.copy()
    residual = targets - d @ coeffs
    for k in range(d.shape[1]):
        row = coeffs[k]
        energy = float(row @ row)
        if energy < 1e-24:
            continue
        residual += np.outer(d[:, k], row)
        column = residual @ row / energy
        norm = np.linalg.norm(column)
        if norm > 1.0:
            column /= norm
        d[:, k] = column
        residual -= np.outer(column, row)
    return d


def _random_unit_columns(rows: int, atoms: int, rng: np.random.Generator) -> np.ndarray:
    d = rng.normal(size=(rows, atoms))
    return d / np.linalg.norm(d, axis=0)


def default_sparsity(dictionary: np.ndarray, targets: np.ndarray) -> float:
    """Scale-free default for the l1 weight: a tenth of the peak correlation."""
    return 0.1 * float(np.abs(dictionary.T @ targets).max())


def coupled_dictionary_learn(rgb, cube, atoms: int, sparsity: float | None = None,
                             epochs: int = 30, seed: int = 0, code_iter: int = 120,
                             tol: float = 1e-8, init_dictionary: np.ndarray | None = None) -> CoupledDictionaries:
    """Jointly factorize the two modalities with one shared abundance matrix.

    Each epoch codes the stacked targets against the stacked dictionaries and
    then refits the dictionary columns by exact least squares with unit-ball
    projection, one atom at a time, so the penalized objective is
    non-increasing per full alternation. Dead atoms are reseeded from the
    worst-fit pixel (their coefficients are zero, so the objective is
    unchanged). A final coding pass aligns the returned abundances with the
    returned dictionaries.
    """
    i_mat = _as_matrix(rgb)
    y_mat = _as_matrix(cube)
    if i_mat.shape[1] != y_mat.shape[1]:
        raise DimensionMismatchError(
            f"modalities disagree on pixel count: {i_mat.shape[1]} vs {y_mat.shape[1]}"
        )
    rows_rgb = i_mat.shape[0]
    stacked = np.vstack([i_mat, y_mat])
    rng = np.random.default_rng(seed)
    if init_dictionary is not None:
        if init_dictionary.shape != (stacked.shape[0], atoms):
            raise DimensionMismatchError("init dictionary shape does not match the stacked system")
        dictionary = _unit_ball_columns(np.asarray(init_dictionary, dtype=np.float64).copy())
    else:
        dictionary = _random_unit_columns(stacked.shape[0], atoms, rng)
    if sparsity is None:
        sparsity = default_sparsity(dictionary, stacked)

    result = CoupledDictionaries(
        rgb=dictionary[:rows_rgb].copy(), cube=dictionary[rows_rgb:].copy(),
        abundances=np.zeros((atoms, stacked.shape[1])),
    )
    coeffs = None
    for epoch in range(epochs):
        coeffs = sparse_code(dictionary, stacked, sparsity, max_iter=code_iter, tol=tol, warm_start=coeffs)
        dictionary = _update_dictionary(dictionary, stacked, coeffs)
        # a dead atom has all-zero coefficients, so swapping its column in
        # leaves the objective untouched while the next coding pass can use it
        dead = np.abs(coeffs).max(axis=1) < 1e-12
        if dead.any():
            residual = stacked - dictionary @ coeffs
            worst = int(np.argmax((residual * residual).sum(axis=0)))
            for atom in np.flatnonzero(dead):
                column = stacked[:, worst]
                norm = np.linalg.norm(column)
                if norm > 0.0:
                    dictionary[:, atom] = column / max(norm, 1.0)
                else:
                    dictionary[:, atom] = _random_unit_columns(stacked.shape[0], 1, rng)[:, 0]
                result.reseeded_atoms.append((epoch, int(atom)))
        result.objective_trace.append(coding_objective(dictionary, stacked, coeffs, sparsity))

    coeffs = sparse_code(dictionary, stacked, sparsity, max_iter=code_iter, tol=tol, warm_start=coeffs)
    result.objective_trace.append(coding_objective(dictionary, stacked, coeffs, sparsity))
    result.rgb = dictionary[:rows_rgb].copy()
    result.cube = dictionary[rows_rgb:].copy()
    result.abundances = coeffs
    return result


@dataclass
class FusionInit:
    rgb_dictionary: np.ndarray
    visible_dictionary: np.ndarray
    hidden_dictionary: np.ndarray
    visible_abundances: np.ndarray
    hidden_abundances: np.ndarray
    inpainted: SpectralCube


def init_fusion_state(rgb, scan_matrix: np.ndarray, selection: SelectionOperator,
                      atoms: int, sparsity: float | None = None, epochs: int = 30,
                      seed: int = 0) -> FusionInit:
    """Initialize the fusion solver's state from the subsampled scan.

    The scan is first inpainted band by band, the coupled dictionaries are
    learned against that estimate, the hidden dictionary starts as a copy of
    the visible one, and the hidden abundances start at zero.
    """
    guide = rgb if isinstance(rgb, SpectralCube) else SpectralCube(np.asarray(rgb, dtype=np.float64))
    n = guide.pixels
    if selection.total_pixels != n:
        raise DimensionMismatchError("selection does not address the guide image's pixel grid")
    bits = np.zeros(n, dtype=np.uint8)
    bits[selection.indices] = 1
    mask = SamplingMask(bits.reshape(guide.height, guide.width), selection.selected_count / n)
    embedded = selection.embed(np.asarray(scan_matrix, dtype=np.float64))
    scan_cube = SpectralCube.from_matrix(np.clip(embedded, 0.0, 1.0), guide.width, guide.height)
    inpainted = harmonic_inpaint_cube(scan_cube, mask).cube
    learned = coupled_dictionary_learn(guide.matrix, inpainted.matrix, atoms,
                                       sparsity=sparsity, epochs=epochs, seed=seed)
    return FusionInit(
        rgb_dictionary=learned.rgb,
        visible_dictionary=learned.cube,
        hidden_dictionary=learned.cube.copy(),
        visible_abundances=learned.abundances,
        hidden_abundances=np.zeros_like(learned.abundances),
        inpainted=inpainted,
    )
