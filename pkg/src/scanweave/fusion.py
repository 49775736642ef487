"""Constrained alternating optimizer fusing the RGB guide into the scan.

The reconstruction splits into a visible component (shared abundances with
the RGB image, guide-adaptive smoothness) and a hidden component (plain
smoothness). Five projected-gradient blocks (visible/hidden abundances and
the three dictionaries) are cycled with backtracking line searches, so the
objective trace is non-increasing by construction; after every step the
abundances are projected per pixel onto the simplex (nonnegative, visible +
hidden summing to one) and the dictionary entries are clamped to [0, 1].
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field, fields, replace

import numpy as np
from scipy import sparse

from .core import SelectionOperator, SpectralCube, _as_matrix
from .dictlearn import init_fusion_state
from .errors import DimensionMismatchError, ParameterError
from .metrics import rmse


@dataclass(frozen=True)
class AdaptiveTVOperator:
    """First-order difference operator over the 4-neighbor edge set.

    Each edge contributes ``sqrt(weight) * (value[p] - value[q])`` to one
    output column, so the squared Frobenius norm of ``matrix @ operator`` is
    the weighted sum of squared neighbor differences. Weights follow the
    guide image: identical neighbors get weight 1, strong guide edges decay
    exponentially.
    """

    down_weights: np.ndarray
    right_weights: np.ndarray
    operator: sparse.csr_matrix
    gram: sparse.csr_matrix

    @staticmethod
    def _assemble(down: np.ndarray, right: np.ndarray) -> tuple[sparse.csr_matrix, sparse.csr_matrix]:
        height = down.shape[0] + 1
        width = down.shape[1]
        n = height * width
        di, dj = np.meshgrid(np.arange(height - 1), np.arange(width), indexing="ij")
        down_p = (di * width + dj).reshape(-1)
        down_q = down_p + width
        ri, rj = np.meshgrid(np.arange(height), np.arange(width - 1), indexing="ij")
        right_p = (ri * width + rj).reshape(-1)
        right_q = right_p + 1
        p = np.concatenate([down_p, right_p])
        q = np.concatenate([down_q, right_q])
        w = np.sqrt(np.concatenate([down.reshape(-1), right.reshape(-1)]))
        edges = np.arange(p.size)
        op = sparse.coo_matrix(
            (np.concatenate([w, -w]), (np.concatenate([p, q]), np.concatenate([edges, edges]))),
            shape=(n, p.size),
        ).tocsr()
        return op, (op @ op.T).tocsr()

    @classmethod
    def from_guide(cls, guide, edge_sensitivity: float) -> "AdaptiveTVOperator":
        if edge_sensitivity <= 0.0:
            raise ParameterError("edge sensitivity must be positive")
        data = guide.data if isinstance(guide, SpectralCube) else np.asarray(guide, dtype=np.float64)
        if data.ndim == 2:
            data = data[:, :, None]
        down = np.exp(-edge_sensitivity * ((data[:-1] - data[1:]) ** 2).sum(axis=2))
        right = np.exp(-edge_sensitivity * ((data[:, :-1] - data[:, 1:]) ** 2).sum(axis=2))
        op, gram = cls._assemble(down, right)
        return cls(down, right, op, gram)

    @classmethod
    def unweighted(cls, height: int, width: int) -> "AdaptiveTVOperator":
        down = np.ones((height - 1, width))
        right = np.ones((height, width - 1))
        op, gram = cls._assemble(down, right)
        return cls(down, right, op, gram)

    def apply(self, matrix: np.ndarray) -> np.ndarray:
        return matrix @ self.operator

    def penalty(self, matrix: np.ndarray) -> float:
        d = matrix @ self.operator
        return float((d * d).sum())

    def gram_apply(self, matrix: np.ndarray) -> np.ndarray:
        return (self.gram @ matrix.T).T


@dataclass
class FusionConfig:
    """Solver knobs; the defaults follow the reference operating point."""

    atoms: int = 200
    tv_visible: float = 0.1
    tv_hidden: float = 0.1
    edge_sensitivity: float = 16.0
    max_outer: int = 100
    rel_tol: float = 1e-5
    patience: int = 3
    init_epochs: int = 30
    sparsity: float | None = None
    code_iter: int = 120
    max_backtracks: int = 60
    seed: int = 0

    def __post_init__(self):
        if self.atoms < 1 or self.max_outer < 0 or self.patience < 1:
            raise ParameterError("atoms/max_outer/patience must be positive")
        for name in ("tv_visible", "tv_hidden", "edge_sensitivity", "rel_tol"):
            if getattr(self, name) <= 0.0:
                raise ParameterError(f"{name} must be positive")

    @classmethod
    def from_file(cls, path) -> "FusionConfig":
        """Parse a flat ``key = value`` text file mirroring the field names."""
        values = {}
        types = {f.name: f.type for f in fields(cls)}
        with open(path, "r", encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, start=1):
                text = line.split("#", 1)[0].strip()
                if not text:
                    continue
                if "=" not in text:
                    raise ParameterError(f"{path}:{lineno}: expected 'key = value'")
                key, _, raw = text.partition("=")
                key = key.strip()
                raw = raw.strip()
                if key not in types:
                    raise ParameterError(f"{path}:{lineno}: unknown option {key!r}")
                if key in ("atoms", "max_outer", "patience", "init_epochs", "code_iter", "max_backtracks", "seed"):
                    values[key] = int(raw)
                elif key == "sparsity":
                    values[key] = None if raw.lower() == "auto" else float(raw)
                else:
                    values[key] = float(raw)
        return cls(**values)


@dataclass
class FusionState:
    visible_dict: np.ndarray
    hidden_dict: np.ndarray
    rgb_dict: np.ndarray
    visible_abund: np.ndarray
    hidden_abund: np.ndarray

    def copy(self) -> "FusionState":
        return FusionState(*(getattr(self, f.name).copy() for f in fields(self)))


def _project_columns_simplex(matrix: np.ndarray) -> np.ndarray:
    """Euclidean projection of every column onto {x >= 0, sum(x) = 1}."""
    srt = -np.sort(-matrix, axis=0)
    css = np.cumsum(srt, axis=0) - 1.0
    counts = np.arange(1, matrix.shape[0] + 1, dtype=np.float64)[:, None]
    active = srt - css / counts > 0.0
    rho = active.sum(axis=0) - 1
    tau = css[rho, np.arange(matrix.shape[1])] / (rho + 1.0)
    return np.maximum(matrix - tau, 0.0)


def project_constraints(visible_abund: np.ndarray, hidden_abund: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Per pixel, project the stacked abundance column onto the unit simplex."""
    av = np.asarray(visible_abund, dtype=np.float64)
    anv = np.asarray(hidden_abund, dtype=np.float64)
    if av.shape != anv.shape:
        raise DimensionMismatchError("visible/hidden abundance shapes differ")
    stacked = _project_columns_simplex(np.vstack([av, anv]))
    m = av.shape[0]
    return stacked[:m], stacked[m:]


def clamp_dictionary(d: np.ndarray) -> np.ndarray:
    return np.clip(d, 0.0, 1.0)


def objective_terms(state: FusionState, scan: np.ndarray, guide_mat: np.ndarray,
                    selection: SelectionOperator, visible_tv: AdaptiveTVOperator,
                    hidden_tv: AdaptiveTVOperator, cfg: FusionConfig):
    """The four weighted objective terms: scan fit, both smoothness penalties, RGB fit."""
    visible_cols = state.visible_dict @ selection.take(state.visible_abund)
    hidden_cols = state.hidden_dict @ selection.take(state.hidden_abund)
    r = scan - visible_cols - hidden_cols
    fid_scan = float((r * r).sum())
    tv_vis = cfg.tv_visible * visible_tv.penalty(state.visible_dict @ state.visible_abund)
    tv_hid = cfg.tv_hidden * hidden_tv.penalty(state.hidden_dict @ state.hidden_abund)
    e = guide_mat - state.rgb_dict @ state.visible_abund
    fid_rgb = float((e * e).sum())
    return fid_scan + tv_vis + tv_hid + fid_rgb, (fid_scan, tv_vis, tv_hid, fid_rgb)


def objective(state: FusionState, scan: np.ndarray, guide_mat: np.ndarray,
              selection: SelectionOperator, visible_tv: AdaptiveTVOperator,
              hidden_tv: AdaptiveTVOperator, cfg: FusionConfig) -> float:
    return objective_terms(state, scan, guide_mat, selection, visible_tv, hidden_tv, cfg)[0]


def constraint_violation(state: FusionState) -> float:
    """Largest violation of the range/nonnegativity/sum-to-one constraints."""
    worst = 0.0
    for d in (state.visible_dict, state.hidden_dict, state.rgb_dict):
        worst = max(worst, float(max(0.0 - d.min(), d.max() - 1.0, 0.0)))
    worst = max(worst, float(max(-state.visible_abund.min(), 0.0)))
    worst = max(worst, float(max(-state.hidden_abund.min(), 0.0)))
    sums = state.visible_abund.sum(axis=0) + state.hidden_abund.sum(axis=0)
    worst = max(worst, float(np.abs(sums - 1.0).max()))
    return worst


@dataclass
class FusionResult:
    reconstruction: np.ndarray
    visible: np.ndarray
    hidden: np.ndarray
    trace: list[dict]
    state: FusionState
    stalled: bool = False

    def cube(self, width: int, height: int) -> SpectralCube:
        return SpectralCube.from_matrix(self.reconstruction, width, height, clamp=True)


def _gradients(state: FusionState, block: str, scan, guide_mat, selection,
               visible_tv, hidden_tv, cfg) -> np.ndarray:
    r_small = scan - state.visible_dict @ selection.take(state.visible_abund) \
        - state.hidden_dict @ selection.take(state.hidden_abund)
    r_full = selection.embed(r_small)
    if block == "visible_abund":
        vv = state.visible_dict @ state.visible_abund
        e = guide_mat - state.rgb_dict @ state.visible_abund
        return (-2.0 * state.visible_dict.T @ r_full
                + 2.0 * cfg.tv_visible * state.visible_dict.T @ visible_tv.gram_apply(vv)
                - 2.0 * state.rgb_dict.T @ e)
    if block == "hidden_abund":
        vnv = state.hidden_dict @ state.hidden_abund
        return (-2.0 * state.hidden_dict.T @ r_full
                + 2.0 * cfg.tv_hidden * state.hidden_dict.T @ hidden_tv.gram_apply(vnv))
    if block == "visible_dict":
        vv = state.visible_dict @ state.visible_abund
        return (-2.0 * r_full @ state.visible_abund.T
                + 2.0 * cfg.tv_visible * visible_tv.gram_apply(vv) @ state.visible_abund.T)
    if block == "hidden_dict":
        vnv = state.hidden_dict @ state.hidden_abund
        return (-2.0 * r_full @ state.hidden_abund.T
                + 2.0 * cfg.tv_hidden * hidden_tv.gram_apply(vnv) @ state.hidden_abund.T)
    if block == "rgb_dict":
        e = guide_mat - state.rgb_dict @ state.visible_abund
        return -2.0 * e @ state.visible_abund.T
    raise ParameterError(f"unknown block {block!r}")


def _condition_init(state: FusionState) -> FusionState:
    """Fit-preserving reparameterization before the feasibility projection.

    The l1 coding is sign-symmetric, so atoms with negative mass are flipped
    into the nonnegative orthant, and one global dictionary-down /
    abundance-up rescale lifts the per-pixel coefficient sums to about 1.
    Without this, columns summing below 1 would receive uniform mass from the
    simplex projection, seeding the hidden component everywhere at once.
    """
    out = state.copy()
    stacked_mass = out.visible_dict.sum(axis=0) + out.rgb_dict.sum(axis=0)
    flip = stacked_mass < 0.0
    for d in (out.visible_dict, out.hidden_dict, out.rgb_dict):
        d[:, flip] *= -1.0
    out.visible_abund[flip, :] *= -1.0
    out.hidden_abund[flip, :] *= -1.0
    # an atom whose RGB column is (near) dead explains nothing that appears
    # in the guide image; leaving it in the visible dictionary would smuggle
    # hidden material through the visible component, so the visible side of
    # the pair starts empty and only the hidden copy keeps the spectrum
    rgb_norms = np.linalg.norm(out.rgb_dict, axis=0)
    invisible = rgb_norms < 0.05 * max(rgb_norms.max(), 1e-12)
    out.visible_abund[invisible, :] = 0.0
    out.visible_dict[:, invisible] = 0.0
    out.rgb_dict[:, invisible] = 0.0
    positive_sums = np.clip(out.visible_abund, 0.0, None).sum(axis=0) \
        + np.clip(out.hidden_abund, 0.0, None).sum(axis=0)
    scale = float(np.quantile(positive_sums, 0.05))
    scale = min(scale, 1.0)
    if scale > 1e-6:
        out.visible_abund /= scale
        out.hidden_abund /= scale
        out.visible_dict *= scale
        out.hidden_dict *= scale
        out.rgb_dict *= scale
    return out


def _apply_step(state: FusionState, block: str, grad: np.ndarray, step: float) -> FusionState:
    out = state.copy()
    if block == "visible_abund":
        out.visible_abund, out.hidden_abund = project_constraints(
            state.visible_abund - step * grad, state.hidden_abund)
    elif block == "hidden_abund":
        out.visible_abund, out.hidden_abund = project_constraints(
            state.visible_abund, state.hidden_abund - step * grad)
    elif block == "visible_dict":
        out.visible_dict = clamp_dictionary(state.visible_dict - step * grad)
    elif block == "hidden_dict":
        out.hidden_dict = clamp_dictionary(state.hidden_dict - step * grad)
    elif block == "rgb_dict":
        out.rgb_dict = clamp_dictionary(state.rgb_dict - step * grad)
    return out


_BLOCKS = ("visible_abund", "hidden_abund", "visible_dict", "hidden_dict", "rgb_dict")


def fuse_inpaint(scan: np.ndarray, selection: SelectionOperator, guide,
                 cfg: FusionConfig | None = None, truth=None,
                 init_state: FusionState | None = None) -> FusionResult:
    """Run the full fusion reconstruction on a subsampled scan.

    ``scan`` holds the sampled pixel columns (bands x selected), ``guide`` the
    full-resolution RGB cube. The objective value after every outer iteration
    is recorded in the trace; a candidate block step is accepted only if it
    does not increase the objective, so the trace is non-increasing. When
    ``truth`` is given, each trace row also carries the error against it.
    ``init_state`` bypasses the built-in initialization (it is still projected
    to the feasible set first).
    """
    if cfg is None:
        cfg = FusionConfig()
    guide_cube = guide if isinstance(guide, SpectralCube) else SpectralCube(np.asarray(guide, dtype=np.float64))
    guide_mat = guide_cube.matrix
    scan = np.asarray(scan, dtype=np.float64)
    if scan.shape[1] != selection.selected_count:
        raise DimensionMismatchError("scan column count does not match the selection")
    truth_mat = None if truth is None else _as_matrix(truth)

    if init_state is None:
        init = init_fusion_state(guide_cube, scan, selection, cfg.atoms,
                                 sparsity=cfg.sparsity, epochs=cfg.init_epochs, seed=cfg.seed)
        init_state = FusionState(
            visible_dict=init.visible_dictionary,
            hidden_dict=init.hidden_dictionary,
            rgb_dict=init.rgb_dictionary,
            visible_abund=init.visible_abundances,
            hidden_abund=init.hidden_abundances,
        )
    conditioned = _condition_init(init_state)
    av, anv = project_constraints(conditioned.visible_abund, conditioned.hidden_abund)
    state = FusionState(
        visible_dict=clamp_dictionary(conditioned.visible_dict),
        hidden_dict=clamp_dictionary(conditioned.hidden_dict),
        rgb_dict=clamp_dictionary(conditioned.rgb_dict),
        visible_abund=av,
        hidden_abund=anv,
    )
    visible_tv = AdaptiveTVOperator.from_guide(guide_cube, cfg.edge_sensitivity)
    hidden_tv = AdaptiveTVOperator.unweighted(guide_cube.height, guide_cube.width)

    def full_objective(s: FusionState):
        return objective_terms(s, scan, guide_mat, selection, visible_tv, hidden_tv, cfg)

    trace: list[dict] = []

    def record(iteration: int, total: float, terms) -> None:
        row = {
            "iteration": iteration,
            "objective": total,
            "fidelity_scan": terms[0],
            "tv_visible": terms[1],
            "tv_hidden": terms[2],
            "fidelity_rgb": terms[3],
        }
        if truth_mat is not None:
            estimate = np.clip(state.visible_dict @ state.visible_abund
                               + state.hidden_dict @ state.hidden_abund, 0.0, 1.0)
            row["rmse"] = rmse(estimate, truth_mat)
        trace.append(row)

    current, terms = full_objective(state)
    record(0, current, terms)
    steps = {block: 1e-2 for block in _BLOCKS}
    stall_count = 0
    stalled = False
    for iteration in range(1, cfg.max_outer + 1):
        moved = False
        for block in _BLOCKS:
            grad = _gradients(state, block, scan, guide_mat, selection, visible_tv, hidden_tv, cfg)
            t = steps[block]
            for _ in range(cfg.max_backtracks):
                candidate = _apply_step(state, block, grad, t)
                cand_obj, cand_terms = full_objective(candidate)
                if cand_obj <= current:
                    if cand_obj < current:
                        moved = True
                    state, current, terms = candidate, cand_obj, cand_terms
                    steps[block] = t * 2.0
                    break
                t *= 0.5
            else:
                steps[block] = max(t, 1e-18)
        record(iteration, current, terms)
        previous = trace[-2]["objective"]
        rel_drop = 0.0 if previous == 0.0 else (previous - current) / abs(previous)
        stall_count = stall_count + 1 if rel_drop < cfg.rel_tol else 0
        if not moved:
            stalled = True
            break
        if stall_count >= cfg.patience:
            break

    visible = state.visible_dict @ state.visible_abund
    hidden = state.hidden_dict @ state.hidden_abund
    return FusionResult(visible + hidden, visible, hidden, trace, state, stalled)


def write_trace_csv(trace: list[dict], path) -> None:
    columns = ["iteration", "objective", "fidelity_scan", "tv_visible", "tv_hidden", "fidelity_rgb"]
    if trace and "rmse" in trace[0]:
        columns.append("rmse")
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(columns)
        for row in trace:
            writer.writerow([row["iteration"]] + [f"{row[c]:.12g}" for c in columns[1:]])
