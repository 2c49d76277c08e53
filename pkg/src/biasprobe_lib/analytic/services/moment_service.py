import numpy as np

from loguru import logger

from ...synthgen.models.mechanism import (
    Downstream,
    MechanismKind,
    MechanismSpec,
    Population,
    Target,
    UModel,
)
from ...synthgen.models.tables import ProbabilityTables
from ...synthgen.services.cohort_service import COVARIATE_PROB, selection_probability
from ...utils.cell_utils import cell_weights
from ...utils.errors import SingularityError
from ..models.profile import BiasProfile, MomentProfile
from .bias_service import (
    bias_confounding,
    bias_selection1,
    bias_selection2,
    bias_transportability,
)

GRID_POINTS = 1025
CHUNK_CELLS = 2048


def latent_moments(p_u, u_model: UModel) -> tuple[np.ndarray, np.ndarray]:
    """
    First and second raw moments of U given P(U=1 | x, r).

    A binary U has E[U] = E[U^2] = p_u. The continuous split-uniform U has
    E[U] = 1/4 + p_u/2 and E[U^2] = 1/12 + p_u/2.
    """
    p_u = np.asarray(p_u, dtype=float)
    if u_model is UModel.BINARY:
        return p_u, p_u
    return 0.25 + 0.5 * p_u, 1.0 / 12.0 + 0.5 * p_u


def latent_grid(p_u, u_model: UModel) -> tuple[np.ndarray, np.ndarray]:
    """
    Quadrature nodes and per-cell weights for integrating over U.

    Args:
        p_u: Per-cell P(U=1 | x, r).
        u_model (UModel): Binary or continuous U.

    Returns:
        tuple: Nodes of shape ``(n_u, 1)`` and weights of shape ``(n_u, n_cells)``
        summing to one per cell. A continuous U uses a trapezoid rule on each half of
        [0, 1], scaled by the split-uniform density.
    """
    p_u = np.atleast_1d(np.asarray(p_u, dtype=float))
    if u_model is UModel.BINARY:
        return np.array([[0.0], [1.0]]), np.stack([1.0 - p_u, p_u])

    nodes = np.linspace(0.0, 1.0, GRID_POINTS)
    mid = GRID_POINTS // 2
    h = nodes[1] - nodes[0]
    lower = np.zeros(GRID_POINTS)
    lower[: mid + 1] = h
    lower[[0, mid]] = h / 2.0
    upper = np.zeros(GRID_POINTS)
    upper[mid:] = h
    upper[[mid, -1]] = h / 2.0
    weights = lower[:, None] * 2.0 * (1.0 - p_u) + upper[:, None] * 2.0 * p_u
    return nodes[:, None], weights


def _cell_index(cells, n_cells: int) -> np.ndarray:
    if cells is None:
        return np.arange(n_cells)
    return np.atleast_1d(np.asarray(cells, dtype=np.int64))


def conditional_moments(
    spec: MechanismSpec, tables: ProbabilityTables, cells=None
) -> MomentProfile:
    """
    Closed-form P(S=1 | x), P(A=1 | x, S=1) and P(Y=1 | x, S=1, A=1) in the OS.

    The single-mechanism formulas are written in terms of the latent moments, so they
    hold for both U models. Combinations are delegated to ``brute_force_moments``.

    Args:
        spec (MechanismSpec): The mechanism of the run.
        tables (ProbabilityTables): Tables drawn for ``spec``.
        cells: A cell index, an array of indices, or None for every cell.

    Returns:
        MomentProfile: One entry per requested cell.

    Raises:
        SingularityError: If a type 2 table makes a conditioning event impossible.
    """
    if spec.is_combination:
        logger.debug("No closed form for {}, enumerating", spec.label)
        return brute_force_moments(spec, tables, cells)

    idx = _cell_index(cells, tables.n_cells)
    lo = {t: tables.low[t.index][idx] for t in Downstream}
    delta = {t: tables.high[t.index][idx] - lo[t] for t in Downstream}
    m1, m2 = latent_moments(spec.p_u_os[idx], spec.u_model)
    pS, pA, pY = lo[Downstream.S], lo[Downstream.A], lo[Downstream.Y1]
    kind = spec.kinds[0]

    if kind is MechanismKind.TRANSPORTABILITY:
        pY = lo[Downstream.Y1] + m1 * delta[Downstream.Y1]
    elif kind is MechanismKind.CONFOUNDING:
        pA, pY = _mixed(lo[Downstream.A], delta[Downstream.A], lo, delta, m1, m2)
    elif kind is MechanismKind.SELECTION_TYPE1:
        pS, pY = _mixed(lo[Downstream.S], delta[Downstream.S], lo, delta, m1, m2)
    elif kind is MechanismKind.SELECTION_TYPE2:
        table = spec.selection_table.as_array()
        py1, py0, pa = lo[Downstream.Y1], lo[Downstream.Y0], lo[Downstream.A]
        treated = table[1, 1] * py1 + table[0, 1] * (1.0 - py1)
        control = table[1, 0] * py0 + table[0, 0] * (1.0 - py0)
        pS = pa * treated + (1.0 - pa) * control
        if np.any(pS <= 0.0) or np.any(treated <= 0.0):
            raise SingularityError("Selection table makes S=1, A=1 impossible")
        pA = pa * treated / pS
        pY = table[1, 1] * py1 / treated

    return MomentProfile(pS=pS, pA=pA, pY=pY)


def _mixed(lo_v, d_v, lo, delta, m1, m2):
    # P(V=1 | x) and P(Y=1 | x, V=1) when V and Y1 both depend on U
    lo_y, d_y = lo[Downstream.Y1], delta[Downstream.Y1]
    p_v = lo_v + m1 * d_v
    joint = lo_v * lo_y + m1 * (lo_y * d_v + lo_v * d_y) + m2 * d_v * d_y
    return p_v, joint / p_v


def rct_outcome(spec: MechanismSpec, tables: ProbabilityTables, cells=None) -> np.ndarray:
    """g1(x) = E[Y | x, R=1, S=1, A=1], the treated outcome rate in the RCT."""
    idx = _cell_index(cells, tables.n_cells)
    m1_rct, _ = latent_moments(spec.p_u_rct[idx], spec.u_model)
    i = Downstream.Y1.index
    return tables.low[i][idx] + m1_rct * (tables.high[i][idx] - tables.low[i][idx])


def _enumerate(
    spec: MechanismSpec, tables: ProbabilityTables, idx: np.ndarray
) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    u, w_os = latent_grid(spec.p_u_os[idx], spec.u_model)
    _, w_rct = latent_grid(spec.p_u_rct[idx], spec.u_model)
    p_a = tables.param(Downstream.A, u, idx)
    p_y = {
        1: tables.param(Downstream.Y1, u, idx),
        0: tables.param(Downstream.Y0, u, idx),
    }

    joint = np.zeros((2, 2, idx.size))
    for a in (0, 1):
        pa = p_a if a else 1.0 - p_a
        for y in (0, 1):
            py = p_y[a] if y else 1.0 - p_y[a]
            sel = selection_probability(spec, tables, u, idx, y, a)
            joint[y, a] = np.sum(w_os * pa * py * sel, axis=0)

    p_s = joint.sum(axis=(0, 1))
    treated = joint[0, 1] + joint[1, 1]
    if np.any(p_s <= 0.0) or np.any(treated <= 0.0):
        raise SingularityError("Conditioning event S=1, A=1 has probability zero")
    g = np.sum(w_rct * p_y[1], axis=0)
    return p_s, treated / p_s, joint[1, 1] / treated, g


def _enumerate_chunks(spec, tables, cells):
    idx = _cell_index(cells, tables.n_cells)
    parts = [
        _enumerate(spec, tables, idx[start : start + CHUNK_CELLS])
        for start in range(0, idx.size, CHUNK_CELLS)
    ]
    return [np.concatenate(column) for column in zip(*parts)]


def brute_force_moments(
    spec: MechanismSpec, tables: ProbabilityTables, cells=None
) -> MomentProfile:
    """
    Moments by exact probability propagation over (u, a, y).

    Sums the generative law over u in {0, 1}, or integrates a continuous U on a
    1025-point grid, and conditions by ratio. Valid for every mechanism and combination.
    """
    p_s, p_a, p_y, _ = _enumerate_chunks(spec, tables, cells)
    return MomentProfile(pS=p_s, pA=p_a, pY=p_y)


def brute_force_bias_profile(
    spec: MechanismSpec, tables: ProbabilityTables, cells=None
) -> BiasProfile:
    """Bias profile with both g1 and f1 obtained by enumeration."""
    _, _, f, g = _enumerate_chunks(spec, tables, cells)
    return BiasProfile(g1=g, f1=f, b1=g - f)


def analytic_bias_profile(spec: MechanismSpec, tables: ProbabilityTables) -> BiasProfile:
    """
    Per-cell bias ``b1 = g1 - f1`` from the closed-form bias of the active mechanism.

    ``bias_confounding`` and ``bias_selection1`` return f1 - g1 and are negated here.
    Under a continuous U those two are replaced by the difference of closed-form moments,
    and combinations fall back to enumeration.

    Args:
        spec (MechanismSpec): The mechanism of the run.
        tables (ProbabilityTables): Tables drawn for ``spec``.

    Returns:
        BiasProfile: ``g1``, ``f1`` and ``b1`` for every cell.
    """
    if spec.is_combination:
        return brute_force_bias_profile(spec, tables)

    kind = spec.kinds[0]
    g = rct_outcome(spec, tables)
    lo = {t: tables.low[t.index] for t in Downstream}
    hi = {t: tables.high[t.index] for t in Downstream}
    binary = spec.u_model is UModel.BINARY

    if kind is MechanismKind.NO_BIAS:
        b = np.zeros(tables.n_cells)
    elif kind is MechanismKind.TRANSPORTABILITY:
        m_rct, _ = latent_moments(spec.p_u_rct, spec.u_model)
        m_os, _ = latent_moments(spec.p_u_os, spec.u_model)
        b = bias_transportability(m_rct, m_os, hi[Downstream.Y1], lo[Downstream.Y1])
    elif kind is MechanismKind.CONFOUNDING and binary:
        b = -bias_confounding(
            hi[Downstream.Y1], lo[Downstream.Y1], hi[Downstream.A], lo[Downstream.A]
        )
    elif kind is MechanismKind.SELECTION_TYPE1 and binary:
        b = -bias_selection1(
            hi[Downstream.Y1], lo[Downstream.Y1], hi[Downstream.S], lo[Downstream.S]
        )
    elif kind is MechanismKind.SELECTION_TYPE2:
        table = spec.selection_table
        b = bias_selection2(lo[Downstream.Y1], table.p11, table.p01)
    else:
        b = g - conditional_moments(spec, tables).pY

    b = np.broadcast_to(np.asarray(b, dtype=float), g.shape)
    return BiasProfile(g1=g, f1=g - b, b1=b)


def analytic_covariances(
    spec: MechanismSpec, tables: ProbabilityTables
) -> dict[Target, float]:
    """
    Population covariance of |b1(X)| with each conditional variance over OS rows.

    The S channel averages over P(x | R=0); the A channel reweights by P(S=1 | x) and the
    Y channel additionally by P(A=1 | x, S=1), matching the rows each channel is
    estimated on.

    Raises:
        ValueError: If the tables do not enumerate {0,1}^d cells.
    """
    if tables.d is None:
        raise ValueError("Covariances need tables over {0,1}^d cells")
    profile = analytic_bias_profile(spec, tables)
    moments = conditional_moments(spec, tables)
    base = cell_weights(tables.d, COVARIATE_PROB[Population.OS])
    weights = {
        Target.S: base,
        Target.A: base * moments.pS,
        Target.Y: base * moments.pS * moments.pA,
    }
    abs_b = profile.abs_bias
    result = {}
    for target, w in weights.items():
        w = w / w.sum()
        v = moments.variance(target)
        result[target] = float(np.sum(w * abs_b * v) - np.sum(w * abs_b) * np.sum(w * v))
    return result
