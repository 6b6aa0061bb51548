"""Distributed Luenberger observers over an undirected sensor graph.

Each node measures a subset of the plant outputs and cannot, on its own,
see the whole state. The node splits the state space into the part its
outputs observe and the rest, injects its own measurement on the observed
part, and leans on its neighbours for everything else through a consensus
term weighted by ``M_i(k_i)^-1``::

    dxhat_i/dt = A xhat_i + B u + L_i (y_i - H_i xhat_i)
                 + gamma * M_i^-1 * sum_j alpha_ij (xhat_j - xhat_i)

Design-time functions are pure; estimate vectors live in the simulation.
"""

import logging
from dataclasses import dataclass, field

import numpy as np

from . import smallmat as sm
from .errors import (
    DesignRejected,
    DisconnectedGraph,
    NotDetectable,
    NotHurwitz,
    NotStable,
    NumericError,
    PlacementFailed,
    ValidationError,
)

log = logging.getLogger(__name__)

STRUCTURE_TOL = 1e-10
RANK_RTOL = 1e-9


@dataclass(frozen=True)
class SensorGraph:
    adjacency: np.ndarray

    def __post_init__(self):
        adj = np.array(self.adjacency, dtype=float)
        if adj.ndim != 2 or adj.shape[0] != adj.shape[1]:
            raise ValidationError("adjacency", "must be a square matrix")
        if not np.all((adj == 0) | (adj == 1)):
            raise ValidationError("adjacency", "entries must be 0 or 1")
        if np.any(np.diag(adj) != 0):
            raise ValidationError("adjacency", "no self loops allowed")
        if not np.array_equal(adj, adj.T):
            raise ValidationError("adjacency", "graph must be undirected (symmetric)")
        object.__setattr__(self, "adjacency", adj)

    @property
    def n_nodes(self):
        return self.adjacency.shape[0]

    @classmethod
    def from_edges(cls, n_nodes, edges):
        """Build from 1-based node pairs."""
        adj = np.zeros((n_nodes, n_nodes))
        for i, j in edges:
            if not (1 <= i <= n_nodes and 1 <= j <= n_nodes) or i == j:
                raise ValidationError("edges", f"bad edge {i}-{j} for {n_nodes} nodes")
            adj[i - 1, j - 1] = adj[j - 1, i - 1] = 1.0
        return cls(adj)

    def edges(self):
        n = self.n_nodes
        return [(i + 1, j + 1) for i in range(n) for j in range(i + 1, n)
                if self.adjacency[i, j]]


def laplacian(graph):
    adj = graph.adjacency
    return np.diag(adj.sum(axis=1)) - adj


def laplacian_lambda2(graph):
    """Algebraic connectivity; raises ``DisconnectedGraph`` when it is ~0."""
    if graph.n_nodes < 2:
        raise ValueError("algebraic connectivity needs at least 2 nodes")
    lam2 = sm.sym_eigenvalues(laplacian(graph))[1]
    if lam2 <= 1e-9:
        raise DisconnectedGraph(f"sensor graph is disconnected (lambda2 = {lam2:.3g})")
    return float(lam2)


@dataclass(frozen=True)
class NodeDecomposition:
    """Orthonormal change of basis splitting observed / unobserved coordinates.

    In the new coordinates ``basis.T @ A @ basis = [[a_d, 0], [a_r, a_u]]`` and
    ``h_row @ basis = [h_d, 0]``; ``sigma`` is the unobserved dimension.
    """

    basis: np.ndarray
    a_d: np.ndarray
    a_r: np.ndarray
    a_u: np.ndarray
    h_d: np.ndarray
    sigma: int
    h_row: np.ndarray

    @property
    def n_observed(self):
        return self.basis.shape[0] - self.sigma

    def permutation(self):
        """Original (0-based) coordinate behind each basis column, if the basis
        is a signed permutation matrix; otherwise None."""
        b = self.basis
        idx = np.argmax(np.abs(b), axis=0)
        if np.allclose(np.abs(b[idx, range(b.shape[1])]), 1.0, atol=1e-12) \
                and np.allclose(np.abs(b).sum(axis=0), 1.0, atol=1e-12):
            return tuple(int(i) for i in idx)
        return None

    def residuals(self, a_mat):
        """Max deviation from the required block structure and orthonormality."""
        b = self.basis
        r = self.n_observed
        at = b.T @ a_mat @ b
        ht = self.h_row @ b
        return dict(
            orthonormal=float(np.max(np.abs(b.T @ b - np.eye(b.shape[0])))),
            h_block=float(np.max(np.abs(ht[:, r:]), initial=0.0)),
            a_block=float(np.max(np.abs(at[:r, r:]), initial=0.0)),
        )


def _gram_schmidt(rows, candidates_first=()):
    """Orthonormal vectors spanning ``rows``, kept in input order."""
    basis = []
    for v in list(candidates_first) + list(rows):
        v = np.asarray(v, dtype=float)
        norm0 = np.linalg.norm(v)
        if norm0 == 0:
            continue
        w = v.copy()
        for _ in range(2):  # second pass restores orthogonality lost to rounding
            for q in basis:
                w -= (q @ w) * q
        if np.linalg.norm(w) > RANK_RTOL * norm0:
            basis.append(w / np.linalg.norm(w))
    return basis


def decompose(model, h_row):
    a = model.a_mat if hasattr(model, "a_mat") else sm.as_matrix(model)
    h_row = sm.as_matrix(h_row, "h_row")
    n = a.shape[0]
    if not np.any(h_row):
        raise ValidationError("h_row", "output matrix must be nonzero")

    obs_rows = []
    block = h_row
    for _ in range(n):
        obs_rows.extend(block)
        block = block @ a
    observed = _gram_schmidt(obs_rows)
    r = len(observed)
    complement = _gram_schmidt(np.eye(n), candidates_first=observed)[r:]
    basis = np.column_stack(observed + complement)
    sigma = n - r

    at = basis.T @ a @ basis
    ht = h_row @ basis
    decomp = NodeDecomposition(basis=basis, a_d=at[:r, :r], a_r=at[r:, :r],
                               a_u=at[r:, r:], h_d=ht[:, :r], sigma=sigma,
                               h_row=h_row)
    res = decomp.residuals(a)
    scale = max(1.0, float(np.max(np.abs(a))))
    if max(res.values()) > STRUCTURE_TOL * scale:
        raise NumericError(f"decomposition residuals too large: {res}")
    if sigma and not sm.is_hurwitz_matrix(decomp.a_u):
        raise NotDetectable("unobservable block of (A, H_i) is not Hurwitz")
    return decomp


def _ackermann(a, row, poles):
    """Single-output gain column placing ``a - l row`` at ``poles``."""
    n = a.shape[0]
    obs = np.vstack([row @ np.linalg.matrix_power(a, k) for k in range(n)])
    e_last = np.zeros(n)
    e_last[-1] = 1.0
    try:
        col = sm.lin_solve(obs, e_last)
    except sm.SingularMatrix as exc:
        raise PlacementFailed("output row does not observe the pair") from exc
    return sm.polyval_matrix(np.poly(poles).real, a) @ col


def place_gain(a, h, poles):
    """Injection gain giving ``a - l h`` the characteristic roots ``poles``.

    The first output row places poles on the subspace it observes (Ackermann's
    formula on the dual system); the remaining rows recursively handle the
    unobserved remainder. The closed loop stays block lower triangular in the
    intermediate basis, so poles placed earlier are not disturbed.
    """
    a = sm.as_matrix(a, "a")
    h = sm.as_matrix(h, "h")
    n, p = a.shape[0], h.shape[0]
    poles = np.asarray(poles, dtype=float).ravel()
    if poles.size != n:
        raise PlacementFailed(f"need {n} poles, got {poles.size}")
    if n == 0:
        return np.zeros((0, p))
    obs_rows = [h[0] @ np.linalg.matrix_power(a, k) for k in range(n)]
    observed = _gram_schmidt(obs_rows)
    r = len(observed)
    if r < n and p == 1:
        raise PlacementFailed("the pair is not observable")
    basis = np.column_stack(observed + _gram_schmidt(np.eye(n), candidates_first=observed)[r:])
    at = basis.T @ a @ basis
    ht = h @ basis
    gain = np.zeros((n, p))
    if r:
        gain[:r, 0] = _ackermann(at[:r, :r], ht[0:1, :r], poles[:r])
    if r < n:
        gain[r:, 1:] = place_gain(at[r:, r:], ht[1:, r:], poles[r:])
    return basis @ gain


def default_poles(n):
    return -np.arange(1.0, n + 1.0)


def validate_or_design_lid(decomp, l_d_given=None, poles=None):
    """Return an injection gain making ``a_d - l_d h_d`` Hurwitz.

    A supplied gain is checked and returned unchanged or rejected with
    ``NotHurwitz``; without one, a gain is placed at ``poles``.
    """
    a_d, h_d = decomp.a_d, decomp.h_d
    r = a_d.shape[0]
    if r == 0:
        return np.zeros((0, h_d.shape[0]))
    if l_d_given is not None:
        l_d = np.array(l_d_given, dtype=float).reshape(r, h_d.shape[0])
        f = a_d - l_d @ h_d
        cp = sm.char_poly(f)
        if not sm.is_hurwitz(cp):
            tr = float(np.trace(f))
            raise NotHurwitz(
                f"a_d - l_d h_d is not Hurwitz (trace = {tr:.6g}, "
                f"char poly = {np.array2string(cp, precision=6)})",
                char_poly=cp, trace=tr)
        return l_d
    poles = default_poles(r) if poles is None else np.asarray(poles, dtype=float)
    l_d = place_gain(a_d, h_d, poles)
    if not sm.is_hurwitz_matrix(a_d - l_d @ h_d):
        raise PlacementFailed("placed gain is not stabilizing")
    return l_d


def solve_weighting(decomp, l_d):
    """Solve ``F^T M + M F = -I`` with ``F = a_d - l_d h_d``."""
    r = decomp.n_observed
    if r == 0:
        return np.zeros((0, 0))
    f = decomp.a_d - l_d @ decomp.h_d
    m_d = sm.lyap_solve(f, np.eye(r))
    if sm.sym_eigenvalues(m_d)[0] <= 0:
        raise NotStable("Lyapunov weighting is not positive definite")
    return m_d


def assemble_full_gains(decomp, l_d, m_d, k_weight):
    """Lift node gains back to plant coordinates.

    Returns ``(l_full, m_full, m_full_inv)`` where
    ``m_full = basis @ blockdiag(k m_d, I) @ basis.T``.
    """
    if k_weight < 1:
        raise ValidationError("k_weight", "observer weights must be >= 1")
    b = decomp.basis
    n, r, sigma = b.shape[0], decomp.n_observed, decomp.sigma
    p_i = decomp.h_d.shape[0]
    l_full = b @ np.vstack([np.asarray(l_d).reshape(r, p_i), np.zeros((sigma, p_i))])
    mid = np.eye(n)
    mid_inv = np.eye(n)
    if r:
        mid[:r, :r] = k_weight * m_d
        mid_inv[:r, :r] = sm.inv(k_weight * m_d)
    return l_full, b @ mid @ b.T, b @ mid_inv @ b.T


@dataclass(frozen=True)
class NodeObserverDesign:
    decomp: NodeDecomposition
    l_d: np.ndarray
    m_d: np.ndarray
    k_weight: float
    l_full: np.ndarray
    m_full: np.ndarray
    m_full_inv: np.ndarray
    gain_source: str = "given"       # "given" or "placed"
    rejection: NotHurwitz = None     # set when a supplied gain was replaced

    @property
    def lyap_residual(self):
        if self.decomp.n_observed == 0:
            return 0.0
        f = self.decomp.a_d - self.l_d @ self.decomp.h_d
        return sm.lyap_residual(f, self.m_d, np.eye(self.decomp.n_observed))

    def identity_residual(self, a_mat):
        """Residual of M_i(k)(A - L_i H_i) against its block-coordinate form."""
        d = self.decomp
        b, r = d.basis, d.n_observed
        lhs = self.m_full @ (a_mat - self.l_full @ d.h_row)
        mid = np.eye(b.shape[0])
        mid[:r, :r] = self.k_weight * self.m_d
        blocks = np.zeros_like(mid)
        blocks[:r, :r] = d.a_d - self.l_d @ d.h_d
        blocks[r:, :r] = d.a_r
        blocks[r:, r:] = d.a_u
        rhs = b @ mid @ blocks @ b.T
        return float(np.max(np.abs(lhs - rhs)))


def design_node(model, h_row, k_weight, l_d_given=None, reject_policy="place",
                poles=None, label="node"):
    """Decompose, pick or validate L_id, solve M_id, and lift to full gains."""
    decomp = decompose(model, h_row)
    rejection = None
    source = "given" if l_d_given is not None else "placed"
    try:
        l_d = validate_or_design_lid(decomp, l_d_given, poles)
    except NotHurwitz as exc:
        if reject_policy != "place":
            raise DesignRejected(f"{label}: supplied L_d rejected: {exc}") from exc
        log.warning("%s: supplied L_d rejected (%s); placing poles instead", label, exc)
        rejection = exc
        source = "placed"
        l_d = validate_or_design_lid(decomp, None, poles)
    m_d = solve_weighting(decomp, l_d)
    l_full, m_full, m_full_inv = assemble_full_gains(decomp, l_d, m_d, k_weight)
    return NodeObserverDesign(decomp=decomp, l_d=l_d, m_d=m_d, k_weight=float(k_weight),
                              l_full=l_full, m_full=m_full, m_full_inv=m_full_inv,
                              gain_source=source, rejection=rejection)


@dataclass(frozen=True)
class GainCondition:
    gamma_coupling: float
    eps_bar: float
    beta: tuple
    beta_bar: float
    beta_sum: float
    lambda2: float
    theta: float
    k_weights: tuple
    satisfied: bool
    clauses: dict = field(default_factory=dict)


def theta_of(eps_bar):
    if not 0 < eps_bar <= np.sqrt(2):
        raise ValidationError("eps_bar", "must lie in (0, sqrt(2)]")
    return 0.5 * (1.0 - (1.0 - eps_bar**2 / 2.0) ** 2)


def node_beta(decomp):
    """2 ||a_r||^2 + ||a_u^T + a_u|| with induced 2-norms (0 when sigma = 0)."""
    if decomp.sigma == 0:
        return 0.0
    return 2.0 * sm.spectral_norm(decomp.a_r) ** 2 + sm.spectral_norm(decomp.a_u.T + decomp.a_u)


def check_gain_condition(designs, graph, gamma_coupling, eps_bar):
    """Sufficient condition on (k_i, gamma) for the coupled error to converge."""
    theta = theta_of(eps_bar)
    lam2 = laplacian_lambda2(graph)
    betas = tuple(node_beta(d.decomp) for d in designs)
    beta_bar = max(betas)
    beta_sum = sum(betas)
    n = len(designs)
    ks = tuple(d.k_weight for d in designs)
    margin = gamma_coupling - beta_bar / (2.0 * lam2)
    rhs = beta_bar**2 * n**2 / (2.0 * lam2 * theta)
    clauses = {
        "k_ge_1": all(k >= 1 for k in ks),
        "gamma_gt_bound": margin > 0,
        "product": all((k - beta_sum / theta) * margin > rhs for k in ks),
    }
    return GainCondition(gamma_coupling=float(gamma_coupling), eps_bar=float(eps_bar),
                         beta=betas, beta_bar=beta_bar, beta_sum=beta_sum, lambda2=lam2,
                         theta=theta, k_weights=ks, satisfied=all(clauses.values()),
                         clauses=clauses)


@dataclass(frozen=True)
class ObserverConfig:
    """Observer section of a scenario, before any design is attempted."""

    k_weights: tuple = (3.0, 4.5)
    l_d: tuple = ((3.0, 1.0), (-1.0, 3.0))     # per node, None = place poles
    gamma: float = 6.0
    eps_bar: float = 1.0
    edges: tuple = ((1, 2),)
    node_outputs: tuple = ((1,), (2,))           # 1-based output indices per node
    reject_policy: str = "place"                 # or "error"
    poles: tuple = None                          # None = (-1, -2, ...)
    feedforward: bool = True

    def __post_init__(self):
        n = len(self.node_outputs)
        if n == 0:
            raise ValidationError("node_outputs", "need at least one node")
        if len(self.k_weights) != n:
            raise ValidationError("k", f"expected {n} weights, got {len(self.k_weights)}")
        if any(k < 1 for k in self.k_weights):
            raise ValidationError("k", "observer weights must be >= 1")
        if len(self.l_d) != n:
            raise ValidationError("l_d", f"expected {n} entries, got {len(self.l_d)}")
        if self.reject_policy not in ("place", "error"):
            raise ValidationError("reject_policy", "must be 'place' or 'error'")
        if not np.isfinite(self.gamma) or self.gamma < 0:
            raise ValidationError("gamma", "coupling gain must be finite and >= 0")
        theta_of(self.eps_bar)
        flat = sorted(o for outs in self.node_outputs for o in outs)
        if not flat or flat != list(range(1, len(flat) + 1)):
            raise ValidationError("node_outputs",
                                  "outputs must be partitioned across nodes (each used once)")

    @property
    def n_nodes(self):
        return len(self.node_outputs)

    def graph(self):
        return SensorGraph.from_edges(self.n_nodes, self.edges)


@dataclass(frozen=True)
class ObserverBank:
    designs: tuple
    graph: SensorGraph
    gamma_coupling: float
    output_rows: tuple          # 0-based plant output rows seen by each node
    feedforward: bool = True

    @property
    def n_nodes(self):
        return len(self.designs)

    def stacked_system(self, model):
        """Matrices of ``dX/dt = a X + l y + b u`` for all stacked estimates."""
        n = model.a_mat.shape[0]
        big_n = self.n_nodes
        p = model.c_mat.shape[0]
        l = np.zeros((n * big_n, p))
        for i, (d, rows) in enumerate(zip(self.designs, self.output_rows)):
            l[i * n:(i + 1) * n, list(rows)] = d.l_full
        b = np.tile(model.b_mat, (big_n, 1)) if self.feedforward \
            else np.zeros((n * big_n, model.b_mat.shape[1]))
        return error_dynamics_matrix(self, model), l, b


def design_bank(model, cfg):
    """Run the node pipeline for every node and return the bank."""
    rows = tuple(tuple(o - 1 for o in outs) for outs in cfg.node_outputs)
    if max(max(r) for r in rows) >= model.c_mat.shape[0]:
        raise ValidationError("node_outputs", "output index exceeds plant outputs")
    graph = cfg.graph()
    if graph.n_nodes > 1:
        laplacian_lambda2(graph)
    designs = []
    for i, (r, k, l_d) in enumerate(zip(rows, cfg.k_weights, cfg.l_d)):
        designs.append(design_node(model, model.c_mat[list(r)], k, l_d_given=l_d,
                                   reject_policy=cfg.reject_policy, poles=cfg.poles,
                                   label=f"node {i + 1}"))
    return ObserverBank(designs=tuple(designs), graph=graph, gamma_coupling=cfg.gamma,
                        output_rows=rows, feedforward=cfg.feedforward)


def observer_rhs(bank, model, estimates, ys, u):
    """Per-node estimate derivatives.

    ``ys[i]`` is the measurement vector of node i; ``u`` is the deviation input.
    """
    a, b = model.a_mat, model.b_mat
    drive = b @ np.asarray(u, dtype=float) if bank.feedforward else 0.0
    adj = bank.graph.adjacency
    out = []
    for i, d in enumerate(bank.designs):
        x_i = np.asarray(estimates[i], dtype=float)
        innovation = np.atleast_1d(ys[i]) - d.decomp.h_row @ x_i
        consensus = sum(adj[i, j] * (np.asarray(estimates[j]) - x_i)
                        for j in range(bank.n_nodes))
        out.append(a @ x_i + drive + d.l_full @ innovation
                   + bank.gamma_coupling * d.m_full_inv @ consensus)
    return out


def error_dynamics_matrix(bank, model):
    """``blockdiag(A - L_i H_i) - gamma blockdiag(M_i^-1) (Lap kron I)``."""
    a = model.a_mat
    n = a.shape[0]
    big_n = bank.n_nodes
    lam = np.zeros((n * big_n, n * big_n))
    m_inv = np.zeros_like(lam)
    for i, d in enumerate(bank.designs):
        s = slice(i * n, (i + 1) * n)
        lam[s, s] = a - d.l_full @ d.decomp.h_row
        m_inv[s, s] = d.m_full_inv
    return lam - bank.gamma_coupling * m_inv @ np.kron(laplacian(bank.graph), np.eye(n))
