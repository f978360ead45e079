"""Augmented-Lagrangian max-flow solver for convex multiclass segmentation.

Minimizes, over relaxed labelings u : V -> unit simplex,

    E(u) = sum_i sum_x C_i(x) u_i(x) + sum_i TV_w(u_i)  (+ size penalty)

through its max-flow dual: source flows p_s(x), per-class sink flows
p_i(x) <= C_i(x), per-class edge flows |q_i(x,y)| <= 1 and size multipliers
0 <= rho_i^1, rho_i^2 <= gamma, with u acting as the Lagrange multiplier of
the per-node flow conservation

    (div q_i - p_s + p_i)(x) = rho_i^1 - rho_i^2 .

Each iteration runs six sub-steps (all closed-form except the projected
gradient ascent on q):

    q_i   <- Pi( q_i + c grad(div q_i - F_i) ),   F_i = p_s - p_i + u_i/c - rho_i^2 + rho_i^1
    p_s   <- mean_i G_i + 1/(c n),                G_i = p_i + div q_i - u_i/c + rho_i^2 - rho_i^1
    p_i   <- min(H_i, C_i),                       H_i = p_s - div q_i + u_i/c - rho_i^2 + rho_i^1
    rho^1 <- clamp( mean_x(-J_i) + S^l_i/(c N), 0, gamma )
    rho^2 <- clamp( mean_x(-M_i) - S^u_i/(c N), 0, gamma )
    u_i   <- u_i - c (div q_i - p_s + p_i + rho_i^2 - rho_i^1)

Class sizes ||u_i|| are node counts sum_x u_i(x).  gamma = 0 disables the
rho steps entirely, finite gamma charges a piecewise-linear penalty per unit
of violation, gamma = inf (exact / interval modes) drops the upper clamp and
enforces the bounds exactly at optimum.

The closed-form p_s maximization couples all classes, hence the mean over
the per-class G_i.  SolverParams.ps_order chooses whether p_s is refreshed
from the previous sink flows ("pre_p", the printed sub-step order above) or
from the freshly updated ones ("post_p"); both reach the same saddle point
and the duality gap test covers both.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .calculus import divergence_operator, total_variation
from .errors import (
    ConfigError,
    DataError,
    InfeasibleSizeError,
    SolverDivergenceError,
)
from .graph import Graph

DEFAULT_ETA = 500.0


# ---------------------------------------------------------------------------
# Problem specification
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SizeSpec:
    """Class-size handling: none, exact counts, hard interval, or penalty.

    lower/upper are per-class bounds on the class node counts; gamma is the
    penalty slope (np.inf for the hard modes, 0.0 when mode == 'none').
    """

    mode: str = "none"
    lower: np.ndarray | None = None
    upper: np.ndarray | None = None
    gamma: float = 0.0

    def __post_init__(self):
        if self.mode not in ("none", "exact", "interval", "penalty"):
            raise ConfigError(f"unknown size mode {self.mode!r}")
        if self.mode == "none":
            return
        lo = np.asarray(self.lower, dtype=np.float64)
        hi = np.asarray(self.upper, dtype=np.float64)
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)
        if lo.shape != hi.shape or lo.ndim != 1:
            raise ConfigError("size bounds must be matching 1-d arrays")
        if np.any(lo > hi):
            raise ConfigError("lower size bound exceeds upper bound")
        if self.mode == "penalty":
            if not (np.isfinite(self.gamma) and self.gamma > 0):
                raise ConfigError("penalty mode needs finite gamma > 0")
        elif self.gamma != np.inf:
            raise ConfigError("exact/interval modes imply gamma = inf")

    @staticmethod
    def none() -> "SizeSpec":
        return SizeSpec("none")

    @staticmethod
    def exact(sizes) -> "SizeSpec":
        a = np.asarray(sizes, dtype=np.float64)
        return SizeSpec("exact", lower=a, upper=a, gamma=np.inf)

    @staticmethod
    def interval(lower, upper) -> "SizeSpec":
        return SizeSpec("interval", lower=lower, upper=upper, gamma=np.inf)

    @staticmethod
    def penalty(lower, upper, gamma: float) -> "SizeSpec":
        return SizeSpec("penalty", lower=lower, upper=upper, gamma=gamma)

    def validate(self, n_nodes: int, n_classes: int) -> None:
        """Feasibility against a concrete problem size."""
        if self.mode == "none":
            return
        if self.lower.shape[0] != n_classes:
            raise ConfigError("size spec class count mismatch")
        if self.mode == "exact" and abs(float(self.lower.sum()) - n_nodes) > 1e-9:
            raise InfeasibleSizeError(
                f"exact sizes sum to {self.lower.sum()}, need {n_nodes}")
        if self.mode in ("exact", "interval"):
            if float(self.lower.sum()) > n_nodes or float(self.upper.sum()) < n_nodes:
                raise InfeasibleSizeError(
                    "no labeling can satisfy the size bounds")


@dataclass(frozen=True)
class RegionCosts:
    """Per-node per-class assignment costs C_i(x).

    Supervision contributes eta on supervised points for every class other
    than the supervised one (np.inf entries in the eta = inf mode); region
    terms add on top.  supervised_nodes/supervised_classes (classes 1-based)
    record the supervision for dual thresholding and audits.
    """

    C: np.ndarray
    eta: float = DEFAULT_ETA
    supervised_nodes: np.ndarray = field(
        default_factory=lambda: np.empty(0, dtype=np.int64))
    supervised_classes: np.ndarray = field(
        default_factory=lambda: np.empty(0, dtype=np.int64))

    @property
    def n_nodes(self) -> int:
        return self.C.shape[0]

    @property
    def n_classes(self) -> int:
        return self.C.shape[1]


def assemble_costs(supervised=None, eta: float = DEFAULT_ETA, region=None,
                   n_nodes: int | None = None,
                   n_classes: int | None = None) -> RegionCosts:
    """Combine supervision and region terms into the cost matrix.

    Parameters
    ----------
    supervised : {node: class} mapping or (nodes, classes) array pair,
        classes 1-based.  A node supervised with class j gets cost eta for
        every class != j (eta may be np.inf).
    eta : supervision constant (default 500).
    region : optional (N, n) per-node per-class cost terms, added as-is.
    n_nodes, n_classes : required when region is None.
    """
    if region is not None:
        region = np.asarray(region, dtype=np.float64)
        if region.ndim != 2:
            raise DataError("region terms must be an N x n matrix")
        n_nodes, n_classes = region.shape
    if n_nodes is None or n_classes is None:
        raise ConfigError("n_nodes and n_classes needed without region terms")

    if supervised is None:
        nodes = np.empty(0, dtype=np.int64)
        classes = np.empty(0, dtype=np.int64)
    elif isinstance(supervised, dict):
        nodes = np.asarray(sorted(supervised), dtype=np.int64)
        classes = np.asarray([supervised[int(x)] for x in nodes], dtype=np.int64)
    else:
        nodes = np.asarray(supervised[0], dtype=np.int64)
        classes = np.asarray(supervised[1], dtype=np.int64)
        order = np.argsort(nodes, kind="stable")
        nodes, classes = nodes[order], classes[order]
        dup = np.flatnonzero(nodes[1:] == nodes[:-1])
        if dup.size and np.any(classes[dup] != classes[dup + 1]):
            raise DataError("conflicting supervision for a node")
        keep = np.concatenate([[True], nodes[1:] != nodes[:-1]])
        nodes, classes = nodes[keep], classes[keep]

    if nodes.size:
        if nodes.min() < 0 or nodes.max() >= n_nodes:
            raise DataError("supervised node index out of range")
        if classes.min() < 1 or classes.max() > n_classes:
            raise DataError("supervised class outside 1..n")

    C = np.zeros((n_nodes, n_classes), dtype=np.float64)
    if nodes.size:
        C[nodes, :] = eta
        C[nodes, classes - 1] = 0.0
    if region is not None:
        C = C + region
    return RegionCosts(C=C, eta=float(eta), supervised_nodes=nodes,
                       supervised_classes=classes)


# ---------------------------------------------------------------------------
# Solver parameters / state / result
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SolverParams:
    """Augmented-Lagrangian parameters.

    c is both the quadratic penalty weight and the q-gradient step size;
    inner_q_steps projected-gradient steps are taken per iteration (one is
    fastest overall); iteration stops once the mean absolute u-change
    (1/N) sum |u - u_old| drops below delta.
    """

    c: float = 0.1
    inner_q_steps: int = 1
    delta: float = 1e-10
    max_iters: int = 10000
    ps_order: str = "pre_p"
    record_trace: bool = True
    trace_every: int = 1

    def __post_init__(self):
        if not self.c > 0:
            raise ConfigError("c must be > 0")
        if not self.delta > 0:
            raise ConfigError("delta must be > 0")
        if self.inner_q_steps < 1 or self.max_iters < 1:
            raise ConfigError("inner_q_steps and max_iters must be >= 1")
        if self.trace_every < 1:
            raise ConfigError("trace_every must be >= 1")
        if self.ps_order not in ("pre_p", "post_p"):
            raise ConfigError("ps_order must be 'pre_p' or 'post_p'")


@dataclass
class SolverState:
    """Dual variables at the end of a solve (flows and size multipliers)."""

    u: np.ndarray          # (N, n) multiplier / relaxed labels
    p_s: np.ndarray        # (N,)   source flow
    p: np.ndarray          # (N, n) sink flows
    q: np.ndarray          # (E, n) edge flows per class
    rho1: np.ndarray       # (n,)
    rho2: np.ndarray       # (n,)
    div_q: np.ndarray      # (N, n) cached divergence of q


@dataclass
class SolverResult:
    u: np.ndarray
    labels: np.ndarray             # 1-based hard labels (simplex rounding)
    labels_dual: np.ndarray        # 1-based hard labels (dual thresholding)
    dual_tie_count: int
    trace: dict                    # iter / primal / dual / binary_diff / u_change
    iterations: int
    converged: bool
    primal: float                  # primal energy of the rounded labels
    dual: float
    binary_difference_final: float
    state: SolverState


# ---------------------------------------------------------------------------
# Elementary pieces
# ---------------------------------------------------------------------------

def project_flow(s):
    """Pointwise projection onto [-1, 1]: s if |s| <= 1 else sign(s)."""
    return np.clip(s, -1.0, 1.0)


def threshold_rounding(u: np.ndarray) -> np.ndarray:
    """Round each row to the nearest simplex vertex: argmax, ties to the
    lowest class index.  Returns 1-based labels."""
    return np.argmax(u, axis=1).astype(np.int64) + 1


def threshold_dual(costs: RegionCosts, state: SolverState,
                   tie_tol: float = 1e-9):
    """Label by the minimal component of C_i + div q_i + rho_i^2 - rho_i^1.

    Returns (labels, tie_count); ties (second-smallest within tie_tol of the
    smallest) go to the lowest class index and are counted, since exact
    recovery is only guaranteed where the minimizer is unique.
    """
    score = costs.C + state.div_q + (state.rho2 - state.rho1)[None, :]
    labels = np.argmin(score, axis=1).astype(np.int64) + 1
    part = np.sort(score, axis=1)
    ties = int(np.sum(part[:, 1] - part[:, 0] <= tie_tol))
    return labels, ties


def binary_difference(u: np.ndarray) -> float:
    """Mean L1 distance between u and its simplex-vertex rounding,
    (1/(2 n N)) sum_i sum_x |uT_i(x) - u_i(x)|."""
    n_nodes, n = u.shape
    labels = threshold_rounding(u)
    one_hot = np.zeros_like(u)
    one_hot[np.arange(n_nodes), labels - 1] = 1.0
    return float(np.abs(one_hot - u).sum()) / (2.0 * n * n_nodes)


def labels_to_onehot(labels: np.ndarray, n_classes: int) -> np.ndarray:
    """1-based labels -> (N, n) binary matrix."""
    labels = np.asarray(labels, dtype=np.int64)
    out = np.zeros((labels.shape[0], n_classes), dtype=np.float64)
    out[np.arange(labels.shape[0]), labels - 1] = 1.0
    return out


def class_sizes(labels: np.ndarray, n_classes: int) -> np.ndarray:
    """Node counts per class for 1-based labels."""
    return np.bincount(np.asarray(labels, dtype=np.int64) - 1,
                       minlength=n_classes).astype(np.int64)


def penalty_value(sizes, size: SizeSpec) -> float:
    """Piecewise-linear size penalty sum_i P_gamma(||u_i||): zero inside
    [S^l_i, S^u_i], slope gamma outside."""
    if size.mode == "none":
        return 0.0
    s = np.asarray(sizes, dtype=np.float64)
    below = np.maximum(size.lower - s, 0.0)
    above = np.maximum(s - size.upper, 0.0)
    viol = float(np.sum(below + above))
    if size.gamma == np.inf:
        return np.inf if viol > 1e-6 else 0.0
    return size.gamma * viol


def _cost_term(C: np.ndarray, u: np.ndarray) -> float:
    """sum C * u, treating inf * 0 as 0 (eta = inf supervision mode)."""
    if np.all(np.isfinite(C)):
        return float(np.sum(C * u))
    finite = np.isfinite(C)
    total = float(np.sum(np.where(finite, C, 0.0) * u))
    if np.any(~finite & (np.abs(u) > 1e-12)):
        return np.inf
    return total


def primal_energy(g: Graph, u: np.ndarray, costs: RegionCosts,
                  size: SizeSpec = SizeSpec.none()) -> float:
    """Cost term + sum_i TV(u_i) + size penalty of the relaxed labeling u.

    For the hard size modes the penalty term is the indicator of the bounds
    (inf when violated beyond rounding tolerance).
    """
    u = np.asarray(u, dtype=np.float64)
    tv = sum(total_variation(g, u[:, i]) for i in range(u.shape[1]))
    return _cost_term(costs.C, u) + tv + penalty_value(u.sum(axis=0), size)


def _label_energy(g, C, labels, size):
    """Primal energy of hard labels, via the cut form of the TV sum."""
    cut = float(np.sum(g.weight * (labels[g.src] != labels[g.dst])))
    cost = C[np.arange(C.shape[0]), labels - 1]
    cost = np.inf if np.any(np.isinf(cost)) else float(cost.sum())
    return cost + cut + penalty_value(class_sizes(labels, C.shape[1]), size)


def dual_energy(state: SolverState, size: SizeSpec = SizeSpec.none()) -> float:
    """sum_x p_s(x) + sum_i (rho_i^1 S^l_i - rho_i^2 S^u_i)."""
    total = float(state.p_s.sum())
    if size.mode != "none":
        total += float(np.sum(state.rho1 * size.lower - state.rho2 * size.upper))
    return total


# ---------------------------------------------------------------------------
# Main loop
# ---------------------------------------------------------------------------

def solve(g: Graph, costs: RegionCosts, size: SizeSpec = SizeSpec.none(),
          params: SolverParams = SolverParams(),
          init: SolverState | None = None,
          _force_rho_steps: bool = False) -> SolverResult:
    """Run the augmented-Lagrangian max-flow iteration to convergence.

    init warm-starts from a previous state (default: u, q, rho zero,
    p_s = C_n, p_i = p_s).  _force_rho_steps keeps the rho sub-steps active
    even in mode 'none' (they are no-ops then; used by equivalence tests).
    """
    C = costs.C
    n_nodes, n = C.shape
    if g.n_nodes != n_nodes:
        raise DataError("costs and graph disagree on node count")
    size.validate(n_nodes, n)

    c = params.c
    Dv = divergence_operator(g)  # r=0, q=1: the flow calculus of the dual
    size_active = (size.mode != "none") or _force_rho_steps
    gamma = size.gamma if size.mode != "none" else 0.0
    if size.mode != "none":
        s_lo = size.lower / (c * n_nodes)
        s_hi = size.upper / (c * n_nodes)
    else:
        s_lo = s_hi = np.zeros(n)

    if init is not None:
        U = init.u.copy()
        p_s = init.p_s.copy()
        P = init.p.copy()
        Q = init.q.copy()
        rho1, rho2 = init.rho1.copy(), init.rho2.copy()
        divQ = Dv @ Q
    else:
        U = np.zeros((n_nodes, n))
        last = C[:, n - 1]
        p_s = np.where(np.isfinite(last), last, 0.0)
        P = np.repeat(p_s[:, None], n, axis=1)
        Q = np.zeros((g.n_edges, n))
        rho1 = np.zeros(n)
        rho2 = np.zeros(n)
        divQ = np.zeros((n_nodes, n))

    trace = {k: [] for k in ("iter", "primal", "dual", "binary_diff", "u_change")}
    src, dst, inv_cn = g.src, g.dst, 1.0 / (c * n)
    converged = False
    iteration = 0

    for iteration in range(1, params.max_iters + 1):
        drho = rho1 - rho2
        F = p_s[:, None] - P + U / c + drho[None, :]
        for _ in range(params.inner_q_steps):
            V = divQ - F
            Q += c * (V[dst] - V[src])
            np.clip(Q, -1.0, 1.0, out=Q)
            divQ = Dv @ Q

        if params.ps_order == "pre_p":
            G = P + divQ - U / c - drho[None, :]
            p_s = G.mean(axis=1) + inv_cn
            H = p_s[:, None] - divQ + U / c + drho[None, :]
            P = np.minimum(H, C)
        else:
            H = p_s[:, None] - divQ + U / c + drho[None, :]
            P = np.minimum(H, C)
            G = P + divQ - U / c - drho[None, :]
            p_s = G.mean(axis=1) + inv_cn

        rho_change = 0.0
        if size_active:
            base = (P + divQ - U / c - p_s[:, None]).mean(axis=0)
            # rho2 must see the fully clamped rho1 (both bounds), otherwise
            # the two multipliers can lock at gamma and cancel each other.
            rho1_new = np.maximum(base + rho2 + s_lo, 0.0)
            if gamma != np.inf:
                np.minimum(rho1_new, gamma, out=rho1_new)
            rho2_new = np.maximum(-base + rho1_new - s_hi, 0.0)
            if gamma != np.inf:
                np.minimum(rho2_new, gamma, out=rho2_new)
            rho_change = float(np.abs(rho1_new - rho1).sum()
                               + np.abs(rho2_new - rho2).sum()) / n
            rho1, rho2 = rho1_new, rho2_new

        resid = divQ - p_s[:, None] + P + (rho2 - rho1)[None, :]
        U_new = U - c * resid
        u_change = float(np.abs(U_new - U).sum()) / n_nodes
        U = U_new

        if not np.isfinite(u_change):
            raise SolverDivergenceError(
                f"non-finite iterate at iteration {iteration}", iteration)

        if params.record_trace and iteration % params.trace_every == 0:
            labels = threshold_rounding(U)
            dual_now = float(p_s.sum())
            if size.mode != "none":
                dual_now += float(np.sum(rho1 * size.lower - rho2 * size.upper))
            trace["iter"].append(iteration)
            trace["primal"].append(_label_energy(g, C, labels, size))
            trace["dual"].append(dual_now)
            trace["binary_diff"].append(binary_difference(U))
            trace["u_change"].append(u_change)

        # The multipliers can keep moving for a few iterations while u
        # transiently stalls, so a size-constrained solve also requires
        # dual stationarity before stopping.
        if u_change < params.delta and rho_change < params.delta:
            converged = True
            break

    state = SolverState(u=U, p_s=p_s, p=P, q=Q, rho1=rho1, rho2=rho2,
                        div_q=divQ)
    labels = threshold_rounding(U)
    labels_dual, ties = threshold_dual(costs, state)
    result = SolverResult(
        u=U,
        labels=labels,
        labels_dual=labels_dual,
        dual_tie_count=ties,
        trace={k: np.asarray(v) for k, v in trace.items()},
        iterations=iteration,
        converged=converged,
        primal=_label_energy(g, C, labels, size),
        dual=dual_energy(state, size),
        binary_difference_final=binary_difference(U),
        state=state,
    )
    return result


# ---------------------------------------------------------------------------
# Exhaustive oracle (tiny instances)
# ---------------------------------------------------------------------------

def brute_force_oracle(g: Graph, costs: RegionCosts,
                       size: SizeSpec = SizeSpec.none(),
                       n_classes: int | None = None):
    """Exhaustive minimum of the binary problem over all n^N labelings
    satisfying the size spec.  Returns (labels 1-based, energy).

    Bounded to n^N <= 1e7 enumerations.
    """
    C = costs.C
    n_nodes = C.shape[0]
    n = n_classes or C.shape[1]
    if float(n) ** n_nodes > 1e7:
        raise ConfigError("instance too large for enumeration")
    size.validate(n_nodes, n)

    grids = np.indices((n,) * n_nodes).reshape(n_nodes, -1).T + 1  # 1-based
    cost = np.where(np.isfinite(C), C, 0.0)[
        np.arange(n_nodes)[None, :], grids - 1].sum(axis=1)
    if not np.all(np.isfinite(C)):
        hit_inf = np.isinf(C)[np.arange(n_nodes)[None, :], grids - 1].any(axis=1)
        cost = np.where(hit_inf, np.inf, cost)
    cut = np.zeros(grids.shape[0])
    for s, t, w in zip(g.src, g.dst, g.weight):
        cut += w * (grids[:, s] != grids[:, t])
    energy = cost + cut

    if size.mode != "none":
        counts = np.stack([(grids == i + 1).sum(axis=1) for i in range(n)], axis=1)
        if size.gamma == np.inf:
            ok = np.all((counts >= size.lower[None, :] - 1e-9)
                        & (counts <= size.upper[None, :] + 1e-9), axis=1)
            if not np.any(ok):
                raise InfeasibleSizeError("no labeling satisfies the sizes")
            energy = np.where(ok, energy, np.inf)
        else:
            below = np.maximum(size.lower[None, :] - counts, 0.0)
            above = np.maximum(counts - size.upper[None, :], 0.0)
            energy = energy + size.gamma * (below + above).sum(axis=1)

    best = int(np.argmin(energy))
    return grids[best].astype(np.int64), float(energy[best])


# ---------------------------------------------------------------------------
# File formats
# ---------------------------------------------------------------------------

def write_labels_csv(labels, path) -> None:
    """CSV with header node_index,label."""
    labels = np.asarray(labels, dtype=np.int64)
    with open(path, "w") as fh:
        fh.write("node_index,label\n")
        for i, lab in enumerate(labels):
            fh.write(f"{i},{lab}\n")


def read_labels_csv(path) -> np.ndarray:
    data = np.loadtxt(path, delimiter=",", skiprows=1, dtype=np.int64, ndmin=2)
    order = np.argsort(data[:, 0])
    return data[order, 1]


def write_trace_csv(trace: dict, path) -> None:
    """CSV with header iter,primal,dual,binary_diff,u_change."""
    with open(path, "w") as fh:
        fh.write("iter,primal,dual,binary_diff,u_change\n")
        for row in zip(trace["iter"], trace["primal"], trace["dual"],
                       trace["binary_diff"], trace["u_change"]):
            fh.write("%d,%.17g,%.17g,%.17g,%.17g\n" % row)
