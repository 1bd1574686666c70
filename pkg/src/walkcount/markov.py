"""Classical Markov chains: validation, stationary distribution, spectral gap,
marked subsets, and the graph builders used by the counting experiments."""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Any, Iterable, Mapping

import numpy as np
import scipy.linalg
import scipy.sparse
import scipy.sparse.csgraph

from .errors import ChainValidationError, NumericError, ParameterError, SizeError

SUPPORT_TOL = 1e-12          # entries below this do not count as edges
ROW_SUM_TOL = 1e-9
DETAILED_BALANCE_TOL = 1e-8
STATIONARY_RESIDUAL_TOL = 1e-10
EIG_SOLVE_MAX_N = 4096
JOHNSON_STATE_CAP = 5000


@dataclass(frozen=True)
class MarkovChain:
    """Row-stochastic transition matrix with optional per-state payloads."""

    transition: np.ndarray
    labels: Mapping[int, Any] | None = None

    def __post_init__(self):
        mat = np.asarray(self.transition, dtype=np.float64)
        if mat.ndim != 2 or mat.shape[0] != mat.shape[1]:
            raise ParameterError(f"transition matrix must be square, got shape {mat.shape}")
        mat = mat.copy()
        mat.flags.writeable = False
        object.__setattr__(self, "transition", mat)

    @property
    def n(self) -> int:
        return self.transition.shape[0]


@dataclass(frozen=True)
class StationaryDistribution:
    pi: np.ndarray
    residual: float

    def __post_init__(self):
        vec = np.asarray(self.pi, dtype=np.float64).copy()
        vec.flags.writeable = False
        object.__setattr__(self, "pi", vec)


@dataclass(frozen=True)
class MarkedSet:
    members: frozenset[int]

    def __post_init__(self):
        members = frozenset(int(x) for x in self.members)
        if not members:
            raise ParameterError("marked set must be nonempty")
        if min(members) < 0:
            raise ParameterError("marked states must be nonnegative indices")
        object.__setattr__(self, "members", members)

    @property
    def size(self) -> int:
        return len(self.members)

    def indicator(self, n: int) -> np.ndarray:
        if max(self.members) >= n:
            raise ParameterError(f"marked state {max(self.members)} out of range for n={n}")
        flags = np.zeros(n, dtype=bool)
        flags[sorted(self.members)] = True
        return flags


def marked_set(states: Iterable[int]) -> MarkedSet:
    return MarkedSet(frozenset(states))


@dataclass(frozen=True)
class ValidationReport:
    n: int
    stochastic: bool
    connected: bool
    non_bipartite: bool
    reversible: bool
    row_sum_error: float
    detailed_balance_error: float
    failures: tuple[str, ...]

    @property
    def ergodic(self) -> bool:
        return self.connected and self.non_bipartite

    @property
    def ok(self) -> bool:
        return not self.failures


def _support(mat: np.ndarray) -> np.ndarray:
    return mat > SUPPORT_TOL


def _is_bipartite_undirected(adj: np.ndarray) -> bool:
    """2-colorability of the undirected support graph; self-loops break it."""
    if adj.diagonal().any():
        return False
    n = adj.shape[0]
    sym = adj | adj.T
    color = np.full(n, -1, dtype=np.int8)
    for start in range(n):
        if color[start] >= 0:
            continue
        color[start] = 0
        stack = [start]
        while stack:
            u = stack.pop()
            neighbors = np.nonzero(sym[u])[0]
            for v in neighbors:
                if color[v] < 0:
                    color[v] = 1 - color[u]
                    stack.append(int(v))
                elif color[v] == color[u]:
                    return False
    return True


def _strongly_connected(adj: np.ndarray) -> bool:
    graph = scipy.sparse.csr_matrix(adj)
    ncomp, _ = scipy.sparse.csgraph.connected_components(graph, directed=True, connection="strong")
    return ncomp == 1


def _stationary_vector(mat: np.ndarray) -> np.ndarray:
    """Solve πP = π; eigen-solve for moderate n, damped power iteration above."""
    n = mat.shape[0]
    if n == 1:
        return np.ones(1)
    if n <= EIG_SOLVE_MAX_N:
        vals, vecs = scipy.linalg.eig(mat.T)
        idx = int(np.argmin(np.abs(vals - 1.0)))
        pi = np.abs(np.real(vecs[:, idx]))
        pi = pi / pi.sum()
    else:
        pi = np.ones(n) / n
    # Polish with the half-lazy map, whose nontrivial spectrum lies inside
    # the unit disk for every stochastic matrix, so iteration always contracts.
    for _ in range(200_000):
        nxt = 0.5 * (pi @ mat + pi)
        if np.max(np.abs(nxt - pi)) < 1e-15:
            pi = nxt
            break
        pi = nxt
    residual = float(np.max(np.abs(pi @ mat - pi)))
    if residual > STATIONARY_RESIDUAL_TOL:
        raise NumericError("stationary distribution iteration did not converge", residual)
    return pi


def validate(chain: MarkovChain) -> ValidationReport:
    """Check stochasticity, ergodicity and reversibility; report each failure."""
    mat = chain.transition
    n = chain.n
    failures = []

    row_sum_error = float(np.max(np.abs(mat.sum(axis=1) - 1.0)))
    nonneg = bool((mat >= -SUPPORT_TOL).all())
    stochastic = nonneg and row_sum_error <= ROW_SUM_TOL
    if not nonneg:
        failures.append("negative transition probabilities")
    elif row_sum_error > ROW_SUM_TOL:
        failures.append(f"row sums deviate from 1 by {row_sum_error:.3e}")

    adj = _support(mat)
    connected = _strongly_connected(adj) if stochastic else False
    if stochastic and not connected:
        failures.append("reachability graph is not connected")
    non_bipartite = (not _is_bipartite_undirected(adj)) if stochastic else False
    if stochastic and connected and not non_bipartite:
        failures.append("reachability graph is bipartite")

    reversible = False
    balance_error = math.inf
    if stochastic and connected and non_bipartite:
        pi = _stationary_vector(mat)
        flux = pi[:, None] * mat
        balance_error = float(np.max(np.abs(flux - flux.T)))
        reversible = balance_error <= DETAILED_BALANCE_TOL
        if not reversible:
            failures.append(f"detailed balance violated by {balance_error:.3e}")

    return ValidationReport(
        n=n,
        stochastic=stochastic,
        connected=connected,
        non_bipartite=non_bipartite,
        reversible=reversible,
        row_sum_error=row_sum_error,
        detailed_balance_error=balance_error,
        failures=tuple(failures),
    )


def ensure_valid(chain: MarkovChain) -> ValidationReport:
    report = validate(chain)
    if not report.ok:
        raise ChainValidationError(report.failures)
    return report


def stationary(chain: MarkovChain) -> StationaryDistribution:
    """Unique stationary distribution of a validated ergodic chain."""
    report = validate(chain)
    if not (report.stochastic and report.ergodic):
        raise ChainValidationError(report.failures or ("chain is not ergodic",))
    pi = _stationary_vector(chain.transition)
    residual = float(np.max(np.abs(pi @ chain.transition - pi)))
    return StationaryDistribution(pi=pi, residual=residual)


def spectral_gap(chain: MarkovChain) -> float:
    """Absolute spectral gap 1 - max_{i>=2} |lambda_i|.

    Computed on the symmetrized matrix diag(pi)^{1/2} P diag(pi)^{-1/2},
    which shares the spectrum of P and is symmetric for reversible chains.
    """
    report = ensure_valid(chain)
    if not report.reversible:
        raise ChainValidationError(("spectral gap requires a reversible chain",))
    if chain.n == 1:
        return 1.0
    pi = _stationary_vector(chain.transition)
    sqrt_pi = np.sqrt(pi)
    sym = (sqrt_pi[:, None] / sqrt_pi[None, :]) * chain.transition
    asym = float(np.max(np.abs(sym - sym.T)))
    if asym > 1e-6:
        raise NumericError("symmetrized transition matrix is far from symmetric", asym)
    eigs = np.linalg.eigvalsh(0.5 * (sym + sym.T))
    order = np.argsort(-np.abs(eigs))
    top, second = eigs[order[0]], eigs[order[1]]
    if abs(abs(top) - 1.0) > 1e-8:
        raise NumericError("leading eigenvalue is not 1", abs(top) - 1.0)
    gap = 1.0 - abs(second)
    if gap <= 0:
        raise NumericError("spectral gap is not positive", gap)
    return float(gap)


def marked_fraction(dist: StationaryDistribution, marked: MarkedSet) -> float:
    """Stationary mass of the marked states."""
    flags = marked.indicator(len(dist.pi))
    return float(dist.pi[flags].sum())


# ---------------------------------------------------------------------------
# Builders
# ---------------------------------------------------------------------------


def complete_graph_chain(n: int) -> MarkovChain:
    """Random walk on the complete graph: off-diagonal 1/(n-1), zero diagonal."""
    if n < 3:
        raise ParameterError(f"complete-graph walk needs n >= 3 (n={n} is bipartite or degenerate)")
    mat = np.full((n, n), 1.0 / (n - 1))
    np.fill_diagonal(mat, 0.0)
    return MarkovChain(mat)


def two_state_chain(p01: float, p10: float) -> MarkovChain:
    if not (0 < p01 <= 1 and 0 < p10 <= 1):
        raise ParameterError("transition probabilities must lie in (0, 1]")
    return MarkovChain(np.array([[1 - p01, p01], [p10, 1 - p10]]))


def lazy_variant(chain: MarkovChain, hold: float = 0.5) -> MarkovChain:
    """Mix the chain with staying put: hold*I + (1-hold)*P."""
    if not 0 < hold < 1:
        raise ParameterError("hold probability must lie strictly between 0 and 1")
    mat = hold * np.eye(chain.n) + (1 - hold) * chain.transition
    return MarkovChain(mat, labels=chain.labels)


def johnson_chain(domain_size: int, r: int, state_cap: int = JOHNSON_STATE_CAP) -> MarkovChain:
    """Random walk on r-subsets of a domain, stepping by one-element swaps.

    Vertices are all r-subsets S of {0..domain_size-1}; S and T are
    adjacent iff |S ∪ T| = r + 1, and each of the r*(domain_size-r)
    neighbors is chosen uniformly.  Labels carry the subsets as frozensets.
    """
    if r < 2 or r > domain_size - 1:
        raise ParameterError(f"subset size r={r} must satisfy 2 <= r <= {domain_size - 1}")
    n_states = math.comb(domain_size, r)
    if n_states > state_cap:
        raise SizeError(
            f"C({domain_size},{r}) = {n_states} subsets exceeds the state cap {state_cap}"
        )
    subsets = list(itertools.combinations(range(domain_size), r))
    index = {s: i for i, s in enumerate(subsets)}
    degree = r * (domain_size - r)
    prob = 1.0 / degree
    mat = np.zeros((n_states, n_states))
    for i, subset in enumerate(subsets):
        inside = set(subset)
        outside = [b for b in range(domain_size) if b not in inside]
        for a in subset:
            rest = inside - {a}
            for b in outside:
                neighbor = tuple(sorted(rest | {b}))
                mat[i, index[neighbor]] = prob
    labels = {i: frozenset(s) for i, s in enumerate(subsets)}
    chain = MarkovChain(mat, labels=labels)
    ensure_valid(chain)
    return chain


# ---------------------------------------------------------------------------
# Text import/export
# ---------------------------------------------------------------------------


def chain_to_text(chain: MarkovChain) -> str:
    lines = [str(chain.n)]
    for row in chain.transition:
        lines.append(" ".join(f"{v:.17g}" for v in row))
    return "\n".join(lines) + "\n"


def chain_from_text(text: str) -> MarkovChain:
    lines = [ln for ln in text.strip().splitlines() if ln.strip()]
    if not lines:
        raise ParameterError("empty chain description")
    n = int(lines[0])
    if len(lines) != n + 1:
        raise ParameterError(f"expected {n} rows, found {len(lines) - 1}")
    rows = [[float(v) for v in ln.split()] for ln in lines[1:]]
    mat = np.array(rows)
    if mat.shape != (n, n):
        raise ParameterError(f"rows do not form an {n}x{n} matrix")
    return MarkovChain(mat)


def marked_to_text(marked: MarkedSet) -> str:
    return " ".join(str(i) for i in sorted(marked.members)) + "\n"


def marked_from_text(text: str) -> MarkedSet:
    return marked_set(int(tok) for tok in text.split())
