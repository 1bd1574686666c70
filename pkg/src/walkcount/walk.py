"""Pair-space quantum walk machinery.

Builds the walk operator W = ref(B)·ref(A) on the pair space of a
reversible ergodic chain, the stationary state, the marked-set phase
flip, the exact rotation used as the search reference, and the
workspace-backed approximate reflection assembled from repeated
coherent phase detection of the walk.

Register names: the pair space is ("src", "dst"); phase-detection
workspace registers are ("probe0", "probe1", ...), each of dimension
2^s.  The approximate reflection runs k phase-detection rounds, flips
the sign of every branch whose probes are not all zero, then uncomputes
the rounds.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from . import engine
from .engine import (
    ComposedOperator,
    DenseOperator,
    DiagonalOperator,
    LinearOperator,
    ProjectorReflection,
    RegisterLayout,
    StateVector,
)
from .errors import GeometryError, ParameterError, SizeError
from .markov import MarkedSet, MarkovChain, StationaryDistribution, ensure_valid, marked_fraction, spectral_gap, stationary
from .meter import QueryMeter

SRC = "src"
DST = "dst"

#: Constant c in the per-application update charge ceil(c*k/sqrt(delta)).
UPDATE_CHARGE_CONSTANT = 1.0

#: Hard cap on simulated amplitudes for workspace-backed operators.
MAX_AMPLITUDES = 150_000_000

BACKENDS = ("full", "ideal", "perturbed-ideal")


def pair_layout(n: int) -> RegisterLayout:
    return RegisterLayout(((SRC, n), (DST, n)))


def pair_registers(n: int) -> tuple[tuple[str, int], ...]:
    return ((SRC, n), (DST, n))


class PairWalkOperator(LinearOperator):
    """W = ref(B)·ref(A) applied matrix-free on the flattened pair space."""

    def __init__(self, n: int, basis_a: np.ndarray, basis_b: np.ndarray, reverse: bool = False):
        self.registers = pair_registers(n)
        self.basis_a = basis_a
        self.basis_b = basis_b
        self.reverse = reverse  # reversed order realizes the adjoint

    @staticmethod
    def _reflect(rows: np.ndarray, block: np.ndarray) -> np.ndarray:
        return 2.0 * (rows.T @ (rows.conj() @ block)) - block

    def _apply_moved(self, block):
        first, second = (self.basis_b, self.basis_a) if self.reverse else (self.basis_a, self.basis_b)
        return self._reflect(second, self._reflect(first, block))

    def adjoint(self):
        return PairWalkOperator(self.registers[0][1], self.basis_a, self.basis_b,
                                reverse=not self.reverse)


@dataclass(frozen=True)
class WalkOperators:
    """Walk operator with its reflection factors and spanning sets."""

    chain: MarkovChain
    pi: StationaryDistribution
    delta: float
    basis_a: np.ndarray
    basis_b: np.ndarray
    ref_a: ProjectorReflection
    ref_b: ProjectorReflection
    walk: PairWalkOperator

    @property
    def n(self) -> int:
        return self.chain.n

    @property
    def pair_dim(self) -> int:
        return self.n * self.n


def build_walk(chain: MarkovChain) -> WalkOperators:
    """Construct W from the transition amplitudes of a validated chain.

    The spanning set of A consists of the states sqrt(p_x.) attached to
    each source x; B attaches sqrt(p_y.) to each destination y.  Both
    families are orthonormal by construction (rows of P sum to 1), which
    the reflection constructor re-checks.
    """
    ensure_valid(chain)
    dist = stationary(chain)
    n = chain.n
    p = chain.transition
    sqrt_p = np.sqrt(p)
    basis_a = np.zeros((n, n * n), dtype=np.complex128)
    basis_b = np.zeros((n, n * n), dtype=np.complex128)
    for x in range(n):
        basis_a[x].reshape(n, n)[x, :] = sqrt_p[x]
    for y in range(n):
        basis_b[y].reshape(n, n)[:, y] = sqrt_p[y]
    regs = pair_registers(n)
    ref_a = ProjectorReflection(regs, basis_a)
    ref_b = ProjectorReflection(regs, basis_b)
    walk = PairWalkOperator(n, basis_a, basis_b)
    return WalkOperators(
        chain=chain, pi=dist, delta=spectral_gap(chain),
        basis_a=basis_a, basis_b=basis_b, ref_a=ref_a, ref_b=ref_b, walk=walk,
    )


def stationary_pair_amplitudes(chain: MarkovChain, dist: StationaryDistribution) -> np.ndarray:
    """Amplitudes sqrt(pi_x p_xy) on the flattened pair space."""
    return np.sqrt(dist.pi[:, None] * chain.transition).reshape(-1).astype(np.complex128)


def pi_state(walk: WalkOperators, meter: QueryMeter | None = None) -> StateVector:
    """The stationary superposition on the pair space; charges one setup."""
    if meter is not None:
        meter.charge("setup", 1)
    amps = stationary_pair_amplitudes(walk.chain, walk.pi)
    return StateVector(pair_layout(walk.n), amps)


def marked_flip(marked: MarkedSet, n: int, meter: QueryMeter | None = None) -> LinearOperator:
    """Phase flip -1 on pair states whose source register is marked.

    With a meter attached, every application charges one checking query.
    """
    flags = marked.indicator(n)
    diag = np.where(np.repeat(flags, n), -1.0 + 0j, 1.0 + 0j)
    op = DiagonalOperator(pair_registers(n), diag)
    if meter is None:
        return op
    return ChargingOperator(op, meter, {"checking": 1})


class ChargingOperator(LinearOperator):
    """Wrapper that charges a meter once per application."""

    def __init__(self, inner: LinearOperator, meter: QueryMeter, charges: dict[str, int]):
        self.inner = inner
        self.meter = meter
        self.charges = dict(charges)
        self.registers = inner.registers

    def _apply_moved(self, block):
        for kind, amount in self.charges.items():
            self.meter.charge(kind, amount)
        return self.inner._apply_moved(block)

    def adjoint(self):
        return ChargingOperator(self.inner.adjoint(), self.meter, self.charges)

    def dense(self):
        return self.inner.dense()


# ---------------------------------------------------------------------------
# Search geometry
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SearchGeometry:
    """Two-dimensional rotation geometry induced by a marked set."""

    p_marked: float
    phi: float
    tau: int
    pi_state: StateVector
    mu_state: StateVector
    mu_perp_state: StateVector
    psi_plus: StateVector
    psi_minus: StateVector


def geometry(walk: WalkOperators, marked: MarkedSet, tau: int = 0,
             workspace_dims: tuple[int, ...] = ()) -> SearchGeometry:
    """Build the marked/unmarked rotation frame and its eigenvectors.

    ``workspace_dims`` optionally fixes the workspace register sizes
    (product 2^tau); by default a single register of dimension 2^tau is
    appended when tau > 0.
    """
    n = walk.n
    p_m = marked_fraction(walk.pi, marked)
    if p_m >= 1.0 - 1e-12:
        raise GeometryError("all stationary mass is marked; the orthogonal state is undefined")
    if p_m <= 0.0:
        raise ParameterError("marked set carries no stationary mass")
    phi = math.asin(math.sqrt(p_m))
    flags = np.repeat(marked.indicator(n), n)

    pi_amps = stationary_pair_amplitudes(walk.chain, walk.pi)
    mu_amps = np.where(flags, pi_amps, 0.0) / math.sqrt(p_m)
    mu_perp_amps = (pi_amps - math.sin(phi) * mu_amps) / math.cos(phi)

    lay = pair_layout(n)
    if workspace_dims:
        ws = tuple(workspace_dims)
        if int(np.prod(ws)) != 2 ** tau:
            raise ParameterError("workspace register dims must multiply to 2^tau")
    else:
        ws = (2 ** tau,) if tau > 0 else ()
    if ws:
        ws_regs = tuple((f"probe{i}", d) for i, d in enumerate(ws))
        full_lay = lay.extended(ws_regs, front=False)
        pad = np.zeros(int(np.prod(ws)), dtype=np.complex128)
        pad[0] = 1.0
        lift = lambda v: np.kron(v, pad)
    else:
        full_lay = lay
        lift = lambda v: v

    plus = lift((mu_amps + 1j * mu_perp_amps) / math.sqrt(2.0))
    minus = lift((mu_amps - 1j * mu_perp_amps) / math.sqrt(2.0))
    return SearchGeometry(
        p_marked=p_m,
        phi=phi,
        tau=tau,
        pi_state=StateVector(lay, pi_amps),
        mu_state=StateVector(lay, mu_amps),
        mu_perp_state=StateVector(lay, mu_perp_amps),
        psi_plus=StateVector(full_lay, plus),
        psi_minus=StateVector(full_lay, minus),
    )


def stationary_reflection(walk: WalkOperators) -> ProjectorReflection:
    """Exact reflection through the stationary pair state (rank-1 span)."""
    amps = stationary_pair_amplitudes(walk.chain, walk.pi)
    return ProjectorReflection(pair_registers(walk.n), amps[None, :])


def extended_stationary_reflection(walk: WalkOperators) -> ProjectorReflection:
    """Stationary reflection extended as +I outside the walk's span A + B.

    Negates the part of A + B orthogonal to the stationary state and fixes
    everything else.  This matches the fixed-point structure of the
    phase-detection reflection, whose probes read zero both on the
    stationary state and on the complement of A + B (where the walk acts
    as the identity), so error bounds against the full backend must use
    this extension.  On A + B itself, and in particular on every state the
    counting evolution visits, it agrees with ``stationary_reflection``.
    """
    span = span_basis(walk)
    pi_amps = stationary_pair_amplitudes(walk.chain, walk.pi)
    deflated = span - np.outer(span @ pi_amps.conj(), pi_amps)
    reduced = scipy.linalg.orth(deflated.T, rcond=1e-10).T
    return ProjectorReflection(pair_registers(walk.n), np.ascontiguousarray(reduced),
                               fix_span=False)


def ideal_rotation(walk: WalkOperators, marked: MarkedSet,
                   extended: bool = False) -> ComposedOperator:
    """Exact search rotation: marked flip followed by the stationary reflection.

    Restricted to the span of the marked/unmarked frame this rotates by
    twice the geometry angle; the workspace, when present, is untouched.
    ``extended=True`` selects the reflection extension that agrees with
    the full backend outside A + B (needed when comparing the two on
    inputs whose image under the marked flip leaves A + B).
    """
    reflector = extended_stationary_reflection(walk) if extended else stationary_reflection(walk)
    return ComposedOperator((marked_flip(marked, walk.n), reflector))


# ---------------------------------------------------------------------------
# Approximate reflection via repeated phase detection
# ---------------------------------------------------------------------------


def default_round_bits(delta: float) -> int:
    """Probe resolution: enough bits to separate the walk's nonzero
    eigenphases from zero, plus two guard bits."""
    if not 0 < delta <= 1:
        raise ParameterError(f"spectral gap must lie in (0, 1], got {delta}")
    return max(1, math.ceil(math.log2(math.pi / math.sqrt(2.0 * delta)))) + 2


@dataclass(frozen=True)
class ApproxReflectionConfig:
    """k phase-detection rounds of s bits each (tau = k*s workspace qubits)."""

    k: int
    s: int

    def __post_init__(self):
        if self.k < 1 or self.s < 1:
            raise ParameterError("need k >= 1 rounds and s >= 1 bits per round")

    @property
    def tau(self) -> int:
        return self.k * self.s

    @classmethod
    def for_gap(cls, k: int, delta: float, s: int | None = None) -> "ApproxReflectionConfig":
        return cls(k=k, s=s if s is not None else default_round_bits(delta))


def probe_registers(config: ApproxReflectionConfig) -> tuple[tuple[str, int], ...]:
    return tuple((f"probe{i}", 2 ** config.s) for i in range(config.k))


class ApproxReflection(LinearOperator):
    """Approximate reflection through the stationary state.

    Runs k coherent phase-detection rounds of the walk (s bits each,
    written to separate probe registers), applies a phase flip of -1 on
    every computational branch whose probes are not all zero, then
    uncomputes the rounds.  The stationary state reads probe value 0
    with certainty, so it is fixed exactly; eigenvectors with nonzero
    walk eigenphase survive unflipped only with amplitude below
    (zero-read amplitude)^k.
    """

    def __init__(self, walk: WalkOperators, config: ApproxReflectionConfig,
                 max_amplitudes: int = MAX_AMPLITUDES):
        n = walk.n
        total = n * n * (2 ** config.tau)
        if total > max_amplitudes:
            raise SizeError(
                f"approximate reflection needs {total} amplitudes "
                f"(pair {n * n} x workspace 2^{config.tau}), budget is {max_amplitudes}"
            )
        self.walk_ops = walk
        self.config = config
        self.registers = pair_registers(n) + probe_registers(config)

    # -- per-round helpers working on the tensor view ---------------------

    @staticmethod
    def _fwht_axis(tensor: np.ndarray, axis: int) -> np.ndarray:
        moved = np.moveaxis(tensor, axis, 0)
        dim = moved.shape[0]
        flat = np.ascontiguousarray(moved).reshape(dim, -1)
        out = flat
        h = 1
        inv = 1.0 / math.sqrt(2.0)
        while h < dim:
            view = out.reshape(dim // (2 * h), 2, h, -1)
            a = view[:, 0].copy()
            b = view[:, 1].copy()
            view[:, 0] = (a + b) * inv
            view[:, 1] = (a - b) * inv
            h *= 2
        return np.moveaxis(out.reshape(moved.shape), 0, axis)

    @staticmethod
    def _fourier_axis(tensor: np.ndarray, axis: int, inverse: bool) -> np.ndarray:
        dim = tensor.shape[axis]
        if inverse:
            return np.fft.fft(tensor, axis=axis) / math.sqrt(dim)
        return np.fft.ifft(tensor, axis=axis) * math.sqrt(dim)

    def _controlled_walk(self, tensor: np.ndarray, axis: int, adjoint: bool) -> np.ndarray:
        """Apply walk^b to the branch where the probe on ``axis`` reads b."""
        n = self.walk_ops.n
        op = self.walk_ops.walk.adjoint() if adjoint else self.walk_ops.walk
        dim = tensor.shape[axis]
        index = [slice(None)] * tensor.ndim
        for b in range(1, dim):
            index[axis] = slice(b, None)
            sub = tensor[tuple(index)]
            shape = sub.shape
            block = np.ascontiguousarray(sub).reshape(n * n, -1)
            tensor[tuple(index)] = op._apply_moved(block).reshape(shape)
        return tensor

    def _round(self, tensor: np.ndarray, axis: int, forward: bool) -> np.ndarray:
        if forward:
            tensor = self._fwht_axis(tensor, axis)
            tensor = self._controlled_walk(tensor, axis, adjoint=False)
            tensor = self._fourier_axis(tensor, axis, inverse=True)
        else:
            tensor = self._fourier_axis(tensor, axis, inverse=False)
            tensor = self._controlled_walk(tensor, axis, adjoint=True)
            tensor = self._fwht_axis(tensor, axis)
        return tensor

    def _apply_moved(self, block):
        n = self.walk_ops.n
        k, s = self.config.k, self.config.s
        tensor = block.astype(np.complex128, copy=True).reshape((n, n) + (2 ** s,) * k + (-1,))
        for i in range(k):
            tensor = self._round(tensor, 2 + i, forward=True)
        tensor = np.asarray(tensor)
        tensor *= -1.0
        zero_index = (slice(None), slice(None)) + (0,) * k
        tensor[zero_index] *= -1.0
        for i in reversed(range(k)):
            tensor = self._round(tensor, 2 + i, forward=False)
        return tensor.reshape(block.shape)

    def adjoint(self):
        return self  # rounds conjugate a diagonal sign flip, so R is Hermitian


def approx_reflection(walk: WalkOperators, config: ApproxReflectionConfig,
                      max_amplitudes: int = MAX_AMPLITUDES) -> ApproxReflection:
    return ApproxReflection(walk, config, max_amplitudes=max_amplitudes)


def round_zero_read_amplitude(walk: WalkOperators, s: int) -> float:
    """Largest amplitude with which a single s-bit phase-detection round
    reads 0 on any walk eigenvector of nonzero eigenphase.

    Values at or below 1/2 make k rounds meet the 2^{1-k} reflection
    error target.  Uses the dense walk spectrum; pair dim must be small.
    """
    mat = _dense_pair_matrix(walk.walk, walk.n)
    phases = np.angle(scipy.linalg.schur(mat, output="complex")[0].diagonal()) / (2 * math.pi)
    phases %= 1.0
    worst = 0.0
    ell = np.arange(2 ** s)
    for p in phases:
        if min(p, 1 - p) < 1e-9:
            continue
        amp = abs(np.exp(2j * math.pi * p * ell).mean())
        worst = max(worst, amp)
    return worst


def _dense_pair_matrix(op: LinearOperator, n: int) -> np.ndarray:
    if n * n > engine.DENSE_CAP:
        raise SizeError(f"pair dimension {n * n} exceeds the dense cap {engine.DENSE_CAP}")
    eye = np.eye(n * n, dtype=np.complex128)
    return op._apply_moved(eye)


# ---------------------------------------------------------------------------
# Perturbed reference rotation
# ---------------------------------------------------------------------------


def perturbation_operator(n: int, eta: float, rng: np.random.Generator) -> DenseOperator:
    """Random unitary within operator distance eta of the identity.

    Built as exp(i*eta*H) with H a random Hermitian of unit spectral
    norm, so every unit vector moves by at most eta.
    """
    if eta < 0:
        raise ParameterError("perturbation size must be nonnegative")
    dim = n * n
    g = rng.standard_normal((dim, dim)) + 1j * rng.standard_normal((dim, dim))
    herm = (g + g.conj().T) / 2.0
    evals, evecs = np.linalg.eigh(herm)
    evals = evals / np.max(np.abs(evals))
    unitary = (evecs * np.exp(1j * eta * evals)) @ evecs.conj().T
    return DenseOperator(pair_registers(n), unitary, check_unitary=False)


# ---------------------------------------------------------------------------
# The search operator U
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SearchOperator:
    """Marked flip composed with a reflection backend, plus cost accounting."""

    op: LinearOperator
    raw_op: LinearOperator
    backend: str
    config: ApproxReflectionConfig
    walk: WalkOperators
    marked: MarkedSet
    workspace: tuple[tuple[str, int], ...]
    update_charge: int
    checking_charge: int
    eta: float | None = None

    @property
    def charges(self) -> dict[str, int]:
        return {"update": self.update_charge, "checking": self.checking_charge}

    def input_layout(self) -> RegisterLayout:
        return RegisterLayout(pair_registers(self.walk.n) + self.workspace)

    def dense_pair_matrix(self) -> np.ndarray:
        """Dense matrix on the pair space (workspace-free backends only)."""
        if self.workspace:
            raise SizeError("the workspace-backed operator has no pair-space matrix")
        return _dense_pair_matrix(self.raw_op, self.walk.n)


def search_operator(walk: WalkOperators, marked: MarkedSet, config: ApproxReflectionConfig,
                    backend: str = "full", *, eta: float | None = None,
                    rng: np.random.Generator | None = None,
                    meter: QueryMeter | None = None,
                    max_amplitudes: int = MAX_AMPLITUDES) -> SearchOperator:
    """One search step: flip marked pairs, then reflect through stationarity.

    Backends: "full" uses the workspace-backed approximate reflection;
    "ideal" substitutes the exact reflection (no workspace); and
    "perturbed-ideal" follows the exact rotation with a seeded random
    unitary within ``eta`` of the identity (default 2^{1-k}), modeling a
    reflection error of exactly the advertised size.
    """
    if backend not in BACKENDS:
        raise ParameterError(f"unknown backend {backend!r}; expected one of {BACKENDS}")
    flip = marked_flip(marked, walk.n)
    workspace: tuple[tuple[str, int], ...] = ()
    resolved_eta: float | None = None
    if backend == "full":
        reflector = approx_reflection(walk, config, max_amplitudes=max_amplitudes)
        workspace = probe_registers(config)
        steps: tuple[LinearOperator, ...] = (flip, reflector)
    elif backend == "ideal":
        steps = (flip, stationary_reflection(walk))
    else:
        resolved_eta = float(2.0 ** (1 - config.k)) if eta is None else float(eta)
        if rng is None:
            raise ParameterError("the perturbed backend needs a seeded generator")
        wobble = perturbation_operator(walk.n, resolved_eta, rng)
        steps = (flip, stationary_reflection(walk), wobble)
    raw: LinearOperator = ComposedOperator(steps)
    composed: LinearOperator = raw
    update_charge = math.ceil(UPDATE_CHARGE_CONSTANT * config.k / math.sqrt(walk.delta))
    if meter is not None:
        composed = ChargingOperator(raw, meter,
                                    {"update": update_charge, "checking": 1})
    return SearchOperator(
        op=composed, raw_op=raw, backend=backend, config=config, walk=walk, marked=marked,
        workspace=workspace, update_charge=update_charge, checking_charge=1,
        eta=resolved_eta,
    )


# ---------------------------------------------------------------------------
# Subspace sampling
# ---------------------------------------------------------------------------


def span_basis(walk: WalkOperators) -> np.ndarray:
    """Orthonormal rows spanning A + B on the pair space."""
    stacked = np.vstack([walk.basis_a, walk.basis_b])
    q = scipy.linalg.orth(stacked.T, rcond=1e-10)
    return np.ascontiguousarray(q.T)


def random_span_state(basis_rows: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Haar-ish random unit vector in the row span."""
    coeff = rng.standard_normal(basis_rows.shape[0]) + 1j * rng.standard_normal(basis_rows.shape[0])
    vec = coeff @ basis_rows
    return vec / np.linalg.norm(vec)
