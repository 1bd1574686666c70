"""Eigenphase estimation of a unitary by controlled powers and an inverse
Fourier transform, with exact outcome distributions.

Two evaluation paths produce the same distribution:

* the circuit path simulates the full register pipeline (Hadamard layer,
  cumulative controlled powers, inverse Fourier transform) and works for
  any operator, at memory cost 2^t times the operator's space;
* the spectral path expands the input in the operator's eigenbasis and
  sums the analytic single-phase outcome kernel, weighted by squared
  overlaps.  It needs a dense matrix but is exact and fast at any t.

Outcome phases are circular: the distance between estimates is measured
mod 1, so 0.99 and 0.01 are 0.02 apart.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .engine import LinearOperator, RegisterLayout, StateVector, apply_slab
from .errors import EngineError, ParameterError, SizeError

READOUT = "readout"

#: Hard cap on simulated amplitudes in the circuit path.
MAX_AMPLITUDES = 150_000_000


def _ceil_log2(x: float) -> int:
    # round() guards against 4.000000000000001-style float noise before ceil
    return math.ceil(round(math.log2(x), 12))


def precision_for(t1: int, xi: float) -> int:
    """Readout bits needed for accuracy 2^{-t1} with failure chance xi."""
    if t1 < 1:
        raise ParameterError("need at least one accuracy bit")
    if not 0 < xi <= 1:
        raise ParameterError("failure probability must lie in (0, 1]")
    return t1 + _ceil_log2(2.0 + 1.0 / (2.0 * xi))


@dataclass(frozen=True)
class PhaseEstimationRun:
    """Exact outcome distribution plus one sampled readout."""

    t: int
    distribution: np.ndarray
    sample: int
    applications: int

    def __post_init__(self):
        probs = np.asarray(self.distribution, dtype=np.float64).copy()
        total = probs.sum()
        if abs(total - 1.0) > 1e-9:
            raise EngineError(f"distribution sums to {total!r}")
        probs.flags.writeable = False
        object.__setattr__(self, "distribution", probs)

    @property
    def estimate(self) -> float:
        return self.sample / 2 ** self.t


def circular_distance(a: float, b: float) -> float:
    """Distance between phases in [0,1) measured around the circle."""
    d = abs(a - b) % 1.0
    return min(d, 1.0 - d)


def phase_kernel(phase: float, t: int) -> np.ndarray:
    """Exact readout distribution when the input is an eigenvector whose
    eigenvalue has phase ``phase`` (as a fraction of a full turn)."""
    b = np.arange(2 ** t)
    d = (phase - b / 2 ** t) % 1.0
    x = math.pi * d
    s = np.sin(x)
    with np.errstate(divide="ignore", invalid="ignore"):
        vals = (np.sin((2 ** t) * x) / ((2 ** t) * s)) ** 2
    return np.where(np.abs(s) < 1e-12, 1.0, vals)


def phase_circuit_state(op: LinearOperator, input_state: StateVector, t: int,
                        max_amplitudes: int = MAX_AMPLITUDES) -> StateVector:
    """Full statevector after the t-bit estimation circuit on ``input_state``.

    Controlled powers are realized by iterated application: the slice of
    the readout register holding values >= b receives one extra factor of
    the operator at step b, for exactly 2^t - 1 operator applications.
    """
    if t < 1:
        raise ParameterError("need t >= 1 readout bits")
    rest_layout = input_state.layout
    dim = 2 ** t
    if dim * rest_layout.total_dim > max_amplitudes:
        raise SizeError(
            f"circuit needs {dim * rest_layout.total_dim} amplitudes, budget {max_amplitudes}"
        )
    arr = np.broadcast_to(input_state.amplitudes, (dim, rest_layout.total_dim))
    arr = np.array(arr) / math.sqrt(dim)  # Hadamard layer on |0^t>
    for b in range(1, dim):
        arr[b:] = apply_slab(op, arr[b:], rest_layout)
    arr = np.fft.fft(arr, axis=0) / math.sqrt(dim)  # inverse Fourier transform
    full_layout = rest_layout.extended([(READOUT, dim)], front=True)
    return StateVector(full_layout, arr.reshape(-1))


def estimate(op: LinearOperator, input_state: StateVector, t: int,
             rng: np.random.Generator,
             max_amplitudes: int = MAX_AMPLITUDES) -> PhaseEstimationRun:
    """Run the estimation circuit and read out the phase register.

    Returns the exact marginal distribution over readouts together with
    one seeded sample.  Query charging flows through the operator's own
    applier (wrap it in a charging operator to meter it).
    """
    state = phase_circuit_state(op, input_state, t, max_amplitudes=max_amplitudes)
    tensor = np.abs(state.amplitudes.reshape(2 ** t, -1)) ** 2
    probs = tensor.sum(axis=1)
    sample = int(rng.choice(len(probs), p=probs / probs.sum()))
    return PhaseEstimationRun(t=t, distribution=probs, sample=sample,
                              applications=2 ** t - 1)


def eigenphase_mixture(matrix: np.ndarray, input_vec: np.ndarray,
                       weight_cutoff: float = 1e-14) -> tuple[np.ndarray, np.ndarray]:
    """Eigenphases of a unitary matrix and the input's squared overlaps.

    Uses a complex Schur decomposition, which is diagonal with orthonormal
    vectors for normal matrices; rejects visibly non-normal input.
    """
    tri, vecs = scipy.linalg.schur(np.asarray(matrix, dtype=np.complex128), output="complex")
    off = np.max(np.abs(tri - np.diag(np.diagonal(tri))))
    if off > 1e-8:
        raise EngineError(f"matrix is not normal (Schur off-diagonal {off:.2e})")
    phases = (np.angle(np.diagonal(tri)) / (2 * math.pi)) % 1.0
    weights = np.abs(vecs.conj().T @ input_vec) ** 2
    keep = weights > weight_cutoff
    return phases[keep], weights[keep]


def estimate_spectral(matrix: np.ndarray, input_vec: np.ndarray, t: int,
                      rng: np.random.Generator,
                      weight_cutoff: float = 1e-14) -> PhaseEstimationRun:
    """Exact readout distribution via the eigenphase mixture.

    The readout distribution of any input equals the squared-overlap
    mixture of single-eigenphase kernels, because the circuit acts
    diagonally on eigencomponents and distinct eigenvectors stay
    orthogonal.  Memory is O(2^t), independent of the operator's size.
    """
    if t < 1:
        raise ParameterError("need t >= 1 readout bits")
    phases, weights = eigenphase_mixture(matrix, input_vec, weight_cutoff)
    probs = np.zeros(2 ** t)
    for phase, weight in zip(phases, weights):
        probs += weight * phase_kernel(float(phase), t)
    probs /= probs.sum()
    sample = int(rng.choice(len(probs), p=probs))
    return PhaseEstimationRun(t=t, distribution=probs, sample=sample,
                              applications=2 ** t - 1)


def success_probability(run: PhaseEstimationRun, target_phase: float, t1: int) -> float:
    """Readout mass within circular distance < 2^{-t1} of the target."""
    if t1 < 0:
        raise ParameterError("accuracy bits must be nonnegative")
    outcomes = np.arange(2 ** run.t) / 2 ** run.t
    d = np.abs(outcomes - (target_phase % 1.0))
    d = np.minimum(d % 1.0, 1.0 - d % 1.0)
    window = d < 2.0 ** (-t1)
    return float(run.distribution[window].sum())
