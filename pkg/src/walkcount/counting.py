"""Approximate counting of marked states of a reversible Markov chain.

The pipeline estimates the rotation angle induced by the marked set:
prepare the stationary pair state, run eigenphase estimation on the
search step, and square the sine of the readout.  Parameter selection
follows the accuracy/confidence recipe that makes the readout land
within 2^{-t1} of the rotation phase with constant probability, with
the reflection quality parameter chosen so circuit-level error stays
below the estimation window.

Backends: "ideal" evaluates the exact rotation analytically through its
two-dimensional invariant subspace (any chain size); "perturbed-ideal"
composes the exact rotation with a seeded unitary within eta of the
identity and diagonalizes on the pair space; "full" simulates the
workspace-backed reflection and is reserved for small chains and small
(t, k).
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from . import phase_estimation as pe
from . import walk as walkmod
from .engine import StateVector, apply
from .errors import ParameterError, SizeError
from .markov import MarkedSet, MarkovChain, marked_fraction, spectral_gap, stationary
from .meter import MeterSnapshot, QueryMeter
from .phase_estimation import PhaseEstimationRun
from .walk import ApproxReflectionConfig, WalkOperators, build_walk

#: Failure budget baked into the readout-length formula (log2(2 + 1/0.02) bits).
CONFIDENCE_XI = 0.01

UNIFORM_TOL = 1e-9


@dataclass(frozen=True)
class CountingParams:
    """Resolved parameters for one counting run."""

    epsilon: float
    lam: float
    t1: int
    t: int
    k: int
    backend: str

    @property
    def reflection_error(self) -> float:
        return 2.0 ** (1 - self.k)


def algorithm_params(epsilon: float, lam: float, backend: str = "ideal") -> CountingParams:
    """Readout length and reflection quality for target accuracy epsilon.

    t1 = ceil(log2(5*pi/(epsilon*sqrt(lam))) - 1) accuracy bits, six extra
    confidence bits, and k = 2t + t1 + 1 reflection rounds so that the
    circuit-level deviation 2^{2t-k+1} equals the estimation granularity
    2^{-t1}.
    """
    if not 0 < epsilon < 1:
        raise ParameterError(f"accuracy epsilon must lie in (0, 1), got {epsilon}")
    if not 0 < lam <= 1:
        raise ParameterError(f"marked-fraction lower bound must lie in (0, 1], got {lam}")
    if backend not in walkmod.BACKENDS:
        raise ParameterError(f"unknown backend {backend!r}")
    t1 = math.ceil(round(math.log2(5 * math.pi / (epsilon * math.sqrt(lam))) - 1.0, 12))
    t1 = max(1, t1)
    t = t1 + pe.precision_for(1, CONFIDENCE_XI) - 1  # t1 + ceil(log2(2 + 1/0.02))
    k = 2 * t + t1 + 1
    return CountingParams(epsilon=epsilon, lam=lam, t1=t1, t=t, k=k, backend=backend)


@dataclass(frozen=True)
class CountingResult:
    """Readout and derived estimate, with the exact outcome distribution."""

    y: float
    estimate: float
    n_states: int
    marked_count: int
    p_marked: float
    phi: float
    params: CountingParams
    run: PhaseEstimationRun
    window_mass: float
    lam_exceeds_p: bool
    meter: MeterSnapshot

    @property
    def distribution(self) -> np.ndarray:
        return self.run.distribution


def _require_uniform(dist_pi: np.ndarray) -> None:
    n = len(dist_pi)
    if np.max(np.abs(dist_pi - 1.0 / n)) > UNIFORM_TOL:
        raise ParameterError(
            "stationary distribution is not uniform; use approx_fraction instead"
        )


def _estimate_angle(chain: MarkovChain, marked: MarkedSet, params: CountingParams,
                    seed, meter: QueryMeter | None,
                    perturbation_seed: int | None = None,
                    eta: float | None = None,
                    round_bits: int | None = None,
                    max_amplitudes: int = pe.MAX_AMPLITUDES):
    """Shared pipeline: build the backend operator, estimate its phase."""
    rng = np.random.default_rng(seed)
    dist = stationary(chain)
    p_m = marked_fraction(dist, marked)
    lam_exceeds = params.lam > p_m + 1e-12
    if lam_exceeds:
        warnings.warn(
            f"lower bound lam={params.lam} exceeds the marked fraction {p_m}; "
            "accuracy guarantees no longer apply", stacklevel=3)
    phi = math.asin(math.sqrt(p_m))
    delta = spectral_gap(chain)
    update_charge = math.ceil(walkmod.UPDATE_CHARGE_CONSTANT * params.k / math.sqrt(delta))

    if meter is not None:
        meter.charge("setup", 1)

    if params.backend == "ideal":
        # The exact rotation keeps the evolution inside the plane spanned by
        # the marked and unmarked components of the stationary state, whose
        # eigenphases are +-phi/pi with squared overlap 1/2 each.
        phases = np.array([phi / math.pi, 1.0 - phi / math.pi]) % 1.0
        probs = 0.5 * pe.phase_kernel(float(phases[0]), params.t) \
            + 0.5 * pe.phase_kernel(float(phases[1]), params.t)
        probs /= probs.sum()
        sample = int(rng.choice(len(probs), p=probs))
        run = PhaseEstimationRun(t=params.t, distribution=probs, sample=sample,
                                 applications=2 ** params.t - 1)
    elif params.backend == "perturbed-ideal":
        w = build_walk(chain)
        pert_rng = np.random.default_rng(seed if perturbation_seed is None else perturbation_seed)
        sop = walkmod.search_operator(w, marked, ApproxReflectionConfig(k=params.k, s=1),
                                      backend="perturbed-ideal", eta=eta, rng=pert_rng)
        matrix = sop.dense_pair_matrix()
        input_vec = walkmod.stationary_pair_amplitudes(chain, w.pi)
        run = pe.estimate_spectral(matrix, input_vec, params.t, rng)
    else:
        w = build_walk(chain)
        s = round_bits if round_bits is not None else walkmod.default_round_bits(delta)
        cfg = ApproxReflectionConfig(k=params.k, s=s)
        sop = walkmod.search_operator(w, marked, cfg, backend="full",
                                      max_amplitudes=max_amplitudes)
        input_state = _padded_pi_state(w, sop)
        run = pe.estimate(sop.op, input_state, params.t, rng,
                          max_amplitudes=max_amplitudes)

    if meter is not None:
        meter.charge("update", update_charge * run.applications)
        meter.charge("checking", run.applications)
    return run, p_m, phi, lam_exceeds


def _padded_pi_state(w: WalkOperators, sop: walkmod.SearchOperator) -> StateVector:
    lay = sop.input_layout()
    pair = walkmod.stationary_pair_amplitudes(w.chain, w.pi)
    ws_dim = lay.total_dim // (w.n * w.n)
    pad = np.zeros(ws_dim, dtype=np.complex128)
    pad[0] = 1.0
    return StateVector(lay, np.kron(pair, pad))


def _window_mass(run: PhaseEstimationRun, scale: float, target: float, epsilon: float) -> float:
    """Mass of readouts whose derived estimate lands within epsilon*target."""
    y = np.arange(2 ** run.t) / 2 ** run.t
    estimates = scale * np.sin(math.pi * y) ** 2
    good = np.abs(estimates - target) < epsilon * target
    return float(run.distribution[good].sum())


def approx_count(chain: MarkovChain, marked: MarkedSet, params: CountingParams, *,
                 seed=0, meter: QueryMeter | None = None,
                 perturbation_seed: int | None = None, eta: float | None = None,
                 round_bits: int | None = None,
                 max_amplitudes: int = pe.MAX_AMPLITUDES) -> CountingResult:
    """Estimate the number of marked states of a uniform-stationary chain.

    Runs eigenphase estimation on the search step with the stationary
    state as input and returns n*sin^2(y*pi) for readout y, together with
    the exact probability that the estimate lands within epsilon of the
    true count (available because the simulation knows the ground truth).
    """
    own_meter = meter if meter is not None else QueryMeter()
    dist = stationary(chain)
    _require_uniform(dist.pi)
    run, p_m, phi, lam_exceeds = _estimate_angle(
        chain, marked, params, seed, own_meter,
        perturbation_seed=perturbation_seed, eta=eta, round_bits=round_bits,
        max_amplitudes=max_amplitudes)
    n = chain.n
    m_true = marked.size
    y = run.sample / 2 ** run.t
    estimate = n * math.sin(math.pi * y) ** 2
    mass = _window_mass(run, float(n), float(m_true), params.epsilon)
    return CountingResult(
        y=y, estimate=estimate, n_states=n, marked_count=m_true, p_marked=p_m,
        phi=phi, params=params, run=run, window_mass=mass,
        lam_exceeds_p=lam_exceeds, meter=own_meter.snapshot(),
    )


@dataclass(frozen=True)
class FractionResult:
    y: float
    estimate: float
    p_marked: float
    phi: float
    params: CountingParams
    run: PhaseEstimationRun
    window_mass: float
    lam_exceeds_p: bool
    meter: MeterSnapshot


def approx_fraction(chain: MarkovChain, marked: MarkedSet, params: CountingParams, *,
                    seed=0, meter: QueryMeter | None = None,
                    perturbation_seed: int | None = None, eta: float | None = None,
                    round_bits: int | None = None,
                    max_amplitudes: int = pe.MAX_AMPLITUDES) -> FractionResult:
    """Estimate the stationary mass of the marked set (any reversible chain).

    Identical pipeline to ``approx_count`` without the state-count
    multiplier: the output is sin^2(y*pi).
    """
    own_meter = meter if meter is not None else QueryMeter()
    run, p_m, phi, lam_exceeds = _estimate_angle(
        chain, marked, params, seed, own_meter,
        perturbation_seed=perturbation_seed, eta=eta, round_bits=round_bits,
        max_amplitudes=max_amplitudes)
    y = run.sample / 2 ** run.t
    estimate = math.sin(math.pi * y) ** 2
    mass = _window_mass(run, 1.0, p_m, params.epsilon)
    return FractionResult(
        y=y, estimate=estimate, p_marked=p_m, phi=phi, params=params, run=run,
        window_mass=mass, lam_exceeds_p=lam_exceeds, meter=own_meter.snapshot(),
    )


# ---------------------------------------------------------------------------
# Circuit-deviation diagnostics
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class DeviationReport:
    t: int
    k: int
    s: int | None
    eta: float | None
    bound: float
    worst_case: float
    sampled_max: float
    trials: int

    @property
    def ok(self) -> bool:
        return self.worst_case <= self.bound + 1e-12


def _gram_deviation(op_a, op_b, layout, basis_rows: np.ndarray, ws_dim: int, t: int,
                    trials: int, rng: np.random.Generator,
                    max_amplitudes: int) -> tuple[float, float]:
    """Worst-case and sampled deviation of two estimation circuits.

    Images of an orthonormal basis of the relevant subspace are compared
    once; random-state deviations then come from the Gram matrix of the
    differences, which is exact and avoids re-running the circuits per
    trial.
    """
    pad = np.zeros(ws_dim, dtype=np.complex128)
    pad[0] = 1.0
    diffs = []
    for row in basis_rows:
        state = StateVector(layout, np.kron(row, pad))
        img_a = pe.phase_circuit_state(op_a, state, t, max_amplitudes=max_amplitudes)
        img_b = pe.phase_circuit_state(op_b, state, t, max_amplitudes=max_amplitudes)
        diffs.append(img_a.amplitudes - img_b.amplitudes)
    stack = np.array(diffs)
    gram = stack.conj() @ stack.T
    worst = float(math.sqrt(max(np.linalg.eigvalsh(gram).max(), 0.0)))
    sampled = 0.0
    for _ in range(trials):
        c = rng.standard_normal(len(basis_rows)) + 1j * rng.standard_normal(len(basis_rows))
        c /= np.linalg.norm(c)
        val = float(np.real(c.conj() @ gram @ c))
        sampled = max(sampled, math.sqrt(max(val, 0.0)))
    return worst, sampled


def operator_deviation(chain: MarkovChain, marked: MarkedSet, k: int, *,
                       s: int | None = None, trials: int = 100, seed: int = 0,
                       max_amplitudes: int = pe.MAX_AMPLITUDES) -> DeviationReport:
    """Single-application deviation between the approximate and exact search
    steps on inputs from the walk span with cleared workspace.

    The bound is the reflection quality 2^{1-k}.  Implemented through the
    Gram matrix of basis-image differences, so the reported worst case
    covers the entire input subspace.
    """
    rng = np.random.default_rng(seed)
    w = build_walk(chain)
    use_s = s if s is not None else walkmod.default_round_bits(w.delta)
    cfg = ApproxReflectionConfig(k=k, s=use_s)
    sop = walkmod.search_operator(w, marked, cfg, backend="full",
                                  max_amplitudes=max_amplitudes)
    ideal = walkmod.ideal_rotation(w, marked, extended=True)
    basis = walkmod.span_basis(w)
    lay = sop.input_layout()
    ws_dim = 2 ** cfg.tau
    pad = np.zeros(ws_dim, dtype=np.complex128)
    pad[0] = 1.0
    diffs = []
    for row in basis:
        state = StateVector(lay, np.kron(row, pad))
        diffs.append(apply(sop.op, state).amplitudes - apply(ideal, state).amplitudes)
    stack = np.array(diffs)
    gram = stack.conj() @ stack.T
    worst = float(math.sqrt(max(np.linalg.eigvalsh(gram).max(), 0.0)))
    sampled = 0.0
    for _ in range(trials):
        c = rng.standard_normal(len(basis)) + 1j * rng.standard_normal(len(basis))
        c /= np.linalg.norm(c)
        sampled = max(sampled, math.sqrt(max(float(np.real(c.conj() @ gram @ c)), 0.0)))
    return DeviationReport(t=0, k=k, s=use_s, eta=None, bound=2.0 ** (1 - k),
                           worst_case=worst, sampled_max=sampled, trials=trials)


def circuit_deviation(chain: MarkovChain, marked: MarkedSet, t: int, k: int, *,
                      s: int | None = None, trials: int = 100, seed: int = 0,
                      max_amplitudes: int = pe.MAX_AMPLITUDES) -> DeviationReport:
    """Deviation between estimation circuits over the approximate and exact
    search steps, on inputs from the walk span with cleared workspace.

    The reported worst case maximizes over the whole input subspace and
    therefore dominates every sampled trial; the bound is 2^{2t-k+1}.
    """
    if t == 0:
        return DeviationReport(t=0, k=k, s=s, eta=None, bound=2.0 ** (1 - k),
                               worst_case=0.0, sampled_max=0.0, trials=trials)
    rng = np.random.default_rng(seed)
    w = build_walk(chain)
    use_s = s if s is not None else walkmod.default_round_bits(w.delta)
    cfg = ApproxReflectionConfig(k=k, s=use_s)
    sop = walkmod.search_operator(w, marked, cfg, backend="full",
                                  max_amplitudes=max_amplitudes)
    ideal = walkmod.ideal_rotation(w, marked, extended=True)
    basis = walkmod.span_basis(w)
    worst, sampled = _gram_deviation(sop.op, ideal, sop.input_layout(), basis,
                                     2 ** cfg.tau, t, trials, rng, max_amplitudes)
    return DeviationReport(t=t, k=k, s=use_s, eta=None, bound=2.0 ** (2 * t - k + 1),
                           worst_case=worst, sampled_max=sampled, trials=trials)


def perturbed_circuit_deviation(chain: MarkovChain, marked: MarkedSet, t: int,
                                eta: float, *, trials: int = 100, seed: int = 0,
                                max_amplitudes: int = pe.MAX_AMPLITUDES) -> DeviationReport:
    """Deviation between estimation circuits over the exact rotation and an
    eta-perturbed copy, against the accumulation bound 2^t (2^t - 1) eta.

    Exercises the step-level error amplification argument at workspace-free
    scale: each of the 2^t - 1 controlled applications can add at most eta,
    and the readout register fans the worst branch out 2^t ways.
    """
    rng = np.random.default_rng(seed)
    w = build_walk(chain)
    cfg = ApproxReflectionConfig(k=1, s=1)
    pert_rng = np.random.default_rng(seed + 1)
    sop = walkmod.search_operator(w, marked, cfg, backend="perturbed-ideal",
                                  eta=eta, rng=pert_rng)
    ideal = walkmod.ideal_rotation(w, marked, extended=False)
    basis = walkmod.span_basis(w)
    worst, sampled = _gram_deviation(sop.op, ideal, sop.input_layout(), basis,
                                     1, t, trials, rng, max_amplitudes)
    bound = (2.0 ** t) * (2.0 ** t - 1.0) * eta
    return DeviationReport(t=t, k=cfg.k, s=None, eta=eta, bound=bound,
                           worst_case=worst, sampled_max=sampled, trials=trials)
