"""Exact complex-vector simulation substrate.

States live on a product of named registers; operators act on a declared
subset of registers and are applied matrix-free wherever possible.  The
flattening convention is fixed throughout the package: the *leftmost*
register in a layout is the most significant factor of the flattened
index, i.e. ``flat = (((i0 * d1) + i1) * d2 + i2) ...``.

Everything is double precision complex.  Operators and states are
immutable after construction; appliers allocate fresh arrays, so distinct
states can be processed concurrently.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np

from .errors import EngineError, LayoutError, OrthonormalityError

#: Largest dimension for which operators keep a dense matrix realization.
DENSE_CAP = 4096

#: Norm drift tolerated after a single unitary application.
NORM_TOL = 1e-9


# ---------------------------------------------------------------------------
# Register layouts and state vectors
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class RegisterLayout:
    """Ordered collection of named registers; leftmost is most significant."""

    registers: tuple[tuple[str, int], ...]

    def __post_init__(self):
        names = [name for name, _ in self.registers]
        if len(set(names)) != len(names):
            raise LayoutError(f"duplicate register names in {names}")
        for name, dim in self.registers:
            if dim < 1:
                raise LayoutError(f"register {name!r} has dimension {dim} < 1")

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(name for name, _ in self.registers)

    @property
    def dims(self) -> tuple[int, ...]:
        return tuple(dim for _, dim in self.registers)

    @property
    def total_dim(self) -> int:
        return int(np.prod(self.dims, dtype=object))

    def axis(self, name: str) -> int:
        for i, (reg, _) in enumerate(self.registers):
            if reg == name:
                return i
        raise LayoutError(f"no register named {name!r} in layout {self.names}")

    def dim_of(self, name: str) -> int:
        return self.registers[self.axis(name)][1]

    def extended(self, new_registers: Sequence[tuple[str, int]], front: bool = True) -> "RegisterLayout":
        regs = tuple(new_registers)
        return RegisterLayout(regs + self.registers if front else self.registers + regs)


def layout(*registers: tuple[str, int]) -> RegisterLayout:
    return RegisterLayout(tuple(registers))


@dataclass(frozen=True)
class StateVector:
    """Unit vector over a register layout; amplitudes are read-only."""

    layout: RegisterLayout
    amplitudes: np.ndarray

    def __post_init__(self):
        amps = np.asarray(self.amplitudes, dtype=np.complex128)
        if amps.shape != (self.layout.total_dim,):
            raise LayoutError(
                f"amplitude vector has shape {amps.shape}, layout needs ({self.layout.total_dim},)"
            )
        amps = amps.copy()
        amps.flags.writeable = False
        object.__setattr__(self, "amplitudes", amps)

    @property
    def norm(self) -> float:
        return float(np.linalg.norm(self.amplitudes))

    def tensor(self) -> np.ndarray:
        return self.amplitudes.reshape(self.layout.dims)


def basis_state(lay: RegisterLayout, indices: Sequence[int]) -> StateVector:
    """Computational basis state |i0⟩|i1⟩... with one index per register."""
    if len(indices) != len(lay.registers):
        raise LayoutError("one index per register required")
    flat = 0
    for (name, dim), idx in zip(lay.registers, indices):
        if not 0 <= idx < dim:
            raise LayoutError(f"index {idx} out of range for register {name!r} (dim {dim})")
        flat = flat * dim + idx
    amps = np.zeros(lay.total_dim, dtype=np.complex128)
    amps[flat] = 1.0
    return StateVector(lay, amps)


def from_amplitudes(lay: RegisterLayout, amps: Iterable[complex], normalize: bool = False) -> StateVector:
    vec = np.asarray(list(amps) if not isinstance(amps, np.ndarray) else amps, dtype=np.complex128)
    if normalize:
        n = np.linalg.norm(vec)
        if n == 0:
            raise EngineError("cannot normalize the zero vector")
        vec = vec / n
    return StateVector(lay, vec)


def random_state(lay: RegisterLayout, rng: np.random.Generator) -> StateVector:
    vec = rng.standard_normal(lay.total_dim) + 1j * rng.standard_normal(lay.total_dim)
    return from_amplitudes(lay, vec, normalize=True)


# ---------------------------------------------------------------------------
# Linear operators
# ---------------------------------------------------------------------------


class LinearOperator:
    """Unitary acting on a declared tuple of (name, dim) registers.

    Subclasses implement ``_apply_moved`` on a block of shape (dim, R)
    where the operator's registers have been flattened into the leading
    axis; the trailing axis carries everything else (other registers of
    the state, batch dimensions).  ``dense()`` returns a matrix
    realization when the dimension is at most ``DENSE_CAP``, else None.
    """

    registers: tuple[tuple[str, int], ...] = ()

    @property
    def dim(self) -> int:
        return int(np.prod([d for _, d in self.registers], dtype=object))

    def _apply_moved(self, block: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def adjoint(self) -> "LinearOperator":
        raise NotImplementedError

    def dense(self) -> np.ndarray | None:
        if self.dim > DENSE_CAP:
            return None
        eye = np.eye(self.dim, dtype=np.complex128)
        return self._apply_moved(eye)

    def __matmul__(self, other: "LinearOperator") -> "LinearOperator":
        # (A @ B) applies B first, mirroring matrix composition.
        return ComposedOperator((other, self))


def apply_slab(op: LinearOperator, slab: np.ndarray, lay: RegisterLayout) -> np.ndarray:
    """Apply ``op`` over the layout axes of ``slab`` (shape (..., total_dim))."""
    lead = slab.shape[:-1]
    tensor = slab.reshape(*lead, *lay.dims)
    nlead = len(lead)
    axes = []
    for name, dim in op.registers:
        ax = lay.axis(name)
        if lay.dims[ax] != dim:
            raise LayoutError(
                f"register {name!r} has dim {lay.dims[ax]} in the layout but {dim} in the operator"
            )
        axes.append(nlead + ax)
    if not axes:
        return slab.copy()
    moved = np.moveaxis(tensor, axes, range(len(axes)))
    head = moved.shape[: len(axes)]
    block = np.ascontiguousarray(moved).reshape(int(np.prod(head)), -1)
    out = op._apply_moved(block)
    out = out.reshape(*head, *moved.shape[len(axes):])
    out = np.moveaxis(out, range(len(axes)), axes)
    return np.ascontiguousarray(out).reshape(*lead, -1)


def apply(op: LinearOperator, state: StateVector) -> StateVector:
    """Apply ``op`` to ``state``, acting as identity on untouched registers."""
    before = state.norm
    out = apply_slab(op, state.amplitudes[None, :], state.layout)[0]
    after = float(np.linalg.norm(out))
    if abs(after - before) > NORM_TOL:
        raise EngineError(
            f"norm drifted from {before!r} to {after!r} under {type(op).__name__}"
        )
    return StateVector(state.layout, out)


class IdentityOperator(LinearOperator):
    def __init__(self, registers: Sequence[tuple[str, int]]):
        self.registers = tuple(registers)

    def _apply_moved(self, block):
        return block.astype(np.complex128, copy=True)

    def adjoint(self):
        return self


class DenseOperator(LinearOperator):
    """Operator backed by an explicit matrix.  Checked for unitarity on
    construction up to moderate dimension (the check is cubic)."""

    def __init__(self, registers: Sequence[tuple[str, int]], matrix: np.ndarray,
                 check_unitary: bool | None = None):
        self.registers = tuple(registers)
        mat = np.asarray(matrix, dtype=np.complex128)
        if mat.shape != (self.dim, self.dim):
            raise LayoutError(f"matrix shape {mat.shape} does not match register dim {self.dim}")
        if check_unitary is None:
            check_unitary = self.dim <= 512
        if check_unitary:
            err = np.max(np.abs(mat.conj().T @ mat - np.eye(self.dim)))
            if err > NORM_TOL:
                raise EngineError(f"matrix is not unitary (max |O†O - I| = {err:.2e})")
        mat = mat.copy()
        mat.flags.writeable = False
        self.matrix = mat

    def _apply_moved(self, block):
        return self.matrix @ block

    def adjoint(self):
        return DenseOperator(self.registers, self.matrix.conj().T, check_unitary=False)

    def dense(self):
        return self.matrix


class DiagonalOperator(LinearOperator):
    """Diagonal unitary; entries must have unit modulus."""

    def __init__(self, registers: Sequence[tuple[str, int]], diagonal: np.ndarray):
        self.registers = tuple(registers)
        diag = np.asarray(diagonal, dtype=np.complex128)
        if diag.shape != (self.dim,):
            raise LayoutError(f"diagonal has shape {diag.shape}, need ({self.dim},)")
        if np.max(np.abs(np.abs(diag) - 1.0)) > NORM_TOL:
            raise EngineError("diagonal entries must have unit modulus")
        diag = diag.copy()
        diag.flags.writeable = False
        self.diagonal = diag

    def _apply_moved(self, block):
        return self.diagonal[:, None] * block

    def adjoint(self):
        return DiagonalOperator(self.registers, self.diagonal.conj())


class ProjectorReflection(LinearOperator):
    """2Π − I where Π projects onto the span of the given orthonormal rows.

    The default fixes the span and negates its orthogonal complement; the
    empty span gives −I, the full span gives I.  With ``fix_span=False``
    the signs swap (I − 2Π: span negated, complement fixed).  Matrix-free:
    cost per application is O(rank · dim) regardless of DENSE_CAP.
    """

    GRAM_TOL = 1e-8

    def __init__(self, registers: Sequence[tuple[str, int]], basis_rows: np.ndarray,
                 fix_span: bool = True):
        self.registers = tuple(registers)
        self.fix_span = fix_span
        rows = np.asarray(basis_rows, dtype=np.complex128)
        if rows.ndim != 2 or rows.shape[1] != self.dim:
            rows = rows.reshape(-1, self.dim)
        if rows.shape[0]:
            gram = rows.conj() @ rows.T
            err = np.max(np.abs(gram - np.eye(rows.shape[0])))
            if err > self.GRAM_TOL:
                raise OrthonormalityError(
                    f"basis rows are not orthonormal (max Gram deviation {err:.2e})"
                )
        rows = rows.copy()
        rows.flags.writeable = False
        self.basis_rows = rows

    def _apply_moved(self, block):
        sign = 1.0 if self.fix_span else -1.0
        if self.basis_rows.shape[0] == 0:
            return -sign * block
        coeffs = self.basis_rows.conj() @ block
        return sign * (2.0 * (self.basis_rows.T @ coeffs) - block)

    def adjoint(self):
        return self  # reflections are Hermitian involutions


def reflection_through(registers: Sequence[tuple[str, int]], vectors: np.ndarray) -> ProjectorReflection:
    """Reflection 2Π − I through the span of orthonormal ``vectors`` (rows)."""
    return ProjectorReflection(registers, vectors)


class InverseFourier(LinearOperator):
    """Inverse Fourier transform on a single register of dimension 2^t.

    Maps |b⟩ to 2^{-t/2} Σ_j exp(-2πi b j / 2^t) |j⟩; implemented with the
    FFT, so it is exact to rounding for any t.
    """

    def __init__(self, register: str, dim: int, forward: bool = False):
        if dim < 1 or dim & (dim - 1):
            raise LayoutError(f"Fourier register dimension {dim} is not a power of two")
        self.registers = ((register, dim),)
        self.forward = forward

    def _apply_moved(self, block):
        n = self.dim
        if self.forward:
            return np.fft.ifft(block, axis=0) * math.sqrt(n)
        return np.fft.fft(block, axis=0) / math.sqrt(n)

    def adjoint(self):
        name, dim = self.registers[0]
        return InverseFourier(name, dim, forward=not self.forward)


def inverse_fourier(register: str, dim: int) -> InverseFourier:
    return InverseFourier(register, dim)


class HadamardLayer(LinearOperator):
    """H^{⊗t} on a single register of dimension 2^t (fast Walsh–Hadamard)."""

    def __init__(self, register: str, dim: int):
        if dim < 1 or dim & (dim - 1):
            raise LayoutError(f"Hadamard register dimension {dim} is not a power of two")
        self.registers = ((register, dim),)

    def _apply_moved(self, block):
        out = block.astype(np.complex128, copy=True)
        n = self.dim
        h = 1
        inv_sqrt2 = 1.0 / math.sqrt(2.0)
        while h < n:
            view = out.reshape(n // (2 * h), 2, h, -1)
            a = view[:, 0].copy()
            b = view[:, 1].copy()
            view[:, 0] = (a + b) * inv_sqrt2
            view[:, 1] = (a - b) * inv_sqrt2
            h *= 2
        return out

    def adjoint(self):
        return self


class ComposedOperator(LinearOperator):
    """Product of operators applied in sequence (steps[0] first).

    Registers are the union of the children's registers in first-seen
    order; each child acts on its own slice of the union tensor.
    """

    def __init__(self, steps: Sequence[LinearOperator]):
        if not steps:
            raise LayoutError("composition needs at least one step")
        self.steps = tuple(steps)
        seen: dict[str, int] = {}
        regs: list[tuple[str, int]] = []
        for op in self.steps:
            for name, dim in op.registers:
                if name in seen:
                    if seen[name] != dim:
                        raise LayoutError(f"register {name!r} has conflicting dims in composition")
                else:
                    seen[name] = dim
                    regs.append((name, dim))
        self.registers = tuple(regs)
        self._union_layout = RegisterLayout(self.registers)

    def _apply_moved(self, block):
        # block: (union_dim, R); treat R as a trailing batch axis.
        out = np.ascontiguousarray(block.T)  # (R, union_dim)
        for op in self.steps:
            out = apply_slab(op, out, self._union_layout)
        return np.ascontiguousarray(out.T)

    def adjoint(self):
        return ComposedOperator(tuple(op.adjoint() for op in reversed(self.steps)))


class ControlledPower(LinearOperator):
    """op^exponent on the target registers iff the control qubit is |1⟩."""

    def __init__(self, op: LinearOperator, exponent: int, control: str):
        if exponent < 0:
            raise LayoutError(f"exponent must be nonnegative, got {exponent}")
        if any(name == control for name, _ in op.registers):
            raise LayoutError(f"control register {control!r} overlaps the target operator")
        self.base = op
        self.exponent = exponent
        self.control = control
        self.registers = ((control, 2),) + tuple(op.registers)

    def _apply_moved(self, block):
        out = block.astype(np.complex128, copy=True)
        if self.exponent == 0:
            return out
        half = self.base.dim
        target = out[half:]
        mat = self.base.dense()
        if mat is not None and self.exponent > 3:
            power = np.linalg.matrix_power(mat, self.exponent)
            out[half:] = power @ target
        else:
            for _ in range(self.exponent):
                target = self.base._apply_moved(target)
            out[half:] = target
        return out

    def adjoint(self):
        return ControlledPower(self.base.adjoint(), self.exponent, self.control)


def controlled_power(op: LinearOperator, exponent: int, control: str) -> ControlledPower:
    return ControlledPower(op, exponent, control)


# ---------------------------------------------------------------------------
# Measurement
# ---------------------------------------------------------------------------


def measure_distribution(state: StateVector, register: str) -> np.ndarray:
    """Marginal Born-rule probabilities of ``register``; sums to 1."""
    ax = state.layout.axis(register)
    tensor = np.abs(state.tensor()) ** 2
    other = tuple(i for i in range(tensor.ndim) if i != ax)
    probs = tensor.sum(axis=other)
    total = probs.sum()
    if abs(total - 1.0) > NORM_TOL:
        raise EngineError(f"probabilities sum to {total!r}, state is not normalized")
    return probs


def sample_outcome(state: StateVector, register: str, rng: np.random.Generator) -> int:
    """Draw one outcome of measuring ``register`` with the given generator."""
    probs = measure_distribution(state, register)
    return int(rng.choice(len(probs), p=probs / probs.sum()))


# ---------------------------------------------------------------------------
# Diagnostics
# ---------------------------------------------------------------------------


def dense_realization(op: LinearOperator, lay: RegisterLayout) -> np.ndarray:
    """Matrix of ``op`` on the full layout, built column by column.

    Intended for tests; refuses layouts above DENSE_CAP.
    """
    dim = lay.total_dim
    if dim > DENSE_CAP:
        raise LayoutError(f"layout dimension {dim} exceeds the dense cap {DENSE_CAP}")
    cols = np.empty((dim, dim), dtype=np.complex128)
    eye = np.eye(dim, dtype=np.complex128)
    for i in range(dim):
        cols[:, i] = apply_slab(op, eye[i][None, :], lay)[0]
    return cols


def assert_unitary(op: LinearOperator, lay: RegisterLayout, tol: float = NORM_TOL) -> float:
    mat = dense_realization(op, lay)
    err = float(np.max(np.abs(mat.conj().T @ mat - np.eye(lay.total_dim))))
    if err > tol:
        raise EngineError(f"operator is not unitary on {lay.names}: max deviation {err:.3e}")
    return err


def format_state(state: StateVector, cutoff: float = 0.0) -> str:
    """Text table (index, register indices, real, imag) for small states."""
    if state.layout.total_dim > 1024:
        raise LayoutError("debug dump limited to dimension <= 1024")
    dims = state.layout.dims
    lines = ["index  " + " ".join(f"{n:>4}" for n in state.layout.names) + "        real        imag"]
    for flat, amp in enumerate(state.amplitudes):
        if abs(amp) <= cutoff:
            continue
        idx, rem = [], flat
        for d in reversed(dims):
            idx.append(rem % d)
            rem //= d
        idx = idx[::-1]
        lines.append(
            f"{flat:>5}  " + " ".join(f"{i:>4}" for i in idx)
            + f"  {amp.real:>10.6f}  {amp.imag:>10.6f}"
        )
    return "\n".join(lines)
