"""Composite Hilbert-space algebra for four three-level atoms and two
single-photon cavity modes.

The composite space is the 324-dimensional tensor product

    A1 x A2 x A3 x A4 x C1 x C2,

where each atom has the three circular levels ``i < g < e`` (encoded as
0, 1, 2) and each cavity is truncated to photon numbers {0, 1}.  The
subsystem order and the mixed-radix index formula below are fixed so that
state dumps are bit-for-bit comparable across runs:

    index = (((a1*3 + a2)*3 + a3)*3 + a4)*4 + n1*2 + n2

States are dense complex vectors; operators are sparse matrices built by
embedding single- or two-subsystem operators with identity elsewhere.
Both are immutable after construction and safe to share across threads.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np
import scipy.sparse as sp

# Atomic levels, in increasing energy.
LEVEL_I, LEVEL_G, LEVEL_E = 0, 1, 2
LEVEL_NAMES = "ige"

SUBSYSTEMS = ("A1", "A2", "A3", "A4", "C1", "C2")
DIMS = (3, 3, 3, 3, 2, 2)
DIM = 324

# Mixed-radix strides of each subsystem in the composite index.
STRIDES = (108, 36, 12, 4, 2, 1)

_IDX = np.arange(DIM)
# _DIGITS[k][j] = value of subsystem k in basis state j.
_DIGITS = tuple((_IDX // STRIDES[k]) % DIMS[k] for k in range(6))


def subsystem_index(which: int | str) -> int:
    """Map a subsystem name like ``"C1"`` (or an index 0..5) to its axis."""
    if isinstance(which, str):
        try:
            return SUBSYSTEMS.index(which)
        except ValueError:
            raise ValueError(f"unknown subsystem {which!r}") from None
    if not 0 <= which < 6:
        raise ValueError(f"subsystem index {which} out of range")
    return which


@dataclass(frozen=True)
class BasisLabel:
    """One composite basis state: four atomic levels and two photon numbers."""

    a1: int
    a2: int
    a3: int
    a4: int
    n1: int
    n2: int

    def __post_init__(self):
        for name, v, d in zip(("a1", "a2", "a3", "a4", "n1", "n2"),
                              self.as_tuple(), DIMS):
            if not 0 <= v < d:
                raise ValueError(f"{name}={v} outside 0..{d - 1}")

    def as_tuple(self) -> tuple[int, ...]:
        return (self.a1, self.a2, self.a3, self.a4, self.n1, self.n2)

    def __str__(self) -> str:
        a = "".join(LEVEL_NAMES[v] for v in self.as_tuple()[:4])
        return f"{a}{self.n1}{self.n2}"


def basis_index(label: BasisLabel) -> int:
    """Composite index of a basis label under the fixed mixed-radix order."""
    i = 0
    for v, d in zip(label.as_tuple(), DIMS):
        i = i * d + v
    return i


def basis_label(index: int) -> BasisLabel:
    """Inverse of :func:`basis_index`."""
    if not 0 <= index < DIM:
        raise ValueError(f"index {index} outside 0..{DIM - 1}")
    vals = []
    for d in reversed(DIMS):
        vals.append(index % d)
        index //= d
    return BasisLabel(*vals[::-1])


class PureState:
    """Immutable complex amplitude vector on the 324-dim composite basis."""

    __slots__ = ("_amps",)

    def __init__(self, amplitudes, copy: bool = True):
        a = np.array(amplitudes, dtype=np.complex128, copy=copy).reshape(-1)
        if a.shape != (DIM,):
            raise ValueError(f"state must have {DIM} amplitudes, got {a.shape}")
        a.flags.writeable = False
        self._amps = a

    @property
    def amplitudes(self) -> np.ndarray:
        return self._amps

    @property
    def norm(self) -> float:
        return float(np.linalg.norm(self._amps))

    def normalized(self) -> "PureState":
        n = self.norm
        if n == 0.0:
            raise ZeroDivisionError("cannot normalize the zero state")
        return PureState(self._amps / n, copy=False)

    def __repr__(self) -> str:
        nnz = int(np.count_nonzero(np.abs(self._amps) > 1e-12))
        return f"PureState(nnz={nnz}, norm={self.norm:.6g})"


def basis_state(a1: int, a2: int, a3: int, a4: int, n1: int, n2: int) -> PureState:
    """Computational basis state |a1 a2 a3 a4 n1 n2>."""
    v = np.zeros(DIM, dtype=np.complex128)
    v[basis_index(BasisLabel(a1, a2, a3, a4, n1, n2))] = 1.0
    return PureState(v, copy=False)


def product_state(factors: Sequence[np.ndarray]) -> PureState:
    """Tensor product of six local vectors (four length-3, two length-2)."""
    if len(factors) != 6:
        raise ValueError("need one local vector per subsystem (6)")
    out = np.array([1.0 + 0j])
    for f, d in zip(factors, DIMS):
        f = np.asarray(f, dtype=np.complex128).reshape(-1)
        if f.shape != (d,):
            raise ValueError(f"local vector has length {f.shape[0]}, expected {d}")
        out = np.kron(out, f)
    return PureState(out, copy=False)


def inner(psi: PureState, chi: PureState) -> complex:
    """Inner product <psi|chi>, conjugate-linear in the first argument."""
    return complex(np.vdot(psi.amplitudes, chi.amplitudes))


class LinearOperator:
    """Sparse operator on the composite space with optional structure flags.

    ``hermitian=True`` is verified at construction (to 1e-12); ``unitary``
    is a builder promise used only for diagnostics.
    """

    __slots__ = ("matrix", "hermitian", "unitary")

    def __init__(self, matrix, hermitian: bool | None = None,
                 unitary: bool | None = None):
        m = sp.csr_matrix(matrix, dtype=np.complex128)
        if m.shape != (DIM, DIM):
            raise ValueError(f"operator must be {DIM}x{DIM}, got {m.shape}")
        if hermitian:
            dev = abs(m - m.getH())
            if dev.nnz and dev.max() > 1e-12:
                raise ValueError("operator flagged hermitian is not")
        self.matrix = m
        self.hermitian = hermitian
        self.unitary = unitary

    def apply(self, psi: PureState) -> PureState:
        return PureState(self.matrix @ psi.amplitudes, copy=False)

    def dagger(self) -> "LinearOperator":
        return LinearOperator(self.matrix.getH(), hermitian=self.hermitian,
                              unitary=self.unitary)

    def __matmul__(self, other):
        if isinstance(other, PureState):
            return self.apply(other)
        if isinstance(other, LinearOperator):
            return LinearOperator(self.matrix @ other.matrix)
        return NotImplemented

    def __repr__(self) -> str:
        return (f"LinearOperator(nnz={self.matrix.nnz}, "
                f"hermitian={self.hermitian}, unitary={self.unitary})")


def _embed_site(site: int, local: np.ndarray) -> sp.csr_matrix:
    left = int(np.prod(DIMS[:site])) if site else 1
    right = int(np.prod(DIMS[site + 1:])) if site < 5 else 1
    m = sp.csr_matrix(np.asarray(local, dtype=np.complex128))
    out = sp.kron(sp.identity(left, format="csr"), m, format="csr")
    return sp.kron(out, sp.identity(right, format="csr"), format="csr")


def embed_atom_op(atom: int, local) -> LinearOperator:
    """Embed a 3x3 operator on atom 1..4, identity on everything else."""
    if atom not in (1, 2, 3, 4):
        raise ValueError(f"atom index must be 1..4, got {atom}")
    local = np.asarray(local, dtype=np.complex128)
    if local.shape != (3, 3):
        raise ValueError("atomic operator must be 3x3")
    herm = bool(np.allclose(local, local.conj().T, atol=1e-14))
    return LinearOperator(_embed_site(atom - 1, local), hermitian=herm or None)


def embed_cavity_op(cavity: int, local) -> LinearOperator:
    """Embed a 2x2 operator on cavity 1..2, identity on everything else."""
    if cavity not in (1, 2):
        raise ValueError(f"cavity index must be 1 or 2, got {cavity}")
    local = np.asarray(local, dtype=np.complex128)
    if local.shape != (2, 2):
        raise ValueError("cavity operator must be 2x2")
    herm = bool(np.allclose(local, local.conj().T, atol=1e-14))
    return LinearOperator(_embed_site(cavity + 3, local), hermitian=herm or None)


def embed_pair(site_a: int, site_b: int, local: np.ndarray) -> sp.csr_matrix:
    """Embed an operator on the ordered pair (site_a, site_b) of subsystems.

    ``local`` acts on the product basis |v_a, v_b> with index v_a*d_b + v_b.
    Sites need not be adjacent in the subsystem order.
    """
    if site_a == site_b:
        raise ValueError("sites must differ")
    da, db = DIMS[site_a], DIMS[site_b]
    local = np.asarray(local, dtype=np.complex128)
    if local.shape != (da * db, da * db):
        raise ValueError(f"local operator must be {da * db}x{da * db}")
    dig_a, dig_b = _DIGITS[site_a], _DIGITS[site_b]
    sa, sb = STRIDES[site_a], STRIDES[site_b]
    rows, cols, vals = [], [], []
    for rloc, cloc in zip(*np.nonzero(local)):
        v = local[rloc, cloc]
        mask = (dig_a == cloc // db) & (dig_b == cloc % db)
        src = _IDX[mask]
        dst = src + (int(rloc // db) - int(cloc // db)) * sa \
                  + (int(rloc % db) - int(cloc % db)) * sb
        rows.append(dst)
        cols.append(src)
        vals.append(np.full(src.shape, v))
    m = sp.coo_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(DIM, DIM),
    )
    return m.tocsr()


def reduced_density(psi: PureState, keep: Iterable[int | str]) -> np.ndarray:
    """Density matrix of the kept subsystems, tracing out the rest.

    The row/column basis of the result is the tensor product of the kept
    factors in the order given, e.g. ``keep=("C1", "A4")`` yields a 6x6
    matrix indexed by n1*3 + a4.  The trace equals the squared norm of
    ``psi`` (exactly 1 for a normalized state, to within 1e-10).
    """
    axes = [subsystem_index(k) for k in keep]
    if not axes:
        raise ValueError("keep set must be nonempty")
    if len(set(axes)) != len(axes):
        raise ValueError("keep set has repeated subsystems")
    rest = [k for k in range(6) if k not in axes]
    dk = int(np.prod([DIMS[k] for k in axes]))
    m = psi.amplitudes.reshape(DIMS).transpose(axes + rest).reshape(dk, -1)
    return m @ m.conj().T


def dump_state(psi: PureState, threshold: float = 1e-12) -> str:
    """Text dump: one ``a1 a2 a3 a4 n1 n2 re im`` line per nonzero amplitude.

    Atoms print as level letters (i/g/e), cavities as photon counts; lines
    are sorted by composite index and amplitudes below ``threshold`` are
    suppressed.
    """
    lines = []
    amps = psi.amplitudes
    for j in np.nonzero(np.abs(amps) > threshold)[0]:
        lab = basis_label(int(j))
        fields = [LEVEL_NAMES[v] for v in lab.as_tuple()[:4]]
        fields += [str(lab.n1), str(lab.n2),
                   repr(float(amps[j].real)), repr(float(amps[j].imag))]
        lines.append(" ".join(fields))
    return "\n".join(lines)
