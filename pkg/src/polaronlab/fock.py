"""Truncated bosonic Fock space over grid modes and the fiber Hamiltonian H(P).

States are occupation vectors with at most ``N_max`` bosons in total.  They are
ordered by total boson number, then by descending lexicographic order of the
occupation vector, so the vacuum sits at index 0 and single-boson states follow
in mode order.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np
import scipy.sparse as sp

from .model import KGridSpec, ModelSpec

DEFAULT_SIZE_LIMIT = 2_000_000


class BasisTooLarge(ValueError):
    pass


@dataclass(frozen=True)
class OccupationState:
    occupations: tuple
    modes: np.ndarray
    omega: np.ndarray

    @property
    def N(self) -> int:
        return int(sum(self.occupations))

    @property
    def Pf(self) -> np.ndarray:
        return np.asarray(self.occupations, dtype=float) @ self.modes

    @property
    def field_energy(self) -> float:
        return float(np.asarray(self.occupations, dtype=float) @ self.omega)


def basis_size(M: int, N_max: int) -> int:
    return math.comb(M + N_max, N_max)


def _void_keys(keys: np.ndarray) -> np.ndarray:
    keys = np.ascontiguousarray(keys, dtype=np.uint8)
    return keys.view(np.dtype((np.void, keys.shape[1]))).ravel()


class FockBasis:
    """All occupation vectors over ``grid`` with total number <= ``N_max``."""

    def __init__(self, grid: KGridSpec, N_max: int, occupations: np.ndarray):
        self.grid = grid
        self.N_max = int(N_max)
        self.occupations = occupations
        self.occupations.setflags(write=False)
        self._keys = _void_keys(self._sort_key(occupations))

    def _sort_key(self, occ):
        # ascending byte order of [N, 255 - n_0, ...] is the basis order
        occ = np.asarray(occ)
        n = occ.sum(axis=1, keepdims=True)
        return np.hstack([n, 255 - occ]).astype(np.uint8)

    @property
    def size(self) -> int:
        return len(self.occupations)

    def __len__(self):
        return self.size

    @property
    def M(self) -> int:
        return self.occupations.shape[1]

    @cached_property
    def total_number(self) -> np.ndarray:
        return self.occupations.sum(axis=1)

    @cached_property
    def field_momentum(self) -> np.ndarray:
        """P_f(s) for every state, shape (size, d)."""
        return self.occupations.astype(float) @ self.grid.modes

    def field_energy(self, omega: np.ndarray) -> np.ndarray:
        return self.occupations.astype(float) @ omega

    def state(self, i: int, model: ModelSpec | None = None) -> OccupationState:
        omega = model.omega if model is not None else np.zeros(self.M)
        return OccupationState(tuple(int(v) for v in self.occupations[i]), self.grid.modes, omega)

    def lookup(self, occ) -> np.ndarray:
        """Indices of occupation vectors; -1 where a vector is not in the basis."""
        occ = np.atleast_2d(np.asarray(occ))
        if occ.shape[1] != self.M:
            raise ValueError("occupation vector length does not match mode count")
        bad = (occ < 0).any(axis=1) | (occ.sum(axis=1) > self.N_max)
        keys = _void_keys(self._sort_key(np.clip(occ, 0, 255)))
        pos = np.searchsorted(self._keys, keys)
        pos = np.minimum(pos, self.size - 1)
        found = (self._keys[pos] == keys) & ~bad
        return np.where(found, pos, -1)

    def index(self, occ) -> int:
        i = int(self.lookup(occ)[0])
        if i < 0:
            raise KeyError(tuple(occ))
        return i


def enumerate_basis(grid: KGridSpec, N_max: int, limit: int = DEFAULT_SIZE_LIMIT) -> FockBasis:
    M = grid.size
    if M < 1 or N_max < 0:
        raise ValueError("need at least one mode and N_max >= 0")
    if N_max > 255:
        raise ValueError("N_max above 255 is not supported")
    size = basis_size(M, N_max)
    if size > limit:
        raise BasisTooLarge(f"basis size binomial({M}+{N_max}, {N_max}) = {size} exceeds limit {limit}")
    occ = np.zeros((size, M), dtype=np.int16)
    row = 0
    for n in range(N_max + 1):
        for combo in itertools.combinations_with_replacement(range(M), n):
            for i in combo:
                occ[row, i] += 1
            row += 1
    return FockBasis(grid, N_max, occ)


class SparseOperator:
    """Real sparse operator in compressed-row layout with an exact symmetry flag."""

    def __init__(self, matrix: sp.spmatrix):
        m = sp.csr_matrix(matrix)
        m.sum_duplicates()
        m.sort_indices()
        if not np.all(np.isfinite(m.data)):
            raise ValueError("non-finite matrix element")
        self.matrix = m

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    @cached_property
    def symmetric(self) -> bool:
        return (self.matrix != self.matrix.T).nnz == 0

    @property
    def nnz(self) -> int:
        return self.matrix.nnz

    def offdiag_pairs(self) -> int:
        coo = self.matrix.tocoo()
        return int(np.sum(coo.row < coo.col))

    def diagonal(self) -> np.ndarray:
        return self.matrix.diagonal()

    def __matmul__(self, v):
        return self.matrix @ v

    def toarray(self) -> np.ndarray:
        return self.matrix.toarray()

    def triples(self):
        coo = self.matrix.tocoo()
        order = np.lexsort((coo.col, coo.row))
        return coo.row[order], coo.col[order], coo.data[order]

    def dump(self, path) -> None:
        """Write 'row col value' lines sorted by (row, col), values with 17 digits."""
        rows, cols, vals = self.triples()
        with open(path, "w") as fh:
            for r, c, v in zip(rows, cols, vals):
                fh.write(f"{r} {c} {v:.17g}\n")


def _creation_pattern(basis: FockBasis):
    """(source, target, mode, sqrt(n_mode + 1)) for every a_i* connection."""
    occ = basis.occupations
    src_all = np.nonzero(basis.total_number < basis.N_max)[0]
    src, tgt, mode, amp = [], [], [], []
    for i in range(basis.M):
        up = occ[src_all].copy()
        up[:, i] += 1
        t = basis.lookup(up)
        assert np.all(t >= 0)
        src.append(src_all)
        tgt.append(t)
        mode.append(np.full(len(src_all), i))
        amp.append(np.sqrt(occ[src_all, i] + 1.0))
    return np.concatenate(src), np.concatenate(tgt), np.concatenate(mode), np.concatenate(amp)


class FiberFamily:
    """Precomputed pieces of H(P) for one model and basis, reusable over many P.

    H(P) = diag(1/2 |P - P_f|^2 + sum n omega) + sqrt(alpha) * coupling.
    """

    def __init__(self, model: ModelSpec, basis: FockBasis):
        if basis.grid != model.grid:
            raise ValueError("basis grid does not match model grid")
        self.model = model
        self.basis = basis
        self.Pf = basis.field_momentum
        self.field_energy = basis.field_energy(model.omega)
        src, tgt, mode, amp = _creation_pattern(basis)
        vals = math.sqrt(model.alpha) * model.coupling[mode] * amp
        n = basis.size
        upper = sp.csr_matrix((vals, (src, tgt)), shape=(n, n))
        self.coupling = (upper + upper.T).tocsr()
        self.coupling.sort_indices()

    def diagonal(self, P) -> np.ndarray:
        P = np.broadcast_to(np.asarray(P, dtype=float), (self.model.d,))
        diff = P - self.Pf
        return 0.5 * np.sum(diff * diff, axis=1) + self.field_energy

    def hamiltonian(self, P) -> SparseOperator:
        n = self.basis.size
        return SparseOperator(self.coupling + sp.dia_matrix((self.diagonal(P)[None, :], [0]), shape=(n, n)))


def assemble_fiber_hamiltonian(model: ModelSpec, P, basis: FockBasis) -> SparseOperator:
    return FiberFamily(model, basis).hamiltonian(P)


def assemble_number_operator(basis: FockBasis) -> SparseOperator:
    return SparseOperator(sp.diags(basis.total_number.astype(float)))


def assemble_Pf_component(basis: FockBasis, axis: int) -> SparseOperator:
    return SparseOperator(sp.diags(basis.field_momentum[:, axis]))
