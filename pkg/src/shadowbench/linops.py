"""Dense complex linear algebra for small qubit registers.

Conventions used throughout the package:

* Qubit 0 is the **most significant bit** of a computational-basis index,
  so the basis state ``|b_0 b_1 ... b_{n-1}>`` has index ``int("b0b1...", 2)``
  and ``kron(a, b)`` puts ``a`` on the more significant qubits.
* Everything is dense ``complex128``; the intended regime is at most ~12
  qubits for full density matrices (multi-copy operators grow much faster,
  see :func:`swap_operator`).
* Tolerances default to 1e-10 absolute unless stated otherwise.

All functions are pure: they never mutate their inputs and hold no state,
so they are safe to call concurrently.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import reduce

import numpy as np

ATOL = 1e-10


class DimensionError(ValueError):
    """Raised when an operand's shape is inconsistent with a register."""


@dataclass(frozen=True)
class QubitRegister:
    """An ordered qubit register partitioned into named blocks.

    ``blocks`` maps a label (e.g. ``"A"``) to the tuple of qubit indices it
    contains.  Blocks must be disjoint and together cover ``range(n_qubits)``.
    """

    n_qubits: int
    blocks: dict[str, tuple[int, ...]] = field(default_factory=dict)

    def __post_init__(self):
        seen: set[int] = set()
        for name, qubits in self.blocks.items():
            qs = set(qubits)
            if len(qs) != len(qubits):
                raise ValueError(f"block {name!r} repeats a qubit")
            if qs & seen:
                raise ValueError(f"block {name!r} overlaps another block")
            if qs and (min(qs) < 0 or max(qs) >= self.n_qubits):
                raise ValueError(f"block {name!r} is out of range")
            seen |= qs
        if self.blocks and seen != set(range(self.n_qubits)):
            raise ValueError("blocks must cover every qubit of the register")
        # freeze the block dict against accidental mutation
        object.__setattr__(self, "blocks", dict(self.blocks))

    @property
    def dim(self) -> int:
        return 2**self.n_qubits

    def block_qubits(self, name: str) -> tuple[int, ...]:
        return tuple(self.blocks[name])

    def block_dim(self, name: str) -> int:
        return 2 ** len(self.blocks[name])


def bipartite_register(n_a: int, n_b: int) -> QubitRegister:
    """Register of ``n_a + n_b`` qubits with contiguous blocks A then B."""
    return QubitRegister(
        n_a + n_b,
        {"A": tuple(range(n_a)), "B": tuple(range(n_a, n_a + n_b))},
    )


def kron(*ops: np.ndarray) -> np.ndarray:
    """Kronecker product of any number of matrices (left = most significant)."""
    if not ops:
        raise ValueError("kron of nothing")
    return reduce(np.kron, ops)


def _as_tensor(m: np.ndarray, n_qubits: int) -> np.ndarray:
    d = 2**n_qubits
    if m.shape != (d, d):
        raise DimensionError(f"matrix shape {m.shape} does not match {n_qubits} qubits")
    return m.reshape((2,) * (2 * n_qubits))


def partial_trace(m: np.ndarray, reg: QubitRegister, keep) -> np.ndarray:
    """Trace out every block of ``reg`` that is not in ``keep``.

    ``keep`` is a block name or an iterable of block names.  The kept qubits
    retain their original relative order.  The trace is preserved:
    ``Tr(result) == Tr(m)``.
    """
    if isinstance(keep, str):
        keep = (keep,)
    keep = set(keep)
    unknown = keep - set(reg.blocks)
    if unknown:
        raise KeyError(f"unknown blocks {sorted(unknown)}")
    keep_qubits = sorted(q for name in keep for q in reg.blocks[name])
    traced = [q for q in range(reg.n_qubits) if q not in keep_qubits]

    t = _as_tensor(np.asarray(m), reg.n_qubits)
    n = reg.n_qubits
    for q in sorted(traced, reverse=True):
        # axes shift as earlier qubits are contracted away; going from the
        # back keeps the row/col axis pair of qubit q at (q, q + live).
        live = t.ndim // 2
        t = np.trace(t, axis1=q, axis2=q + live)
    d_keep = 2 ** len(keep_qubits)
    return t.reshape(d_keep, d_keep)


def permute_qubits(m: np.ndarray, perm) -> np.ndarray:
    """Reorder qubits: new qubit position k holds old qubit ``perm[k]``."""
    perm = list(perm)
    n = len(perm)
    if sorted(perm) != list(range(n)):
        raise ValueError(f"{perm} is not a permutation")
    t = _as_tensor(np.asarray(m), n)
    order = perm + [n + p for p in perm]
    d = 2**n
    return t.transpose(order).reshape(d, d)


def vectorize(m: np.ndarray) -> np.ndarray:
    """Row-major vectorization: ``sum_ij m_ij |i>|j>``."""
    return np.asarray(m).reshape(-1)


def devectorize(v: np.ndarray, rows: int, cols: int) -> np.ndarray:
    """Inverse of :func:`vectorize`."""
    v = np.asarray(v)
    if v.size != rows * cols:
        raise DimensionError(f"vector of size {v.size} is not {rows}x{cols}")
    return v.reshape(rows, cols)


def realign(m: np.ndarray, d_a: int, d_b: int) -> np.ndarray:
    """Realignment of a bipartite operator.

    Maps ``m[(a b), (a' b')]`` to ``R[(a a'), (b b')]`` where ``a`` runs over
    the first (more significant) factor of dimension ``d_a``.  The singular
    values of ``R`` are the operator Schmidt coefficients of ``m`` up to
    normalization, and ``R @ R.conj().T`` is the partial trace of
    ``|m><m|`` over the second factor of the doubled space.
    """
    m = np.asarray(m)
    if m.shape != (d_a * d_b, d_a * d_b):
        raise DimensionError(f"matrix shape {m.shape} does not match {d_a}x{d_b} split")
    t = m.reshape(d_a, d_b, d_a, d_b)
    return t.transpose(0, 2, 1, 3).reshape(d_a * d_a, d_b * d_b)


def realign_register(m: np.ndarray, reg: QubitRegister) -> np.ndarray:
    """:func:`realign` with the A|B split taken from a two-block register.

    Block "A" must occupy the leading (most significant) qubits.
    """
    qa, qb = reg.blocks["A"], reg.blocks["B"]
    if tuple(sorted(qa)) != tuple(range(len(qa))):
        raise DimensionError("block A must be the leading qubits for realignment")
    return realign(m, 2 ** len(qa), 2 ** len(qb))


def swap_operator(reg: QubitRegister, copies: int, swaps) -> np.ndarray:
    """Dense operator swapping register blocks between copies.

    ``swaps`` is an iterable of ``(block, k, l)`` with 0-based copy indices:
    each entry swaps the qubits of ``block`` between copy ``k`` and copy
    ``l`` of the full register.  A block may appear in at most one swap.
    The result acts on the ``copies``-fold tensor power (copy 0 most
    significant) and is unitary, Hermitian and involutive.

    Dense output: total qubits ``copies * reg.n_qubits`` should stay small
    (<= 12 or so).  For traces against products of matrices at larger sizes
    use :func:`multicopy_swap_trace`, which never builds the operator.
    """
    n = reg.n_qubits
    total = copies * n
    if total > 16:
        raise DimensionError(f"{copies} copies of {n} qubits is too large for a dense operator")
    seen_blocks: set[str] = set()
    perm = np.arange(total)  # position -> position, qubit q of copy c at c*n + q
    for block, k, l in swaps:
        if not (0 <= k < copies and 0 <= l < copies):
            raise ValueError(f"copy index out of range in swap {(block, k, l)}")
        if k == l:
            raise ValueError("cannot swap a copy with itself")
        if block in seen_blocks:
            raise ValueError(f"block {block!r} swapped more than once")
        seen_blocks.add(block)
        for q in reg.blocks[block]:
            perm[[k * n + q, l * n + q]] = perm[[l * n + q, k * n + q]]

    dim = 2**total
    idx = np.arange(dim)
    bits = (idx[:, None] >> (total - 1 - np.arange(total))) & 1
    permuted = bits[:, perm]
    weights = 1 << (total - 1 - np.arange(total))
    target = permuted @ weights
    op = np.zeros((dim, dim), dtype=complex)
    op[target, idx] = 1.0
    return op


def multicopy_swap_trace(mats, reg: QubitRegister, swaps) -> complex:
    """``Tr[ S (m_0 x m_1 x ... ) ]`` for a product of block swaps ``S``.

    Contracts the trace directly (never building the multi-copy operator),
    so it works for matrices far beyond the dense-operator ceiling.  Each
    block is wired according to the permutation its swaps generate; blocks
    not mentioned are traced within each copy.
    """
    mats = [np.asarray(m) for m in mats]
    copies = len(mats)
    names = list(reg.blocks)
    # per-block copy permutation (involution built from the swap list)
    perms = {name: np.arange(copies) for name in names}
    for block, k, l in swaps:
        p = perms[block]
        p[[k, l]] = p[[l, k]]

    dims = [2 ** len(reg.blocks[name]) for name in names]
    tensors = []
    subs = []
    next_label = iter(range(copies * 2 * len(names)))
    row_labels = np.empty((copies, len(names)), dtype=int)
    for c in range(copies):
        for bi in range(len(names)):
            row_labels[c, bi] = next(next_label)
    # column label of block bi in copy c = row label of the same block in the
    # copy it is wired to: col(c) connects to row(perm(c)).
    for c, m in enumerate(mats):
        if m.shape != (reg.dim, reg.dim):
            raise DimensionError("matrix does not match register dimension")
        t = m.reshape(dims + dims)
        rows = [int(row_labels[c, bi]) for bi in range(len(names))]
        cols = [int(row_labels[perms[names[bi]][c], bi]) for bi in range(len(names))]
        tensors.append(t)
        subs.append(rows + cols)
    args = []
    for t, s in zip(tensors, subs):
        args.extend((t, s))
    return complex(np.einsum(*args, [], optimize=True))


def eigh_sorted(m: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Hermitian eigendecomposition with eigenvalues sorted descending."""
    vals, vecs = np.linalg.eigh(m)
    order = np.argsort(vals)[::-1]
    return vals[order], vecs[:, order]


def singular_values(m: np.ndarray) -> np.ndarray:
    """Singular values, nonnegative and sorted descending."""
    return np.linalg.svd(np.asarray(m), compute_uv=False)


def is_hermitian(m: np.ndarray, atol: float = ATOL) -> bool:
    m = np.asarray(m)
    return bool(np.allclose(m, m.conj().T, atol=atol))


def random_density_matrix(n_qubits: int, rng: np.random.Generator, rank: int | None = None) -> np.ndarray:
    """Random mixed state: normalized ``G G``:sup:`dagger` with Ginibre ``G``."""
    d = 2**n_qubits
    rank = d if rank is None else rank
    g = rng.standard_normal((d, rank)) + 1j * rng.standard_normal((d, rank))
    rho = g @ g.conj().T
    return rho / np.trace(rho).real
