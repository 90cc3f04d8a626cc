"""Classical shadows, batch shadows and multi-copy estimators.

A randomized-measurement record (per-qubit setting + outcome bitstring)
becomes a classical shadow ``x_i [3 u_i^dag |s_i><s_i| u_i - I]``.  Shadows
sharing a unitary index are averaged, the per-unitary shadows are grouped
into ``n'`` contiguous batches, and multi-copy functionals are estimated by
symmetrized sums over tuples of *distinct* batches.

The estimators never touch a multi-copy operator.  For a bipartite split
A|B every functional used here reduces to traces of products of the
realignment matrices ``R_b`` of the batch shadows:

* purity pair terms         ``Tr(rho_b1 rho_b2)       = Tr(R_b1 R_b2^dag)``
* fourth-moment quadruples  ``Tr(S rho_b1 x..x rho_b4) = Tr(R_b1 R_b2^dag R_b3 R_b4^dag)``
* sector-projected versions insert the diagonal projector of the doubled-A
  charge in front of the odd slots.

Sums over distinct tuples are evaluated by Moebius inversion on the lattice
of set partitions of the tuple slots, which needs only O(n') work per
partition; the literal tuple sum is kept (``u_statistic_direct``) as an
independent cross-check.
"""

from __future__ import annotations

import itertools
import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from . import exact
from .linops import QubitRegister, kron
from .quench import (
    PAULI_ROTATIONS,
    QuenchState,
    born_probabilities,
    random_local_unitaries,
    record_rng,
)

PAULI_LABELS = ("X", "Y", "Z")
ENSEMBLE_PAULI = "pauli"
ENSEMBLE_HAAR = "haar"


@dataclass(frozen=True)
class MeasurementRecord:
    """One randomized-measurement shot.

    Exactly one of ``basis`` (Pauli labels) or ``unitaries`` (explicit 2x2
    rotations, shape ``(n, 2, 2)``) is set; ``bits`` holds the z-basis
    outcome with qubit 0 leftmost.
    """

    r: int
    m: int
    bits: str
    basis: tuple[str, ...] | None = None
    unitaries: np.ndarray | None = None

    def __post_init__(self):
        if (self.basis is None) == (self.unitaries is None):
            raise ValueError("record needs exactly one of basis or unitaries")
        n = len(self.basis) if self.basis is not None else len(self.unitaries)
        if len(self.bits) != n:
            raise ValueError("bits length does not match the number of qubits")
        if self.basis is not None and any(b not in PAULI_LABELS for b in self.basis):
            raise ValueError(f"unknown basis label in {self.basis}")

    @property
    def n_qubits(self) -> int:
        return len(self.bits)


def shadow_factors(rec: MeasurementRecord, qubits=None) -> list[np.ndarray]:
    """Per-qubit 2x2 shadow factors ``3 u^dag |s><s| u - I``."""
    if qubits is None:
        qubits = range(rec.n_qubits)
    facs = []
    for q in qubits:
        if rec.basis is not None:
            u = PAULI_ROTATIONS[rec.basis[q]]
        else:
            u = np.asarray(rec.unitaries[q])
            if not np.allclose(u @ u.conj().T, np.eye(2), atol=1e-10):
                raise ValueError(f"basis on qubit {q} is not unitary")
        ket = u.conj().T[:, int(rec.bits[q])]
        facs.append(3.0 * np.outer(ket, ket.conj()) - np.eye(2))
    return facs


def build_shadow(rec: MeasurementRecord, qubits=None) -> np.ndarray:
    """Classical shadow of one record, optionally restricted to ``qubits``.

    Restriction is exact: every factor has unit trace, so tracing out a
    qubit of the shadow just drops its factor.
    """
    return kron(*shadow_factors(rec, qubits))


def per_unitary_shadows(records, qubits=None) -> tuple[list[int], np.ndarray]:
    """Average the shots of each unitary index into one shadow.

    Returns the sorted unitary indices and the matching stack of matrices.
    Shots are grouped by outcome substring first, so the cost per unitary is
    bounded by the number of *distinct* outcomes rather than the shot count.
    """
    groups: dict[int, dict[tuple, list[MeasurementRecord]]] = {}
    for rec in records:
        sub = tuple(rec.bits[q] for q in qubits) if qubits is not None else rec.bits
        groups.setdefault(rec.r, {}).setdefault(sub, []).append(rec)
    rs = sorted(groups)
    if not rs:
        raise ValueError("no records")
    dim = 2 ** (len(qubits) if qubits is not None else len(next(iter(groups[rs[0]].values()))[0].bits))
    stack = np.zeros((len(rs), dim, dim), dtype=complex)
    for i, r in enumerate(rs):
        total = sum(len(v) for v in groups[r].values())
        for recs in groups[r].values():
            stack[i] += (len(recs) / total) * build_shadow(recs[0], qubits)
    return rs, stack


@dataclass
class ShadowBatch:
    """Average of a contiguous group of per-unitary shadows."""

    b: int
    matrix: np.ndarray
    count: int
    members: np.ndarray | None = None  # (count, d, d) per-unitary shadows
    unitary_ids: tuple[int, ...] = ()


def make_batches(records, n_prime: int, qubits=None, shuffle_seed=None) -> list[ShadowBatch]:
    """Group records into ``n_prime`` batch shadows.

    Records with equal unitary index are averaged first; the per-unitary
    shadows are then split into ``n_prime`` contiguous groups (ordered by
    unitary index, or by a recorded random permutation when
    ``shuffle_seed`` is given).  A non-divisible count is truncated with a
    warning.  Requires ``n_prime <= number of unitaries``.
    """
    rs, stack = per_unitary_shadows(records, qubits)
    n_u = len(rs)
    if n_prime > n_u:
        raise ValueError(f"n_prime={n_prime} exceeds the {n_u} available unitaries")
    order = np.arange(n_u)
    if shuffle_seed is not None:
        order = np.random.default_rng(shuffle_seed).permutation(n_u)
    per = n_u // n_prime
    if n_u % n_prime:
        warnings.warn(
            f"{n_u} unitaries not divisible by n'={n_prime}; truncating {n_u % n_prime} trailing shadows",
            stacklevel=2,
        )
        order = order[: per * n_prime]
    batches = []
    for b in range(n_prime):
        sel = order[b * per : (b + 1) * per]
        members = stack[sel]
        mat = members.mean(axis=0)
        tr = np.trace(mat).real
        if abs(tr - 1.0) > 1e-9:
            raise ValueError(f"batch {b} trace {tr} != 1")
        batches.append(
            ShadowBatch(b, mat, len(sel), members, tuple(int(rs[i]) for i in sel))
        )
    return batches


def batches_from_stack(stack: np.ndarray, n_prime: int) -> list[ShadowBatch]:
    """Contiguous batches straight from a per-unitary shadow stack."""
    n_u = stack.shape[0]
    if n_prime > n_u:
        raise ValueError(f"n_prime={n_prime} exceeds the {n_u} available shadows")
    per = n_u // n_prime
    if n_u % n_prime:
        warnings.warn(
            f"{n_u} shadows not divisible by n'={n_prime}; truncating {n_u % n_prime}",
            stacklevel=2,
        )
    return [
        ShadowBatch(b, stack[b * per : (b + 1) * per].mean(axis=0), per,
                    stack[b * per : (b + 1) * per], tuple(range(b * per + 1, (b + 1) * per + 1)))
        for b in range(n_prime)
    ]


@dataclass
class EstimateReport:
    """Value, resampling error and provenance of one estimate."""

    value: float
    n_used: int
    n_batches: int
    jackknife_error: float = 0.0
    valid: bool = True
    metadata: dict = field(default_factory=dict)


# ---------------------------------------------------------------------------
# distinct-tuple sums over realignment stacks
# ---------------------------------------------------------------------------


def _set_partitions(n: int):
    """All partitions of range(n) as tuples assigning a block id per slot."""
    if n == 1:
        yield (0,)
        return
    for rest in _set_partitions(n - 1):
        k = max(rest) + 1
        for blk in range(k + 1):
            yield rest + (blk,)


def _mobius_coeff(groups: tuple[int, ...]) -> int:
    coeff = 1
    for blk in set(groups):
        size = groups.count(blk)
        coeff *= (-1) ** (size - 1) * math.factorial(size - 1)
    return coeff


_QUAD_PARTITIONS = [(g, _mobius_coeff(g)) for g in _set_partitions(4)]


_EINSUM_PATHS: dict = {}


def _einsum_cached(subscripts: str, *ops) -> complex:
    """einsum with the (shape-keyed) contraction path computed once."""
    key = (subscripts, tuple(op.shape for op in ops))
    path = _EINSUM_PATHS.get(key)
    if path is None:
        path, _ = np.einsum_path(subscripts, *ops, optimize="optimal")
        _EINSUM_PATHS[key] = path
    return np.einsum(subscripts, *ops, optimize=path)


def _pair_sum_distinct(u: np.ndarray, v: np.ndarray) -> complex:
    """sum over b1 != b2 of Tr(u[b1] v[b2]^dag)."""
    su, sv = u.sum(axis=0), v.sum(axis=0)
    total = np.einsum("ij,ij->", su, sv.conj())
    diag = np.einsum("aij,aij->", u, v.conj())
    return complex(total - diag)


def _quad_sum_distinct(u: np.ndarray, v: np.ndarray) -> complex:
    """sum over distinct (b1,b2,b3,b4) of Tr(u[b1] v[b2]^dag u[b3] v[b4]^dag).

    Moebius inversion over the 15 set partitions of the four slots turns
    the O(n'^4) sum into a handful of einsum contractions, each linear in
    the number of batches.
    """
    vc = v.conj()
    letters = "abcd"
    total = 0.0 + 0.0j
    for groups, coeff in _QUAD_PARTITIONS:
        lab = [letters[g] for g in groups]
        sub = f"{lab[0]}ij,{lab[1]}kj,{lab[2]}kl,{lab[3]}il->"
        total += coeff * _einsum_cached(sub, u, vc, u, vc)
    return complex(total)


def _realignment_stack(mats: np.ndarray, d_a: int, d_b: int) -> np.ndarray:
    """Realign a stack of bipartite matrices: (n, d, d) -> (n, d_a^2, d_b^2)."""
    n = mats.shape[0]
    t = mats.reshape(n, d_a, d_b, d_a, d_b)
    return t.transpose(0, 1, 3, 2, 4).reshape(n, d_a * d_a, d_b * d_b)


def _split_dims(charge: exact.ChargeOperator) -> tuple[int, int]:
    return len(np.atleast_1d(charge.qa_diag)), len(np.atleast_1d(charge.qb_diag))


def _sector_mask(charge: exact.ChargeOperator, q: int) -> np.ndarray:
    sq = np.rint(charge.supercharge_a()).astype(int)
    return (sq == q).astype(float)


def _batch_stack(batches) -> np.ndarray:
    return np.stack([b.matrix for b in batches])


def _moment2(r_stack: np.ndarray, mask: np.ndarray | None = None) -> float:
    n = r_stack.shape[0]
    u = r_stack if mask is None else mask[None, :, None] * r_stack
    return _pair_sum_distinct(u, r_stack).real / (n * (n - 1))


def _moment4(r_stack: np.ndarray, mask: np.ndarray | None = None) -> float:
    n = r_stack.shape[0]
    u = r_stack if mask is None else mask[None, :, None] * r_stack
    norm = n * (n - 1) * (n - 2) * (n - 3)
    return _quad_sum_distinct(u, r_stack).real / norm


# ---------------------------------------------------------------------------
# jackknife resampling
# ---------------------------------------------------------------------------


def _rebuild_stack(members: np.ndarray, n_prime: int) -> np.ndarray:
    per = members.shape[0] // n_prime
    trimmed = members[: per * n_prime]
    return trimmed.reshape(n_prime, per, *members.shape[1:]).mean(axis=1)


def _jackknife(stat, batches, n: int) -> tuple[float, bool]:
    """Jackknife error of ``stat`` (a function of a batch-matrix stack).

    Resamples batches (leave-one-out) when there are more batches than
    copies; otherwise regroups leave-one-unitary-out from the batch
    members, which requires the batches to carry them.
    """
    stack = _batch_stack(batches)
    n_prime = stack.shape[0]
    vals = []
    if n_prime > n:
        for k in range(n_prime):
            vals.append(stat(np.delete(stack, k, axis=0)))
    else:
        if any(b.members is None for b in batches):
            return float("nan"), False
        members = np.concatenate([b.members for b in batches], axis=0)
        if members.shape[0] <= n_prime:
            return float("nan"), False
        for r in range(members.shape[0]):
            vals.append(stat(_rebuild_stack(np.delete(members, r, axis=0), n_prime)))
    vals = np.array(vals, dtype=float)
    if not np.isfinite(vals).all():
        return float("nan"), False
    k = vals.size
    return float(np.sqrt((k - 1) / k * ((vals - vals.mean()) ** 2).sum())), True


# ---------------------------------------------------------------------------
# estimators
# ---------------------------------------------------------------------------


def estimate_multicopy(batches, observable: np.ndarray, n: int, with_error: bool = True) -> EstimateReport:
    """Symmetrized distinct-tuple estimate of ``Tr(O^(n) rho^(x n))``.

    Generic (dense observable) path: the observable lives on ``n`` copies,
    so this is only practical for small registers; the structured
    estimators below cover the production functionals without ever forming
    a multi-copy operator.
    """
    n_prime = len(batches)
    if n > n_prime:
        raise ValueError(f"need at least n={n} batches, have {n_prime}")
    d = batches[0].matrix.shape[0]
    if observable.shape != (d**n, d**n):
        raise ValueError("observable dimension does not match n copies")
    o_t = observable.reshape((d,) * (2 * n))

    def stat(stack: np.ndarray) -> float:
        m = stack.shape[0]
        total = 0.0 + 0.0j
        rows = list(range(n))
        cols = list(range(n, 2 * n))
        for tup in itertools.permutations(range(m), n):
            args = [o_t, rows + cols]
            for c, b in enumerate(tup):
                args.extend((stack[b], [cols[c], rows[c]]))
            total += np.einsum(*args, [], optimize=True)
        count = int(np.prod([m - i for i in range(n)]))
        return float(total.real / count)

    value = stat(_batch_stack(batches))
    err, ok = _jackknife(stat, batches, n) if with_error else (0.0, True)
    return EstimateReport(value, n, n_prime, err, metadata={"jackknife_ok": ok})


def estimate_purity(batches, with_error: bool = True) -> EstimateReport:
    """Estimate ``Tr(rho^2)`` from pairs of distinct batches."""
    n_prime = len(batches)
    if n_prime < 2:
        raise ValueError("need at least 2 batches")

    def stat(stack: np.ndarray) -> float:
        m = stack.shape[0]
        flat = stack.reshape(m, -1)
        return _pair_sum_distinct(flat[:, :, None], flat[:, :, None]).real / (m * (m - 1))

    value = stat(_batch_stack(batches))
    err, ok = _jackknife(stat, batches, 2) if with_error else (0.0, True)
    return EstimateReport(value, 2, n_prime, err, metadata={"moment2": value, "jackknife_ok": ok})


def estimate_renyi2_oe(batches, reg: QubitRegister, with_error: bool = True) -> EstimateReport:
    """Renyi-2 operator entanglement ``-log X4 + 2 log X2``.

    The report also carries the unnormalized piece ``-log X4`` and the
    Renyi-2 entropy ``-log X2``.  A non-positive moment estimate (possible
    at finite samples) flags the report invalid rather than clamping.
    """
    n_prime = len(batches)
    if n_prime < 4:
        raise ValueError("need at least 4 batches")
    d_a = reg.block_dim("A")
    d_b = reg.block_dim("B")

    def moments(stack: np.ndarray) -> tuple[float, float]:
        r = _realignment_stack(stack, d_a, d_b)
        return _moment2(r), _moment4(r)

    def stat(stack: np.ndarray) -> float:
        x2, x4 = moments(stack)
        if x2 <= 0 or x4 <= 0:
            return float("nan")
        return -np.log(x4) + 2 * np.log(x2)

    x2, x4 = moments(_batch_stack(batches))
    valid = x2 > 0 and x4 > 0
    value = -np.log(x4) + 2 * np.log(x2) if valid else float("nan")
    meta = {
        "moment2": x2,
        "moment4": x4,
        "s2_unnormalized": -np.log(x4) if x4 > 0 else float("nan"),
        "r2": -np.log(x2) if x2 > 0 else float("nan"),
    }
    err, ok = _jackknife(stat, batches, 4) if (with_error and valid) else (0.0, valid)
    meta["jackknife_ok"] = ok
    return EstimateReport(value, 4, n_prime, err, valid, meta)


def _sector_pair_moments(stack: np.ndarray, charge: exact.ChargeOperator) -> tuple[dict[int, float], float]:
    """Distinct-pair moment of every charge sector, plus their exact total.

    One pass: the projected pair sums are row sums of a single diagonal
    vector, so the sector numerators add up to the plain pair moment by
    construction (projector completeness holds bitwise, not just to
    rounding).
    """
    d_a, d_b = _split_dims(charge)
    m = stack.shape[0]
    r = _realignment_stack(stack, d_a, d_b)
    g = r.sum(axis=0)
    diag_all = np.einsum("ij,ij->i", g, g.conj()) - np.einsum("aij,aij->ai", r, r.conj()).sum(axis=0)
    diag_all = diag_all.real / (m * (m - 1))
    sq = np.rint(charge.supercharge_a()).astype(int)
    nums = {int(q): float(diag_all[sq == q].sum()) for q in np.unique(sq)}
    return nums, float(math.fsum(nums.values()))


def estimate_populations(batches, charge: exact.ChargeOperator, q: int, with_error: bool = True) -> EstimateReport:
    """Sector weight p(q): projected pair moment over the plain pair moment.

    The denominator is evaluated as the sum of all sector numerators (the
    completeness identity), so the weights across q sum to one exactly.
    """
    n_prime = len(batches)
    if n_prime < 2:
        raise ValueError("need at least 2 batches")

    def stat(stack: np.ndarray) -> float:
        nums, den = _sector_pair_moments(stack, charge)
        if den <= 0:
            return float("nan")
        return nums.get(q, 0.0) / den

    nums, den = _sector_pair_moments(_batch_stack(batches), charge)
    num = nums.get(q, 0.0)
    valid = den > 0
    value = num / den if valid else float("nan")
    err, ok = _jackknife(stat, batches, 2) if (with_error and valid) else (0.0, valid)
    return EstimateReport(
        value, 2, n_prime, err, valid,
        {"numerator": num, "moment2": den, "jackknife_ok": ok},
    )


def estimate_all_populations(batches, charge: exact.ChargeOperator, with_error: bool = True) -> dict[int, EstimateReport]:
    """Every sector weight at once (sharing one denominator pass)."""
    sq = np.rint(np.asarray(charge.supercharge_a())).astype(int)
    return {
        int(q): estimate_populations(batches, charge, int(q), with_error)
        for q in np.unique(sq)
    }


def estimate_sroe2(batches, charge: exact.ChargeOperator, q: int, with_error: bool = True) -> EstimateReport:
    """Symmetry-resolved Renyi-2 OE of sector ``q`` from 4-tuples of batches."""
    n_prime = len(batches)
    if n_prime < 4:
        raise ValueError("need at least 4 batches")
    d_a, d_b = _split_dims(charge)
    mask = _sector_mask(charge, q)

    def moments(stack: np.ndarray) -> tuple[float, float]:
        r = _realignment_stack(stack, d_a, d_b)
        return _moment2(r, mask), _moment4(r, mask)

    def stat(stack: np.ndarray) -> float:
        den, num = moments(stack)
        if den <= 0 or num <= 0:
            return float("nan")
        return -np.log(num / den**2)

    den, num = moments(_batch_stack(batches))
    valid = den > 1e-12 and num > 0
    value = -np.log(num / den**2) if valid else float("nan")
    err, ok = _jackknife(stat, batches, 4) if (with_error and valid) else (0.0, valid)
    return EstimateReport(
        value, 4, n_prime, err, valid,
        {"numerator4": num, "numerator2": den, "jackknife_ok": ok},
    )


def u_statistic_direct(shadow_stack: np.ndarray, reg: QubitRegister, n: int,
                       charge: exact.ChargeOperator | None = None, q: int | None = None) -> float:
    """Literal U-statistics sum over ordered distinct shadow tuples.

    Independent cross-check for the Moebius evaluation: O(M^2 d^4) memory
    for the pair-product table and O(M^n) for the summation, so only
    sensible for modest M.  ``n`` must be 2 or 4; passing a charge and a
    sector applies the doubled-A projector in front of the odd slots.
    """
    m = shadow_stack.shape[0]
    d_a = reg.block_dim("A")
    d_b = reg.block_dim("B")
    r = _realignment_stack(shadow_stack, d_a, d_b)
    u = r if charge is None else _sector_mask(charge, q)[None, :, None] * r
    if n == 2:
        return _pair_sum_distinct(u, r).real / (m * (m - 1))
    if n != 4:
        raise ValueError("only n = 2 or 4 are supported")
    pair = np.einsum("aij,bkj->abik", u, r.conj())  # (m, m, dA^2, dA^2)
    flat = pair.reshape(m * m, d_a * d_a * d_a * d_a)
    flat_t = pair.transpose(0, 1, 3, 2).reshape(m * m, -1)
    table = (flat @ flat_t.T).reshape(m, m, m, m)
    idx = np.arange(m)
    distinct = (
        (idx[:, None, None, None] != idx[None, :, None, None])
        & (idx[:, None, None, None] != idx[None, None, :, None])
        & (idx[:, None, None, None] != idx[None, None, None, :])
        & (idx[None, :, None, None] != idx[None, None, :, None])
        & (idx[None, :, None, None] != idx[None, None, None, :])
        & (idx[None, None, :, None] != idx[None, None, None, :])
    )
    total = table[distinct].sum().real
    return float(total / (m * (m - 1) * (m - 2) * (m - 3)))


@dataclass
class DetectionReport:
    """Entanglement-detection values; positive numbers certify entanglement."""

    s2_minus_r2: float
    enhanced_value: float | None = None
    jackknife_error: float = 0.0
    valid: bool = True


def detect_entanglement(batches=None, rho: np.ndarray | None = None,
                        reg: QubitRegister | None = None, with_error: bool = True) -> DetectionReport:
    """Operator-mixedness entanglement test ``S^(2) - R^(2) > 0``.

    Exact mode (``rho`` given) also evaluates the centered-realignment
    margin, which is too noisy to estimate from shadows and is therefore
    exact-only.  Shadow mode needs at least 4 batches.
    """
    if (rho is None) == (batches is None):
        raise ValueError("pass exactly one of batches or rho")
    if rho is not None:
        if reg is None:
            raise ValueError("exact mode needs the register")
        s2, r2 = exact.renyi2_oe_and_entropy(rho, reg)
        return DetectionReport(s2 - r2, exact.enhanced_detection_value(rho, reg))
    if reg is None:
        raise ValueError("shadow mode needs the register")
    n_prime = len(batches)
    if n_prime < 4:
        raise ValueError("need at least 4 batches")
    d_a, d_b = reg.block_dim("A"), reg.block_dim("B")

    def stat(stack: np.ndarray) -> float:
        r = _realignment_stack(stack, d_a, d_b)
        x2, x4 = _moment2(r), _moment4(r)
        if x2 <= 0 or x4 <= 0:
            return float("nan")
        return -np.log(x4) + 3 * np.log(x2)

    value = stat(_batch_stack(batches))
    valid = bool(np.isfinite(value))
    err, _ = _jackknife(stat, batches, 4) if (with_error and valid) else (0.0, valid)
    return DetectionReport(float(value), None, err, valid)


# ---------------------------------------------------------------------------
# record generation (simulation side of the protocol)
# ---------------------------------------------------------------------------


def _sample_unitary(state: QuenchState, ensemble: str, seed, r: int):
    """Settings and outcome draws of one unitary index (one keyed stream)."""
    n = state.n_qubits
    rng = record_rng(seed, r)
    if ensemble == ENSEMBLE_PAULI:
        basis = tuple(PAULI_LABELS[k] for k in rng.integers(0, 3, size=n))
        unitaries = [PAULI_ROTATIONS[b] for b in basis]
    elif ensemble == ENSEMBLE_HAAR:
        basis = None
        unitaries = list(random_local_unitaries(n, rng))
    else:
        raise ValueError(f"unknown ensemble {ensemble!r}")
    return basis, unitaries, rng


def simulate_records(state: QuenchState, ensemble: str, n_u: int, n_m: int, seed) -> list[MeasurementRecord]:
    """Sample ``n_u x n_m`` randomized-measurement records of a state.

    Each unitary index draws from its own counter-based stream, so the
    dataset is reproducible record by record; ``seed`` may be an int or a
    sequence of ints (e.g. ``[root_seed, time_index]``).
    """
    n = state.n_qubits
    records = []
    for r in range(1, n_u + 1):
        basis, unitaries, rng = _sample_unitary(state, ensemble, seed, r)
        extra = {"basis": basis} if basis is not None else {"unitaries": np.array(unitaries)}
        p = born_probabilities(state.rho, unitaries)
        outcomes = rng.choice(p.size, size=n_m, p=p)
        for m, s in enumerate(outcomes, start=1):
            records.append(MeasurementRecord(r=r, m=m, bits=format(int(s), f"0{n}b"), **extra))
    return records


def sampled_unitary_shadows(state: QuenchState, ensemble: str, n_u: int, n_m: int, seed, qubits=None) -> np.ndarray:
    """Per-unitary averaged shadows of a fresh simulated dataset.

    Identical draws (and therefore identical shadows) to running
    :func:`simulate_records` followed by :func:`per_unitary_shadows`, but
    without materializing the records; used by the Monte-Carlo harnesses
    where the record objects would dominate the runtime.
    """
    n = state.n_qubits
    kept = list(range(n)) if qubits is None else list(qubits)
    dim = 2 ** len(kept)
    stack = np.zeros((n_u, dim, dim), dtype=complex)
    eye = np.eye(2)
    for r in range(1, n_u + 1):
        _, unitaries, rng = _sample_unitary(state, ensemble, seed, r)
        p = born_probabilities(state.rho, unitaries)
        counts = np.bincount(rng.choice(p.size, size=n_m, p=p), minlength=p.size)
        factors = []
        for q in kept:
            u = unitaries[q]
            pair = []
            for b in (0, 1):
                ket = u.conj().T[:, b]
                pair.append(3.0 * np.outer(ket, ket.conj()) - eye)
            factors.append(pair)
        acc = stack[r - 1]
        for s in np.nonzero(counts)[0]:
            mats = [factors[i][(int(s) >> (n - 1 - q)) & 1] for i, q in enumerate(kept)]
            acc += (counts[s] / n_m) * kron(*mats)
    return stack
