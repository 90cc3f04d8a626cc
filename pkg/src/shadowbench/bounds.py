"""Analytic variance and sample-complexity bounds, plus an empirical
error-scaling harness.

The bounds cover batch estimators built from ``M`` single-shot records
grouped into ``n'`` batches: the estimator variance is controlled by a
double binomial sum over per-order worst-case variances ``Vbar_k`` (the
loose default is ``Vbar_k = 3^(k N)``), and inverting the Chebyshev tail
gives measurement budgets for the purity and the fourth moment.  The
Monte-Carlo sweep measures the actual relative error of the fourth-moment
estimator across record budgets, batch counts and unitary ensembles.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from math import comb, ceil

import numpy as np

from . import shadows
from .linops import QubitRegister, realign_register
from .quench import QuenchState


@dataclass(frozen=True)
class VarianceBudget:
    """One evaluated bound: inputs, Vbar terms and the Chebyshev pair."""

    n: int
    n_prime: int
    m: int
    vbar: tuple[float, ...]
    bound: float
    epsilon: float | None = None
    delta: float | None = None


def default_vbar(n: int, n_qubits: int) -> list[float]:
    """Worst-case per-order variances 3^(k N), k = 1..n."""
    return [3.0 ** (k * n_qubits) for k in range(1, n + 1)]


def batch_variance_bound(n: int, n_prime: int, m: int, vbar) -> float:
    """Variance bound of the n-copy batch estimator from M records.

    ``vbar[k-1]`` bounds the k-shadow variance term.  Reduces exactly to
    the single binomial sum when ``n_prime == n``.
    """
    if not (1 <= n <= n_prime <= m):
        raise ValueError("need 1 <= n <= n_prime <= M")
    vbar = list(vbar)
    if len(vbar) < n:
        raise ValueError(f"need {n} Vbar values, got {len(vbar)}")
    if any(v < 0 for v in vbar):
        raise ValueError("Vbar values must be nonnegative")
    p = n_prime / m
    total = 0.0
    for j in range(1, n + 1):
        if n - j > n_prime - n:
            continue
        weight = comb(n, j) * comb(n_prime - n, n - j) / comb(n_prime, n)
        inner = sum(
            comb(j, k) * p**k * (1 - p) ** (j - k) * vbar[k - 1]
            for k in range(1, j + 1)
        )
        total += weight * inner
    return float(total)


def purity_sample_bound(n_qubits: int, epsilon: float, delta: float) -> int:
    """Records sufficient for |purity estimate - purity| < eps w.p. 1 - delta.

    Two-batch estimator with single-qubit Pauli settings; scaling is
    dominated by 3^N.
    """
    if not (0 < epsilon < 1 and 0 < delta < 1):
        raise ValueError("epsilon and delta must lie in (0, 1)")
    a = (2.0 / 3.0) ** n_qubits / (epsilon * np.sqrt(delta))
    m = 2 * 3.0**n_qubits / (epsilon * np.sqrt(delta)) * (np.sqrt(1 + a * a) + a)
    return int(ceil(m))


def x4_variance_bound(n_qubits: int, m: int) -> float:
    """Closed-form variance bound of the 4-batch fourth-moment estimator."""
    if m < 4:
        raise ValueError("need at least 4 records")
    return float((1 + 4 * 3.0**n_qubits / m) ** 4 - 1)


def x4_sample_bound(n_qubits: int, epsilon: float, delta: float) -> int:
    """Records sufficient for the fourth-moment estimate at (eps, delta)."""
    if epsilon <= 0 or delta <= 0:
        raise ValueError("epsilon and delta must be positive")
    m = 4 * 3.0**n_qubits / ((1 + epsilon**2 * delta) ** 0.25 - 1)
    return int(ceil(m))


def chebyshev_delta(variance_bound: float, epsilon: float) -> float:
    """Tail probability bound Var/eps^2 (capped at 1)."""
    return min(1.0, variance_bound / epsilon**2)


def _threads() -> int:
    env = os.environ.get("SHADOWBENCH_THREADS")
    if env:
        return max(1, int(env))
    return 1


def exact_x4(rho: np.ndarray, reg: QubitRegister) -> float:
    """Reference fourth moment Tr(S rho^(x4)) via the realignment Gram matrix."""
    r = realign_register(np.asarray(rho, dtype=complex), reg)
    g = r @ r.conj().T
    return float(np.trace(g @ g).real)


def _x4_for_batches(member_stack: np.ndarray, n_prime: int, d_a: int, d_b: int) -> float:
    batch = shadows._rebuild_stack(member_stack, n_prime)
    r = shadows._realignment_stack(batch, d_a, d_b)
    return shadows._moment4(r)


def _one_repetition(args) -> dict:
    state, reg, ensemble, m_val, n_primes, seed, x4_true = args
    records = shadows.simulate_records(state, ensemble, n_u=m_val, n_m=1, seed=seed)
    _, stack = shadows.per_unitary_shadows(records)
    d_a, d_b = reg.block_dim("A"), reg.block_dim("B")
    out = {}
    for label, n_prime in n_primes:
        est = _x4_for_batches(stack, n_prime, d_a, d_b)
        out[label] = abs(est - x4_true) / abs(x4_true)
    return out


@dataclass
class SweepRow:
    ensemble: str
    m: int
    n_prime_label: str
    mean_error: float
    std_error: float
    repetitions: int


def empirical_error_sweep(
    state: QuenchState,
    reg: QubitRegister,
    m_grid,
    n_prime_grid,
    repetitions: int = 200,
    seed: int = 0,
    ensembles=("pauli", "haar"),
) -> list[SweepRow]:
    """Mean relative error of the fourth-moment estimator on a grid.

    ``n_prime_grid`` entries are batch counts or the string ``"M"`` (all
    records, i.e. the full symmetrized estimator).  Each repetition draws
    a fresh dataset from its own record-keyed stream, so results are
    reproducible for a given root seed regardless of scheduling; the
    optional thread pool is capped by ``SHADOWBENCH_THREADS``.
    """
    if state.n_qubits > 6:
        raise ValueError("sweep is meant for small states (<= 6 qubits)")
    x4_true = exact_x4(state.rho, reg)
    rows = []
    threads = _threads()
    for ensemble in ensembles:
        for mi, m_val in enumerate(m_grid):
            n_primes = []
            for entry in n_prime_grid:
                if isinstance(entry, str):
                    if entry.upper() != "M":
                        raise ValueError(f"unknown batch-count entry {entry!r}")
                    n_primes.append(("M", m_val))
                elif entry <= m_val:
                    n_primes.append((str(entry), int(entry)))
            tasks = [
                (state, reg, ensemble, m_val, n_primes,
                 seed + 100_000 * mi + 1_000_000 * ensembles.index(ensemble) + rep,
                 x4_true)
                for rep in range(repetitions)
            ]
            if threads > 1:
                with ThreadPoolExecutor(max_workers=threads) as pool:
                    results = list(pool.map(_one_repetition, tasks))
            else:
                results = [_one_repetition(t) for t in tasks]
            for label, _ in n_primes:
                errs = np.array([r[label] for r in results])
                rows.append(
                    SweepRow(ensemble, m_val, label, float(errs.mean()),
                             float(errs.std(ddof=1) / np.sqrt(repetitions)), repetitions)
                )
    return rows
