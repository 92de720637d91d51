"""Finite-N pair-decay ensembles.

Three independent routes to the same physics:

* the master equation on symmetric mixtures ``R_n`` (``2n`` excited atoms),
* an event-driven stochastic simulation of the excited count,
* brute-force integration of the full ``2^N``-dimensional Liouville equation
  for small ``N`` (also used to measure how far the two-atom marginal is from
  a product state).
"""

from __future__ import annotations

import itertools
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg
import scipy.sparse as sp

from . import meanfield, qcore

logger = logging.getLogger(__name__)

PROB_NEG_TOL = 1e-12
PROB_SUM_TOL = 1e-10
# relative round-off budget for the eigen-expansion before falling back
EXPANSION_TOL = 1e-12
MAX_EXACT_SITES = 8
SPARSE_NNZ_CAP = 30_000_000


def _check_even(N: int) -> None:
    if int(N) != N or N < 2 or N % 2:
        raise ValueError(f"N must be an even integer >= 2, got {N}")


@dataclass(frozen=True)
class EnsembleState:
    """Weights ``p_n`` of the symmetric mixtures ``R_0 .. R_{N/2}``.

    ``solver`` records how the state was produced; ``"dense-expm"`` flags the
    fallback taken when the eigen-expansion is ill-conditioned.
    """

    N: int
    probs: np.ndarray
    solver: str = "input"

    def __post_init__(self):
        _check_even(self.N)
        p = np.asarray(self.probs, dtype=float)
        if p.shape != (self.N // 2 + 1,):
            raise ValueError(f"expected {self.N // 2 + 1} probabilities, got shape {p.shape}")
        if p.min() < -PROB_NEG_TOL:
            raise ValueError(f"negative probability {p.min():.3g}")
        if abs(p.sum() - 1) > PROB_SUM_TOL:
            raise ValueError(f"probabilities sum to {p.sum():.17g}")
        object.__setattr__(self, "probs", p)

    @classmethod
    def fully_excited(cls, N: int) -> "EnsembleState":
        _check_even(N)
        p = np.zeros(N // 2 + 1)
        p[-1] = 1.0
        return cls(N, p)

    @classmethod
    def ground(cls, N: int) -> "EnsembleState":
        _check_even(N)
        p = np.zeros(N // 2 + 1)
        p[0] = 1.0
        return cls(N, p)


@dataclass(frozen=True)
class DecayGenerator:
    """Upper bidiagonal ``G`` with ``dp/dt = -(G/N) p``."""

    N: int
    gamma: float
    matrix: np.ndarray = field(repr=False)

    @property
    def diagonal(self) -> np.ndarray:
        return np.diag(self.matrix).copy()

    @property
    def rates(self) -> np.ndarray:
        """Decay rates ``gamma n (2n - 1) / N``, the eigenvalues of ``G/N``."""
        return self.diagonal / self.N


def build_generator(N: int, gamma: float = 1.0) -> DecayGenerator:
    _check_even(N)
    if not gamma > 0:
        raise ValueError("gamma must be positive")
    n = np.arange(N // 2 + 1)
    pair_counts = gamma * n * (2 * n - 1)
    g = np.diag(pair_counts.astype(float))
    g[n[:-1], n[1:]] = -pair_counts[1:]
    return DecayGenerator(N, float(gamma), g)


def _eigenvectors(rates: np.ndarray) -> np.ndarray:
    """Unit-diagonal upper triangular eigenvectors of the bidiagonal propagator.

    Column ``j`` solves ``(lam_k - lam_j) v_k = lam_{k+1} v_{k+1}`` for ``k < j``.
    """
    m = len(rates)
    v = np.eye(m)
    with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
        for k in range(m - 2, -1, -1):
            j = np.arange(k + 1, m)
            v[k, j] = rates[k + 1] * v[k + 1, j] / (rates[k] - rates[j])
    return v


def _expansion(gen: DecayGenerator, p0: np.ndarray, t: float):
    v = _eigenvectors(gen.rates)
    with np.errstate(over="ignore", invalid="ignore"):
        coeff = scipy.linalg.solve_triangular(v, p0, unit_diagonal=True)
        terms = v * (coeff * np.exp(-gen.rates * t))
        p = terms.sum(axis=1)
        # cancellation in the coefficients themselves shows up in the t = 0 terms
        magnitude = max(np.abs(terms).sum(axis=1).max(), (np.abs(v) @ np.abs(coeff)).max())
    return p, magnitude


def evolve_master(gen: DecayGenerator, p0: EnsembleState, t: float) -> EnsembleState:
    """``p(t) = exp(-G t / N) p(0)``.

    Uses the exact eigen-expansion over the distinct rates when its
    cancellation error stays below ``EXPANSION_TOL``; otherwise falls back to
    a dense matrix exponential and marks the result ``solver="dense-expm"``.
    """
    if p0.N != gen.N:
        raise ValueError(f"state has N={p0.N} but generator has N={gen.N}")
    if t < 0:
        raise ValueError("t must be non-negative")
    if t == 0:
        return EnsembleState(p0.N, p0.probs.copy(), "identity")
    p, magnitude = _expansion(gen, p0.probs, t)
    eps = np.finfo(float).eps
    if np.isfinite(magnitude) and magnitude * eps * len(p) <= EXPANSION_TOL:
        solver = "eigen"
    else:
        logger.debug("eigen-expansion magnitude %.3g at N=%d; using dense expm", magnitude, gen.N)
        p = scipy.linalg.expm(-gen.matrix * (t / gen.N)) @ p0.probs
        solver = "dense-expm"
    # clip round-off below zero so the state validates
    p = np.where((p < 0) & (p > -PROB_NEG_TOL), 0.0, p)
    return EnsembleState(gen.N, p, solver)


def excited_fraction(p: EnsembleState) -> float:
    n = np.arange(p.N // 2 + 1)
    return float(np.dot(2.0 * n / p.N, p.probs))


def survival_curve(N: int, times, gamma: float = 1.0) -> np.ndarray:
    """Excited fraction of an initially fully excited ensemble at each time."""
    gen = build_generator(N, gamma)
    p0 = EnsembleState.fully_excited(N)
    return np.array([excited_fraction(evolve_master(gen, p0, float(t))) for t in times])


@dataclass(frozen=True)
class McConfig:
    N: int
    gamma: float
    runs: int
    seed: int
    sample_times: tuple

    def __post_init__(self):
        if int(self.N) != self.N or self.N < 1:
            raise ValueError("N must be a positive integer")
        if not self.gamma > 0:
            raise ValueError("gamma must be positive")
        if self.runs < 1:
            raise ValueError("runs must be >= 1")
        if not 0 <= self.seed < 2**64:
            raise ValueError("seed must be an unsigned 64-bit integer")
        times = np.asarray(self.sample_times, dtype=float)
        if times.ndim != 1 or len(times) == 0:
            raise ValueError("sample_times must be a non-empty list")
        if times[0] < 0 or np.any(np.diff(times) < 0):
            raise ValueError("sample_times must be non-negative and ascending")
        object.__setattr__(self, "sample_times", tuple(float(x) for x in times))


def run_generator(seed: int, run: int) -> np.random.Generator:
    """Counter-based stream for one Monte Carlo run, independent of scheduling."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(seed, spawn_key=(run,))))


def _simulate_runs(cfg: McConfig, m0: int, start: int, stop: int) -> np.ndarray:
    # excited counts visited: m0, m0-2, ..., down to 0 or 1
    counts = np.arange(m0, 1, -2)
    rates = (cfg.gamma / cfg.N) * counts * (counts - 1) / 2.0
    times = np.asarray(cfg.sample_times)
    out = np.empty((stop - start, len(times)))
    for row, run in enumerate(range(start, stop)):
        waits = run_generator(cfg.seed, run).standard_exponential(len(rates)) / rates
        events = np.cumsum(waits)
        fired = np.searchsorted(events, times, side="right")
        out[row] = (m0 - 2 * fired) / cfg.N
    return out


def gillespie_decay(cfg: McConfig, m0: int, threads: int = 1) -> np.ndarray:
    """Sampled excited fractions, shape ``(runs, len(sample_times))``.

    With ``m`` excited atoms the next pair decay fires after an exponential
    wait of total rate ``(gamma/N) m(m-1)/2`` and removes two excitations.
    Since the jump chain is deterministic only the waiting times are drawn,
    one vector per run from that run's own stream.
    """
    if not 0 <= m0 <= cfg.N:
        raise ValueError(f"m0 must lie in [0, N], got {m0}")
    if m0 < 2:
        return np.full((cfg.runs, len(cfg.sample_times)), m0 / cfg.N)
    if threads <= 1:
        return _simulate_runs(cfg, m0, 0, cfg.runs)
    bounds = np.linspace(0, cfg.runs, threads + 1).astype(int)
    with ThreadPoolExecutor(max_workers=threads) as pool:
        parts = pool.map(lambda ab: _simulate_runs(cfg, m0, ab[0], ab[1]), zip(bounds[:-1], bounds[1:]))
        return np.vstack(list(parts))


def sample_mean(samples: np.ndarray):
    """Per-column mean and standard error of Monte Carlo samples."""
    samples = np.asarray(samples, dtype=float)
    runs = samples.shape[0]
    mean = samples.mean(axis=0)
    stderr = samples.std(axis=0, ddof=1) / np.sqrt(runs) if runs > 1 else np.full_like(mean, np.nan)
    return mean, stderr


def _site_permutation(n_sites: int, j: int, k: int) -> sp.csr_matrix:
    """Permutation taking operators on sites ``(0, 1, rest)`` to ``(j, k, rest)``."""
    dim = 2**n_sites
    order = [j, k] + [s for s in range(n_sites) if s not in (j, k)]
    idx = np.arange(dim)
    shifts = n_sites - 1 - np.arange(n_sites)
    bits = (idx[:, None] >> shifts) & 1
    moved = (bits[:, order] << shifts).sum(axis=1)
    return sp.csr_matrix((np.ones(dim), (idx, moved)), shape=(dim, dim))


def _schmidt_terms(superop: np.ndarray, tol: float = 1e-14):
    """Write ``superop = sum_i kron(B_i, A_i)`` with 4x4 factors."""
    r = superop.reshape(4, 4, 4, 4).transpose(0, 2, 1, 3).reshape(16, 16)
    u, s, vh = np.linalg.svd(r)
    keep = s > tol * max(s.max(), 1.0)
    return [((u[:, i] * s[i]).reshape(4, 4), vh[i].reshape(4, 4)) for i in np.flatnonzero(keep)]


class NBodyLiouvillian:
    """``(gamma/N) sum_{j<k} L_jk`` acting on ``2^N x 2^N`` density matrices.

    Sparse generators are assembled into one sparse superoperator; dense
    ones are applied pair by pair through tensor contractions.
    """

    def __init__(self, n_sites: int, gen: qcore.PairGenerator):
        if not 2 <= n_sites <= MAX_EXACT_SITES:
            raise ValueError(f"exact N-body evolution supports 2 <= N <= {MAX_EXACT_SITES}, got {n_sites}")
        if not gen.is_swap_symmetric():
            raise ValueError("pair generator is not symmetric under exchange of the two atoms")
        self.n_sites = n_sites
        self.dim = 2**n_sites
        self.prefactor = gen.gamma / n_sites
        self.gen = gen
        self.pairs = list(itertools.combinations(range(n_sites), 2))
        terms = _schmidt_terms(gen.superop)
        rest = 2 ** (n_sites - 2)
        est = len(self.pairs) * sum(
            np.count_nonzero(b) * np.count_nonzero(a) * rest * rest for b, a in terms
        )
        self.sparse = est <= SPARSE_NNZ_CAP
        if self.sparse:
            self._matrix = self._assemble(terms)
        else:
            self._tensor = gen.superop.reshape((2,) * 8)

    def _assemble(self, terms) -> sp.csr_matrix:
        eye_rest = sp.identity(2 ** (self.n_sites - 2), format="csr")
        total = sp.csr_matrix((self.dim**2, self.dim**2), dtype=complex)
        for j, k in self.pairs:
            perm = _site_permutation(self.n_sites, j, k)

            def embed(op):
                return (perm @ sp.kron(sp.csr_matrix(op), eye_rest, format="csr") @ perm.T).tocsr()

            for b, a in terms:
                total = total + sp.kron(embed(b), embed(a), format="csr")
        total.eliminate_zeros()
        return (self.prefactor * total).tocsr()

    def __call__(self, rho: np.ndarray) -> np.ndarray:
        if self.sparse:
            return qcore.unvec(self._matrix @ qcore.vec(rho), self.dim)
        n = self.n_sites
        t = rho.reshape((2,) * (2 * n))
        out = np.zeros_like(t)
        for j, k in self.pairs:
            # tensor axes: (c1', c2', r1', r2', c1, c2, r1, r2)
            part = np.tensordot(self._tensor, t, axes=([6, 7, 4, 5], [j, k, n + j, n + k]))
            out += np.moveaxis(part, [2, 3, 0, 1], [j, k, n + j, n + k])
        return self.prefactor * out.reshape(self.dim, self.dim)


def exact_nbody_evolve(
    N: int,
    gen: qcore.PairGenerator,
    rho0_single,
    t: float,
    dt: float = 1e-3,
) -> np.ndarray:
    """Integrate the full N-atom equation from ``rho0^{(x)N}`` with fixed-step RK4."""
    if not dt > 0:
        raise ValueError("dt must be positive")
    rho0_single = np.asarray(rho0_single, dtype=complex)
    qcore.check_density(rho0_single)
    liouv = NBodyLiouvillian(N, gen)
    rho = rho0_single
    for _ in range(N - 1):
        rho = np.kron(rho, rho0_single)
    times = meanfield.time_grid(t, dt)
    for h in np.diff(times):
        rho = meanfield.rk4_step(liouv, rho, h)
    return rho


def factorization_defect(rho_N, rho_mf) -> float:
    """``|| Tr_{3..N} rho_N - rho_mf (x) rho_mf ||_1``."""
    rho_N = np.asarray(rho_N)
    n_sites = int(round(np.log2(rho_N.shape[0])))
    if 2**n_sites != rho_N.shape[0] or n_sites < 2:
        raise ValueError(f"dimension {rho_N.shape[0]} is not 2^N with N >= 2")
    pair = qcore.partial_trace(rho_N, [0, 1], n_sites)
    rho_mf = np.asarray(rho_mf)
    return qcore.trace_norm(pair - np.kron(rho_mf, rho_mf))


def factorization_study(model: meanfield.ModelSpec, u0, sizes, t: float, dt: float = 1e-3) -> dict:
    """Factorization defect at time ``t`` for each ensemble size in ``sizes``."""
    rho0 = qcore.bloch_to_density(u0)
    u_mf = meanfield.integrate(model, u0, t, dt).final
    rho_mf = qcore.bloch_to_density(u_mf)
    gen = model.generator()
    return {int(n): factorization_defect(exact_nbody_evolve(int(n), gen, rho0, t, dt), rho_mf) for n in sizes}
