"""Qubit linear algebra shared by every solver in the package.

Conventions
-----------
* Computational basis ``|0>, |1>`` with ``|0><0|`` the ground state at the
  north pole of the Bloch ball (``u_z = +1``).
* Multi-qubit states use ``numpy.kron`` ordering: site 0 is the most
  significant tensor factor.
* Superoperators act on column-major (Fortran order) vectorized matrices, so
  ``vec(A @ X @ B) == kron(B.T, A) @ vec(X)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

HERMITIAN_TOL = 1e-12
TRACE_TOL = 1e-12
POSITIVITY_TOL = 1e-10
BALL_TOL = 1e-10
COMPLETENESS_TOL = 1e-12

IDENTITY = np.eye(2, dtype=complex)
SIGMA_X = np.array([[0, 1], [1, 0]], dtype=complex)
SIGMA_Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
SIGMA_Z = np.array([[1, 0], [0, -1]], dtype=complex)
PAULI = np.stack([SIGMA_X, SIGMA_Y, SIGMA_Z])

KET0 = np.array([1, 0], dtype=complex)
KET1 = np.array([0, 1], dtype=complex)
P0 = np.outer(KET0, KET0.conj())
P1 = np.outer(KET1, KET1.conj())
# a = |0><1| lowers an excited atom to the ground state
ANNIHILATION = np.outer(KET0, KET1.conj())

KET_GROUND_PAIR = np.kron(KET0, KET0)
KET_SINGLET = (np.kron(KET0, KET1) - np.kron(KET1, KET0)) / np.sqrt(2)


def vec(x: np.ndarray) -> np.ndarray:
    return np.asarray(x).reshape(-1, order="F")


def unvec(v: np.ndarray, dim: int) -> np.ndarray:
    return np.asarray(v).reshape(dim, dim, order="F")


def projector(ket: np.ndarray) -> np.ndarray:
    ket = np.asarray(ket, dtype=complex)
    return np.outer(ket, ket.conj())


def bloch_to_density(u) -> np.ndarray:
    """Return ``(1 + u . sigma) / 2`` for a Bloch vector ``u``."""
    u = np.asarray(u, dtype=float)
    if u.shape != (3,):
        raise ValueError(f"Bloch vector must have shape (3,), got {u.shape}")
    if np.linalg.norm(u) > 1 + BALL_TOL:
        raise ValueError(f"|u| = {np.linalg.norm(u):.17g} lies outside the Bloch ball")
    return 0.5 * (IDENTITY + np.tensordot(u, PAULI, axes=1))


def density_to_bloch(rho) -> np.ndarray:
    rho = np.asarray(rho)
    if rho.shape != (2, 2):
        raise ValueError(f"expected a 2x2 density matrix, got shape {rho.shape}")
    return np.real(np.einsum("kij,ji->k", PAULI, rho))


def check_density(rho, *, positivity_tol: float = POSITIVITY_TOL) -> None:
    """Raise ``ValueError`` unless ``rho`` is Hermitian, unit-trace and PSD."""
    rho = np.asarray(rho)
    if rho.ndim != 2 or rho.shape[0] != rho.shape[1]:
        raise ValueError(f"density matrix must be square, got shape {rho.shape}")
    herm = np.max(np.abs(rho - rho.conj().T))
    if herm > HERMITIAN_TOL:
        raise ValueError(f"not Hermitian (max deviation {herm:.3g})")
    tr = np.trace(rho)
    if abs(tr - 1) > TRACE_TOL:
        raise ValueError(f"trace {tr.real:.17g} differs from 1")
    lam_min = np.linalg.eigvalsh(0.5 * (rho + rho.conj().T))[0]
    if lam_min < -positivity_tol:
        raise ValueError(f"negative eigenvalue {lam_min:.3g}")


def purity(rho) -> float:
    rho = np.asarray(rho)
    return float(np.real(np.trace(rho @ rho)))


def trace_norm(x) -> float:
    """Sum of singular values (``||x||_1``)."""
    return float(np.sum(np.linalg.svd(np.asarray(x), compute_uv=False)))


def random_bloch_vectors(n: int, seed: int = 0) -> np.ndarray:
    """``n`` points uniform in the solid Bloch ball, by rejection sampling."""
    rng = np.random.default_rng(seed)
    out = np.empty((0, 3))
    while len(out) < n:
        cand = rng.uniform(-1.0, 1.0, size=(2 * n, 3))
        out = np.vstack([out, cand[np.einsum("ij,ij->i", cand, cand) <= 1.0]])
    return out[:n]


@dataclass(frozen=True)
class KrausChannel:
    """Completely positive trace preserving map ``rho -> sum_j K_j rho K_j^+``."""

    operators: tuple = field()

    def __post_init__(self):
        ops = tuple(np.asarray(k, dtype=complex) for k in self.operators)
        if not ops:
            raise ValueError("a channel needs at least one Kraus operator")
        dim = ops[0].shape[0]
        for k in ops:
            if k.shape != (dim, dim):
                raise ValueError(f"Kraus operators must all be {dim}x{dim}")
        gram = sum(k.conj().T @ k for k in ops)
        defect = np.max(np.abs(gram - np.eye(dim)))
        if defect > COMPLETENESS_TOL:
            raise ValueError(f"incomplete channel: |sum K^+K - 1| = {defect:.3g}")
        object.__setattr__(self, "operators", ops)

    @property
    def dim(self) -> int:
        return self.operators[0].shape[0]

    @classmethod
    def identity(cls, dim: int) -> "KrausChannel":
        return cls((np.eye(dim),))

    def superoperator(self) -> np.ndarray:
        return sum(np.kron(k.conj(), k) for k in self.operators)


def apply_channel(chan: KrausChannel, rho) -> np.ndarray:
    rho = np.asarray(rho, dtype=complex)
    if rho.shape != (chan.dim, chan.dim):
        raise ValueError(f"state of shape {rho.shape} does not match channel dimension {chan.dim}")
    return sum(k @ rho @ k.conj().T for k in chan.operators)


@dataclass(frozen=True)
class PairGenerator:
    """Pair Lindbladian ``L_12`` as a 16x16 column-major superoperator.

    ``gamma`` is the collision rate; it is kept separate from ``superop``
    and only enters through :func:`meanfield_rhs` and the N-body solvers.
    """

    superop: np.ndarray
    gamma: float = 1.0

    def __post_init__(self):
        s = np.asarray(self.superop, dtype=complex)
        if s.shape != (16, 16):
            raise ValueError(f"pair superoperator must be 16x16, got {s.shape}")
        if not self.gamma > 0:
            raise ValueError("gamma must be positive")
        object.__setattr__(self, "superop", s)

    def __call__(self, sigma) -> np.ndarray:
        return unvec(self.superop @ vec(np.asarray(sigma, dtype=complex)), 4)

    def is_swap_symmetric(self, atol: float = 1e-12) -> bool:
        swap = np.eye(4)[[0, 2, 1, 3]]
        swap_super = np.kron(swap, swap)
        return bool(np.allclose(swap_super @ self.superop @ swap_super, self.superop, atol=atol, rtol=0))


def generator_from_channel(chan: KrausChannel, gamma: float = 1.0) -> PairGenerator:
    """Collision generator ``K - 1`` for a pair channel."""
    if chan.dim != 4:
        raise ValueError("pair channels act on the 4-dimensional two-qubit space")
    return PairGenerator(chan.superoperator() - np.eye(16), gamma)


def generator_from_jump(jump, gamma: float = 1.0) -> PairGenerator:
    """GKSL generator ``A s A^+ - {A^+A, s}/2`` with a single jump operator."""
    a = np.asarray(jump, dtype=complex)
    if a.shape != (4, 4):
        raise ValueError(f"pair jump operator must be 4x4, got {a.shape}")
    ada = a.conj().T @ a
    eye = np.eye(4)
    superop = np.kron(a.conj(), a) - 0.5 * np.kron(eye, ada) - 0.5 * np.kron(ada.T, eye)
    return PairGenerator(superop, gamma)


def partial_trace(rho, keep: Sequence[int], n_sites: int) -> np.ndarray:
    """Reduced state of qubits ``keep`` (in ascending order) of an ``n_sites`` register."""
    rho = np.asarray(rho)
    dim = 2**n_sites
    if rho.shape != (dim, dim):
        raise ValueError(f"expected a {dim}x{dim} matrix for {n_sites} qubits, got {rho.shape}")
    keep = sorted(keep)
    if any(k < 0 or k >= n_sites for k in keep) or len(set(keep)) != len(keep):
        raise ValueError(f"invalid subsystem selection {keep}")
    traced = [k for k in range(n_sites) if k not in keep]
    t = rho.reshape((2,) * (2 * n_sites))
    # contract each traced row index with its column index, highest site first
    for k in sorted(traced, reverse=True):
        n_left = t.ndim // 2
        t = np.trace(t, axis1=k, axis2=k + n_left)
    d = 2 ** len(keep)
    return t.reshape(d, d)


def partial_trace_second(sigma) -> np.ndarray:
    """Trace out the second qubit of a two-qubit operator."""
    sigma = np.asarray(sigma)
    if sigma.shape != (4, 4):
        raise ValueError(f"expected a 4x4 pair operator, got shape {sigma.shape}")
    return np.einsum("ijkj->ik", sigma.reshape(2, 2, 2, 2))


def meanfield_rhs(gen: PairGenerator, rho) -> np.ndarray:
    """Quadratic mean-field derivative ``gamma * Tr_2 L(rho x rho)``."""
    rho = np.asarray(rho, dtype=complex)
    if rho.shape != (2, 2):
        raise ValueError(f"mean-field state must be 2x2, got {rho.shape}")
    return gen.gamma * partial_trace_second(gen(np.kron(rho, rho)))


def bloch_rhs(gen: PairGenerator, u) -> np.ndarray:
    """Bloch-vector velocity induced by :func:`meanfield_rhs`."""
    return density_to_bloch(meanfield_rhs(gen, bloch_to_density(u)))


def singlet_channel() -> KrausChannel:
    """Collision that sends the singlet pair to ``|00>`` and leaves its complement alone."""
    ps = projector(KET_SINGLET)
    k1 = np.outer(KET_GROUND_PAIR, KET_SINGLET.conj())
    return KrausChannel((k1, np.eye(4) - ps))


def decay_generator(gamma: float = 1.0) -> PairGenerator:
    """Both atoms of an excited pair decay together (jump ``a x a``)."""
    return generator_from_jump(np.kron(ANNIHILATION, ANNIHILATION), gamma)


def dephasing_operator(theta: float) -> np.ndarray:
    """Hermitian ``K`` with ``sqrt(2) K = cos(theta) 1 + sin(theta) sigma_z``."""
    return (np.cos(theta) * IDENTITY + np.sin(theta) * SIGMA_Z) / np.sqrt(2)


def dephasing_generator(theta: float, gamma: float = 1.0) -> PairGenerator:
    """Pair dephasing ``-[KxK, [KxK, s]]`` as a GKSL generator.

    A single Hermitian jump ``sqrt(2) KxK`` gives exactly the double
    commutator with the dissipative sign.
    """
    k = dephasing_operator(theta)
    return generator_from_jump(np.sqrt(2) * np.kron(k, k), gamma)
