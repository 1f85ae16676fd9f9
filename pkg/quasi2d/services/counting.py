"""Counting functionals on finite mode spaces.

Two representations of bosonic states are kept side by side: tensors over
C^D with N slots (first quantised) and coefficient vectors over occupation
numbers. Weighted operators f^ = sum_k f(k) P_k are diagonal once the
one-particle basis is rotated so that the condensate vector is mode 0.
"""
import itertools
import logging
import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable, Optional

import numpy as np
from scipy import sparse
from scipy.integrate import solve_ivp
from scipy.linalg import eigh, qr, schur
from scipy.sparse.linalg import expm_multiply

from quasi2d.checks import CheckResult, at_most, loglog_slope
from quasi2d.errors import InputError, NumericalError

logger = logging.getLogger(__name__)

MAX_FIRST_QUANTIZED = 10**5
MAX_SYMMETRIC = 10**4
MAX_DENSE = 4096
IDENTITY_TOL = 1e-12
SHARP_KINDS = ("a", "b", "c", "d", "e", "f")
FIRST_QUANTIZED = "first_quantized"
OCCUPATION = "occupation"


class CountingError(NumericalError):
    pass


class DimensionError(InputError):
    pass


# -- weights ---------------------------------------------------------------------


def n_weight(k, N: int) -> np.ndarray:
    k = np.asarray(k, dtype=float)
    return np.where(k >= 0, np.sqrt(np.clip(k, 0.0, None) / N), np.nan)


def m_weight(k, N: int, xi: float) -> np.ndarray:
    k = np.asarray(k, dtype=float)
    linear = 0.5 * (N ** (-1.0 + xi) * k + N ** (-xi))
    return np.where(k >= N ** (1.0 - 2.0 * xi), np.sqrt(np.clip(k, 0.0, None) / N), linear)


def m_sharp(kind: str, k, N: int, xi: float) -> np.ndarray:
    """m^a ... m^f, first and second differences of m."""
    k = np.asarray(k, dtype=float)
    if kind == "a":
        return m_weight(k, N, xi) - m_weight(k + 1, N, xi)
    if kind == "b":
        return m_weight(k, N, xi) - m_weight(k + 2, N, xi)
    if kind == "c":
        return m_sharp("a", k, N, xi) - m_sharp("a", k + 1, N, xi)
    if kind == "d":
        return m_sharp("a", k, N, xi) - m_sharp("a", k + 2, N, xi)
    if kind == "e":
        return m_sharp("b", k, N, xi) - m_sharp("b", k + 1, N, xi)
    if kind == "f":
        return m_sharp("b", k, N, xi) - m_sharp("b", k + 2, N, xi)
    raise InputError(f"unknown weight kind {kind!r}")


def check_xi(xi: float):
    if not 0.0 < xi < 0.5:
        raise InputError(f"xi must lie in (0, 1/2), got {xi}")


@dataclass
class WeightFunction:
    """f(k) tabulated on k = -margin .. N + margin."""

    values: np.ndarray
    N: int
    margin: int = 2
    name: str = "f"

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != (self.N + 1 + 2 * self.margin,):
            raise InputError(
                f"weight {self.name} needs {self.N + 1 + 2 * self.margin} values, "
                f"got {self.values.shape}"
            )

    @property
    def k(self) -> np.ndarray:
        return np.arange(-self.margin, self.N + self.margin + 1)

    def __call__(self, k) -> np.ndarray:
        idx = np.asarray(k) + self.margin
        if np.any(idx < 0) or np.any(idx >= self.values.size):
            raise InputError(f"weight {self.name} evaluated outside [-{self.margin}, N+{self.margin}]")
        out = self.values[idx]
        if np.any(np.isnan(out)):
            raise InputError(f"weight {self.name} is undefined at some of k={np.asarray(k).tolist()}")
        return out

    def shifted(self, d: int = 0) -> np.ndarray:
        """f(k + d) for k = 0 .. N."""
        return self(np.arange(self.N + 1) + d)

    def sup(self) -> float:
        return float(np.max(self.shifted(0)))

    def __mul__(self, other: "WeightFunction") -> "WeightFunction":
        return WeightFunction(self.values * other.values, self.N, self.margin,
                              f"{self.name}*{other.name}")

    def sqrt(self) -> "WeightFunction":
        safe = np.where(self.values >= 0, np.sqrt(np.abs(self.values)), np.nan)
        return WeightFunction(safe, self.N, self.margin, f"sqrt({self.name})")

    @classmethod
    def from_callable(cls, func: Callable, N: int, margin: int = 2,
                      name: str = "f") -> "WeightFunction":
        k = np.arange(-margin, N + margin + 1)
        return cls(np.asarray(func(k), dtype=float), N, margin, name)

    @classmethod
    def constant(cls, c: float, N: int, margin: int = 2) -> "WeightFunction":
        return cls(np.full(N + 1 + 2 * margin, float(c)), N, margin, f"const({c:g})")

    @classmethod
    def n(cls, N: int, margin: int = 2) -> "WeightFunction":
        return cls.from_callable(lambda k: n_weight(k, N), N, margin, "n")

    @classmethod
    def m(cls, N: int, xi: float, margin: int = 2) -> "WeightFunction":
        check_xi(xi)
        return cls.from_callable(lambda k: m_weight(k, N, xi), N, margin, "m")

    @classmethod
    def sharp(cls, kind: str, N: int, xi: float, margin: int = 2) -> "WeightFunction":
        check_xi(xi)
        return cls.from_callable(lambda k: m_sharp(kind, k, N, xi), N, margin, f"m^{kind}")

    @classmethod
    def random(cls, N: int, rng: np.random.Generator, margin: int = 2,
               name: str = "f") -> "WeightFunction":
        return cls(rng.uniform(0.0, 1.0, N + 1 + 2 * margin), N, margin, name)


# -- spaces and states -------------------------------------------------------------


@dataclass(frozen=True)
class ModeSpace:
    D: int
    N: int

    def __post_init__(self):
        if self.D < 2 or self.N < 1:
            raise InputError(f"need D >= 2 and N >= 1, got D={self.D}, N={self.N}")

    @property
    def first_quantized_dim(self) -> int:
        return self.D**self.N

    @property
    def symmetric_dim(self) -> int:
        return math.comb(self.N + self.D - 1, self.D - 1)

    def check_first_quantized(self, limit: int = MAX_FIRST_QUANTIZED):
        if self.first_quantized_dim > limit:
            raise DimensionError(
                f"D^N = {self.first_quantized_dim} exceeds {limit} for D={self.D}, N={self.N}"
            )

    def check_symmetric(self):
        if self.symmetric_dim > MAX_SYMMETRIC:
            raise DimensionError(
                f"symmetric dimension {self.symmetric_dim} exceeds {MAX_SYMMETRIC}"
            )


@dataclass
class CondensateVector:
    phi: np.ndarray

    def __post_init__(self):
        self.phi = np.asarray(self.phi, dtype=complex)
        if self.phi.ndim != 1 or self.phi.size < 2:
            raise InputError("condensate vector must be a 1-d array with at least 2 modes")
        if abs(np.linalg.norm(self.phi) - 1.0) > 1e-12:
            raise InputError(f"condensate vector must be normalised, |phi|={np.linalg.norm(self.phi)}")

    @classmethod
    def from_values(cls, values) -> "CondensateVector":
        v = np.asarray(values, dtype=complex)
        return cls(v / np.linalg.norm(v))

    @property
    def D(self) -> int:
        return self.phi.size

    def projector(self) -> np.ndarray:
        return np.outer(self.phi, self.phi.conj())

    def basis_rotation(self) -> np.ndarray:
        """Unitary W whose first column is phi."""
        A = np.column_stack([self.phi, np.eye(self.D)])
        Q, R = qr(A)
        W = Q[:, : self.D].copy()
        W[:, 0] *= R[0, 0]
        return W

    def orthogonal(self) -> np.ndarray:
        return self.basis_rotation()[:, 1]


def default_condensate(D: int) -> CondensateVector:
    """phi proportional to (1, 0.3, 0.1, 0.05, ...)."""
    if D < 2:
        raise InputError(f"need D >= 2, got {D}")
    values = ([1.0, 0.3, 0.1] + [0.05] * D)[:D]
    return CondensateVector.from_values(values)


@dataclass
class BosonState:
    rep: str
    coefficients: np.ndarray
    space: ModeSpace

    def __post_init__(self):
        self.coefficients = np.asarray(self.coefficients, dtype=complex)
        if self.rep == FIRST_QUANTIZED:
            self.space.check_first_quantized()
            expected = (self.space.D,) * self.space.N
        elif self.rep == OCCUPATION:
            self.space.check_symmetric()
            expected = (self.space.symmetric_dim,)
        else:
            raise InputError(f"unknown representation {self.rep!r}")
        if self.coefficients.shape != expected:
            raise InputError(f"{self.rep} state needs shape {expected}, got {self.coefficients.shape}")

    @property
    def norm(self) -> float:
        return float(np.linalg.norm(self.coefficients))

    def normalized(self) -> "BosonState":
        return BosonState(self.rep, self.coefficients / self.norm, self.space)

    def symmetry_defect(self) -> float:
        if self.rep != FIRST_QUANTIZED:
            return 0.0
        psi = self.coefficients
        worst = 0.0
        for i, j in itertools.combinations(range(self.space.N), 2):
            worst = max(worst, float(np.max(np.abs(psi - np.swapaxes(psi, i, j)))))
        return worst


def symmetrize(tensor: np.ndarray) -> np.ndarray:
    N = tensor.ndim
    perms = list(itertools.permutations(range(N)))
    return sum(np.transpose(tensor, p) for p in perms) / len(perms)


def product_tensor(vectors: list) -> np.ndarray:
    out = np.asarray(vectors[0], dtype=complex)
    for v in vectors[1:]:
        out = np.multiply.outer(out, np.asarray(v, dtype=complex))
    return out


def rotate_slots(tensor: np.ndarray, U: np.ndarray) -> np.ndarray:
    """Apply the one-particle matrix U to every slot."""
    out = tensor
    for axis in range(tensor.ndim):
        out = np.moveaxis(np.tensordot(U, out, axes=([1], [axis])), 0, axis)
    return out


def excitation_counts(space: ModeSpace) -> np.ndarray:
    """Number of slots not in mode 0, for every tensor index."""
    grids = np.indices((space.D,) * space.N)
    return np.sum(grids != 0, axis=0)


# -- occupation basis --------------------------------------------------------------


def _compositions(total: int, parts: int):
    if parts == 1:
        yield (total,)
        return
    for first in range(total, -1, -1):
        for rest in _compositions(total - first, parts - 1):
            yield (first,) + rest


class OccupationBasis:
    """Occupation-number basis of the N-boson sector, n_0 descending."""

    def __init__(self, space: ModeSpace):
        space.check_symmetric()
        self.space = space
        self.states = list(_compositions(space.N, space.D))
        self.index = {s: i for i, s in enumerate(self.states)}
        self.occupations = np.array(self.states, dtype=int)
        self._hops: dict = {}

    @property
    def dim(self) -> int:
        return len(self.states)

    @property
    def n0(self) -> np.ndarray:
        return self.occupations[:, 0]

    def hop(self, i: int, j: int) -> sparse.csr_matrix:
        """a_i^dagger a_j."""
        if (i, j) not in self._hops:
            rows, cols, vals = [], [], []
            for col, state in enumerate(self.states):
                if state[j] == 0:
                    continue
                occ = list(state)
                c = math.sqrt(occ[j])
                occ[j] -= 1
                occ[i] += 1
                c *= math.sqrt(occ[i])
                rows.append(self.index[tuple(occ)])
                cols.append(col)
                vals.append(c)
            self._hops[(i, j)] = sparse.csr_matrix((vals, (rows, cols)), shape=(self.dim, self.dim))
        return self._hops[(i, j)]

    def dgamma(self, K: np.ndarray) -> sparse.csr_matrix:
        """Second quantisation sum_ij K_ij a_i^dagger a_j."""
        D = self.space.D
        out = sparse.csr_matrix((self.dim, self.dim), dtype=complex)
        for i in range(D):
            for j in range(D):
                if K[i, j] != 0:
                    out = out + K[i, j] * self.hop(i, j)
        return out

    def rotate(self, psi: np.ndarray, W: np.ndarray, inverse: bool = False) -> np.ndarray:
        """Gamma(W) psi, or Gamma(W)^dagger psi, with Gamma(W) = exp(i dGamma(K)), W = exp(iK)."""
        T, Z = schur(W, output="complex")
        K = (Z * np.angle(np.diag(T))) @ Z.conj().T
        K = 0.5 * (K + K.conj().T)
        sign = -1.0 if inverse else 1.0
        return expm_multiply(sign * 1j * self.dgamma(K), np.asarray(psi, dtype=complex))

    def vacuum_like(self) -> np.ndarray:
        """|N, 0, ..., 0>."""
        e = np.zeros(self.dim, dtype=complex)
        e[0] = 1.0
        return e

    def to_tensor(self, psi: np.ndarray) -> np.ndarray:
        """Symmetric tensor with amplitudes c_n * sqrt(prod n_a! / N!)."""
        space = self.space
        space.check_first_quantized()
        D, N = space.D, space.N
        grids = np.indices((D,) * N).reshape(N, -1)
        counts = np.stack([np.sum(grids == a, axis=0) for a in range(D)])
        base = (N + 1) ** np.arange(D)
        keys = base @ counts
        basis_keys = self.occupations @ base
        order = np.argsort(basis_keys)
        pos = order[np.searchsorted(basis_keys[order], keys)]
        log_fact = np.array([math.lgamma(n + 1) for n in range(N + 1)])
        weight = np.exp(0.5 * (np.sum(log_fact[counts], axis=0) - log_fact[N]))
        return (np.asarray(psi, dtype=complex)[pos] * weight).reshape((D,) * N)


# -- first-quantised dense operators ---------------------------------------------------


class FirstQuantizedOps:
    """Dense operators on (C^D)^{tensor N}; only for small D^N."""

    def __init__(self, space: ModeSpace, cond: CondensateVector):
        space.check_first_quantized(MAX_DENSE)
        if cond.D != space.D:
            raise InputError(f"condensate has {cond.D} modes, space has {space.D}")
        self.space = space
        self.cond = cond
        self.dim = space.first_quantized_dim
        self.p1 = cond.projector()
        self.q1 = np.eye(space.D) - self.p1

    def one_slot(self, op: np.ndarray, j: int) -> np.ndarray:
        D, N = self.space.D, self.space.N
        out = np.ones((1, 1), dtype=complex)
        for slot in range(N):
            out = np.kron(out, op if slot == j else np.eye(D))
        return out

    def apply_two_slot(self, op: np.ndarray, tensor: np.ndarray, i: int, j: int) -> np.ndarray:
        D = self.space.D
        moved = np.moveaxis(tensor, (i, j), (0, 1))
        rest = moved.shape[2:]
        out = (op @ moved.reshape(D * D, -1)).reshape((D, D) + rest)
        return np.moveaxis(out, (0, 1), (i, j))

    def two_slot(self, op: np.ndarray, i: int, j: int) -> np.ndarray:
        if i == j:
            raise InputError("two-slot operator needs distinct slots")
        D, N = self.space.D, self.space.N
        eye = np.eye(self.dim, dtype=complex).reshape((D,) * N + (self.dim,))
        return self.apply_two_slot(op, eye, i, j).reshape(self.dim, self.dim)

    @cached_property
    def p(self) -> list:
        return [self.one_slot(self.p1, j) for j in range(self.space.N)]

    @cached_property
    def q(self) -> list:
        return [np.eye(self.dim) - pj for pj in self.p]

    @cached_property
    def P(self) -> list:
        """P_k as the symmetrised product over subsets J with |J| = k."""
        D, N = self.space.D, self.space.N
        out = [np.zeros((self.dim, self.dim), dtype=complex) for _ in range(N + 1)]
        for J in itertools.product((0, 1), repeat=N):
            prod = np.ones((1, 1), dtype=complex)
            for bit in J:
                prod = np.kron(prod, self.q1 if bit else self.p1)
            out[sum(J)] += prod
        return out

    def P_spectral(self) -> list:
        """P_k as eigenprojectors of sum_j q_j."""
        lam, vec = np.linalg.eigh(sum(self.q))
        out = []
        for k in range(self.space.N + 1):
            v = vec[:, np.abs(lam - k) < 0.5]
            out.append(v @ v.conj().T)
        return out

    def fhat(self, f: WeightFunction, d: int = 0) -> np.ndarray:
        w = f.shifted(d)
        return sum(w[k] * Pk for k, Pk in enumerate(self.P))

    def weighted(self, values: np.ndarray) -> np.ndarray:
        return sum(values[k] * Pk for k, Pk in enumerate(self.P))


# -- service ------------------------------------------------------------------------------


def op_norm(A: np.ndarray) -> float:
    return float(np.linalg.norm(A, 2))


def random_unitary_like(rng: np.random.Generator, n: int) -> np.ndarray:
    """Random complex matrix with operator norm one."""
    A = rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))
    return A / op_norm(A)


class CountingService:
    def __init__(self, xi: float = 0.25):
        check_xi(xi)
        self.xi = xi
        self._bases: dict = {}

    def basis(self, space: ModeSpace) -> OccupationBasis:
        if space not in self._bases:
            self._bases[space] = OccupationBasis(space)
        return self._bases[space]

    # -- states ------------------------------------------------------------------

    def condensed(self, space: ModeSpace, cond: CondensateVector, rep: str) -> BosonState:
        if rep == FIRST_QUANTIZED:
            space.check_first_quantized()
            return BosonState(rep, product_tensor([cond.phi] * space.N), space)
        basis = self.basis(space)
        psi = basis.rotate(basis.vacuum_like(), cond.basis_rotation())
        return BosonState(OCCUPATION, psi, space)

    def random_state(self, space: ModeSpace, rng: np.random.Generator, rep: str) -> BosonState:
        if rep == FIRST_QUANTIZED:
            space.check_first_quantized()
            shape = (space.D,) * space.N
            raw = rng.normal(size=shape) + 1j * rng.normal(size=shape)
            return BosonState(rep, symmetrize(raw), space).normalized()
        dim = self.basis(space).dim
        raw = rng.normal(size=dim) + 1j * rng.normal(size=dim)
        return BosonState(OCCUPATION, raw, space).normalized()

    def to_first_quantized(self, psi: BosonState) -> BosonState:
        if psi.rep == FIRST_QUANTIZED:
            return psi
        return BosonState(FIRST_QUANTIZED, self.basis(psi.space).to_tensor(psi.coefficients), psi.space)

    # -- weighted operators ------------------------------------------------------------

    def sector_weights(self, psi: BosonState, cond: CondensateVector) -> np.ndarray:
        """||P_k psi||^2 for k = 0 .. N."""
        space = psi.space
        W = cond.basis_rotation()
        if psi.rep == FIRST_QUANTIZED:
            rotated = rotate_slots(psi.coefficients, W.conj().T)
            counts = excitation_counts(space)
            return np.bincount(counts.ravel(), weights=np.abs(rotated.ravel()) ** 2,
                               minlength=space.N + 1)
        basis = self.basis(space)
        rotated = basis.rotate(psi.coefficients, W, inverse=True)
        k = space.N - basis.n0
        return np.bincount(k, weights=np.abs(rotated) ** 2, minlength=space.N + 1)

    def apply_fhat(self, f: WeightFunction, psi: BosonState, cond: CondensateVector,
                   d: int = 0) -> BosonState:
        space = psi.space
        if f.N != space.N:
            raise InputError(f"weight built for N={f.N}, state has N={space.N}")
        w = f.shifted(d)
        W = cond.basis_rotation()
        if psi.rep == FIRST_QUANTIZED:
            rotated = rotate_slots(psi.coefficients, W.conj().T)
            rotated = rotated * w[excitation_counts(space)]
            return BosonState(FIRST_QUANTIZED, rotate_slots(rotated, W), space)
        basis = self.basis(space)
        rotated = basis.rotate(psi.coefficients, W, inverse=True) * w[space.N - basis.n0]
        return BosonState(OCCUPATION, basis.rotate(rotated, W), space)

    def m_expectation(self, psi: BosonState, cond: CondensateVector,
                      xi: Optional[float] = None) -> float:
        xi = self.xi if xi is None else xi
        weights = self.sector_weights(psi, cond)
        return float(np.dot(m_weight(np.arange(psi.space.N + 1), psi.space.N, xi), weights))

    def alpha_less(self, psi: BosonState, cond: CondensateVector, xi: Optional[float] = None,
                   E_many: float = 0.0, E_eff: float = 0.0) -> float:
        xi = self.xi if xi is None else xi
        check_xi(xi)
        return self.m_expectation(psi, cond, xi) + abs(E_many - E_eff)

    # -- reduced density -----------------------------------------------------------------

    def reduced_density(self, psi: BosonState) -> np.ndarray:
        space = psi.space
        if psi.rep == FIRST_QUANTIZED:
            M = psi.coefficients.reshape(space.D, -1)
            return M @ M.conj().T
        basis = self.basis(space)
        c = psi.coefficients
        gamma = np.empty((space.D, space.D), dtype=complex)
        for i in range(space.D):
            for j in range(space.D):
                gamma[i, j] = np.vdot(c, basis.hop(j, i) @ c) / space.N
        return gamma

    def trace_distance(self, psi: BosonState, cond: CondensateVector) -> float:
        diff = self.reduced_density(psi) - cond.projector()
        diff = 0.5 * (diff + diff.conj().T)
        return float(np.sum(np.abs(np.linalg.eigvalsh(diff))))

    # -- verification -----------------------------------------------------------------------

    def verify_lemma_suite(self, space: ModeSpace, cond: CondensateVector,
                           xi: Optional[float] = None, trials: int = 100, seed: int = 0,
                           fault: str = "none") -> list[CheckResult]:
        """Dense brute-force check of the weighted-operator identities and bounds."""
        xi = self.xi if xi is None else xi
        check_xi(xi)
        if trials < 100:
            raise InputError(f"trials must be at least 100, got {trials}")
        if fault not in ("none", "weight_sign"):
            raise InputError(f"unknown fault {fault!r}")
        if space.N < 2:
            raise InputError("the two-slot identities need N >= 2")
        ops = FirstQuantizedOps(space, cond)
        N, D = space.N, space.D
        rng = np.random.default_rng(seed)
        eye = np.eye(ops.dim)

        worst = {name: 0.0 for name in (
            "weighted_operator_norm", "shifted_operator_norm", "sqrt_operator_norm",
            "q1_bound", "q1q2_bound", "product_rule", "commutes_with_projectors",
            "one_slot_exchange", "two_slot_exchange", "two_slot_commutator",
        )}
        offenders: dict = {}

        def record(name: str, value: float, trial: int):
            if value > worst[name]:
                worst[name] = value
                offenders[name] = trial

        Q1 = [lambda j: ops.p[j], lambda j: ops.q[j]]

        for trial in range(trials):
            f = WeightFunction.random(N, rng, name="f")
            g = WeightFunction.random(N, rng, name="g")
            if fault == "weight_sign":
                f = WeightFunction(-f.values, N, f.margin, "f")
            F = ops.fhat(f)
            G = ops.fhat(g)

            record("weighted_operator_norm", abs(op_norm(F) - f.sup()), trial)
            for d in (-2, -1, 1, 2):
                record("shifted_operator_norm",
                       abs(op_norm(ops.fhat(f, d)) - float(np.max(f.shifted(d)))), trial)
            if fault == "none":
                record("sqrt_operator_norm", abs(op_norm(ops.fhat(f.sqrt())) ** 2 - f.sup()), trial)

            psi = self.random_state(space, rng, FIRST_QUANTIZED).coefficients.ravel()
            n_hat = ops.fhat(WeightFunction.n(N))
            lhs = np.linalg.norm(F @ ops.q[0] @ psi) ** 2
            rhs = np.linalg.norm(F @ n_hat @ psi) ** 2
            record("q1_bound", lhs - rhs, trial)
            lhs2 = np.linalg.norm(F @ ops.q[0] @ ops.q[1] @ psi) ** 2
            rhs2 = N * N / (N * (N - 1)) * np.linalg.norm(F @ n_hat @ n_hat @ psi) ** 2
            record("q1q2_bound", lhs2 - rhs2, trial)

            record("product_rule", max(op_norm(F @ G - ops.fhat(f * g)),
                                       op_norm(F @ G - G @ F)), trial)
            j = int(rng.integers(N))
            k = int(rng.integers(N + 1))
            record("commutes_with_projectors", max(
                op_norm(F @ ops.p[j] - ops.p[j] @ F),
                op_norm(F @ ops.q[j] - ops.q[j] @ F),
                op_norm(F @ ops.P[k] - ops.P[k] @ F),
            ), trial)

            S = ops.one_slot(random_unitary_like(rng, D), j)
            res = 0.0
            for mu in (0, 1):
                for nu in (0, 1):
                    left = Q1[mu](j) @ F @ S @ Q1[nu](j)
                    right = Q1[mu](j) @ S @ ops.fhat(f, mu - nu) @ Q1[nu](j)
                    res = max(res, op_norm(left - right))
            record("one_slot_exchange", res, trial)

            a, b = sorted(rng.choice(N, size=2, replace=False).tolist())
            T = ops.two_slot(random_unitary_like(rng, D * D), a, b)
            pa, pb, qa, qb = ops.p[a], ops.p[b], ops.q[a], ops.q[b]
            tilde = {0: [pa @ pb], 1: [pa @ qb, qa @ pb], 2: [qa @ qb]}
            res = 0.0
            for mu, left_list in tilde.items():
                for nu, right_list in tilde.items():
                    shifted = ops.fhat(f, mu - nu)
                    for Lq in left_list:
                        for Rq in right_list:
                            res = max(res, op_norm(Lq @ F @ T @ Rq - Lq @ T @ shifted @ Rq))
            record("two_slot_exchange", res, trial)

            A = pa @ pb @ (F - ops.fhat(f, 2)) + (pa @ qb + qa @ pb) @ (F - ops.fhat(f, 1))
            record("two_slot_commutator", op_norm((T @ F - F @ T) - (T @ A - A @ T)), trial)

        rows = []
        for name, value in worst.items():
            if name == "sqrt_operator_norm" and fault != "none":
                continue
            row = at_most(name, value, IDENTITY_TOL)
            rows.append(row)
            if not row.passed:
                logger.error(f"{name} failed: residual {value:.3e} in trial {offenders.get(name)} "
                             f"(seed {seed})")

        rows += self.sharp_norm_checks(space, cond, xi, ops)
        rows += [
            at_most("n_squared_identity",
                    op_norm(ops.fhat(WeightFunction.n(N)) @ ops.fhat(WeightFunction.n(N))
                            - sum(ops.q) / N), IDENTITY_TOL),
            at_most("projector_completeness", op_norm(sum(ops.P) - eye), IDENTITY_TOL),
            at_most("projector_orthogonality", max(
                op_norm(Pk @ Pl - (Pk if k == l else 0.0))
                for k, Pk in enumerate(ops.P) for l, Pl in enumerate(ops.P)
            ), IDENTITY_TOL),
            at_most("projector_constructions_agree",
                    max(op_norm(a - b) for a, b in zip(ops.P, ops.P_spectral())), 1e-10),
        ]
        logger.info(f"Weighted-operator suite N={N}, D={D}, {trials} trials: "
                    f"{sum(r.passed for r in rows)}/{len(rows)} passed")
        return rows

    def sharp_norm_checks(self, space: ModeSpace, cond: CondensateVector,
                          xi: Optional[float] = None,
                          ops: Optional[FirstQuantizedOps] = None) -> list[CheckResult]:
        """Dense operator norms of m^a, m^b and r^ against N^(-1+xi)."""
        xi = self.xi if xi is None else xi
        check_xi(xi)
        if space.N < 2:
            raise InputError("r^ acts on two slots and needs N >= 2")
        ops = ops or FirstQuantizedOps(space, cond)
        N = space.N
        bound = N ** (-1.0 + xi)
        ma = ops.fhat(WeightFunction.sharp("a", N, xi))
        mb = ops.fhat(WeightFunction.sharp("b", N, xi))
        r_hat = mb @ ops.p[0] @ ops.p[1] + ma @ (ops.p[0] @ ops.q[1] + ops.q[0] @ ops.p[1])
        return [
            at_most(f"m_a_norm_N={N}", op_norm(ma), bound),
            at_most(f"m_b_norm_N={N}", op_norm(mb), 2.0 * bound),
            at_most(f"r_hat_norm_N={N}", op_norm(r_hat), 3.0 * bound),
        ]

    def build_projectors(self, space: ModeSpace, cond: CondensateVector) -> dict:
        ops = FirstQuantizedOps(space, cond)
        spectral = ops.P_spectral()
        return {
            "p": ops.p,
            "q": ops.q,
            "P": ops.P,
            "max_construction_gap": max(op_norm(a - b) for a, b in zip(ops.P, spectral)),
        }

    def representation_checks(self, space: ModeSpace, cond: CondensateVector,
                              trials: int = 5, seed: int = 0,
                              xi: Optional[float] = None) -> list[CheckResult]:
        """Occupation and first-quantised application of f^ on the same random states."""
        xi = self.xi if xi is None else xi
        rng = np.random.default_rng(seed)
        basis = self.basis(space)
        weights = [WeightFunction.m(space.N, xi), WeightFunction.n(space.N),
                   WeightFunction.random(space.N, rng)]
        worst_apply, worst_sector, worst_gamma = 0.0, 0.0, 0.0
        for _ in range(trials):
            psi = self.random_state(space, rng, OCCUPATION)
            tensor = self.to_first_quantized(psi)
            worst_sector = max(worst_sector, float(np.max(np.abs(
                self.sector_weights(psi, cond) - self.sector_weights(tensor, cond)))))
            worst_gamma = max(worst_gamma, float(np.max(np.abs(
                self.reduced_density(psi) - self.reduced_density(tensor)))))
            for f in weights:
                for d in (0, 1, -1):
                    if d == -1 and f.name == "n":
                        continue
                    occ = self.apply_fhat(f, psi, cond, d)
                    fq = self.apply_fhat(f, tensor, cond, d)
                    diff = basis.to_tensor(occ.coefficients) - fq.coefficients
                    worst_apply = max(worst_apply, float(np.max(np.abs(diff))))
        return [
            at_most("representations_agree_fhat", worst_apply, IDENTITY_TOL),
            at_most("representations_agree_sectors", worst_sector, IDENTITY_TOL),
            at_most("representations_agree_density", worst_gamma, IDENTITY_TOL),
        ]

    def equivalence_checks(self, space: ModeSpace, cond: CondensateVector, trials: int,
                           seed: int = 0, xi: Optional[float] = None) -> list[CheckResult]:
        """trace distance <= sqrt(8 alpha) and alpha <= sqrt(trace distance) + N^-xi/2."""
        xi = self.xi if xi is None else xi
        rng = np.random.default_rng(seed)
        first, second = -math.inf, -math.inf
        for _ in range(trials):
            psi = self.random_state(space, rng, OCCUPATION)
            alpha = self.alpha_less(psi, cond, xi)
            dist = self.trace_distance(psi, cond)
            first = max(first, dist - math.sqrt(8.0 * alpha))
            second = max(second, alpha - math.sqrt(dist) - 0.5 * space.N ** (-xi))
        if space.N < 2 ** (1.0 / xi):
            logger.info(f"N={space.N} is below 2^(1/xi); equivalence bounds reported only")
        return [
            at_most("trace_distance_below_alpha", first, 1e-12),
            at_most("alpha_below_trace_distance", second, 1e-12),
        ]

    def second_difference_exponent(self, xi: Optional[float] = None,
                                   N_list: Optional[list] = None) -> CheckResult:
        xi = self.xi if xi is None else xi
        check_xi(xi)
        N_list = N_list or [256, 1024, 4096, 16384, 65536]
        if len(N_list) < 3:
            raise InputError("N_list needs at least 3 values")
        norms = []
        for N in N_list:
            k = np.arange(N + 1)
            norms.append(max(float(np.max(np.abs(m_sharp(kind, k, N, xi)))) for kind in "cdef"))
        slope = loglog_slope(N_list, norms)
        target = -2.0 + 3.0 * xi
        logger.info(f"Second-difference weights: fitted exponent {slope:.4f}, expected {target:.4f}")
        return at_most("second_difference_exponent", abs(slope - target), 0.1)

    # -- toy dynamics -------------------------------------------------------------------------

    def evolve_toy(self, toy: "BoseHubbardToy", psi0: BosonState, phi0: CondensateVector,
                   t_grid, xi: Optional[float] = None) -> dict:
        xi = self.xi if xi is None else xi
        t_grid = np.asarray(t_grid, dtype=float)
        phis = toy.mean_field(phi0.phi, t_grid)
        states = toy.evolve(psi0.coefficients, t_grid)
        rows = []
        for t, phi, c in zip(t_grid, phis, states):
            psi = BosonState(OCCUPATION, c, toy.space)
            cond = CondensateVector.from_values(phi)
            e_many = toy.energy_per_particle(c)
            e_eff = toy.mean_field_energy(phi)
            rows.append({
                "t": float(t),
                "alpha_less": self.alpha_less(psi, cond, xi, e_many, e_eff),
                "trace_distance": self.trace_distance(psi, cond),
                "energy_gap": abs(e_many - e_eff),
            })
        sup = max(r["trace_distance"] for r in rows)
        logger.info(f"Toy dynamics N={toy.N}, D={toy.D}: sup trace distance {sup:.4e}")
        return {"rows": rows, "sup_trace_distance": sup,
                "phi_norm_drift": float(np.max(np.abs(np.linalg.norm(phis, axis=1) - 1.0)))}

    def toy_representation_check(self, toy: "BoseHubbardToy", trials: int = 3,
                                 seed: int = 0, tol: float = 1e-12) -> CheckResult:
        """Toy Hamiltonian in both representations applied to the same random states."""
        rng = np.random.default_rng(seed)
        H_fq = toy.first_quantized_hamiltonian()
        worst = 0.0
        for _ in range(trials):
            psi = self.random_state(toy.space, rng, OCCUPATION).coefficients
            occ = toy.basis.to_tensor(toy.hamiltonian @ psi).ravel()
            fq = H_fq @ toy.basis.to_tensor(psi).ravel()
            worst = max(worst, float(np.max(np.abs(occ - fq))))
        return at_most(f"toy_hamiltonian_representations_agree_N={toy.N}", worst, tol)


@dataclass
class BoseHubbardToy:
    """H = -J sum_<ij> a_i^dagger a_j + g/(N-1) sum_i n_i(n_i - 1)/2 on an open chain."""

    D: int
    N: int
    hopping: float = 1.0
    interaction: float = 1.0
    rtol: float = 1e-12
    _spectrum: Optional[tuple] = field(default=None, repr=False)

    def __post_init__(self):
        self.space = ModeSpace(self.D, self.N)
        self.space.check_symmetric()
        self.basis = OccupationBasis(self.space)

    def one_body(self) -> np.ndarray:
        h = np.zeros((self.D, self.D))
        for i in range(self.D - 1):
            h[i, i + 1] = h[i + 1, i] = -self.hopping
        return h

    @cached_property
    def hamiltonian(self) -> sparse.csr_matrix:
        H = self.basis.dgamma(self.one_body().astype(complex))
        pairs = np.sum(self.basis.occupations * (self.basis.occupations - 1), axis=1) / 2.0
        scale = self.interaction / max(self.N - 1, 1)
        return (H + sparse.diags(scale * pairs)).tocsr()

    def first_quantized_hamiltonian(self) -> np.ndarray:
        ops = FirstQuantizedOps(self.space, CondensateVector(np.eye(self.D)[0].astype(complex)))
        H = sum(ops.one_slot(self.one_body(), j) for j in range(self.N))
        contact = np.zeros((self.D * self.D, self.D * self.D))
        for a in range(self.D):
            contact[a * self.D + a, a * self.D + a] = 1.0
        scale = self.interaction / max(self.N - 1, 1)
        for i, j in itertools.combinations(range(self.N), 2):
            H = H + scale * ops.two_slot(contact, i, j)
        return H

    def energy_per_particle(self, psi: np.ndarray) -> float:
        return float(np.real(np.vdot(psi, self.hamiltonian @ psi))) / self.N

    def mean_field_energy(self, phi: np.ndarray) -> float:
        phi = np.asarray(phi, dtype=complex)
        kinetic = float(np.real(np.vdot(phi, self.one_body() @ phi)))
        return kinetic + 0.5 * self.interaction * float(np.sum(np.abs(phi) ** 4))

    def mean_field(self, phi0: np.ndarray, t_grid: np.ndarray) -> np.ndarray:
        """i dphi/dt = h phi + g|phi|^2 phi, DOP853."""
        h = self.one_body()
        g = self.interaction
        t_grid = np.asarray(t_grid, dtype=float)
        if t_grid[0] != 0.0 or np.any(np.diff(t_grid) < 0):
            raise InputError("t_grid must start at 0 and be sorted")
        phi0 = np.asarray(phi0, dtype=complex)
        if t_grid[-1] == 0.0:
            return np.tile(phi0, (t_grid.size, 1))

        def rhs(_t, y):
            return -1j * (h @ y + g * np.abs(y) ** 2 * y)

        sol = solve_ivp(rhs, (0.0, float(t_grid[-1])), phi0, method="DOP853",
                        t_eval=t_grid, rtol=self.rtol, atol=self.rtol)
        if not sol.success:
            raise CountingError(f"mean-field integration failed: {sol.message}")
        drift = float(np.max(np.abs(np.linalg.norm(sol.y, axis=0) - 1.0)))
        if drift > 1e-8:
            logger.warning(f"Mean-field norm drift {drift:.2e} exceeds 1e-8 (rtol={self.rtol})")
        return sol.y.T

    def evolve(self, psi0: np.ndarray, t_grid) -> list:
        """Exact propagation through the eigendecomposition of H."""
        if self._spectrum is None:
            self._spectrum = eigh(self.hamiltonian.toarray())
        lam, vec = self._spectrum
        c0 = vec.conj().T @ np.asarray(psi0, dtype=complex)
        return [vec @ (np.exp(-1j * lam * t) * c0) for t in np.asarray(t_grid, dtype=float)]
