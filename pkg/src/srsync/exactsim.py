"""Exact density-matrix oracle for small atom numbers.

Builds the Liouvillian superoperators of the post-elimination atomic master
equations for all four scenarios and, optionally, the pre-elimination models
with one or two truncated photon modes.  Provides evolution, steady states,
and expectation extraction used to validate the cumulant closure.

Hilbert-space layout: ensemble A qubits first, then ensemble B qubits, then
photon modes.  Density matrices are vectorized row-major, so a sandwich
A rho B maps to (A kron B^T) acting on vec(rho).  The eliminated mode is
assembled dense (its job is correctness at desk scale); the two-mode
pre-elimination model can exceed the dense cap and falls back to sparse
storage with shift-invert steady-state extraction.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .model import CorrelationState, ModelParams, ParameterError, ScenarioKind

_DENSE_CAP = 4096       # Liouville dimension kept dense
_MAX_LIOUVILLE = 80000  # absolute guard on the Liouville dimension


class DimensionError(ParameterError):
    """Requested system exceeds the size guards."""


class DegenerateSteadyStateError(RuntimeError):
    """The Liouvillian null space is not one-dimensional."""


class SymmetryError(RuntimeError):
    """Atom-exchange symmetry violated (non-symmetric state supplied)."""


class TruncationError(RuntimeError):
    """Photon-space truncation carries non-negligible population."""


class InvariantViolationError(RuntimeError):
    """A density-matrix invariant (trace, hermiticity, positivity) failed."""


# --- operator toolkit ------------------------------------------------------

_SM = sp.csr_matrix(np.array([[0.0, 0.0], [1.0, 0.0]], dtype=complex))  # lowers e->g
_SP = sp.csr_matrix(np.array([[0.0, 1.0], [0.0, 0.0]], dtype=complex))
_SZ = sp.csr_matrix(np.array([[1.0, 0.0], [0.0, -1.0]], dtype=complex))  # |e><e|-|g><g|
_I2 = sp.identity(2, format="csr", dtype=complex)


@dataclass(frozen=True)
class HilbertLayout:
    """Tensor factor bookkeeping: n_small qubits per ensemble, then modes."""

    n_small: int
    mode_dims: tuple[int, ...] = ()

    @property
    def n_qubits(self) -> int:
        return 2 * self.n_small

    @property
    def dims(self) -> tuple[int, ...]:
        return (2,) * self.n_qubits + self.mode_dims

    @property
    def dim(self) -> int:
        return int(np.prod(self.dims))

    def site_operator(self, op: sp.spmatrix, site: int) -> sp.csr_matrix:
        factors = [sp.identity(d, format="csr", dtype=complex) for d in self.dims]
        factors[site] = op.tocsr()
        out = factors[0]
        for f in factors[1:]:
            out = sp.kron(out, f, format="csr")
        return out

    def atom_op(self, which: str, ensemble: str, index: int) -> sp.csr_matrix:
        base = {"+": _SP, "-": _SM, "z": _SZ}[which]
        site = index if ensemble == "A" else self.n_small + index
        return self.site_operator(base, site)

    def collective(self, which: str, ensemble: str) -> sp.csr_matrix:
        total = self.atom_op(which, ensemble, 0)
        for i in range(1, self.n_small):
            total = total + self.atom_op(which, ensemble, i)
        return total

    def jz(self, ensemble: str) -> sp.csr_matrix:
        return 0.5 * self.collective("z", ensemble)

    def mode_op(self, mode_index: int) -> sp.csr_matrix:
        dim = self.mode_dims[mode_index]
        a = sp.csr_matrix(np.diag(np.sqrt(np.arange(1, dim)), k=1).astype(complex))
        return self.site_operator(a, self.n_qubits + mode_index)


@dataclass(frozen=True)
class LindbladSpec:
    """Hamiltonian plus (rate, operator, thermal occupation) collapse terms."""

    hamiltonian: sp.spmatrix
    collapse_terms: tuple[tuple[float, sp.spmatrix, float], ...]
    layout: HilbertLayout

    def __post_init__(self) -> None:
        for rate, _op, nbar in self.collapse_terms:
            if rate < 0 or nbar < 0:
                raise ParameterError(f"collapse rates and occupations must be >= 0, "
                                     f"got rate={rate}, nbar={nbar}")


@dataclass(frozen=True)
class Liouvillian:
    """Superoperator matrix over vec(rho) plus its layout metadata."""

    matrix: np.ndarray | sp.spmatrix
    layout: HilbertLayout
    rate_scale: float

    @property
    def dim(self) -> int:
        return self.layout.dim

    def apply(self, rho: np.ndarray) -> np.ndarray:
        vec = rho.reshape(-1)
        out = self.matrix @ vec
        return np.asarray(out).reshape(rho.shape)


@dataclass(frozen=True)
class DensityMatrix:
    dim: int
    entries: np.ndarray

    def validate(self, herm_tol: float = 1e-12, trace_tol: float = 1e-10,
                 positivity_tol: float = 1e-9) -> None:
        rho = self.entries
        herm = np.max(np.abs(rho - rho.conj().T))
        if herm > herm_tol:
            raise InvariantViolationError(f"hermiticity violated by {herm:.3e}")
        tr = complex(np.trace(rho))
        if abs(tr - 1.0) > trace_tol:
            raise InvariantViolationError(f"trace deviates from one by {abs(tr - 1.0):.3e}")
        eigs = np.linalg.eigvalsh(0.5 * (rho + rho.conj().T))
        if eigs.min() < -positivity_tol:
            raise InvariantViolationError(f"negative eigenvalue {eigs.min():.3e}")

    def purity(self) -> float:
        return float(np.real(np.trace(self.entries @ self.entries)))


def _dissipator(op: sp.spmatrix, dim: int) -> sp.csr_matrix:
    """Superoperator of D[op]: op.rho.op+ - (op+op.rho + rho.op+op)/2 (row-major vec)."""
    op = op.tocsr()
    opd = op.conj().T.tocsr()
    opdop = (opd @ op).tocsr()
    ident = sp.identity(dim, format="csr", dtype=complex)
    return (sp.kron(op, op.conj(), format="csr")
            - 0.5 * sp.kron(opdop, ident, format="csr")
            - 0.5 * sp.kron(ident, opdop.T, format="csr"))


def _commutator_superop(h: sp.spmatrix, dim: int) -> sp.csr_matrix:
    ident = sp.identity(dim, format="csr", dtype=complex)
    return -1j * (sp.kron(h.tocsr(), ident, format="csr")
                  - sp.kron(ident, h.T.tocsr(), format="csr"))


def _full_cavity_rates(p: ModelParams, n_small: int,
                       kappa_factor: float = 50.0) -> tuple[float, float]:
    """Pick (kappa, omega_rabi) for the pre-elimination model.

    Only gamma = omega^2 / kappa is physically pinned after elimination; the
    split enforces the overdamped-cavity hierarchy kappa >> pump, collective
    rate by a wide margin.
    """
    gamma = p.collective_rate / p.n_atoms
    kappa = kappa_factor * max(p.pump, n_small * gamma)
    if kappa <= 0:
        kappa = kappa_factor * gamma
    return kappa, math.sqrt(gamma * kappa)


def lindblad_spec(scenario: ScenarioKind, p: ModelParams, n_small: int,
                  mode: str = "eliminated", n_max: int = 5,
                  kappa_factor: float = 50.0) -> LindbladSpec:
    """Assemble the Hamiltonian and collapse channels for one scenario.

    mode 'eliminated' uses the atom-only master equations; 'full_cavity'
    keeps the photon mode(s) with occupations 0..n_max.  n_small is the atom
    number per ensemble and must match p.n_atoms so the rates and the
    cumulant comparison refer to the same system.
    """
    if n_small < 1:
        raise ParameterError("n_small must be >= 1")
    if p.n_atoms != n_small:
        raise ParameterError(
            f"p.n_atoms ({p.n_atoms}) must equal n_small ({n_small}) so that the "
            "collective rate refers to the simulated atom number")
    gamma = p.single_atom_rate
    w, delta, xi = p.pump, p.detuning, p.feedback_strength

    if mode == "eliminated":
        if n_small > 4:
            raise DimensionError("eliminated mode supports at most 4 atoms per ensemble")
        layout = HilbertLayout(n_small)
    elif mode == "full_cavity":
        if n_small > 2 or n_max > 6:
            raise DimensionError("full-cavity mode supports n_small <= 2 and n_max <= 6")
        n_modes = 1 if scenario is ScenarioKind.BI_QUANTUM else 2
        layout = HilbertLayout(n_small, mode_dims=(n_max + 1,) * n_modes)
    else:
        raise ParameterError(f"unknown mode {mode!r}")
    if layout.dim ** 2 > _MAX_LIOUVILLE:
        raise DimensionError(
            f"Liouville dimension {layout.dim ** 2} exceeds the guard {_MAX_LIOUVILLE}")

    pump_terms = [(w, layout.atom_op("+", ens, i), 0.0)
                  for ens in ("A", "B") for i in range(n_small)] if w > 0 else []

    if mode == "eliminated":
        ja, jb = layout.collective("-", "A"), layout.collective("-", "B")
        if scenario is ScenarioKind.BI_QUANTUM:
            h = 0.5 * delta * (layout.jz("A") - layout.jz("B"))
            collapse = [(gamma, ja + jb, 0.0)]
        elif scenario is ScenarioKind.BI_CLASSICAL:
            h = 0.5 * delta * (layout.jz("A") - layout.jz("B"))
            # channel rates are gamma (1 -+ xi) / 2 for the difference / sum modes
            collapse = []
            for s in (+1.0, -1.0):
                rate = 0.5 * gamma * (1.0 - s * xi)
                nbar = xi ** 2 / (4.0 * (1.0 + s * xi))
                collapse.append((rate, ja - s * jb, nbar))
        else:
            jap = layout.collective("+", "A")
            jbp = layout.collective("+", "B")
            # anti-hermitian coupling written as a hermitian Hamiltonian term
            h = -delta * layout.jz("B") - 0.5j * gamma * (jap @ jb - jbp @ ja)
            collapse = [(gamma, ja - jb, 0.0)]
            if scenario is ScenarioKind.UNI_CLASSICAL:
                collapse.append((gamma, jb, 0.0))
                collapse.append((gamma, jbp, 0.0))
        return LindbladSpec(h, tuple(collapse) + tuple(pump_terms), layout)

    kappa, omega = _full_cavity_rates(p, n_small, kappa_factor)
    ja, jb = layout.collective("-", "A"), layout.collective("-", "B")
    jap, jbp = layout.collective("+", "A"), layout.collective("+", "B")
    if scenario is ScenarioKind.BI_QUANTUM:
        a = layout.mode_op(0)
        h = (0.5 * delta * (layout.jz("A") - layout.jz("B"))
             + 0.5 * omega * (a.conj().T @ (ja + jb) + (jap + jbp) @ a))
        collapse = [(kappa, a, 0.0)]
    elif scenario is ScenarioKind.BI_CLASSICAL:
        a, b = layout.mode_op(0), layout.mode_op(1)
        kt = kappa / ((1.0 - xi) * (1.0 + xi))
        h = (0.5 * delta * (layout.jz("A") - layout.jz("B"))
             + 0.5 * omega * (a.conj().T @ ja + jap @ a + b.conj().T @ jb + jbp @ b))
        collapse = [
            (kt, a + xi * b, 0.0),
            (kt, b + xi * a, 0.0),
            (xi ** 2 * kt, a.conj().T, 0.0),
            (xi ** 2 * kt, b.conj().T, 0.0),
        ]
    else:
        a, b = layout.mode_op(0), layout.mode_op(1)
        # the one-way coupling (kappa/2)[a+ b - b+ a, rho] equals -i[H_c, rho]
        # with the hermitian H_c = +i (kappa/2) (a+ b - b+ a)
        h = (0.5 * omega * (jap @ a + a.conj().T @ ja + jbp @ b + b.conj().T @ jb)
             - delta * layout.jz("B")
             + 0.5j * kappa * (a.conj().T @ b - b.conj().T @ a))
        collapse = [(kappa, a + b, 0.0)]
        if scenario is ScenarioKind.UNI_CLASSICAL:
            collapse.append((kappa, b, 0.0))
            collapse.append((kappa, b.conj().T, 0.0))
    return LindbladSpec(h, tuple(collapse) + tuple(pump_terms), layout)


def build_liouvillian(scenario: ScenarioKind, p: ModelParams, n_small: int,
                      mode: str = "eliminated", n_max: int = 5,
                      kappa_factor: float = 50.0) -> Liouvillian:
    """Dense (or sparse, beyond the dense cap) superoperator for the scenario."""
    spec = lindblad_spec(scenario, p, n_small, mode=mode, n_max=n_max,
                         kappa_factor=kappa_factor)
    dim = spec.layout.dim
    lv = _commutator_superop(spec.hamiltonian, dim)
    for rate, op, nbar in spec.collapse_terms:
        if rate == 0.0:
            continue
        lv = lv + rate * (1.0 + nbar) * _dissipator(op, dim)
        if nbar > 0:
            lv = lv + rate * nbar * _dissipator(op.conj().T, dim)
    rate_scale = max(p.collective_rate, p.pump, abs(p.detuning), 1e-300)
    if mode == "full_cavity":
        rate_scale = max(rate_scale, _full_cavity_rates(p, n_small, kappa_factor)[0])
    matrix = lv.toarray() if dim ** 2 <= _DENSE_CAP else lv.tocsr()
    return Liouvillian(matrix=matrix, layout=spec.layout, rate_scale=rate_scale)


# --- steady state, evolution, expectations ---------------------------------

def _null_vector(lv: Liouvillian) -> tuple[np.ndarray, complex, complex]:
    """Null-space element plus the two smallest-magnitude eigenvalues."""
    mat = lv.matrix
    ldim = lv.dim ** 2
    if sp.issparse(mat) or ldim > 600:
        sigma = 1e-9 * lv.rate_scale
        vals, vecs = spla.eigs(mat, k=2, sigma=sigma, which="LM",
                               v0=np.ones(ldim, dtype=complex) / math.sqrt(ldim))
        order = np.argsort(np.abs(vals))
        return vecs[:, order[0]], complex(vals[order[0]]), complex(vals[order[1]])
    vals, vecs = np.linalg.eig(np.asarray(mat))
    order = np.argsort(np.abs(vals))
    return vecs[:, order[0]], complex(vals[order[0]]), complex(vals[order[1]])


def steady_state_exact(lv: Liouvillian, check_truncation_levels: bool = True) -> DensityMatrix:
    """Normalized, hermitized null-space element of the Liouvillian.

    Raises if the null space is (numerically) degenerate, if positivity or
    hermiticity fail beyond tolerance, or if a truncated photon mode holds
    visible population in its top two levels.
    """
    vec, lam0, lam1 = _null_vector(lv)
    scale = lv.rate_scale
    if abs(lam0) > 1e-8 * scale or abs(lam1) < 1e-7 * scale:
        raise DegenerateSteadyStateError(
            f"ambiguous null space: smallest eigenvalues {lam0:.3e} and {lam1:.3e}")
    dim = lv.dim
    rho = vec.reshape(dim, dim)
    rho = 0.5 * (rho + rho.conj().T)
    tr = complex(np.trace(rho))
    if abs(tr) < 1e-12:
        raise DegenerateSteadyStateError("null-space element is traceless")
    rho = rho / tr
    out = DensityMatrix(dim=dim, entries=np.asarray(rho))
    out.validate(herm_tol=1e-10, trace_tol=1e-10, positivity_tol=1e-9)
    if check_truncation_levels and lv.layout.mode_dims:
        check_truncation(out, lv.layout)
    return out


def mode_populations(rho: DensityMatrix, layout: HilbertLayout,
                     mode_index: int) -> np.ndarray:
    """Diagonal of the reduced density matrix of one photon mode."""
    dims = layout.dims
    n_fac = len(dims)
    full = rho.entries.reshape(dims + dims)
    axis = layout.n_qubits + mode_index
    ket = list(range(n_fac))
    bra = list(range(n_fac))
    bra[axis] = n_fac  # keep the mode's bra index open; repeated labels trace out
    marg = np.einsum(full, ket + bra, [axis, n_fac])
    return np.real(np.diag(marg))


def check_truncation(rho: DensityMatrix, layout: HilbertLayout,
                     budget: float = 1e-4) -> None:
    """Reject photon-space truncations whose top two levels hold population."""
    for k, mode_dim in enumerate(layout.mode_dims):
        pops = mode_populations(rho, layout, k)
        top = float(pops[mode_dim - 1] + pops[mode_dim - 2])
        if top > budget:
            raise TruncationError(
                f"top two photon levels of mode {k} hold population {top:.3e} "
                f"(> {budget:.1e}); raise n_max")


def evolve(rho0: DensityMatrix, lv: Liouvillian, t: float) -> DensityMatrix:
    """Propagate rho0 by exp(L t) and re-check the density-matrix invariants."""
    rho0.validate(herm_tol=1e-10, trace_tol=1e-9, positivity_tol=1e-8)
    if t == 0.0:
        return rho0
    vec = rho0.entries.reshape(-1)
    out = spla.expm_multiply(lv.matrix * t, vec)
    rho = out.reshape(lv.dim, lv.dim)
    result = DensityMatrix(dim=lv.dim, entries=rho)
    try:
        result.validate(herm_tol=1e-8, trace_tol=1e-9, positivity_tol=1e-7)
    except InvariantViolationError as exc:
        raise InvariantViolationError(
            f"propagation violated a density-matrix invariant ({exc}); "
            "this signals an assembly bug or too coarse a truncation") from exc
    if result.purity() > 1.0 + 1e-9:
        raise InvariantViolationError(f"purity {result.purity()} exceeds one")
    return result


def _pair_expectations(rho: np.ndarray, layout: HilbertLayout, ensemble_1: str,
                       ensemble_2: str, tol: float = 1e-10) -> complex:
    """<sp_i sm_j> over all admissible (i, j) pairs; asserts exchange symmetry."""
    n = layout.n_small
    values = []
    for i in range(n):
        for j in range(n):
            if ensemble_1 == ensemble_2 and i == j:
                continue
            op = layout.atom_op("+", ensemble_1, i) @ layout.atom_op("-", ensemble_2, j)
            values.append(complex(np.trace(op @ rho)))
    if not values:
        return 0.0 + 0.0j
    spread = max(abs(v - values[0]) for v in values)
    if spread > tol:
        raise SymmetryError(
            f"pair correlators across atoms differ by {spread:.3e} "
            f"({ensemble_1}{ensemble_2}); initial state broke exchange symmetry")
    return sum(values) / len(values)


def expectations(rho: DensityMatrix, layout: HilbertLayout,
                 tol: float = 1e-10) -> CorrelationState:
    """Extract the cumulant-state observables from an exact density matrix.

    Verifies atom-exchange symmetry within each ensemble: every atom (and
    every distinct pair) must give the same expectation to within tol.
    """
    mat = rho.entries
    n = layout.n_small
    z_vals = {"A": [], "B": []}
    for ens in ("A", "B"):
        for i in range(n):
            op = layout.atom_op("z", ens, i)
            z_vals[ens].append(float(np.real(np.trace(op @ mat))))
        if max(z_vals[ens]) - min(z_vals[ens]) > tol:
            raise SymmetryError(
                f"single-atom inversions differ across ensemble {ens}: {z_vals[ens]}")
    aa = _pair_expectations(mat, layout, "A", "A", tol)
    bb = _pair_expectations(mat, layout, "B", "B", tol)
    ab = _pair_expectations(mat, layout, "A", "B", tol)
    return CorrelationState(
        z_a=float(np.mean(z_vals["A"])), z_b=float(np.mean(z_vals["B"])),
        aa=aa, bb=bb, ab=ab)


def trace_functional(lv: Liouvillian) -> np.ndarray:
    """Row vector representing the trace; vanishes on the image of a CPTP generator."""
    return np.eye(lv.dim, dtype=complex).reshape(-1)
