"""Two-time correlation dynamics, Lorentzian spectral decomposition,
normalized emission spectra, peak separations, and photon fluxes.

Two-time dipole correlators obey the same linear equations of motion as the
one-time dipole expectations, so each scenario reduces to a 2x2 complex
system d/dtau f = M f, one row per ensemble dipole.  Diagonalizing M gives
the spectrum as an exact mixture of Lorentzians: an eigenvalue lam
contributes a peak centered at Im(lam) with half width -Re(lam).  The output
field is a fixed linear combination of the two collective dipoles, so peak
weights follow from projecting the steady-state correlations onto the
eigenbasis; only the order-N^2 collective terms are kept.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import expm

from . import closedform
from .meanfield import noise_coefficients
from .model import (ModelParams, ParameterError, ScenarioKind,
                    SteadyStateResult)


class DefectiveMatrixError(RuntimeError):
    """Regression matrix is (nearly) non-diagonalizable; the eigenvector
    projection is ill-conditioned.  Use the correlation-function / FFT path."""


class FluxConsistencyError(RuntimeError):
    """A supposedly nonnegative photon flux came out negative."""


_DEFECT_TOL = 1e-8  # eigenvalue gap below this (times N*gamma) counts as defective


@dataclass(frozen=True)
class RegressionSystem:
    """d/dtau F = matrix @ F for the two collective dipole correlators.

    F columns are indexed by the reference dipole fixed at tau = 0 (ensemble
    A or B); rows by the evolving dipole.  initial holds the steady-state
    correlations F(0); weights combines the matrix of propagated correlators
    into the output-field correlation C(tau) = sum(weights * F(tau)).
    rate_scale is the collective rate, used for conditioning thresholds.
    """

    matrix: np.ndarray
    initial: np.ndarray
    weights: np.ndarray
    rate_scale: float


@dataclass(frozen=True)
class SpectralComponent:
    """One Lorentzian term of the emission spectrum.

    The (unnormalized) spectrum is sum_k Re[weight_k / (half_width_k +
    i (omega - center_k))] / pi, with omega measured from the carrier.
    """

    center: float
    half_width: float
    weight: complex


def regression_system(scenario: ScenarioKind, steady: SteadyStateResult,
                      p: ModelParams) -> RegressionSystem:
    """Build the 2x2 correlator system at a stable steady state.

    The matrix coefficients use the leading-order inversions, not the
    finite-N numeric ones: the peak widths are themselves order-1/N
    quantities, so the 1/N correction carried by the numeric inversion
    (amplified by the factor N in the collective term) is of the same order
    as the width and lies beyond the accuracy of the second-order cumulant
    closure.  Freezing the inversion at its leading value is what makes the
    width formulas well defined.  The supplied steady state provides the
    initial correlation amplitudes and the stability gate.
    """
    if not steady.stable:
        raise ParameterError("regression dynamics require a stable steady state")
    p.check_scenario(scenario)
    s = steady.state
    gamma = p.single_atom_rate
    n, w, delta = p.n_atoms, p.pump, p.detuning
    nsq = float(n) ** 2

    if scenario.symmetric:
        nc = noise_coefficients(scenario, p.feedback_strength)
        xi = 1.0 if scenario is ScenarioKind.BI_QUANTUM else p.feedback_strength
        z = float(closedform.sigma_z_leading(scenario, p))
        x = gamma * (n - 1) * z - gamma * nc.zeta - w + 1j * delta
        y = xi * n * gamma * z
        matrix = 0.5 * np.array([[x, y], [y, np.conj(x)]])
        initial = np.array([[s.aa, s.ab], [np.conj(s.ab), s.bb]])
        if scenario is ScenarioKind.BI_QUANTUM:
            out = np.array([1.0, 1.0])
            pref = gamma * nsq
        else:
            out = np.array([1.0, xi])
            pref = gamma * nsq / (1.0 - xi ** 2)
        weights = pref * np.outer(out, out).astype(complex)
        return RegressionSystem(matrix, initial, weights, p.collective_rate)

    u = 3.0 if scenario is ScenarioKind.UNI_CLASSICAL else 1.0
    z_a, z_b = closedform.sigma_z_leading(scenario, p)
    x = gamma * (n - 1) * z_a - gamma - w
    xp = gamma * (n - 1) * z_b - u * gamma - w - 2j * delta
    y = -2.0 * n * gamma * z_b
    matrix = 0.5 * np.array([[x, 0.0], [y, xp]])
    initial = np.array([[s.aa, s.ab], [np.conj(s.ab), s.bb]])
    # output field of the chain: master contribution enters with weight -1
    # for the direct quantum link and -2 for the measure-and-replay link
    out = np.array([-2.0, 1.0]) if scenario is ScenarioKind.UNI_CLASSICAL \
        else np.array([-1.0, 1.0])
    weights = gamma * nsq * np.outer(out, out).astype(complex)
    return RegressionSystem(matrix, initial, weights, p.collective_rate)


def components(rs: RegressionSystem) -> list[SpectralComponent]:
    """Exact Lorentzian decomposition via the eigenbasis of the 2x2 system."""
    lam, vec = np.linalg.eig(rs.matrix)
    if abs(lam[0] - lam[1]) < _DEFECT_TOL * rs.rate_scale:
        raise DefectiveMatrixError(
            f"eigenvalue gap {abs(lam[0] - lam[1]):.3e} below tolerance; "
            "use correlation_function / fft_spectrum instead")
    vinv = np.linalg.inv(vec)
    proj = vinv @ rs.initial          # proj[k, T] = (V^-1 F(0))[k] per column T
    contract = rs.weights.T @ vec     # contract[T, k] = sum_row W[row,T] V[row,k]
    comps = []
    for k in range(2):
        weight = complex(np.sum(proj[k, :] * contract[:, k]))
        comps.append(SpectralComponent(center=float(lam[k].imag),
                                       half_width=float(-lam[k].real),
                                       weight=weight))
    return comps


def spectrum(comps: list[SpectralComponent],
             omega_grid: np.ndarray) -> tuple[np.ndarray, float]:
    """Normalized Lorentzian-mixture spectrum on a frequency grid.

    Returns (values, normalization) where normalization is the total photon
    flux sum_k Re weight_k; the values integrate to one over the whole line.
    """
    if not comps:
        raise ParameterError("spectrum requires at least one component")
    total = sum(c.weight.real for c in comps)
    omega = np.asarray(omega_grid, dtype=float)
    values = np.zeros_like(omega)
    for c in comps:
        values += (c.weight / (c.half_width + 1j * (omega - c.center))).real
    return values / (math.pi * total), float(total)


def correlation_function(rs: RegressionSystem, tau_grid: np.ndarray) -> np.ndarray:
    """Output-field correlation C(tau) by matrix-exponential propagation.

    Independent of the eigen-decomposition path: a single Pade matrix
    exponential per time step, iterated along the uniform grid.  Its Fourier
    transform must match spectrum() within discretization error.
    """
    tau = np.asarray(tau_grid, dtype=float)
    if len(tau) < 2:
        raise ParameterError("tau_grid needs at least two points")
    dtau = tau[1] - tau[0]
    if not np.allclose(np.diff(tau), dtau, rtol=1e-9, atol=0.0):
        raise ParameterError("tau_grid must be uniform")
    step = expm(rs.matrix * dtau)
    f = rs.initial.copy()
    out = np.empty(len(tau), dtype=complex)
    start = expm(rs.matrix * tau[0]) if tau[0] != 0.0 else np.eye(2)
    f = start @ f
    for i in range(len(tau)):
        out[i] = np.sum(rs.weights * f)
        f = step @ f
    return out


def fft_spectrum(rs: RegressionSystem, tau_max: float,
                 n_tau: int) -> tuple[np.ndarray, np.ndarray]:
    """Normalized spectrum from the FFT of the propagated correlation.

    Serves as the independent cross-check of the Lorentzian decomposition and
    as the fallback at exceptional points where the regression matrix is
    defective.  Returns (omega, values) with omega sorted ascending.
    """
    tau = np.linspace(0.0, tau_max, n_tau)
    corr = correlation_function(rs, tau)
    dtau = tau[1] - tau[0]
    # one-sided transform; C(-tau) = conj(C(tau)) folds into twice the real part
    raw = np.fft.fft(corr)
    omega = 2.0 * math.pi * np.fft.fftfreq(n_tau, d=dtau)
    values = (raw.real - 0.5 * corr[0].real) * dtau / math.pi
    order = np.argsort(omega)
    total = corr[0].real
    return omega[order], values[order] / total


def photon_flux(scenario: ScenarioKind, steady: SteadyStateResult,
                p: ModelParams) -> float:
    """Leading-order total photon flux of the output field."""
    if not steady.stable:
        raise ParameterError("photon flux is defined at a stable steady state")
    s = steady.state
    gamma = p.single_atom_rate
    nsq = float(p.n_atoms) ** 2
    xi = p.feedback_strength
    if scenario is ScenarioKind.BI_QUANTUM:
        flux = 2.0 * gamma * nsq * (s.aa.real + s.ab.real)
    elif scenario is ScenarioKind.BI_CLASSICAL:
        flux = gamma * nsq * ((1.0 + xi ** 2) * s.aa.real
                              + 2.0 * xi * s.ab.real) / (1.0 - xi ** 2)
    elif scenario is ScenarioKind.UNI_QUANTUM:
        flux = gamma * nsq * (s.aa.real + s.bb.real - 2.0 * s.ab.real)
    else:
        flux = gamma * nsq * (4.0 * s.aa.real + s.bb.real - 4.0 * s.ab.real)
    if flux < -1e-9 * gamma * nsq:
        raise FluxConsistencyError(f"negative photon flux {flux:.3e}")
    return max(flux, 0.0)


def peak_separation(comps: list[SpectralComponent]) -> float:
    """Distance between the two Lorentzian pole centers."""
    if len(comps) < 2:
        raise ParameterError("peak separation requires two components")
    return abs(comps[0].center - comps[1].center)


def pole_pair(scenario: ScenarioKind, steady: SteadyStateResult,
              p: ModelParams) -> tuple[complex, complex]:
    """The two regression eigenvalues (poles), robust at exceptional points.

    Eigenvalues of a 2x2 matrix exist even where eigenvectors coalesce, so
    this path never raises DefectiveMatrixError; use it when only centers
    and widths are needed.
    """
    rs = regression_system(scenario, steady, p)
    m = rs.matrix
    tr = m[0, 0] + m[1, 1]
    disc = np.sqrt((m[0, 0] - m[1, 1]) ** 2 + 4.0 * m[0, 1] * m[1, 0] + 0j)
    return (complex(0.5 * (tr + disc)), complex(0.5 * (tr - disc)))
