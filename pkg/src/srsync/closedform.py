"""Leading-order analytic results: steady inversions, linewidths, phase
boundaries, pole distances, and the classical-channel coefficient algebra.

Everything here is the large-N limit of the cumulant equations of motion; the
numeric solvers agree with these expressions up to corrections of order 1/N.
All formulas are evaluated internally in units where N*gamma = 1 and rescaled
on return, which avoids cancellation for collective rates far from one.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from .model import CorrelationState, ModelParams, ParameterError, ScenarioKind, dimensionless


# ---------------------------------------------------------------------------
# classical-channel coefficient functions
# ---------------------------------------------------------------------------

def noise_zeta(xi: float) -> float:
    """Measurement-noise factor of the symmetric classical channel.

    Equals one for an uncoupled channel and diverges as xi -> 1, which is why
    the classical coupling cannot reach the quantum-coupled limit.
    """
    if not 0.0 <= xi < 1.0:
        raise ParameterError(f"feedback strength must lie in [0, 1), got {xi}")
    return (xi ** 4 - xi ** 2 + 2.0) / (2.0 * (1.0 - xi ** 2))


@dataclass(frozen=True)
class CouplingCoefficients:
    """Cavity-decay parameterization and thermal occupations of the symmetric
    classical channel, all relative to the reference cavity linewidth kappa."""

    kappa_tilde: float   # kappa_tilde / kappa
    kappa_plus: float    # kappa_+ / kappa
    kappa_minus: float   # kappa_- / kappa
    nbar_plus: float
    nbar_minus: float
    zeta: float


def coupling_coefficients(xi: float) -> CouplingCoefficients:
    zeta = noise_zeta(xi)  # also validates xi
    kappa_tilde = 1.0 / ((1.0 - xi) * (1.0 + xi))
    return CouplingCoefficients(
        kappa_tilde=kappa_tilde,
        kappa_plus=kappa_tilde * (1.0 + xi),
        kappa_minus=kappa_tilde * (1.0 - xi),
        nbar_plus=xi ** 2 / (4.0 * (1.0 + xi)),
        nbar_minus=xi ** 2 / (4.0 * (1.0 - xi)),
        zeta=zeta,
    )


def stability_eigenvalues(kappa_tilde: float, xi: float) -> tuple[float, float]:
    """Relaxation eigenvalues of the two coupled cavity amplitudes.

    Both must be negative for the feedback loop to admit a steady field,
    which pins the admissible feedback strengths to xi < 1.
    """
    if not kappa_tilde > 0:
        raise ParameterError(f"kappa_tilde must be positive, got {kappa_tilde}")
    return (-0.5 * kappa_tilde * (1.0 + xi), -0.5 * kappa_tilde * (1.0 - xi))


# ---------------------------------------------------------------------------
# steady-state inversion
# ---------------------------------------------------------------------------

def sync_detuning(scenario: ScenarioKind, pump: float, xi: float = 0.0) -> float:
    """Critical detuning below which the two ensembles lock to one frequency."""
    if scenario is ScenarioKind.BI_CLASSICAL:
        return pump * xi
    return pump


def cascaded_slave_inversion(theta: float, d: float) -> float:
    """Leading-order slave inversion in the locked regime of a cascaded pair.

    theta = w / (N gamma), d = delta / (N gamma).  Follows from the steady
    cumulant equations at leading order in 1/N, which reduce to the cubic
    (1 - z) [(z - theta)^2 + 4 d^2] = 4 theta (1 - theta) z.
    The cubic is monotone, so there is exactly one real root; it lies in
    (0, theta) for d < theta and approaches theta at the locking edge.
    """
    coeffs = np.array([
        -1.0,
        1.0 + 2.0 * theta,
        -(theta ** 2 + 4.0 * d ** 2 + 2.0 * theta + 4.0 * theta * (1.0 - theta)),
        theta ** 2 + 4.0 * d ** 2,
    ])
    roots = np.roots(coeffs)
    real_roots = [float(r.real) for r in roots if abs(r.imag) < 1e-9]
    if not real_roots:
        raise ArithmeticError(f"no real slave-inversion root for theta={theta}, d={d}")
    # the physical branch is the one inside the inversion range closest to theta from below
    candidates = [r for r in real_roots if r <= theta + 1e-12]
    root = max(candidates) if candidates else min(real_roots, key=lambda r: abs(r - theta))
    return float(root)


def sigma_z_leading(scenario: ScenarioKind, params: ModelParams):
    """Leading-order steady inversion.

    Symmetric scenarios return a single float (both ensembles identical);
    cascaded scenarios return the (master, slave) pair.  The printed min(.,1)
    clipping handles pump rates beyond the superradiant window.
    """
    p = dimensionless(params)
    w, d, xi = p.pump, abs(p.detuning), p.feedback_strength

    if scenario is ScenarioKind.BI_QUANTUM:
        if d < w:
            return min((w ** 2 + d ** 2) / (2.0 * w), 1.0) if w > 0 else 0.0
        return min(w, 1.0)

    if scenario is ScenarioKind.BI_CLASSICAL:
        if d < w * xi:
            root = math.sqrt(w ** 2 * xi ** 2 - d ** 2 * (1.0 - xi ** 2))
            return min((w - root) / (1.0 - xi ** 2), 1.0)
        return min(w, 1.0)

    # cascaded: the master is a free-running superradiant laser; the slave
    # matches it for delta > w and drops onto the locked branch below.
    z_master = min(w, 1.0)
    if d > w or w >= 1.0:
        z_slave = z_master
    else:
        z_slave = min(cascaded_slave_inversion(w, d), 1.0)
    return (z_master, z_slave)


def _symmetric_leading_correlations(p: ModelParams, xi_eff: float, zeta: float,
                                    z: float) -> tuple[complex, complex]:
    """Damped fixed point of the correlation balances at fixed leading z.

    The inner correlation comes from the well-conditioned inversion balance
    (the pair-correlation balance itself nearly cancels at the leading z and
    would amplify the 1/N error), the cross correlation from its own balance.
    """
    n = p.n_atoms
    gamma = p.single_atom_rate
    w, delta = p.pump, p.detuning
    pairs = max(n - 1, 1)
    base = (w * (1.0 - z) - gamma - gamma * zeta * z) / (2.0 * gamma * pairs)
    aa = max(base, 0.0)
    ab = 0.0 + 0.0j
    denom_ab = gamma * (n - 1) * z - gamma * zeta - w + 1j * delta
    k = 2.0 * zeta / (xi_eff ** 4 - xi_eff ** 2 + 2.0) if xi_eff > 0 else 0.0
    for _ in range(40):
        if xi_eff > 0 and abs(denom_ab) > 1e-300:
            drive = (0.5 * gamma * xi_eff * z * (k * z + 1.0)
                     + gamma * xi_eff * z * aa * (n - 1))
            ab = -drive / denom_ab
        aa_target = max(base - xi_eff * n * ab.real / pairs, 0.0)
        aa = 0.5 * aa + 0.5 * aa_target
    return complex(aa), ab


def leading_state(scenario: ScenarioKind, params: ModelParams) -> CorrelationState:
    """Full leading-order correlation state (used as a solver seed)."""
    p = dimensionless(params)
    n, gamma, w, delta = p.n_atoms, p.single_atom_rate, p.pump, p.detuning

    if scenario.symmetric:
        xi_eff = 1.0 if scenario is ScenarioKind.BI_QUANTUM else p.feedback_strength
        zeta = 1.0 if scenario is ScenarioKind.BI_QUANTUM else noise_zeta(p.feedback_strength)
        z = float(sigma_z_leading(scenario, p))
        aa, ab = _symmetric_leading_correlations(p, xi_eff, zeta, z)
        return CorrelationState.symmetric(z, aa, ab)

    z_a, z_b = sigma_z_leading(scenario, p)
    theta = min(w, 1.0)
    aa = complex(max(theta * (1.0 - theta) / 2.0, 0.0))
    d = abs(delta)
    if d > w or w >= 1.0:
        # unlocked: slave mirrors the master, inter-ensemble correlation small
        bb = aa
        denom = 0.5 * gamma * (n - 1) * (z_a + z_b) + 1j * delta - gamma - w
        drive = 0.5 * gamma * z_b * z_a + 0.5 * gamma * z_b * (2.0 * aa.real * (n - 1) + 1.0)
        ab = drive / denom if abs(denom) > 0 else 0.0 + 0.0j
    else:
        # locked branch, leading order with N*gamma = 1
        denom = complex(z_b - theta, 2.0 * delta)
        ab = z_b * theta * (1.0 - theta) / denom if abs(denom) > 1e-300 else 0.0 + 0.0j
        bb = complex(2.0 * z_b * ab.real / (z_b - theta)) if z_b != theta else aa
    return CorrelationState(z_a=z_a, z_b=z_b, aa=aa, bb=bb, ab=ab)


# ---------------------------------------------------------------------------
# linewidths
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PeakWidth:
    """One Lorentzian peak of the emission spectrum at leading order.

    center is the frequency offset from the carrier.  full_width is None for
    the cascaded locked slave peak, whose width grows linearly with N (the
    peak effectively vanishes); divergent_slope then gives the prefactor,
    full_width ~= divergent_slope * N * gamma.
    """

    label: str
    center: float
    full_width: float | None
    divergent_slope: float | None = None


def linewidth_leading(scenario: ScenarioKind, params: ModelParams) -> tuple[PeakWidth, ...]:
    """Leading-order peak widths for the scenario, in physical frequency units."""
    p = dimensionless(params)
    scale = params.collective_rate
    n, gamma = p.n_atoms, p.single_atom_rate
    w, d, xi = p.pump, abs(p.detuning), p.feedback_strength
    sign = 1.0 if params.detuning >= 0 else -1.0

    if scenario.cascaded:
        u = 3.0 if scenario is ScenarioKind.UNI_CLASSICAL else 1.0
        master = PeakWidth("master", 0.0, gamma * (w + 1.0) * scale)
        if d > w:
            slave = PeakWidth("slave", -sign * d * scale, gamma * (w + u) * scale)
        else:
            theta = min(w, 1.0)
            z_b = cascaded_slave_inversion(theta, d) if w < 1.0 else theta
            slave = PeakWidth("slave", -sign * d * scale, None,
                              divergent_slope=max(theta - z_b, 0.0))
        return (master, slave)

    if scenario is ScenarioKind.BI_QUANTUM:
        zeta, xi_eff = 1.0, 1.0
    else:
        zeta, xi_eff = noise_zeta(xi), xi
    z = float(sigma_z_leading(scenario, p))
    gamma_big = w - gamma * (n - 1) * z + gamma * zeta   # correlation decay rate
    x_sq = (xi_eff * n * gamma * z) ** 2 - d ** 2        # squared pole splitting
    if d >= sync_detuning(scenario, w, xi):
        split = math.sqrt(max(d ** 2 - (xi_eff * n * gamma * z) ** 2, 0.0))
        width = gamma * zeta + gamma * w  # = gamma*(zeta + w/(N gamma)) in physical form
        return (
            PeakWidth("upper", +0.5 * sign * split * scale, width * scale),
            PeakWidth("lower", -0.5 * sign * split * scale, width * scale),
        )
    x = math.sqrt(max(x_sq, 0.0))
    return (
        PeakWidth("narrow", 0.0, (gamma_big - x) * scale),
        PeakWidth("broad", 0.0, (gamma_big + x) * scale),
    )


# ---------------------------------------------------------------------------
# pole distance and phase boundaries
# ---------------------------------------------------------------------------

def pole_distance_leading(scenario: ScenarioKind, params: ModelParams) -> float:
    """Separation of the two spectral poles of a symmetric scenario.

    Zero below the critical detuning; approaches the bare detuning from
    below far beyond it (frequency pulling in between).
    """
    if not scenario.symmetric:
        raise ParameterError("pole distance is defined for the symmetric scenarios")
    p = dimensionless(params)
    d = abs(p.detuning)
    xi_eff = 1.0 if scenario is ScenarioKind.BI_QUANTUM else p.feedback_strength
    if d <= sync_detuning(scenario, p.pump, p.feedback_strength):
        return 0.0
    z = float(sigma_z_leading(scenario, p))
    y = xi_eff * p.n_atoms * p.single_atom_rate * z
    return math.sqrt(max(d ** 2 - y ** 2, 0.0)) * params.collective_rate


def critical_pumping(scenario: ScenarioKind, detuning: float, xi: float = 0.0,
                     collective_rate: float = 1.0) -> float:
    """Pump rate where collective emission shuts off, as a function of detuning.

    For symmetric coupling the locked phase pushes the cutoff along a quarter
    circle from (1 + radius) * N gamma at zero detuning back to N gamma where
    the circle meets the locking line; cascaded setups stay master-limited at
    N gamma for every detuning.
    """
    d = abs(detuning) / collective_rate
    if scenario is ScenarioKind.BI_QUANTUM:
        radius = 1.0
    elif scenario is ScenarioKind.BI_CLASSICAL:
        radius = xi
    else:
        return collective_rate
    if d >= radius:
        return collective_rate
    return (1.0 + math.sqrt(radius ** 2 - d ** 2)) * collective_rate


class BoundaryKind(enum.Enum):
    SYNC_LINE = "sync_line"
    QUARTER_CIRCLE = "quarter_circle"


@dataclass(frozen=True)
class PhaseBoundary:
    """One boundary of the locked region in the (pump, detuning) plane.

    SYNC_LINE: delta_c = slope * w (parameters = (slope,)).
    QUARTER_CIRCLE: (w - center)^2 + delta^2 = radius^2 (parameters =
    (center, radius)), both in the units of the supplied collective rate.
    """

    kind: BoundaryKind
    parameters: tuple[float, ...]


def phase_boundaries(scenario: ScenarioKind, xi: float = 0.0,
                     collective_rate: float = 1.0) -> tuple[PhaseBoundary, PhaseBoundary]:
    if scenario is ScenarioKind.BI_CLASSICAL:
        slope, radius = xi, xi
    else:
        slope, radius = 1.0, 1.0
    return (
        PhaseBoundary(BoundaryKind.SYNC_LINE, (slope,)),
        PhaseBoundary(BoundaryKind.QUARTER_CIRCLE,
                      (collective_rate, radius * collective_rate)),
    )
