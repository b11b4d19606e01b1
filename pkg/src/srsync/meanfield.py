"""Cumulant equations of motion for all four scenarios, time integration, and
steady-state solving with linear-stability classification.

The dynamical variables are the second-order cumulant state (inversions plus
spin-spin correlations); third-order cumulants are dropped and the inversion
is factorized out of higher moments.  Symmetric scenarios live on the
invariant manifold z_a = z_b, aa = bb and reduce to four real unknowns for
root finding; cascaded scenarios use six (the inner correlations stay real
under the dynamics, only the cross correlation is genuinely complex).
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.integrate import solve_ivp

from . import closedform
from .model import (CorrelationState, ModelParams, ParameterError, ScenarioKind,
                    SteadyStateResult, dimensionless)


class SteadyStateError(RuntimeError):
    """Root finding failed or no stable root exists."""


class IntegrationError(RuntimeError):
    """Adaptive time integration failed."""


@dataclass(frozen=True)
class NoiseCoefficients:
    """Classical-channel noise insertions in the cumulant equations.

    Quantum channels have u = v = 1 (no added noise); the cascaded classical
    channel has u = 3, v = 2; the symmetric classical channel carries its
    noise in zeta, which is one for every quantum scenario and diverges as
    the feedback strength approaches one.
    """

    u: float
    v: float
    zeta: float


def noise_coefficients(scenario: ScenarioKind, xi: float = 0.0) -> NoiseCoefficients:
    if scenario is ScenarioKind.UNI_CLASSICAL:
        return NoiseCoefficients(u=3.0, v=2.0, zeta=1.0)
    if scenario is ScenarioKind.BI_CLASSICAL:
        return NoiseCoefficients(u=1.0, v=1.0, zeta=closedform.noise_zeta(xi))
    return NoiseCoefficients(u=1.0, v=1.0, zeta=1.0)


def effective_feedback(scenario: ScenarioKind, params: ModelParams) -> float:
    """Coupling weight multiplying the cross correlation in symmetric scenarios."""
    if scenario is ScenarioKind.BI_CLASSICAL:
        return params.feedback_strength
    return 1.0


# ---------------------------------------------------------------------------
# right-hand sides
# ---------------------------------------------------------------------------

def rhs_symmetric(s: CorrelationState, p: ModelParams, xi: float,
                  zeta: float) -> CorrelationState:
    """Time derivative of the symmetric cumulant state.

    xi and zeta are passed explicitly: (xi=1, zeta=1) is the quantum common
    cavity, general (xi, zeta) the measure-and-feed-back coupling.  The
    noise term keeps the combination 2 z zeta / (xi^4 - xi^2 + 2) exactly as
    written so the two parameters stay independent knobs.
    """
    gamma = p.single_atom_rate
    n, w, delta = p.n_atoms, p.pump, p.detuning
    z, aa, ab = s.z_a, s.aa, s.ab

    dz = (w * (1.0 - z) - gamma - z * gamma * zeta
          - 2.0 * gamma * (aa.real * (n - 1) + xi * n * ab.real))
    daa = (aa * (-w + gamma * (n - 2) * z - gamma * zeta)
           + 0.5 * gamma * z * (1.0 + zeta * z + 2.0 * n * xi * ab.real))
    dab = (ab * (gamma * (n - 1) * z - gamma * zeta - w + 1j * delta)
           + 0.5 * gamma * xi * z * (2.0 * z * zeta / (xi ** 4 - xi ** 2 + 2.0) + 1.0)
           + gamma * xi * z * aa * (n - 1))
    return CorrelationState(z_a=dz, z_b=dz, aa=daa, bb=daa, ab=dab)


def rhs_cascaded(s: CorrelationState, p: ModelParams,
                 nc: NoiseCoefficients) -> CorrelationState:
    """Time derivative of the cascaded cumulant state.

    The master block (z_a, aa) is autonomous; the slave block is driven by
    the cross correlation, which itself is fed by the master's inversion and
    inner correlation.
    """
    gamma = p.single_atom_rate
    n, w, delta = p.n_atoms, p.pump, p.detuning
    u, v = nc.u, nc.v
    z_a, z_b, aa, bb, ab = s.z_a, s.z_b, s.aa, s.bb, s.ab

    dza = -z_a * (gamma + w) - 2.0 * gamma * (n - 1) * aa.real - gamma + w
    daa = (-aa * (gamma + w - gamma * z_a * (n - 2))
           + 0.5 * gamma * z_a * (z_a + 1.0))
    dzb = (-z_b * (gamma * u + w) - 2.0 * gamma * (n - 1) * bb.real - gamma + w
           + 4.0 * gamma * n * ab.real)
    dbb = (-bb * (u * gamma + w - gamma * z_b * (n - 2))
           + 0.5 * gamma * z_b * (u * z_b + 1.0)
           - 2.0 * gamma * n * z_b * ab.real)
    dab = (ab * (gamma * (n - 1) * (z_a + z_b) / 2.0 + 1j * delta - v * gamma - w)
           - 0.5 * gamma * z_b * z_a
           - 0.5 * gamma * z_b * (2.0 * aa * (n - 1) + 1.0))
    return CorrelationState(z_a=dza, z_b=dzb, aa=daa, bb=dbb, ab=dab)


def _rhs_for(scenario: ScenarioKind, p: ModelParams):
    if scenario.symmetric:
        xi = effective_feedback(scenario, p)
        zeta = noise_coefficients(scenario, p.feedback_strength).zeta
        return lambda s: rhs_symmetric(s, p, xi, zeta)
    nc = noise_coefficients(scenario)
    return lambda s: rhs_cascaded(s, p, nc)


# ---------------------------------------------------------------------------
# reduced real vectors for root finding
# ---------------------------------------------------------------------------

def _sym_to_vec(s: CorrelationState) -> np.ndarray:
    return np.array([s.z_a, s.aa.real, s.ab.real, s.ab.imag])


def _sym_from_vec(y: np.ndarray) -> CorrelationState:
    return CorrelationState.symmetric(float(y[0]), complex(y[1]), complex(y[2], y[3]))


def _casc_to_vec(s: CorrelationState) -> np.ndarray:
    return np.array([s.z_a, s.aa.real, s.z_b, s.bb.real, s.ab.real, s.ab.imag])


def _casc_from_vec(y: np.ndarray) -> CorrelationState:
    return CorrelationState(z_a=float(y[0]), aa=complex(y[1]), z_b=float(y[2]),
                            bb=complex(y[3]), ab=complex(y[4], y[5]))


def _reduced_system(scenario: ScenarioKind, p: ModelParams):
    """Flattened real systems mirroring rhs_symmetric / rhs_cascaded.

    Written out in scalar arithmetic because the Newton solver evaluates
    these inside sweep loops; equality with the public right-hand sides is
    asserted by the test suite.
    """
    gamma = p.single_atom_rate
    n, w, delta = p.n_atoms, p.pump, p.detuning

    if scenario.symmetric:
        xi = effective_feedback(scenario, p)
        zeta = noise_coefficients(scenario, p.feedback_strength).zeta
        knoise = 2.0 * zeta / (xi ** 4 - xi ** 2 + 2.0)

        def fun(y: np.ndarray) -> np.ndarray:
            z, a, pr, pi = y
            dz = (w * (1.0 - z) - gamma - z * gamma * zeta
                  - 2.0 * gamma * (a * (n - 1) + xi * n * pr))
            da = (a * (-w + gamma * (n - 2) * z - gamma * zeta)
                  + 0.5 * gamma * z * (1.0 + zeta * z + 2.0 * n * xi * pr))
            relax = gamma * (n - 1) * z - gamma * zeta - w
            drive = (0.5 * gamma * xi * z * (knoise * z + 1.0)
                     + gamma * xi * z * a * (n - 1))
            return np.array([dz, da,
                             pr * relax - pi * delta + drive,
                             pi * relax + pr * delta])

        return fun, _sym_to_vec, _sym_from_vec

    nc = noise_coefficients(scenario)
    u, v = nc.u, nc.v

    def fun(y: np.ndarray) -> np.ndarray:
        za, a, zb, b, pr, pi = y
        dza = -za * (gamma + w) - 2.0 * gamma * (n - 1) * a - gamma + w
        da = (-a * (gamma + w - gamma * za * (n - 2))
              + 0.5 * gamma * za * (za + 1.0))
        dzb = (-zb * (gamma * u + w) - 2.0 * gamma * (n - 1) * b - gamma + w
               + 4.0 * gamma * n * pr)
        db = (-b * (u * gamma + w - gamma * zb * (n - 2))
              + 0.5 * gamma * zb * (u * zb + 1.0)
              - 2.0 * gamma * n * zb * pr)
        relax = gamma * (n - 1) * (za + zb) / 2.0 - v * gamma - w
        feed = -0.5 * gamma * zb * za - 0.5 * gamma * zb * (2.0 * a * (n - 1) + 1.0)
        return np.array([dza, da, dzb, db,
                         pr * relax - pi * delta + feed,
                         pi * relax + pr * delta])

    return fun, _casc_to_vec, _casc_from_vec


def _fd_jacobian(fun, y: np.ndarray) -> np.ndarray:
    """Central finite differences with step h = max(1e-7, 1e-7 * ||y||)."""
    h = max(1e-7, 1e-7 * float(np.linalg.norm(y)))
    m = len(y)
    jac = np.empty((m, m))
    for j in range(m):
        up = y.copy()
        dn = y.copy()
        up[j] += h
        dn[j] -= h
        jac[:, j] = (fun(up) - fun(dn)) / (2.0 * h)
    return jac


def jacobian(scenario: ScenarioKind, p: ModelParams, s: CorrelationState) -> np.ndarray:
    """Finite-difference Jacobian of the real-ified cumulant equations at s."""
    fun, to_vec, _ = _reduced_system(scenario, p)
    return _fd_jacobian(fun, to_vec(s))


# ---------------------------------------------------------------------------
# time integration
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Trajectory:
    times: np.ndarray
    states: tuple[CorrelationState, ...]
    final_rhs_norm: float


_SYM_FIELDS = ("z", "Re aa", "Im aa", "Re ab", "Im ab")
_CASC_B_FIELDS = ("z_b", "Re bb", "Im bb", "Re ab", "Im ab")


def _solve_ivp_checked(fun, t_span, y0, rtol, atol, t_eval, field_names):
    sol = solve_ivp(fun, t_span, y0, method="Radau", rtol=rtol, atol=atol,
                    t_eval=t_eval, dense_output=True)
    if not sol.success:
        rates = np.abs(fun(sol.t[-1], sol.y[:, -1]))
        stiff = field_names[int(np.argmax(rates))]
        raise IntegrationError(
            f"integration failed at t={sol.t[-1]:.6g} ({sol.message}); "
            f"stiffest component: {stiff}")
    return sol


def integrate(scenario: ScenarioKind, p: ModelParams, s0: CorrelationState,
              t_final: float, rtol: float = 1e-10, atol: float = 1e-12,
              t_eval: np.ndarray | None = None) -> Trajectory:
    """Adaptive time integration from s0 to t_final (physical time units).

    Symmetric scenarios require a symmetric initial state and integrate the
    reduced system, so the z_a = z_b, aa = bb constraint is preserved
    exactly.  Cascaded scenarios integrate the autonomous master block on
    its own and drive the slave block with its dense interpolant, so the
    master trajectory is bit-identical for any detuning.
    """
    s0.validate(tol=1e-6)
    scale = p.collective_rate
    pd = dimensionless(p)
    t_end = t_final * scale
    if t_eval is not None:
        t_eval = np.asarray(t_eval, dtype=float) * scale

    if scenario.symmetric:
        if not s0.nearly_symmetric():
            raise ParameterError("symmetric scenarios require a symmetric initial state")
        xi = effective_feedback(scenario, pd)
        zeta = noise_coefficients(scenario, pd.feedback_strength).zeta

        def fun(_t, y):
            d = rhs_symmetric(
                CorrelationState.symmetric(y[0], complex(y[1], y[2]), complex(y[3], y[4])),
                pd, xi, zeta)
            return [d.z_a, d.aa.real, d.aa.imag, d.ab.real, d.ab.imag]

        y0 = [s0.z_a, s0.aa.real, s0.aa.imag, s0.ab.real, s0.ab.imag]
        sol = _solve_ivp_checked(fun, (0.0, t_end), y0, rtol, atol, t_eval, _SYM_FIELDS)
        states = tuple(
            CorrelationState.symmetric(z, complex(ar, ai), complex(pr, pi))
            for z, ar, ai, pr, pi in sol.y.T)
        final_norm = float(np.linalg.norm(fun(sol.t[-1], sol.y[:, -1]))) * scale
        return Trajectory(times=sol.t / scale, states=states, final_rhs_norm=final_norm)

    nc = noise_coefficients(scenario)
    gamma, n, w = pd.single_atom_rate, pd.n_atoms, pd.pump

    def fun_a(_t, y):
        z_a, aar, aai = y
        aa = complex(aar, aai)
        dza = -z_a * (gamma + w) - 2.0 * gamma * (n - 1) * aa.real - gamma + w
        daa = (-aa * (gamma + w - gamma * z_a * (n - 2))
               + 0.5 * gamma * z_a * (z_a + 1.0))
        return [dza, daa.real, daa.imag]

    y0a = [s0.z_a, s0.aa.real, s0.aa.imag]
    sol_a = _solve_ivp_checked(fun_a, (0.0, t_end), y0a, rtol, atol, t_eval,
                               ("z_a", "Re aa", "Im aa"))

    def fun_b(t, y):
        z_a, aar, aai = sol_a.sol(t)
        state = CorrelationState(z_a=float(z_a), aa=complex(aar, aai),
                                 z_b=y[0], bb=complex(y[1], y[2]),
                                 ab=complex(y[3], y[4]))
        d = rhs_cascaded(state, pd, nc)
        return [d.z_b, d.bb.real, d.bb.imag, d.ab.real, d.ab.imag]

    y0b = [s0.z_b, s0.bb.real, s0.bb.imag, s0.ab.real, s0.ab.imag]
    sol_b = _solve_ivp_checked(fun_b, (0.0, t_end), y0b, rtol, atol, sol_a.t, _CASC_B_FIELDS)

    states = []
    for i, t in enumerate(sol_a.t):
        za, aar, aai = sol_a.y[:, i]
        zb, bbr, bbi, abr, abi = sol_b.y[:, i]
        states.append(CorrelationState(z_a=float(za), aa=complex(aar, aai),
                                       z_b=float(zb), bb=complex(bbr, bbi),
                                       ab=complex(abr, abi)))
    rhs = _rhs_for(scenario, pd)
    d_final = rhs(states[-1])
    final_norm = float(math.hypot(d_final.z_a, abs(d_final.aa), d_final.z_b,
                                  abs(d_final.bb), abs(d_final.ab))) * scale
    return Trajectory(times=sol_a.t / scale, states=tuple(states), final_rhs_norm=final_norm)


# ---------------------------------------------------------------------------
# steady states
# ---------------------------------------------------------------------------

_NEWTON_TARGET = 1e-13
_NEWTON_ACCEPT = 1e-10  # residual bound of any returned root (dimensionless units)


def _newton(fun, y0: np.ndarray, max_iter: int = 80):
    """Damped Newton with a halving line search (the quartic fixed-point
    structure admits spurious directions, so full steps are not trusted)."""
    y = np.asarray(y0, dtype=float).copy()
    f = fun(y)
    norm = float(np.linalg.norm(f))
    for _ in range(max_iter):
        if norm <= _NEWTON_TARGET:
            return y, norm
        jac = _fd_jacobian(fun, y)
        try:
            step = np.linalg.solve(jac, -f)
        except np.linalg.LinAlgError:
            break
        lam = 1.0
        improved = False
        for _halving in range(20):
            y_try = y + lam * step
            f_try = fun(y_try)
            norm_try = float(np.linalg.norm(f_try))
            if norm_try < norm:
                y, f, norm = y_try, f_try, norm_try
                improved = True
                break
            lam *= 0.5
        if not improved:
            break
    return (y, norm) if norm <= _NEWTON_ACCEPT else (None, norm)


def _lattice_seeds(symmetric: bool) -> list[np.ndarray]:
    pts = []
    for z in (0.2, 0.8):
        for a in (0.02, 0.2):
            for pr in (0.0, 0.1):
                if symmetric:
                    pts.append(np.array([z, a, pr, 0.0]))
                else:
                    pts.append(np.array([z, a, z, a, -pr, 0.0]))
    return pts


def _dark_state_result(scenario: ScenarioKind, pd: ModelParams, scale: float,
                       fun, to_vec) -> SteadyStateResult:
    """Unpumped quantum channels relax to the all-ground uncorrelated state.

    The linearization there carries one structurally zero mode (the tail of
    the collective decay is algebraic, not exponential), so the generic
    strict-left-half-plane test cannot classify it; the dark state is an
    exact fixed point and every trajectory ends in it, so it is returned as
    the stable steady state directly.
    """
    dark = CorrelationState(z_a=-1.0, z_b=-1.0, aa=0j, bb=0j, ab=0j)
    y = to_vec(dark)
    eigs = np.linalg.eigvals(_fd_jacobian(fun, y))
    residual = float(np.linalg.norm(fun(y)))
    return SteadyStateResult(
        state=dark,
        jacobian_eigenvalues=tuple(complex(e) * scale for e in eigs),
        stable=True,
        residual_norm=residual * scale,
        seeds_tried=1,
        stable_roots=1,
    )


def _burn_in_state(scenario: ScenarioKind, p: ModelParams) -> CorrelationState:
    inverted = CorrelationState(z_a=1.0, z_b=1.0, aa=0j, bb=0j, ab=0j)
    w = max(p.pump, 0.02 * p.collective_rate)
    t_final = 80.0 / min(w, p.collective_rate)
    traj = integrate(scenario, p, inverted, t_final, rtol=1e-9, atol=1e-11,
                     t_eval=np.array([t_final]))
    return traj.states[-1]


def steady_state(scenario: ScenarioKind, p: ModelParams) -> SteadyStateResult:
    """Multi-seed damped Newton on the real-ified cumulant equations.

    Seeds: the leading-order analytic state, the fully inverted state, a
    short relaxation burn-in, and a fixed lattice of interior points.  All
    converged roots are classified by their Jacobian spectrum; the unique
    stable root is returned.  With several stable roots the one reached by
    relaxation from the inverted state wins (that is the physical
    preparation) and the multiplicity is flagged in the diagnostics.
    """
    p.check_scenario(scenario)
    pd = dimensionless(p)
    scale = p.collective_rate
    fun, to_vec, from_vec = _reduced_system(scenario, pd)
    stab_tol = pd.stability_tolerance()

    if p.pump == 0.0 and not scenario.classical:
        return _dark_state_result(scenario, pd, scale, fun, to_vec)

    seeds: list[np.ndarray] = []
    try:
        seeds.append(to_vec(closedform.leading_state(scenario, pd)))
    except (ArithmeticError, ParameterError):
        pass
    seeds.append(to_vec(CorrelationState(z_a=1.0, z_b=1.0, aa=0j, bb=0j, ab=0j)))
    seeds.extend(_lattice_seeds(scenario.symmetric))

    roots: list[np.ndarray] = []
    best_residual = math.inf
    seeds_tried = 0
    burn_vec: np.ndarray | None = None

    def try_seed(seed: np.ndarray) -> None:
        nonlocal best_residual, seeds_tried
        seeds_tried += 1
        y, norm = _newton(fun, seed)
        best_residual = min(best_residual, norm)
        if y is not None and not any(np.linalg.norm(y - r) < 1e-7 for r in roots):
            roots.append(y)

    for seed in seeds:
        try_seed(seed)
    if not roots:
        try:
            burn_vec = to_vec(_burn_in_state(scenario, pd))
            try_seed(burn_vec)
        except IntegrationError:
            pass
    if not roots:
        raise SteadyStateError(
            f"no convergent seed for {scenario.value} at w={p.pump}, delta={p.detuning} "
            f"(best residual {best_residual * scale:.3e})")

    classified = []
    for y in roots:
        eigs = np.linalg.eigvals(_fd_jacobian(fun, y))
        stable = bool(np.all(eigs.real < -stab_tol))
        classified.append((y, eigs, stable))

    stable_roots = [c for c in classified if c[2]]
    if not stable_roots:
        details = "; ".join(
            f"root {from_vec(y)} eigs {np.array2string(e * scale, precision=3)}"
            for y, e, _ in classified)
        raise SteadyStateError(f"no stable root for {scenario.value}: {details}")

    if len(stable_roots) == 1:
        y, eigs, _ = stable_roots[0]
    else:
        # dynamical selection: relax from the inverted state, pick the
        # nearest stable root
        if burn_vec is None:
            burn_vec = to_vec(_burn_in_state(scenario, pd))
        y_sel, _ = _newton(fun, burn_vec)
        anchor = y_sel if y_sel is not None else burn_vec
        y, eigs, _ = min(stable_roots, key=lambda c: np.linalg.norm(c[0] - anchor))

    residual = float(np.linalg.norm(fun(y)))
    if residual > _NEWTON_ACCEPT:
        raise SteadyStateError(
            f"residual {residual * scale:.3e} above tolerance for {scenario.value}")
    return SteadyStateResult(
        state=from_vec(y),
        jacobian_eigenvalues=tuple(complex(e) * scale for e in eigs),
        stable=True,
        residual_norm=residual * scale,
        seeds_tried=seeds_tried,
        stable_roots=len(stable_roots),
    )
