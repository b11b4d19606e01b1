"""Parameter and state records shared by every solver, plus unit conventions.

All frequencies are offsets from the common optical carrier; the carrier
itself is never stored.  The natural frequency scale is the collective
emission rate N*gamma, and every rate-like quantity may be rescaled so that
this product equals one without changing any observable (the equations are
homogeneous in frequency).
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, replace

# Jacobian eigenvalues with real part above -STABILITY_TOL_FACTOR * (N*gamma)
# are treated as marginal (numerical noise at double precision).
STABILITY_TOL_FACTOR = 1e-9


class ParameterError(ValueError):
    """Invalid physical parameters or configuration input."""


class ScenarioKind(enum.Enum):
    """Coupling topology (symmetric / cascaded) x channel type (quantum / classical)."""

    BI_QUANTUM = "bi_quantum"
    UNI_QUANTUM = "uni_quantum"
    UNI_CLASSICAL = "uni_classical"
    BI_CLASSICAL = "bi_classical"

    @property
    def symmetric(self) -> bool:
        return self in (ScenarioKind.BI_QUANTUM, ScenarioKind.BI_CLASSICAL)

    @property
    def cascaded(self) -> bool:
        return not self.symmetric

    @property
    def classical(self) -> bool:
        return self in (ScenarioKind.UNI_CLASSICAL, ScenarioKind.BI_CLASSICAL)

    @classmethod
    def parse(cls, tag: str) -> "ScenarioKind":
        key = tag.strip().lower().replace("-", "_")
        for kind in cls:
            if kind.value == key:
                return kind
        raise ParameterError(f"unknown scenario tag {tag!r}; expected one of "
                             f"{', '.join(k.value for k in cls)}")


class CarrierConvention(enum.Enum):
    # Symmetric setups put the two ensembles at +delta/2 and -delta/2;
    # cascaded setups put the master at the carrier and the slave at -delta.
    SYMMETRIC_HALF_DETUNING = "symmetric_half_detuning"
    MASTER_AT_CARRIER = "master_at_carrier"


def _convention_for(scenario: ScenarioKind) -> CarrierConvention:
    if scenario.symmetric:
        return CarrierConvention.SYMMETRIC_HALF_DETUNING
    return CarrierConvention.MASTER_AT_CARRIER


@dataclass(frozen=True)
class ModelParams:
    """Physical parameters of one scenario in a common unit system.

    collective_rate is N*gamma; the per-atom rate gamma is stored implicitly
    as collective_rate / n_atoms.  pump and detuning carry the same frequency
    units as collective_rate.  feedback_strength (xi) is consulted only by
    the symmetric classical scenario and must stay below one, otherwise the
    measure-and-feed-back loop has no stable field state.
    """

    n_atoms: int
    collective_rate: float
    pump: float
    detuning: float
    feedback_strength: float = 0.0
    carrier_convention: CarrierConvention = CarrierConvention.SYMMETRIC_HALF_DETUNING

    def __post_init__(self) -> None:
        if self.n_atoms < 1:
            raise ParameterError(f"n_atoms must be >= 1, got {self.n_atoms}")
        if not self.collective_rate > 0:
            raise ParameterError(f"collective_rate must be > 0, got {self.collective_rate}")
        if self.pump < 0:
            raise ParameterError(f"pump must be >= 0, got {self.pump}")
        if not 0.0 <= self.feedback_strength < 1.0:
            raise ParameterError(
                f"feedback_strength must lie in [0, 1), got {self.feedback_strength}")

    @property
    def single_atom_rate(self) -> float:
        return self.collective_rate / self.n_atoms

    @classmethod
    def for_scenario(cls, scenario: ScenarioKind, n_atoms: int, pump: float,
                     detuning: float, collective_rate: float = 1.0,
                     feedback_strength: float = 0.0) -> "ModelParams":
        return cls(n_atoms=n_atoms, collective_rate=collective_rate, pump=pump,
                   detuning=detuning, feedback_strength=feedback_strength,
                   carrier_convention=_convention_for(scenario))

    def check_scenario(self, scenario: ScenarioKind) -> None:
        if self.carrier_convention is not _convention_for(scenario):
            raise ParameterError(
                f"carrier convention {self.carrier_convention.value} does not match "
                f"scenario {scenario.value}")

    def stability_tolerance(self) -> float:
        return STABILITY_TOL_FACTOR * self.collective_rate


def dimensionless(params: ModelParams) -> ModelParams:
    """Rescale so collective_rate == 1; all rates divided by N*gamma.

    Observables are invariant under this rescaling because every equation in
    scope is homogeneous in frequency.
    """
    scale = params.collective_rate
    return replace(params, collective_rate=1.0, pump=params.pump / scale,
                   detuning=params.detuning / scale)


@dataclass(frozen=True)
class CorrelationState:
    """Second-order cumulant state: inversions plus spin-spin correlations.

    z_a, z_b are the mean single-atom inversions of the two ensembles.
    aa and bb are inner-ensemble correlations between two distinct atoms of
    the same ensemble; ab is the inter-ensemble correlation (raising operator
    on ensemble A, lowering on B).  |aa|, |bb|, |ab| <= 1 since each is a
    product of two bounded dipole operators.
    """

    z_a: float
    z_b: float
    aa: complex
    bb: complex
    ab: complex

    @classmethod
    def symmetric(cls, z: float, aa: complex, ab: complex) -> "CorrelationState":
        return cls(z_a=z, z_b=z, aa=aa, bb=aa, ab=ab)

    @property
    def is_symmetric(self) -> bool:
        return self.z_a == self.z_b and self.aa == self.bb

    def validate(self, tol: float = 1e-9) -> None:
        if not (-1.0 - tol <= self.z_a <= 1.0 + tol and -1.0 - tol <= self.z_b <= 1.0 + tol):
            raise ParameterError(f"inversions out of [-1, 1]: z_a={self.z_a}, z_b={self.z_b}")
        for name, value in (("aa", self.aa), ("bb", self.bb), ("ab", self.ab)):
            if abs(value) > 1.0 + tol:
                raise ParameterError(f"|{name}| exceeds the single-atom bound: {abs(value)}")

    def nearly_symmetric(self, tol: float = 1e-8) -> bool:
        return abs(self.z_a - self.z_b) <= tol and abs(self.aa - self.bb) <= tol


@dataclass(frozen=True)
class SteadyStateResult:
    """A fixed point plus its Jacobian spectrum and solver diagnostics.

    jacobian_eigenvalues are in the same frequency units as the input
    parameters.  stable means every eigenvalue real part lies below
    -stability_tolerance.  stable_roots counts all stable roots the solver
    found; values above one mean the returned root was selected dynamically
    (relaxation from the fully inverted state).
    """

    state: CorrelationState
    jacobian_eigenvalues: tuple[complex, ...]
    stable: bool
    residual_norm: float
    seeds_tried: int
    stable_roots: int = 1


# ---------------------------------------------------------------------------
# Structured text configuration (key = value), mapping onto ModelParams.
# All rates are in units of N*gamma unless a Hz suffix is given.
# ---------------------------------------------------------------------------

_KNOWN_KEYS = {
    "scenario", "n_atoms", "collective_rate", "pump", "detuning",
    "feedback_strength",
    # sweep-layer keys, parsed by the harness but tolerated here
    "w_grid", "delta_grid", "outputs", "parallelism",
}


def parse_config_text(text: str) -> dict[str, str]:
    """Parse `key = value` lines; '#' starts a comment, blank lines ignored."""
    entries: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ParameterError(f"config line {lineno}: expected 'key = value', got {raw!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        key = key.lower()
        if key not in _KNOWN_KEYS:
            raise ParameterError(f"config line {lineno}: unknown key {key!r}")
        if key in entries:
            raise ParameterError(f"config line {lineno}: duplicate key {key!r}")
        entries[key] = value
    return entries


def _rate_value(raw: str, scale: float, key: str) -> float:
    """A bare number is in units of N*gamma; a 'Hz' suffix makes it absolute."""
    text = raw.strip()
    absolute = False
    if text.lower().endswith("hz"):
        absolute = True
        text = text[:-2].strip()
    try:
        value = float(text)
    except ValueError as exc:
        raise ParameterError(f"config key {key!r}: cannot parse number from {raw!r}") from exc
    return value if absolute else value * scale


def scenario_from_config(entries: dict[str, str]) -> ScenarioKind:
    if "scenario" not in entries:
        raise ParameterError("config is missing the 'scenario' key")
    return ScenarioKind.parse(entries["scenario"])


def params_from_config(entries: dict[str, str]) -> ModelParams:
    scenario = scenario_from_config(entries)
    try:
        n_atoms = int(entries.get("n_atoms", "10000"))
    except ValueError as exc:
        raise ParameterError(f"config key 'n_atoms': {entries['n_atoms']!r} is not an integer") from exc

    raw_rate = entries.get("collective_rate", "1.0").strip()
    if raw_rate.lower().endswith("hz"):
        collective_rate = _rate_value(raw_rate, 1.0, "collective_rate")
    else:
        try:
            collective_rate = float(raw_rate)
        except ValueError as exc:
            raise ParameterError(f"config key 'collective_rate': cannot parse {raw_rate!r}") from exc
    if not collective_rate > 0 or not math.isfinite(collective_rate):
        raise ParameterError(f"collective_rate must be a positive finite number, got {collective_rate}")

    pump = _rate_value(entries.get("pump", "0"), collective_rate, "pump")
    detuning = _rate_value(entries.get("detuning", "0"), collective_rate, "detuning")
    xi = float(entries.get("feedback_strength", "0"))
    return ModelParams.for_scenario(scenario, n_atoms=n_atoms, pump=pump,
                                    detuning=detuning, collective_rate=collective_rate,
                                    feedback_strength=xi)
