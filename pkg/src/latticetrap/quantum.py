"""Figures of merit for analog spin simulation on an ion lattice.

Motional exchange between neighbouring sites, the effective spin-spin
coupling of a state-dependent force, heating from electric-field noise,
and a simple calibrated error model, gathered into a feasibility verdict.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import asdict, dataclass

import numpy as np
from scipy import constants

from latticetrap.geometry import YB174, IonSpecies

E = constants.e
HBAR = constants.hbar
EPS0 = constants.epsilon_0

# modified (scaled-down) design used to pin the force scale and error calibration
MODIFIED_SEPARATION = 32e-6
DEFAULT_OMEGA = 2 * math.pi * 1e6
TARGET_J = 2 * math.pi * 1e3
DEFAULT_NOISE_SE = 1.6e-11
DEFAULT_SCATTERING = 10.0
REFERENCE_ERROR = 0.25
DEFAULT_THRESHOLD = 2.0
NEIGHBOUR_CUTOFF = 1.2


def _positive(**kw):
    for k, v in kw.items():
        if not v > 0:
            raise ValueError(f"{k} must be positive, got {v}")


def _non_negative(**kw):
    for k, v in kw.items():
        if not v >= 0:
            raise ValueError(f"{k} must be non-negative, got {v}")


def exchange_coupling(species: IonSpecies, omega: float, r: float) -> float:
    """Motional exchange rate (rad/s) between two singly charged ions a distance ``r`` apart."""
    _positive(omega=omega, r=r)
    return E**2 / (2 * math.pi * EPS0 * species.mass * omega * r**3)


@dataclass(frozen=True)
class CouplingEdge:
    site_a: int
    site_b: int
    separation_r: float
    omega_ex: float


def _positions(sites) -> np.ndarray:
    pts = [getattr(s, "position", s) for s in sites]
    return np.asarray(pts, dtype=float).reshape(len(pts), -1)


def coupling_graph(sites, species: IonSpecies, omega: float, cutoff: float = NEIGHBOUR_CUTOFF):
    """Edges between all site pairs closer than ``cutoff`` times the smallest separation."""
    pos = _positions(sites)
    if len(pos) < 2:
        raise ValueError("a coupling graph needs at least two sites")
    d = np.linalg.norm(pos[:, None] - pos[None], axis=-1)
    iu = np.triu_indices(len(pos), 1)
    limit = cutoff * d[iu].min()
    edges = []
    for a, b in zip(*iu):
        r = float(d[a, b])
        if r <= limit:
            edges.append(CouplingEdge(int(a), int(b), r, exchange_coupling(species, omega, r)))
    return edges


def degrees(edges, n_sites: int) -> np.ndarray:
    deg = np.zeros(n_sites, dtype=int)
    for e in edges:
        deg[e.site_a] += 1
        deg[e.site_b] += 1
    return deg


def spin_coupling(beta: float, force: float, species: IonSpecies, omega: float) -> float:
    return beta * force**2 / (4 * HBAR * species.mass * omega**2)


def required_force_for_J(J_target: float, omega: float, species: IonSpecies, omega_ex: float) -> float:
    """Force magnitude (N) giving spin-spin coupling ``J_target`` (rad/s)."""
    _non_negative(J_target=J_target)
    _positive(omega=omega, omega_ex=omega_ex)
    beta = omega_ex / omega
    return math.sqrt(J_target * 4 * HBAR * species.mass * omega**2 / beta)


def reference_force(species: IonSpecies = YB174) -> float:
    """Force that yields the target coupling on the modified design (32 um pitch, 1 MHz)."""
    wex = exchange_coupling(species, DEFAULT_OMEGA, MODIFIED_SEPARATION)
    return required_force_for_J(TARGET_J, DEFAULT_OMEGA, species, wex)


def calibrate_kappa(force: float, error: float = REFERENCE_ERROR) -> float:
    """Coefficient of the ``error = kappa * F**2`` model through one calibration point."""
    _positive(force=force)
    return error / force**2


@dataclass(frozen=True)
class SpinSimParams:
    trap_frequency_omega: float
    force_F: float
    beta: float
    noise_density_SE: float = DEFAULT_NOISE_SE
    scattering_rate: float = DEFAULT_SCATTERING
    error_calibration_kappa: float | None = None

    def __post_init__(self):
        kappa = self.error_calibration_kappa
        if kappa is None:
            kappa = calibrate_kappa(reference_force())
            object.__setattr__(self, "error_calibration_kappa", kappa)
        _non_negative(
            trap_frequency_omega=self.trap_frequency_omega, force_F=self.force_F, beta=self.beta,
            noise_density_SE=self.noise_density_SE, scattering_rate=self.scattering_rate,
            error_calibration_kappa=kappa,
        )

    @classmethod
    def from_exchange(cls, omega: float, omega_ex: float, force: float, **kw) -> "SpinSimParams":
        _positive(omega=omega)
        return cls(omega, force, omega_ex / omega, **kw)


def spin_spin_J(params: SpinSimParams, species: IonSpecies) -> float:
    """Effective spin-spin coupling (rad/s)."""
    return spin_coupling(params.beta, params.force_F, species, params.trap_frequency_omega)


def heating_rate(species: IonSpecies, omega: float, noise_density_SE: float) -> float:
    """Motional heating rate (quanta/s) from field noise ``S_E`` (V^2 m^-2 Hz^-1)."""
    _positive(omega=omega)
    _non_negative(noise_density_SE=noise_density_SE)
    return species.charge**2 * noise_density_SE / (4 * species.mass * HBAR * omega)


def simulation_error(force: float, params: SpinSimParams) -> float:
    """Fractional error ``kappa * F**2``; values above 1 are returned with a warning."""
    eps = params.error_calibration_kappa * force**2
    if eps > 1.0:
        warnings.warn(f"simulation error estimate {eps:.3g} exceeds 100%", stacklevel=2)
    return eps


@dataclass(frozen=True)
class FeasibilityReport:
    separation: float  # m
    omega: float  # rad/s
    force: float  # N
    omega_ex: float  # rad/s
    beta: float
    J: float  # rad/s
    heating_rate_ndot: float  # quanta/s
    scattering_rate: float  # 1/s
    margin_heating: float
    margin_scattering: float
    error_estimate: float
    threshold: float
    verdict: bool

    def to_dict(self) -> dict:
        d = asdict(self)
        return {
            "nearest_separation_m": d["separation"],
            "trap_frequency_rad_s": d["omega"],
            "force_n": d["force"],
            "omega_ex_rad_s": d["omega_ex"],
            "omega_ex_hz": d["omega_ex"] / (2 * math.pi),
            "beta": d["beta"],
            "j_rad_s": d["J"],
            "j_hz": d["J"] / (2 * math.pi),
            "heating_rate_quanta_per_s": d["heating_rate_ndot"],
            "scattering_rate_per_s": d["scattering_rate"],
            "margin_j_over_heating": d["margin_heating"],
            "margin_j_over_scattering": d["margin_scattering"],
            "error_estimate_fraction": d["error_estimate"],
            "threshold": d["threshold"],
            "verdict": d["verdict"],
        }


def verdict_from_margins(margin_heating: float, margin_scattering: float, threshold: float) -> bool:
    return bool(margin_heating >= threshold and margin_scattering >= threshold)


def _ratio(a, b):
    return math.inf if b == 0 else a / b


def feasibility_report(
    sites,
    species: IonSpecies = YB174,
    omega: float = DEFAULT_OMEGA,
    force: float | None = None,
    noise_density_SE: float = DEFAULT_NOISE_SE,
    scattering_rate: float = DEFAULT_SCATTERING,
    threshold: float = DEFAULT_THRESHOLD,
    kappa: float | None = None,
) -> FeasibilityReport:
    """Assemble the feasibility figures for a design.

    ``sites`` is a list of sites or positions (the nearest-neighbour
    separation is used) or a bare separation in meters.  Margins compare
    the angular coupling ``J`` (rad/s) with the heating and scattering rates.
    """
    if np.isscalar(sites):
        r = float(sites)
    else:
        pos = _positions(sites)
        if len(pos) < 2:
            raise ValueError("need at least two sites to define a separation")
        d = np.linalg.norm(pos[:, None] - pos[None], axis=-1)
        r = float(d[np.triu_indices(len(pos), 1)].min())
    force = reference_force(species) if force is None else float(force)
    wex = exchange_coupling(species, omega, r)
    params = SpinSimParams.from_exchange(
        omega, wex, force, noise_density_SE=noise_density_SE, scattering_rate=scattering_rate,
        error_calibration_kappa=kappa,
    )
    J = spin_spin_J(params, species)
    ndot = heating_rate(species, omega, noise_density_SE)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        eps = simulation_error(force, params)
    mh, ms = _ratio(J, ndot), _ratio(J, scattering_rate)
    return FeasibilityReport(
        r, omega, force, wex, params.beta, J, ndot, scattering_rate, mh, ms, eps, threshold,
        verdict_from_margins(mh, ms, threshold),
    )
