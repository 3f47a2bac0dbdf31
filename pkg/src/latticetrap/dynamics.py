"""Classical single-ion motion in the time-dependent trap field.

The equations of motion include the RF drive explicitly (no secular
averaging) and are integrated with fixed-step velocity Verlet.  Shuttling
waveforms are piecewise-linear voltage schedules on the RF amplitude and
the static channels.
"""

from __future__ import annotations

import csv
import json
import logging
import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Mapping

import numpy as np
from scipy import constants, optimize

from latticetrap.analysis import (
    TrapSite,
    characteristic_length,
    classify_basin,
    find_total_minimum,
    search_box,
    secular_frequencies,
    stability_params,
    trap_depth,
)
from latticetrap.errors import AdjacencyError, LatticeTrapError, LayoutError, ShuttleSearchError
from latticetrap.fields.base import (
    FieldSet,
    as_points,
    pseudo_coefficient,
    total_gradient,
    total_hessian,
    total_potential,
)
from latticetrap.geometry import IonSpecies, RfDrive

log = logging.getLogger(__name__)

MIN_STEPS_PER_PERIOD = 40


# --------------------------------------------------------------------------
# waveforms


@dataclass(frozen=True)
class PiecewiseLinear:
    """Voltage (or any scalar) schedule through ``(time, value)`` breakpoints."""

    times: tuple
    values: tuple

    def __post_init__(self):
        t = tuple(float(v) for v in self.times)
        v = tuple(float(x) for x in self.values)
        if len(t) != len(v) or not t:
            raise ValueError("breakpoint times and values must be non-empty and of equal length")
        if any(b < a for a, b in zip(t, t[1:])):
            raise ValueError("breakpoint times must be sorted")
        if not all(map(math.isfinite, t + v)):
            raise ValueError("breakpoints must be finite")
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "values", v)

    @classmethod
    def constant(cls, value: float, duration: float) -> "PiecewiseLinear":
        return cls((0.0, duration), (value, value))

    @classmethod
    def from_pairs(cls, pairs) -> "PiecewiseLinear":
        pairs = list(pairs)
        return cls(tuple(p[0] for p in pairs), tuple(p[1] for p in pairs))

    def __call__(self, t):
        return np.interp(t, self.times, self.values)

    def pairs(self):
        return [[t, v] for t, v in zip(self.times, self.values)]

    def scaled(self, factor: float) -> "PiecewiseLinear":
        return PiecewiseLinear(self.times, tuple(factor * v for v in self.values))

    @property
    def peak(self) -> float:
        return max(abs(v) for v in self.values)


@dataclass(frozen=True)
class Waveform:
    duration: float
    rf_amplitude: PiecewiseLinear
    channels: Mapping = field(default_factory=dict)

    def __post_init__(self):
        if not self.duration > 0:
            raise ValueError("waveform duration must be positive")
        chans = {k: v if isinstance(v, PiecewiseLinear) else PiecewiseLinear.from_pairs(v)
                 for k, v in dict(self.channels).items()}
        for name, f in [("rf_amplitude", self.rf_amplitude), *chans.items()]:
            if f.times[0] > 0 or f.times[-1] < self.duration * (1 - 1e-12):
                raise ValueError(f"schedule {name!r} does not cover [0, duration]")
        object.__setattr__(self, "channels", dict(sorted(chans.items())))

    @classmethod
    def constant(cls, duration: float, rf_amplitude: float, channels: Mapping | None = None) -> "Waveform":
        return cls(duration, PiecewiseLinear.constant(rf_amplitude, duration),
                   {k: PiecewiseLinear.constant(v, duration) for k, v in (channels or {}).items()})

    def static_voltages(self, t: float) -> dict:
        return {k: float(f(t)) for k, f in self.channels.items()}

    def reversed_polarity(self, ids=("Comp3", "Comp6")) -> "Waveform":
        """Same schedule with the sign of the listed channels flipped."""
        ch = {k: (f.scaled(-1.0) if k in ids else f) for k, f in self.channels.items()}
        return Waveform(self.duration, self.rf_amplitude, ch)

    def check_limits(self, layout) -> list[str]:
        """Violations of the layout's breakdown limits (empty when within budget)."""
        lim = layout.breakdown_limits
        bad = []
        if self.rf_amplitude.peak > lim.rf_volts:
            bad.append(f"rf amplitude {self.rf_amplitude.peak:g} V exceeds {lim.rf_volts:g} V")
        for k, f in self.channels.items():
            layout.electrode(k)
            if f.peak > lim.dc_volts:
                bad.append(f"channel {k} reaches {f.peak:g} V, limit {lim.dc_volts:g} V")
        return bad

    def to_dict(self) -> dict:
        return {
            "duration_s": self.duration,
            "rf_amplitude": self.rf_amplitude.pairs(),
            "channels": {k: f.pairs() for k, f in self.channels.items()},
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "Waveform":
        try:
            return cls(
                float(d["duration_s"]),
                PiecewiseLinear.from_pairs(d["rf_amplitude"]),
                {k: PiecewiseLinear.from_pairs(v) for k, v in d.get("channels", {}).items()},
            )
        except (KeyError, TypeError, IndexError) as exc:
            raise LayoutError(f"malformed waveform: {exc}") from exc

    def save(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=2, sort_keys=True)
            fh.write("\n")

    @classmethod
    def load(cls, path) -> "Waveform":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


# --------------------------------------------------------------------------
# force models


class ForceModel:
    """Acceleration source for the integrator: ``force(t, x) -> (n, 3)`` newtons."""

    def force(self, t: float, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def energy(self, t: float, x: np.ndarray):
        """Potential energy (J) when the force is conservative and time independent."""
        raise NotImplementedError

    def contains(self, x: np.ndarray) -> np.ndarray:
        return np.ones(len(x), dtype=bool)


class HarmonicForce(ForceModel):
    """``F = -K x`` with a constant stiffness matrix; an analytic test field."""

    def __init__(self, stiffness, centre=(0.0, 0.0, 0.0)):
        self.K = np.atleast_2d(np.asarray(stiffness, dtype=float))
        if self.K.shape == (1, 1):
            self.K = self.K[0, 0] * np.eye(3)
        self.centre = np.asarray(centre, dtype=float)

    def force(self, t, x):
        return -(x - self.centre) @ self.K.T

    def energy(self, t, x):
        d = x - self.centre
        return 0.5 * np.einsum("ni,ij,nj->n", d, self.K, d)


class FieldForce(ForceModel):
    """Full time-dependent trap force evaluated directly from the basis fields."""

    def __init__(self, fields: FieldSet, drive: RfDrive, species: IonSpecies, waveform: Waveform | None = None,
                 box=None):
        self.fields = fields
        self.drive = drive
        self.species = species
        self.waveform = waveform
        self.box = search_box(fields) if box is None else np.asarray(box, dtype=float)

    def voltages(self, t):
        if self.waveform is None:
            return self.drive.amplitude, {}
        return float(self.waveform.rf_amplitude(t)), self.waveform.static_voltages(t)

    def force(self, t, x):
        v_rf, statics = self.voltages(t)
        grad = v_rf * math.cos(self.drive.angular_frequency * t) * self.fields.rf_basis.gradient(x)
        for k, v in statics.items():
            if v:
                grad = grad + v * self.fields.static(k).gradient(x)
        return -self.species.charge * grad

    def contains(self, x):
        return np.all((x >= self.box[:, 0]) & (x <= self.box[:, 1]), axis=1)


class PseudoForce(ForceModel):
    """Time-averaged force: gradient of the total (pseudo plus static) potential."""

    def __init__(self, fields, drive, species, static_voltages=None, box=None):
        self.args = (fields, drive, species, static_voltages)
        self.box = search_box(fields) if box is None else np.asarray(box, dtype=float)

    def force(self, t, x):
        return -total_gradient(*self.args, x)

    def energy(self, t, x):
        return total_potential(*self.args, x) * constants.e

    def contains(self, x):
        return np.all((x >= self.box[:, 0]) & (x <= self.box[:, 1]), axis=1)


def _trilinear(table, lo, step, n, x):
    """Trilinear interpolation of ``table[i, j, k, ...]`` on a regular grid at points ``x``."""
    s = (x - lo) / step
    i = np.clip(np.floor(s).astype(int), 0, n - 2)
    f = s - i
    out = 0.0
    for dx in (0, 1):
        wx = f[:, 0] if dx else 1 - f[:, 0]
        for dy in (0, 1):
            wy = f[:, 1] if dy else 1 - f[:, 1]
            for dz in (0, 1):
                wz = f[:, 2] if dz else 1 - f[:, 2]
                w = (wx * wy * wz).reshape((-1,) + (1,) * (table.ndim - 3))
                out = out + w * table[i[:, 0] + dx, i[:, 1] + dy, i[:, 2] + dz]
    return out


class TabulatedFieldForce(FieldForce):
    """:class:`FieldForce` with basis gradients tabulated on a box and interpolated trilinearly.

    Much faster per step than evaluating the fields directly; intended for
    long shuttling runs inside a bounded region.
    """

    def __init__(self, fields, drive, species, waveform=None, box=None, spacing: float = 3e-6,
                 chunk: int = 100000):
        super().__init__(fields, drive, species, waveform, box)
        ids = [fields.rf_basis.electrode_id] + (sorted(waveform.channels) if waveform else [])
        self.ids = ids
        self.axes = tuple(
            np.linspace(lo, hi, max(2, int(math.ceil((hi - lo) / spacing)) + 1)) for lo, hi in self.box
        )
        X, Y, Z = np.meshgrid(*self.axes, indexing="ij")
        pts = np.column_stack([X.ravel(), Y.ravel(), Z.ravel()])
        tab = np.empty((len(pts), len(ids), 3))
        bases = [fields.rf_basis] + [fields.static(k) for k in ids[1:]]
        for i in range(0, len(pts), chunk):
            for j, b in enumerate(bases):
                tab[i : i + chunk, j] = b.gradient(pts[i : i + chunk])
        self.table = tab.reshape(X.shape + (len(ids), 3))
        self.lo = np.array([a[0] for a in self.axes])
        self.step = np.array([a[1] - a[0] for a in self.axes])
        self.n = np.array([len(a) for a in self.axes])

    def basis_gradients(self, x):
        """Interpolated gradients, shape (n_points, n_bases, 3)."""
        return _trilinear(self.table, self.lo, self.step, self.n, x)

    def force(self, t, x):
        v_rf, statics = self.voltages(t)
        coef = np.array([v_rf * math.cos(self.drive.angular_frequency * t)]
                        + [statics.get(k, 0.0) for k in self.ids[1:]])
        g = np.einsum("b,nbk->nk", coef, self.basis_gradients(x))
        return -self.species.charge * g


# --------------------------------------------------------------------------
# integration


@dataclass(frozen=True)
class TrajectoryState:
    time: float
    position: np.ndarray
    velocity: np.ndarray

    def __post_init__(self):
        p = np.asarray(self.position, dtype=float).reshape(3)
        v = np.asarray(self.velocity, dtype=float).reshape(3)
        if not (np.all(np.isfinite(p)) and np.all(np.isfinite(v)) and math.isfinite(self.time)):
            raise ValueError("trajectory state must be finite")
        object.__setattr__(self, "position", p)
        object.__setattr__(self, "velocity", v)


@dataclass
class Trajectory:
    times: np.ndarray
    positions: np.ndarray
    velocities: np.ndarray
    escaped: bool = False
    exit_time: float | None = None
    exit_position: np.ndarray | None = None

    @property
    def final(self) -> TrajectoryState:
        return TrajectoryState(float(self.times[-1]), self.positions[-1], self.velocities[-1])

    def states(self):
        return [TrajectoryState(float(t), p, v) for t, p, v in zip(self.times, self.positions, self.velocities)]

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t_s", "x_m", "y_m", "z_m", "vx_m_s", "vy_m_s", "vz_m_s"])
            for t, p, v in zip(self.times, self.positions, self.velocities):
                w.writerow([repr(float(t)), *(repr(float(a)) for a in p), *(repr(float(a)) for a in v)])


def choose_step(drive: RfDrive | None, steps_per_period: int = MIN_STEPS_PER_PERIOD,
                secular_omega: float | None = None) -> float:
    if steps_per_period < MIN_STEPS_PER_PERIOD:
        raise ValueError(f"at least {MIN_STEPS_PER_PERIOD} steps per period are required")
    omega = drive.angular_frequency if drive is not None else secular_omega
    if not omega:
        raise ValueError("need an RF drive or a secular frequency to choose the step")
    return 2 * math.pi / omega / steps_per_period


def verlet(model: ForceModel, mass: float, x0, v0, t0: float, t_end: float, dt: float,
           damping: float = 0.0, stride: int = 1) -> Trajectory:
    """Velocity Verlet for one or many particles (``x0`` of shape (3,) or (n, 3)).

    Damping ``-gamma * m * v`` is applied with the standard half-step
    velocity form.  The run stops early when any particle leaves the model's
    domain; that event is recorded on the trajectory.
    """
    single = np.ndim(x0) == 1
    x = np.atleast_2d(np.asarray(x0, dtype=float)).copy()
    v = np.atleast_2d(np.asarray(v0, dtype=float)).copy()
    n_steps = int(round((t_end - t0) / dt))
    if n_steps < 0:
        raise ValueError("t_end precedes the initial time")
    if n_steps and abs(n_steps * dt - (t_end - t0)) > 1e-9 * abs(dt):
        dt = (t_end - t0) / n_steps
    stride = max(1, int(stride))
    times, xs, vs = [t0], [x.copy()], [v.copy()]
    a = model.force(t0, x) / mass
    g = damping
    escaped, exit_t, exit_x = False, None, None
    for k in range(1, n_steps + 1):
        t = t0 + k * dt
        v_half = (v + 0.5 * dt * a) / (1 + 0.5 * g * dt) if g else v + 0.5 * dt * a
        x = x + dt * v_half
        inside = model.contains(x)
        if not np.all(inside):
            escaped, exit_t, exit_x = True, t, x[~inside][0].copy()
            times.append(t), xs.append(x.copy()), vs.append(v_half.copy())
            break
        a = model.force(t, x) / mass
        v = v_half * (1 - 0.5 * g * dt) + 0.5 * dt * a if g else v_half + 0.5 * dt * a
        if k % stride == 0 or k == n_steps:
            times.append(t), xs.append(x.copy()), vs.append(v.copy())
    P, V = np.array(xs), np.array(vs)
    if single:
        P, V = P[:, 0], V[:, 0]
    return Trajectory(np.array(times), P, V, escaped, exit_t, exit_x)


def integrate_trajectory(fields, drive, species, waveform: Waveform, initial: TrajectoryState, t_end: float,
                         steps_per_period: int = MIN_STEPS_PER_PERIOD, damping: float = 0.0,
                         stride: int = 1, model: ForceModel | None = None) -> Trajectory:
    """Ion trajectory in the RF plus static field of ``waveform``."""
    if t_end > waveform.duration * (1 + 1e-12):
        raise ValueError("t_end exceeds the waveform duration")
    model = model or FieldForce(fields, drive, species, waveform)
    if not model.contains(initial.position[None])[0]:
        raise LatticeTrapError("initial position lies outside the field domain")
    dt = choose_step(drive, steps_per_period)
    return verlet(model, species.mass, initial.position, initial.velocity, initial.time, t_end, dt,
                  damping, stride)


def energy_drift(traj: Trajectory, model: ForceModel, mass: float, window: int) -> float:
    """Relative change of mean total energy between the first and last ``window`` samples."""
    x, v = traj.positions, traj.velocities
    E = 0.5 * mass * np.einsum("ni,ni->n", v, v) + model.energy(0.0, x)
    return float(abs(E[-window:].mean() - E[:window].mean()) / abs(E[:window].mean()))


# --------------------------------------------------------------------------
# secular analysis of a trajectory


def rf_average(traj: Trajectory, drive: RfDrive, periods: int = 1):
    """Position and velocity averaged over the last ``periods`` RF periods."""
    T = periods * 2 * math.pi / drive.angular_frequency
    m = traj.times >= traj.times[-1] - T
    return traj.positions[m].mean(axis=0), traj.velocities[m].mean(axis=0)


def secular_energy(fields, drive, species, static_voltages, position, velocity, reference_energy_ev) -> float:
    """Secular kinetic plus pseudo-potential energy (eV) above ``reference_energy_ev``."""
    ke = 0.5 * species.mass * float(velocity @ velocity) / constants.e
    pe = float(total_potential(fields, drive, species, static_voltages, position)[0])
    return ke + pe - reference_energy_ev


# --------------------------------------------------------------------------
# shuttling


@dataclass
class ShuttleResult:
    success: bool
    start_site: int | None
    end_site: int | None
    max_excursion: float
    secular_energy_gain: float  # eV
    trajectory: Trajectory
    target_site: int | None = None
    target_depth: float | None = None
    waveform: Waveform | None = None
    diagnostics: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "success": bool(self.success),
            "start_site": self.start_site,
            "end_site": self.end_site,
            "target_site": self.target_site,
            "max_excursion_m": float(self.max_excursion),
            "secular_energy_gain_ev": float(self.secular_energy_gain),
            "target_depth_ev": None if self.target_depth is None else float(self.target_depth),
            "diagnostics": self.diagnostics,
        }


def _site_positions(sites):
    return np.array([s.position if isinstance(s, TrapSite) else s for s in sites], dtype=float)


def shuttle_box(fields, sites, start_site: int, target_site: int, margin: float | None = None):
    """Box enclosing both sites with a margin, clipped to the search region."""
    pos = _site_positions(sites)
    a, b = pos[start_site], pos[target_site]
    layout = fields.layout
    length = characteristic_length(layout) if layout is not None else np.linalg.norm(b - a) or 1e-4
    m = 0.8 * length if margin is None else margin
    lo = np.minimum(a, b) - m
    hi = np.maximum(a, b) + m
    full = search_box(fields)
    lo[2] = max(full[2, 0], lo[2])
    hi[2] = min(full[2, 1], hi[2] + m)
    return np.column_stack([np.maximum(lo, full[:, 0]), np.minimum(hi, full[:, 1])])


def play_waveform(fields, drive, species, waveform: Waveform, start_site: int, target_site: int, sites,
                  thermal_offset=None, steps_per_period: int = MIN_STEPS_PER_PERIOD, damping: float = 0.0,
                  model: ForceModel | None = None, target_depth: float | None = None,
                  stride: int = 20) -> ShuttleResult:
    """Run a waveform from an ion at rest on ``start_site`` and classify where it ends."""
    pos = _site_positions(sites)
    start = pos[start_site] + (np.zeros(3) if thermal_offset is None else np.asarray(thermal_offset, float))
    if model is None:
        model = TabulatedFieldForce(fields, drive, species, waveform,
                                    shuttle_box(fields, sites, start_site, target_site))
    else:
        model.waveform = waveform
    traj = integrate_trajectory(fields, drive, species, waveform, TrajectoryState(0.0, start, np.zeros(3)),
                                waveform.duration, steps_per_period, damping, stride, model)
    excursion = float(np.max(np.linalg.norm(traj.positions - start, axis=1)))
    final_drive = drive.with_amplitude(float(waveform.rf_amplitude(waveform.duration)))
    final_statics = waveform.static_voltages(waveform.duration)
    if target_depth is None and isinstance(sites[target_site], TrapSite):
        target_depth = float(sites[target_site].depth)
    if traj.escaped:
        return ShuttleResult(False, start_site, None, excursion, math.inf, traj, target_site, target_depth,
                             waveform, {"escaped": True, "exit_time_s": traj.exit_time,
                                        "exit_position_m": [float(v) for v in traj.exit_position]})
    xbar, vbar = rf_average(traj, drive)
    end = classify_basin(fields, final_drive, species, final_statics, xbar, pos)
    u0 = float(total_potential(fields, drive, species, waveform.static_voltages(0.0), start)[0])
    ref_start = float(total_potential(fields, drive, species, waveform.static_voltages(0.0), pos[start_site])[0])
    e_start = u0 - ref_start
    ref = end if end is not None else target_site
    e_end = secular_energy(fields, final_drive, species, final_statics, xbar, vbar,
                           float(total_potential(fields, final_drive, species, final_statics, pos[ref])[0]))
    gain = e_end - e_start
    ok = end == target_site and (target_depth is None or e_end < target_depth)
    return ShuttleResult(ok, start_site, end, excursion, gain, traj, target_site, target_depth, waveform,
                         {"escaped": False, "final_secular_energy_ev": e_end})


@dataclass(frozen=True)
class ShuttleTemplate:
    """Kick, coast and brake schedule for moving an ion to a neighbouring site.

    The RF amplitude ramps down to ``rf_dip * V0`` while ``hold_volts`` ramps
    up on ``hold_ids``.  The hold pushes the ion towards the surface so that
    the barrier between neighbours lies below the route over the top of the
    lattice.  A push of ``kick_volts`` (``-u`` on the first push channel,
    ``+u`` on the second) lasts ``kick_time``, the ion coasts for
    ``coast_time``, a reverse push of ``brake_volts`` lasts ``brake_time``,
    and the RF and hold ramp back.

    Hold, pulse voltages and pulse times are quoted for the full drive.  At a
    dip they are scaled by ``rf_dip**2`` and ``1/rf_dip``, which keeps the
    secular trajectory the same shape, only slower.
    """

    push_ids: tuple = ("Comp3", "Comp6")
    hold_ids: tuple = ("Comp1", "Comp2", "Comp4", "Comp5")
    hold_volts: float = 20.0
    rf_dip_range: tuple = (0.3, 1.0)
    ramp_time: float = 10e-6
    edge_time: float = 20e-9
    settle_time: float = 2e-6
    # (low, high) for kick volts, kick time, coast time, brake volts, brake time
    pulse_bounds: tuple = ((50.0, 800.0), (0.05e-6, 0.5e-6), (0.0, 1.5e-6), (0.0, 800.0), (0.02e-6, 0.5e-6))

    @property
    def channel_ids(self) -> tuple:
        return tuple(self.push_ids) + tuple(self.hold_ids)

    def pulse_times(self, kick_time, coast_time, brake_time):
        """Start of the kick, start of the brake, and end of the brake at the full drive."""
        e = self.edge_time
        brake_start = kick_time + 2 * e + coast_time
        return 0.0, brake_start, brake_start + brake_time + 2 * e

    def waveform(self, drive: RfDrive, rf_dip: float, kick_volts: float, kick_time: float, coast_time: float,
                 brake_volts: float, brake_time: float) -> Waveform:
        if not 0 < rf_dip <= 1:
            raise ValueError("rf_dip must lie in (0, 1]")
        if kick_time <= 0 or brake_time <= 0 or coast_time < 0:
            raise ValueError("pulse times must be positive and the coast non-negative")
        s, k = 1.0 / rf_dip, rf_dip * rf_dip
        e = self.edge_time * s
        t1 = self.ramp_time + 0.5e-6
        k1 = [t1, t1 + e, t1 + e + kick_time * s, t1 + 2 * e + kick_time * s]
        t2 = k1[-1] + coast_time * s
        k2 = [t2, t2 + e, t2 + e + brake_time * s, t2 + 2 * e + brake_time * s]
        up = k2[-1] + 0.5e-6
        T = up + self.ramp_time + self.settle_time
        v0 = drive.amplitude
        knots = (0.0, self.ramp_time, up, up + self.ramp_time, T)
        rf = PiecewiseLinear(knots, (v0, rf_dip * v0, rf_dip * v0, v0, v0))
        hold = PiecewiseLinear(knots, (0.0, self.hold_volts * k, self.hold_volts * k, 0.0, 0.0))
        u, b = kick_volts * k, brake_volts * k
        push = PiecewiseLinear((0.0, *k1, *k2, T), (0.0, 0.0, u, u, 0.0, 0.0, -b, -b, 0.0, 0.0))
        first, second = self.push_ids
        channels = {first: push.scaled(-1.0), second: push}
        channels.update({h: hold for h in self.hold_ids})
        return Waveform(T, rf, channels)


def _check_adjacent(sites, a: int, b: int):
    pos = _site_positions(sites)
    d = np.linalg.norm(pos[:, None] - pos[None], axis=-1)
    nn = d[np.triu_indices(len(pos), 1)].min() if len(pos) > 1 else math.inf
    if d[a, b] > 1.2 * nn:
        raise AdjacencyError(f"sites {a} and {b} are not nearest neighbours")


def identity_waveform(drive: RfDrive, duration: float, ids=()) -> Waveform:
    return Waveform.constant(duration, drive.amplitude, {k: 0.0 for k in ids})


@dataclass
class SearchLog:
    evaluations: list = field(default_factory=list)


class _SecularPulses:
    """Many secular-model runs of a template's pulses at once, at the full drive with the hold on.

    The pseudopotential force comes from differencing ``|grad phi_rf|^2`` on
    the table of a :class:`TabulatedFieldForce`; it is only used to rank
    candidates before the full RF check.
    """

    def __init__(self, model: TabulatedFieldForce, fields, drive, species, template: ShuttleTemplate,
                 start, target, sign: float):
        tab = model.table
        idx = {k: i for i, k in enumerate(model.ids)}
        rf = tab[..., 0, :]
        g2 = np.einsum("...k,...k->...", rf, rf)
        pseudo = pseudo_coefficient(drive, species) * np.stack(np.gradient(g2, *model.axes), axis=-1)
        q = species.charge
        hold = sum(tab[..., idx[h], :] for h in template.hold_ids)
        first, second = template.push_ids
        push = q * (tab[..., idx[second], :] - tab[..., idx[first], :])
        self.table = np.stack([pseudo + q * template.hold_volts * hold, sign * push], axis=-2)
        self.geometry = (model.lo, model.step, model.n)
        self.model = model
        self.args = (fields, drive, species, {h: template.hold_volts for h in template.hold_ids})
        self.template = template
        self.mass = species.mass
        self.start = np.asarray(start, float)
        self.target = np.asarray(target, float)
        self.u_target = float(total_potential(*self.args, self.target)[0])
        self.radius = 0.25 * float(np.linalg.norm(self.target - self.start))
        modes = secular_frequencies(fields, drive, species, self.start, self.args[3])
        self.dt = min(template.edge_time / 4, 2 * math.pi / float(np.max(np.abs(modes.frequencies))) / 100)

    def energies(self, params) -> np.ndarray:
        """Final secular energy (eV) above the held target minimum; ``inf`` when the ion ends elsewhere."""
        P = np.atleast_2d(np.asarray(params, dtype=float))
        u1, w1, g, u2, w2 = P.T
        tpl, e = self.template, self.template.edge_time
        _, t2, t3 = tpl.pulse_times(w1, g, w2)
        T = float(np.max(t3)) + 0.3e-6
        k = len(P)

        def trap(t, a, w):
            return np.clip((t - a) / e, 0, 1) * np.clip((a + w + 2 * e - t) / e, 0, 1)

        def acc(t, x):
            G = _trilinear(self.table, *self.geometry, x)
            p = trap(t, 0.0, w1) * u1 - trap(t, t2, w2) * u2
            return -(G[:, 0] + p[:, None] * G[:, 1]) / self.mass

        x = np.tile(self.start, (k, 1))
        v = np.zeros((k, 3))
        alive = np.ones(k, dtype=bool)
        dt = self.dt
        a = acc(0.0, x)
        for step in range(1, int(math.ceil(T / dt)) + 1):
            t = step * dt
            vh = v + 0.5 * dt * a
            x = x + dt * vh
            out = ~self.model.contains(x)
            if out.any():
                alive &= ~out
                x[out] = self.start
                vh[out] = 0.0
            a = acc(t, x)
            v = vh + 0.5 * dt * a
        E = 0.5 * self.mass * np.einsum("ij,ij->i", v, v) / constants.e
        E = E + total_potential(*self.args, x) - self.u_target
        near = np.linalg.norm(x - self.target, axis=1) < self.radius
        return np.where(alive & near, E, np.inf)


def _scaled(template: ShuttleTemplate):
    lo, hi = np.array(template.pulse_bounds, dtype=float).T

    def to_params(theta):
        return lo + (hi - lo) * np.clip(theta, 0.0, 1.0)

    return lo, hi, to_params


def search_shuttle_waveform(fields, drive, species, start_site: int, target_site: int, sites,
                            template: ShuttleTemplate | None = None, seed: int = 0, max_evaluations: int = 60,
                            energy_fraction: float = 0.1, damping: float = 0.0,
                            steps_per_period: int = MIN_STEPS_PER_PERIOD, search_log: SearchLog | None = None,
                            samples: int = 2000, starts: int = 3, secular_iterations: int = 150):
    """Find a template waveform that moves the ion between adjacent sites.

    Stage one ranks ``samples`` random pulse settings (and refines the best
    ``starts`` by Nelder-Mead) in the secular approximation.  Stage two plays
    candidates with the RF resolved, over a few dips, then refines the best
    by Nelder-Mead on the secular energy gain.  Returns the first waveform
    that reaches the target with a gain below ``energy_fraction`` of its
    depth; ``max_evaluations`` bounds the full RF runs.
    """
    template = template or ShuttleTemplate()
    if start_site == target_site:
        return identity_waveform(drive, 2 * template.ramp_time + template.settle_time, template.channel_ids)
    _check_adjacent(sites, start_site, target_site)
    pos = _site_positions(sites)
    target_depth = float(sites[target_site].depth) if isinstance(sites[target_site], TrapSite) else None
    if target_depth is None:
        target_depth = trap_depth(fields, drive, species, pos[target_site]).depth
    budget = energy_fraction * target_depth
    rng = np.random.default_rng(seed)
    log_ = search_log or SearchLog()
    mid = [0.5 * (a + b) for a, b in template.pulse_bounds]
    model = TabulatedFieldForce(fields, drive, species, template.waveform(drive, 1.0, *mid),
                                shuttle_box(fields, sites, start_site, target_site))
    # ion force per volt of push is q * (grad phi_first - grad phi_second)
    g1 = fields.static(template.push_ids[0]).gradient(pos[start_site])[0]
    g2 = fields.static(template.push_ids[1]).gradient(pos[start_site])[0]
    sign = 1.0 if (g1 - g2) @ (pos[target_site] - pos[start_site]) > 0 else -1.0

    held = {h: template.hold_volts for h in template.hold_ids}
    start = find_total_minimum(fields, drive, species, held, pos[start_site])
    target = find_total_minimum(fields, drive, species, held, pos[target_site])
    secular = _SecularPulses(model, fields, drive, species, template, start, target, sign)
    lo, hi, to_params = _scaled(template)

    # stage one: secular ranking
    theta = rng.random((samples, len(lo)))
    E = secular.energies(to_params(theta))
    order = [i for i in np.argsort(E) if np.isfinite(E[i])][:starts]
    log.info("secular scan: %d of %d settings reach site %d", int(np.isfinite(E).sum()), samples, target_site)
    candidates = []
    for i in order:
        res = optimize.minimize(lambda th: min(float(secular.energies(to_params(th))[0]), 10.0), theta[i],
                                method="Nelder-Mead",
                                options={"maxfev": secular_iterations, "xatol": 1e-4, "fatol": 1e-5})
        candidates.append((float(res.fun), np.clip(res.x, 0, 1)))
        log_.evaluations.append({"stage": "secular", "params": to_params(res.x).tolist(),
                                 "energy_ev": float(res.fun)})
    candidates.sort(key=lambda c: c[0])
    if not candidates or not math.isfinite(candidates[0][0]) or candidates[0][0] >= 10.0:
        raise ShuttleSearchError(
            f"no pulse setting moved the ion from site {start_site} to {target_site} in the secular scan"
        )

    # stage two: RF resolved
    count = 0
    d_lo, d_hi = template.rf_dip_range

    def evaluate(dip, th):
        nonlocal count
        count += 1
        p = to_params(th)
        wf = template.waveform(drive, dip, sign * p[0], p[1], p[2], sign * p[3], p[4])
        res = play_waveform(fields, drive, species, wf, start_site, target_site, sites, None,
                            steps_per_period, damping, model, target_depth)
        log_.evaluations.append({"stage": "rf", "rf_dip": float(dip), "params": p.tolist(),
                                 "success": bool(res.success), "end_site": res.end_site,
                                 "gain_ev": float(res.secular_energy_gain)})
        log.info("shuttle trial dip=%.3f kick=%.1f V brake=%.1f V -> end %s gain %.4g eV", dip, p[0], p[3],
                 res.end_site, res.secular_energy_gain)
        if res.success and res.secular_energy_gain < budget:
            raise _Found(wf)
        return res.secular_energy_gain if res.end_site == target_site else 1e2

    try:
        best = None
        for _, th in candidates:
            # deeper dips leave less energy behind, so they are tried first
            for dip in np.linspace(d_lo, d_hi, 3):
                if count >= max_evaluations:
                    break
                gain = evaluate(dip, th)
                if best is None or gain < best[0]:
                    best = (gain, dip, th)
        if best is not None and best[0] < 1e2 and count < max_evaluations:
            x0 = np.concatenate([[(best[1] - d_lo) / (d_hi - d_lo)], best[2]])

            def cost(x):
                if count >= max_evaluations:
                    return 1e3
                return evaluate(d_lo + (d_hi - d_lo) * float(np.clip(x[0], 0, 1)), x[1:])

            simplex = [x0] + [x0 + 0.05 * np.eye(len(x0))[j] for j in range(len(x0))]
            optimize.minimize(cost, x0, method="Nelder-Mead",
                              options={"maxfev": max_evaluations - count, "initial_simplex": simplex})
    except _Found as found:
        return found.waveform
    raise ShuttleSearchError(
        f"no waveform moved the ion from site {start_site} to {target_site} within {count} RF evaluations"
    )


class _Found(Exception):
    def __init__(self, waveform):
        self.waveform = waveform


# --------------------------------------------------------------------------
# micromotion


@dataclass(frozen=True)
class MicromotionResult:
    equilibrium: np.ndarray
    displacement: np.ndarray
    axis_displacement: np.ndarray  # along the principal axes
    amplitude: np.ndarray  # per principal axis, meters
    principal_axes: np.ndarray
    mathieu_q: np.ndarray
    nonlinear: bool


def micromotion_amplitude(fields, drive, species, site, stray_field, static_voltages=None,
                          max_iter: int = 50) -> MicromotionResult:
    """Equilibrium shift under a uniform stray field and the resulting micromotion.

    The stray field adds a force ``charge * E``; the new equilibrium solves
    ``grad U = charge * E`` and the micromotion amplitude along each
    principal axis is ``q_i * dx_i / 2``.
    """
    pos = np.asarray(site.position if isinstance(site, TrapSite) else site, dtype=float)
    E = np.asarray(stray_field, dtype=float).reshape(3)
    F = species.charge * E
    x = pos.copy()
    for _ in range(max_iter):
        r = total_gradient(fields, drive, species, static_voltages, x)[0] - F
        H = total_hessian(fields, drive, species, static_voltages, x)
        step = -np.linalg.solve(H, r)
        x = x + step
        if np.linalg.norm(step) < 1e-13:
            break
    dx = x - pos
    modes = secular_frequencies(fields, drive, species, pos, static_voltages)
    q, _ = stability_params(drive, species, modes.frequencies)
    along = modes.axes.T @ dx
    amp = q * np.abs(along) / 2.0
    layout = fields.layout
    limit = 0.25 * characteristic_length(layout) if layout is not None else math.inf
    nonlinear = bool(np.linalg.norm(dx) > limit)
    if nonlinear:
        warnings.warn("stray-field displacement exceeds the harmonic region", stacklevel=2)
    return MicromotionResult(x, dx, along, amp, modes.axes, q, nonlinear)
