"""Four-DOF half-car vertical dynamics and fixed-step RK4 integration.

State layout (SI units) is ``(z_s, theta, z_uf, z_ur, zdot_s, thetadot,
zdot_uf, zdot_ur)``. Pitch follows the deflection terms of the model: the
front suspension deflection is ``z_s - z_uf - l_f*theta`` and the rear one
``z_s - z_ur + l_r*theta``, so a positive ``theta`` lowers the front body
corner and raises the rear one. Tires stay in permanent contact (linear
springs, no liftoff).
"""
from __future__ import annotations

import csv
import math
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Callable, NamedTuple, Protocol

import numpy as np

STATE_NAMES = ("z_s", "theta", "z_uf", "z_ur", "zdot_s", "thetadot", "zdot_uf", "zdot_ur")
CSV_HEADER = ("t",) + STATE_NAMES

DEFAULT_DT = 1e-3
DIVERGENCE_BOUND = 1e6


class SimulationDiverged(RuntimeError):
    def __init__(self, step: int, t: float, component: str, value: float):
        self.step = step
        self.t = t
        self.component = component
        self.value = value
        super().__init__(
            f"state diverged at step {step} (t={t:.6g} s): |{component}| = {value:.6g}"
        )


@dataclass(frozen=True)
class VehicleParams:
    m_s: float
    I_y: float
    l_f: float
    l_r: float
    m_uf: float
    m_ur: float
    k_sf: float
    k_sr: float
    c_sf: float
    c_sr: float
    k_tf: float
    k_tr: float

    def __post_init__(self):
        for f in fields(self):
            v = getattr(self, f.name)
            if not (isinstance(v, (int, float)) and math.isfinite(v) and v > 0):
                raise ValueError(f"vehicle parameter {f.name} must be finite and > 0, got {v!r}")

    @property
    def wheelbase(self) -> float:
        return self.l_f + self.l_r

    def to_dict(self) -> dict[str, float]:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "VehicleParams":
        names = {f.name for f in fields(cls)}
        unknown = set(d) - names
        if unknown:
            raise ValueError(f"unknown vehicle parameters: {sorted(unknown)}")
        missing = names - set(d)
        if missing:
            raise ValueError(f"missing vehicle parameters: {sorted(missing)}")
        return cls(**{k: float(v) for k, v in d.items()})


# Sedan ("ego") and light truck ("front") used for the dynamics comparison.
PRESETS: dict[str, VehicleParams] = {
    "ego": VehicleParams(
        m_s=1200.0, I_y=1800.0, l_f=1.2, l_r=1.5, m_uf=54.0, m_ur=54.0,
        k_sf=18000.0, k_sr=18000.0, c_sf=3200.0, c_sr=3200.0, k_tf=180000.0, k_tr=180000.0,
    ),
    "front": VehicleParams(
        m_s=2600.0, I_y=4800.0, l_f=1.1, l_r=1.9, m_uf=110.0, m_ur=110.0,
        k_sf=52000.0, k_sr=52000.0, c_sf=6500.0, c_sr=6500.0, k_tf=380000.0, k_tr=380000.0,
    ),
}


def preset(name: str) -> VehicleParams:
    try:
        return PRESETS[name]
    except KeyError:
        raise ValueError(f"unknown vehicle preset {name!r}; choose from {sorted(PRESETS)}") from None


class HalfCarState(NamedTuple):
    z_s: float = 0.0
    theta: float = 0.0
    z_uf: float = 0.0
    z_ur: float = 0.0
    zdot_s: float = 0.0
    thetadot: float = 0.0
    zdot_uf: float = 0.0
    zdot_ur: float = 0.0

    @classmethod
    def from_array(cls, arr) -> "HalfCarState":
        arr = np.asarray(arr, dtype=float)
        if arr.shape != (8,):
            raise ValueError(f"half-car state needs 8 components, got shape {arr.shape}")
        return cls(*(float(v) for v in arr))


# -- road excitation -------------------------------------------------------


class RoadExcitation(Protocol):
    """Road heights ``(z_rf, z_rr)`` under the front and rear contacts.

    ``__call__`` must accept a scalar or an array of times and return a pair of
    arrays broadcast to the shape of ``t``.
    """

    def __call__(self, t) -> tuple[np.ndarray, np.ndarray]: ...


@dataclass(frozen=True)
class ConstantExcitation:
    z_rf: float = 0.0
    z_rr: float = 0.0

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        return np.full(t.shape, self.z_rf), np.full(t.shape, self.z_rr)

    def describe(self) -> str:
        return f"constant(z_rf={self.z_rf:g}, z_rr={self.z_rr:g})"


@dataclass(frozen=True)
class FunctionExcitation:
    fn: Callable[[np.ndarray], tuple[np.ndarray, np.ndarray]]
    description: str = "function"

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        zf, zr = self.fn(t)
        return np.broadcast_to(np.asarray(zf, float), t.shape), np.broadcast_to(np.asarray(zr, float), t.shape)

    def describe(self) -> str:
        return self.description


@dataclass(frozen=True)
class BumpExcitation:
    """Straight constant-speed pass over a half-sine bump (or dip, if height < 0).

    The front wheel reaches the bump's leading edge at ``t_start``; the rear
    wheel follows ``wheelbase / speed`` seconds later.
    """

    height: float
    length: float
    speed: float
    wheelbase: float
    t_start: float = 0.0

    def __post_init__(self):
        if self.length <= 0 or self.speed <= 0 or self.wheelbase < 0:
            raise ValueError("bump length and speed must be > 0, wheelbase >= 0")

    def _profile(self, s):
        inside = (s >= 0.0) & (s <= self.length)
        return np.where(inside, self.height * np.sin(np.pi * np.clip(s, 0.0, self.length) / self.length), 0.0)

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        s_front = self.speed * (t - self.t_start)
        return self._profile(s_front), self._profile(s_front - self.wheelbase)

    @property
    def delay(self) -> float:
        return self.wheelbase / self.speed

    def describe(self) -> str:
        return (f"half-sine bump(height={self.height:g} m, length={self.length:g} m, "
                f"speed={self.speed:g} m/s, wheelbase={self.wheelbase:g} m, t_start={self.t_start:g} s)")


@dataclass(frozen=True)
class SampledExcitation:
    """Uniformly sampled front/rear heights, linearly interpolated between samples."""

    t0: float
    dt: float
    z_rf: np.ndarray
    z_rr: np.ndarray
    description: str = "sampled"

    def __post_init__(self):
        zf = np.asarray(self.z_rf, dtype=float)
        zr = np.asarray(self.z_rr, dtype=float)
        if zf.ndim != 1 or zf.shape != zr.shape or zf.size < 2:
            raise ValueError("sampled excitation needs two equal-length 1-D series of >= 2 samples")
        if not (self.dt > 0):
            raise ValueError("sample spacing must be > 0")
        if not (np.all(np.isfinite(zf)) and np.all(np.isfinite(zr))):
            raise ValueError("sampled excitation contains non-finite heights")
        object.__setattr__(self, "z_rf", zf)
        object.__setattr__(self, "z_rr", zr)

    @property
    def times(self) -> np.ndarray:
        return self.t0 + self.dt * np.arange(self.z_rf.size)

    @property
    def span(self) -> tuple[float, float]:
        return self.t0, self.t0 + self.dt * (self.z_rf.size - 1)

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        ts = self.times
        return np.interp(t, ts, self.z_rf), np.interp(t, ts, self.z_rr)

    def describe(self) -> str:
        lo, hi = self.span
        return f"{self.description} [{lo:g}, {hi:g}] s @ {self.dt:g} s"


def _describe(excitation) -> str:
    d = getattr(excitation, "describe", None)
    return d() if callable(d) else type(excitation).__name__


# -- dynamics ---------------------------------------------------------------


def _rhs(z_s, th, z_uf, z_ur, v_s, w, v_uf, v_ur, z_rf, z_rr, p: VehicleParams):
    # suspension deflections and deflection rates
    df = z_s - z_uf - p.l_f * th
    dr = z_s - z_ur + p.l_r * th
    dfd = v_s - v_uf - p.l_f * w
    drd = v_s - v_ur + p.l_r * w
    acc_s = (-p.k_sf * df - p.c_sf * dfd - p.k_sr * dr - p.c_sr * drd) / p.m_s
    acc_th = (p.l_f * p.k_sf * df + p.l_f * p.c_sf * dfd - p.l_r * p.k_sr * dr - p.l_r * p.c_sr * drd) / p.I_y
    acc_uf = (p.k_sf * df + p.c_sf * dfd - p.k_tf * (z_uf - z_rf)) / p.m_uf
    acc_ur = (p.k_sr * dr + p.c_sr * drd - p.k_tr * (z_ur - z_rr)) / p.m_ur
    return (v_s, w, v_uf, v_ur, acc_s, acc_th, acc_uf, acc_ur)


def _check_finite(values, what: str):
    for v in values:
        if not math.isfinite(v):
            raise ValueError(f"non-finite {what}: {tuple(values)!r}")


def derivatives(state, excitation_value, params: VehicleParams) -> np.ndarray:
    """Time derivative of the 8-component state for road heights ``(z_rf, z_rr)``."""
    s = tuple(float(v) for v in state)
    if len(s) != 8:
        raise ValueError(f"half-car state needs 8 components, got {len(s)}")
    z_rf, z_rr = (float(v) for v in excitation_value)
    _check_finite(s, "state")
    _check_finite((z_rf, z_rr), "road excitation")
    return np.array(_rhs(*s, z_rf, z_rr, params))


def _rk4_combine(s, dt, k1, k2, k3, k4):
    h6 = dt / 6.0
    return tuple(
        si + h6 * (a + 2.0 * b + 2.0 * c + d) for si, a, b, c, d in zip(s, k1, k2, k3, k4)
    )


def _rk4_tuple(s, dt, r0, rh, r1, p):
    """One classical RK4 step on plain floats; r0/rh/r1 are road pairs at t, t+dt/2, t+dt."""
    h2 = 0.5 * dt
    k1 = _rhs(*s, *r0, p)
    k2 = _rhs(*[a + h2 * b for a, b in zip(s, k1)], *rh, p)
    k3 = _rhs(*[a + h2 * b for a, b in zip(s, k2)], *rh, p)
    k4 = _rhs(*[a + dt * b for a, b in zip(s, k3)], *r1, p)
    return _rk4_combine(s, dt, k1, k2, k3, k4)


def rk4_step(state, t: float, dt: float, excitation: RoadExcitation, params: VehicleParams) -> HalfCarState:
    if not dt > 0:
        raise ValueError(f"dt must be > 0, got {dt}")
    s = tuple(float(v) for v in state)
    _check_finite(s, "state")
    zf, zr = excitation(np.array([t, t + 0.5 * dt, t + dt]))
    zf = [float(v) for v in zf]
    zr = [float(v) for v in zr]
    _check_finite(zf + zr, "road excitation")
    return HalfCarState(*_rk4_tuple(s, dt, (zf[0], zr[0]), (zf[1], zr[1]), (zf[2], zr[2]), params))


def mechanical_energy(state, excitation_value, params: VehicleParams) -> float:
    """Kinetic energy of all masses plus elastic energy of suspension and tire springs (J)."""
    z_s, th, z_uf, z_ur, v_s, w, v_uf, v_ur = (float(v) for v in state)
    z_rf, z_rr = (float(v) for v in excitation_value)
    p = params
    kinetic = 0.5 * (p.m_s * v_s**2 + p.I_y * w**2 + p.m_uf * v_uf**2 + p.m_ur * v_ur**2)
    susp = 0.5 * (p.k_sf * (z_s - z_uf - p.l_f * th) ** 2 + p.k_sr * (z_s - z_ur + p.l_r * th) ** 2)
    tire = 0.5 * (p.k_tf * (z_uf - z_rf) ** 2 + p.k_tr * (z_ur - z_rr) ** 2)
    return kinetic + susp + tire


# -- simulation -------------------------------------------------------------


@dataclass(frozen=True)
class SimulationResult:
    t: np.ndarray
    states: np.ndarray  # (n, 8)
    dt: float
    params: VehicleParams | None = None
    excitation: str = ""
    meta: dict = field(default_factory=dict)

    def __len__(self):
        return self.t.size

    def column(self, name: str) -> np.ndarray:
        return self.states[:, STATE_NAMES.index(name)]

    @property
    def z_s(self) -> np.ndarray:
        return self.states[:, 0]

    @property
    def theta(self) -> np.ndarray:
        return self.states[:, 1]

    def state_at(self, i: int) -> HalfCarState:
        return HalfCarState.from_array(self.states[i])

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            fh.write(",".join(CSV_HEADER) + "\n")
            fmt = ",".join(["%.9g"] * 9)
            for ti, row in zip(self.t, self.states):
                fh.write(fmt % (ti, *row) + "\n")

    @classmethod
    def from_csv(cls, path) -> "SimulationResult":
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            header = tuple(next(reader, ()))
            if header != CSV_HEADER:
                raise ValueError(f"{path}: expected header {','.join(CSV_HEADER)}, got {','.join(header)}")
            rows = np.array([[float(x) for x in r] for r in reader if r], dtype=float)
        if rows.shape[0] < 2:
            raise ValueError(f"{path}: need at least two rows")
        t = rows[:, 0]
        dt = float(np.mean(np.diff(t)))
        return cls(t=t, states=rows[:, 1:], dt=dt, excitation=f"csv:{Path(path).name}")


def time_grid(t_start: float, t_end: float, dt: float) -> np.ndarray:
    """Uniform grid ``t_start + i*dt`` reaching ``t_end``.

    When the span is not an integer multiple of ``dt`` (beyond 1e-9 relative
    slop) the grid is extended by one step past ``t_end``.
    """
    span = t_end - t_start
    n = span / dt
    steps = int(round(n))
    if abs(steps - n) > 1e-9 * max(1.0, n):
        steps = int(math.ceil(n))
    return t_start + dt * np.arange(steps + 1)


def simulate(
    initial,
    excitation: RoadExcitation,
    params: VehicleParams,
    t_end: float,
    dt: float = DEFAULT_DT,
    *,
    t_start: float = 0.0,
    bound: float = DIVERGENCE_BOUND,
) -> SimulationResult:
    """Integrate the half-car model with classical RK4 on a uniform grid.

    Road heights are evaluated once, vectorised, at every step start, midpoint
    and end. Raises :class:`SimulationDiverged` as soon as any state component
    exceeds ``bound`` in magnitude.
    """
    if not dt > 0:
        raise ValueError(f"dt must be > 0, got {dt}")
    if not t_end > t_start:
        raise ValueError(f"t_end must exceed t_start ({t_start}), got {t_end}")
    if dt > t_end - t_start + 1e-12:
        raise ValueError(f"dt={dt} exceeds the simulated span {t_end - t_start}")
    s = tuple(float(v) for v in initial)
    if len(s) != 8:
        raise ValueError(f"half-car state needs 8 components, got {len(s)}")
    _check_finite(s, "initial state")

    t = time_grid(t_start, t_end, dt)
    span = getattr(excitation, "span", None)
    if span is not None:
        lo, hi = span
        tol = 1e-9 * max(1.0, abs(t[-1]))
        if t[0] < lo - tol or t[-1] > hi + tol:
            raise ValueError(
                f"excitation covers [{lo:g}, {hi:g}] s but simulation needs [{t[0]:g}, {t[-1]:g}] s"
            )

    n = t.size
    # road heights at t_i and t_i + dt/2
    zf, zr = excitation(t)
    zfh, zrh = excitation(t[:-1] + 0.5 * dt)
    zf, zr, zfh, zrh = (np.asarray(a, float).tolist() for a in (zf, zr, zfh, zrh))
    _check_finite(zf + zr + zfh + zrh, "road excitation")

    out = np.empty((n, 8))
    out[0] = s
    for i in range(n - 1):
        s = _rk4_tuple(s, dt, (zf[i], zr[i]), (zfh[i], zrh[i]), (zf[i + 1], zr[i + 1]), params)
        m = max(abs(v) if v == v else math.inf for v in s)
        if m > bound:
            k = max(range(8), key=lambda j: abs(s[j]) if s[j] == s[j] else math.inf)
            raise SimulationDiverged(i + 1, float(t[i + 1]), STATE_NAMES[k], s[k])
        out[i + 1] = s
    return SimulationResult(
        t=t, states=out, dt=dt, params=params, excitation=_describe(excitation),
        meta={"t_start": t_start, "t_end": t_end},
    )


def state_space(params: VehicleParams) -> tuple[np.ndarray, np.ndarray]:
    """Matrices ``(A, B)`` of the linear system ``x' = A x + B (z_rf, z_rr)``.

    Assembled from mass, damping and stiffness matrices; used for modal
    analysis and as a cross-check of :func:`derivatives`.
    """
    p = params
    M = np.diag([p.m_s, p.I_y, p.m_uf, p.m_ur])
    # generalised coordinates q = (z_s, theta, z_uf, z_ur); deflections D q
    D = np.array([[1.0, -p.l_f, -1.0, 0.0], [1.0, p.l_r, 0.0, -1.0]])
    Ks = np.diag([p.k_sf, p.k_sr])
    Cs = np.diag([p.c_sf, p.c_sr])
    K = D.T @ Ks @ D + np.diag([0.0, 0.0, p.k_tf, p.k_tr])
    C = D.T @ Cs @ D
    Minv = np.linalg.inv(M)
    A = np.zeros((8, 8))
    A[:4, 4:] = np.eye(4)
    A[4:, :4] = -Minv @ K
    A[4:, 4:] = -Minv @ C
    B = np.zeros((8, 2))
    B[6, 0] = p.k_tf / p.m_uf
    B[7, 1] = p.k_tr / p.m_ur
    return A, B


def natural_frequencies(params: VehicleParams) -> np.ndarray:
    """Damped natural frequencies (Hz) of the oscillatory modes, ascending."""
    A, _ = state_space(params)
    ev = np.linalg.eigvals(A)
    return np.sort(np.unique(np.round(np.abs(ev.imag[ev.imag > 0]) / (2 * np.pi), 12)))
