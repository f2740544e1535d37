"""Time integration of (i d_t + Lap) u = a(x) |u|^p u with prescribed
incoming asymptotic state, and extraction of the outgoing state.

Numerical scheme: Strang splitting.  The free half is the exact spectral
propagator; the potential half is the exact pointwise phase rotation
u -> exp(-i dt a |u|^p) u, which is unitary because a is real and |u| is
constant along that flow.  The composition is second order in dt and
conserves the discrete mass to roundoff.

A solve starts from u(-T) = e^{-iT Lap} u_- (the truncated incoming
asymptotic), steps to +T, and the outgoing state is read off as
u_+ = e^{-iT Lap} u(T).  The pairing <u_+ - u_-, u_-> is the basic
observable of the inverse problem: to leading order it equals
-i * integral of a |e^{it Lap} u_-|^(p+2), which concentrates at the probe
center for narrow Gaussians.

Convergence of the horizon truncation is certified at runtime by comparing
the outgoing state extracted at +T/2 and +T (a Cauchy check on the forward
tail; the backward tail matches it by the evenness of the interaction kernel
in time).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
import scipy.fft as _fft

from .spectral import (
    ComplexField,
    GridError,
    Space,
    SpectralGrid,
    h1_norm,
    inner_product,
    lebesgue_norm,
    localization_fraction,
    sobolev_norm,
)
from .special import scattering_exponents

_trapezoid = getattr(np, "trapezoid", None) or np.trapz

DEFAULT_SMALLNESS = 3.0
MASS_DRIFT_TOL = 1e-8
BLOWUP_FACTOR = 10.0


class SolveError(RuntimeError):
    """Solve rejected: gate violated or sentinel tripped."""


class SmallnessError(SolveError):
    """Incoming state fails the H^1 smallness gate."""


class BlowupError(SolveError):
    """A monitored norm exceeded the blow-up sentinel."""


@dataclass
class CoefficientProfile:
    """Real coefficient a(x) sampled on a grid, with certified sup/Lipschitz
    bounds (either supplied or measured by finite differences plus slack)."""

    grid: SpectralGrid
    values: np.ndarray
    sup_norm: float
    lip_norm: float

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != self.grid.shape:
            raise GridError("coefficient samples do not match the grid")
        if self.sup_norm < float(np.abs(self.values).max()) - 1e-12:
            raise ValueError("sup_norm smaller than the sampled maximum")
        if self.lip_norm < 0:
            raise ValueError("lip_norm must be nonnegative")

    @property
    def w1inf_norm(self) -> float:
        """Certified ||a||_{W^{1,inf}} = sup + Lipschitz bound."""
        return self.sup_norm + self.lip_norm

    @classmethod
    def from_function(
        cls,
        grid: SpectralGrid,
        fn: Callable[[np.ndarray], np.ndarray],
        slack: float = 1.05,
    ) -> "CoefficientProfile":
        values = np.asarray(fn(grid.points().reshape(-1, grid.dim)), dtype=float)
        values = values.reshape(grid.shape)
        return cls.from_values(grid, values, slack=slack)

    @classmethod
    def from_values(
        cls, grid: SpectralGrid, values: np.ndarray, slack: float = 1.05
    ) -> "CoefficientProfile":
        values = np.asarray(values, dtype=float).reshape(grid.shape)
        sup = float(np.abs(values).max())
        grad_sq = np.zeros(grid.shape)
        for axis in range(grid.dim):
            di = (np.roll(values, -1, axis=axis) - np.roll(values, 1, axis=axis)) / (
                2.0 * grid.spacing
            )
            grad_sq += di ** 2
        lip = float(np.sqrt(grad_sq.max()))
        return cls(grid=grid, values=values, sup_norm=sup * slack, lip_norm=lip * slack)

    def interpolate(self, points: np.ndarray) -> np.ndarray:
        """Periodic multilinear interpolation at points of shape (m, dim)."""
        g = self.grid
        pts = np.asarray(points, dtype=float).reshape(-1, g.dim)
        n = g.points_per_axis
        frac_idx = (pts + g.half_width) / g.spacing
        base = np.floor(frac_idx).astype(np.int64)
        w_hi = frac_idx - base
        out = np.zeros(len(pts))
        for corner in range(1 << g.dim):
            weight = np.ones(len(pts))
            idx = []
            for axis in range(g.dim):
                hi = (corner >> axis) & 1
                idx.append(np.mod(base[:, axis] + hi, n))
                weight = weight * (w_hi[:, axis] if hi else 1.0 - w_hi[:, axis])
            out += weight * self.values[tuple(idx)]
        return out

    def __call__(self, points: np.ndarray) -> np.ndarray:
        return self.interpolate(points)


def constant_profile(grid: SpectralGrid, value: float) -> CoefficientProfile:
    return CoefficientProfile(
        grid=grid,
        values=np.full(grid.shape, float(value)),
        sup_norm=abs(float(value)),
        lip_norm=0.0,
    )


def gaussian_bump_profile(
    grid: SpectralGrid,
    base: float = 1.0,
    amplitude: float = 0.5,
    width: float = 1.0,
    center: tuple[float, ...] | None = None,
) -> CoefficientProfile:
    """a(x) = base + amplitude * exp(-|x-center|^2 / width^2)."""
    c = np.zeros(grid.dim) if center is None else np.asarray(center, dtype=float)
    pts = grid.points()
    r2 = np.sum((pts - c) ** 2, axis=-1)
    values = base + amplitude * np.exp(-r2 / width ** 2)
    # exact bounds: max at the bump, Lipschitz constant of the Gaussian factor
    sup = abs(base) + abs(amplitude)
    lip = abs(amplitude) * math.sqrt(2.0 / math.e) / width
    return CoefficientProfile(grid=grid, values=values, sup_norm=sup, lip_norm=lip)


def cone_bump_profile(
    grid: SpectralGrid,
    base: float = 1.0,
    amplitude: float = 1.0,
    radius: float = 1.0,
    center: tuple[float, ...] | None = None,
) -> CoefficientProfile:
    """Lipschitz-but-not-smooth a(x) = base + amplitude * max(0, 1 - |x-c|/radius)."""
    c = np.zeros(grid.dim) if center is None else np.asarray(center, dtype=float)
    pts = grid.points()
    r = np.sqrt(np.sum((pts - c) ** 2, axis=-1))
    values = base + amplitude * np.maximum(0.0, 1.0 - r / radius)
    return CoefficientProfile(
        grid=grid,
        values=values,
        sup_norm=abs(base) + abs(amplitude),
        lip_norm=abs(amplitude) / radius,
    )


@dataclass
class SolveSpec:
    """Configuration of one scattering solve on the window [-T, T]."""

    p: float
    coeff: CoefficientProfile
    T: float
    dt: float
    snapshot_stride: int = 0
    record_strichartz: bool = False
    sample_stride: int = 10
    smallness: float = DEFAULT_SMALLNESS
    horizon_tol: float = 1e-3
    born_dt: float | None = None

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        if not self.T > 0:
            raise ValueError("T must be positive")
        steps = self.T / self.dt
        if abs(steps - round(steps)) > 1e-9:
            raise ValueError(f"T/dt must be integral, got T={self.T}, dt={self.dt}")
        d = self.coeff.grid.dim
        if d == 3:
            if not (4.0 / 3.0 - 1e-12 <= self.p <= 4.0 + 1e-12):
                raise ValueError(f"d=3 experiments need p in [4/3, 4], got {self.p}")
        elif not self.p > 2.0 / d:
            raise ValueError(f"need p > 2/d = {2.0 / d:.6g}, got {self.p}")

    @property
    def n_steps(self) -> int:
        return int(round(2.0 * self.T / self.dt))


@dataclass
class Trajectory:
    """Recorded output of one solve."""

    spec: SolveSpec
    times: list[float]
    fields: list[ComplexField]
    mass_samples: list[tuple[float, float]]
    strichartz_samples: dict | None
    final: ComplexField
    mass_drift: float

    @property
    def initial(self) -> ComplexField:
        return self.fields[0]


@dataclass
class ScatteringRecord:
    """One probe's worth of inverse-problem data."""

    probe: object | None
    u_plus: ComplexField
    pairing: complex
    diagnostics: dict
    accepted: bool


def _abs_power(values: np.ndarray, p: float) -> np.ndarray:
    if p == 2.0:
        return values.real ** 2 + values.imag ** 2
    return np.abs(values) ** p


def strang_step(
    f: ComplexField, dt: float, coeff: CoefficientProfile, p: float
) -> ComplexField:
    """One Strang step: half potential kick, exact free flight, half kick."""
    f.require(Space.PHYSICAL)
    u = f.values
    a = coeff.values
    phase = _fft.fftn(np.exp(-0.5j * dt * a * _abs_power(u, p)) * u)
    phase *= np.exp(-1j * dt * f.grid.frequency_squares())
    u_new = _fft.ifftn(phase)
    u_new *= np.exp(-0.5j * dt * a * _abs_power(u_new, p))
    return ComplexField(f.grid, u_new, Space.PHYSICAL)


class _Stepper:
    """In-place Strang stepping with precomputed tables."""

    def __init__(self, grid: SpectralGrid, coeff: CoefficientProfile, p: float, dt: float):
        self.free_phase = np.exp(-1j * dt * grid.frequency_squares())
        self.a = coeff.values
        self.p = p
        self.half_dt = 0.5 * dt

    def step(self, u: np.ndarray) -> np.ndarray:
        u = u * np.exp(-1j * self.half_dt * self.a * _abs_power(u, self.p))
        u = _fft.ifftn(self.free_phase * _fft.fftn(u, overwrite_x=True), overwrite_x=True)
        u *= np.exp(-1j * self.half_dt * self.a * _abs_power(u, self.p))
        return u


def _free_apply(grid: SpectralGrid, values: np.ndarray, t: float) -> np.ndarray:
    if t == 0.0:
        return values.copy()
    phase = np.exp(-1j * t * grid.frequency_squares())
    return _fft.ifftn(phase * _fft.fftn(values))


def _strichartz_sample(
    grid: SpectralGrid, u: np.ndarray, r: float, s_c: float
) -> tuple[float, float, float]:
    f = ComplexField(grid, u, Space.PHYSICAL)
    plain = lebesgue_norm(f, r)
    hat = _fft.fftn(u)
    xi = grid.axis_frequencies
    grad_sq = np.zeros(grid.shape)
    for i in range(grid.dim):
        mult = (1j * xi).reshape((1,) * i + (-1,) + (1,) * (grid.dim - 1 - i))
        gi = _fft.ifftn(mult * hat)
        grad_sq += np.abs(gi) ** 2
    grad_mag = ComplexField(grid, np.sqrt(grad_sq).astype(np.complex128), Space.PHYSICAL)
    grad = lebesgue_norm(grad_mag, r)
    if s_c == 0.0:
        crit = plain
    else:
        xi2 = grid.frequency_squares()
        w = xi2 ** (s_c / 2.0)
        w.flat[0] = 0.0
        crit_field = ComplexField(grid, _fft.ifftn(w * hat), Space.PHYSICAL)
        crit = lebesgue_norm(crit_field, r)
    return plain, grad, crit


def solve_from_past(u_minus: ComplexField, spec: SolveSpec) -> Trajectory:
    """Integrate from the incoming asymptotic state u_- across [-T, T].

    The initial condition is u(-T) = e^{-iT Lap} u_-; the trajectory records
    snapshots every ``snapshot_stride`` steps (0 = endpoints only), scalar
    monitors every ``sample_stride`` steps, and fails loudly on gate
    violations or blow-up.
    """
    u_minus.require(Space.PHYSICAL)
    grid = u_minus.grid
    if grid != spec.coeff.grid:
        raise GridError("u_minus and coefficient live on different grids")
    small = h1_norm(u_minus)
    if small >= spec.smallness:
        raise SmallnessError(
            f"||u_-||_H1 = {small:.4g} exceeds the smallness gate {spec.smallness:g}"
        )
    loc = localization_fraction(u_minus, _field_center(u_minus))
    if loc < 1.0 - 1e-8:
        raise SolveError(
            f"u_- not localized: only {loc:.10f} of its mass inside |x-c| <= L/2"
        )

    n_steps = spec.n_steps
    dt = spec.dt
    stepper = _Stepper(grid, spec.coeff, spec.p, dt)

    u = _free_apply(grid, u_minus.values, -spec.T)
    mass0 = float(np.sum(np.abs(u) ** 2)) * grid.cell_volume
    linf0 = float(np.abs(u_minus.values).max())

    exps = scattering_exponents(spec.p) if spec.record_strichartz and grid.dim == 3 else None
    stri: dict | None = None
    if exps is not None:
        stri = {"q": exps.q, "r": exps.r, "s_c": exps.s_c, "times": [], "norms": []}

    times: list[float] = []
    fields: list[ComplexField] = []
    mass_samples: list[tuple[float, float]] = []

    def record(step_idx: int, u_now: np.ndarray) -> None:
        t = -spec.T + step_idx * dt
        take_snap = spec.snapshot_stride > 0 and step_idx % spec.snapshot_stride == 0
        if take_snap or step_idx in (0, n_steps):
            times.append(t)
            fields.append(ComplexField(grid, u_now.copy(), Space.PHYSICAL))
        if step_idx % spec.sample_stride == 0 or step_idx == n_steps:
            mass = float(np.sum(np.abs(u_now) ** 2)) * grid.cell_volume
            mass_samples.append((t, mass))
            linf = float(np.abs(u_now).max())
            if mass > BLOWUP_FACTOR ** 2 * mass0 or linf > BLOWUP_FACTOR * max(linf0, 1e-300):
                raise BlowupError(f"blow-up sentinel tripped at t = {t:.4g}")
            if stri is not None:
                stri["times"].append(t)
                stri["norms"].append(_strichartz_sample(grid, u_now, exps.r, exps.s_c))

    record(0, u)
    for k in range(1, n_steps + 1):
        u = stepper.step(u)
        record(k, u)

    masses = np.array([m for _, m in mass_samples])
    drift = float(np.abs(masses - mass0).max() / mass0)
    return Trajectory(
        spec=spec,
        times=times,
        fields=fields,
        mass_samples=mass_samples,
        strichartz_samples=stri,
        final=ComplexField(grid, u, Space.PHYSICAL),
        mass_drift=drift,
    )


def _field_center(f: ComplexField) -> np.ndarray:
    """Mass centroid, used as the localization reference point."""
    g = f.grid
    w = np.abs(f.values) ** 2
    total = w.sum()
    if total == 0.0:
        return np.zeros(g.dim)
    x = g.axis_coordinates
    return np.array(
        [
            float(
                (w * x.reshape((1,) * i + (-1,) + (1,) * (g.dim - 1 - i))).sum() / total
            )
            for i in range(g.dim)
        ]
    )


def scattering_map(
    u_minus: ComplexField, spec: SolveSpec, probe: object | None = None
) -> ScatteringRecord:
    """Run the solve and extract u_+ = e^{-iT Lap} u(T) plus diagnostics.

    The horizon certificate compares the outgoing state read off at +T/2 and
    +T in relative H^1; records failing it (or drifting in mass) are returned
    flagged, not silently accepted.
    """
    grid = u_minus.grid
    if grid != spec.coeff.grid:
        raise GridError("u_minus and coefficient live on different grids")
    n_steps = spec.n_steps
    half_idx = int(round(0.75 * n_steps))  # step index closest to t = +T/2
    t_half = -spec.T + half_idx * spec.dt
    stepper = _Stepper(grid, spec.coeff, spec.p, spec.dt)

    small = h1_norm(u_minus)
    if small >= spec.smallness:
        raise SmallnessError(
            f"||u_-||_H1 = {small:.4g} exceeds the smallness gate {spec.smallness:g}"
        )
    loc = localization_fraction(u_minus, _field_center(u_minus))
    if loc < 1.0 - 1e-8:
        raise SolveError("u_- not localized within |x - c| <= L/2")

    exps = scattering_exponents(spec.p) if spec.record_strichartz and grid.dim == 3 else None
    stri: dict | None = None
    if exps is not None:
        stri = {"q": exps.q, "r": exps.r, "s_c": exps.s_c, "times": [], "norms": []}

    u = _free_apply(grid, u_minus.values, -spec.T)
    mass0 = float(np.sum(np.abs(u) ** 2)) * grid.cell_volume
    linf0 = float(np.abs(u_minus.values).max())
    tail_minus = 1.0 - localization_fraction(
        ComplexField(grid, u, Space.PHYSICAL), _field_center(u_minus)
    )
    if stri is not None:
        stri["times"].append(-spec.T)
        stri["norms"].append(_strichartz_sample(grid, u, exps.r, exps.s_c))

    u_plus_half: np.ndarray | None = None
    max_drift = 0.0
    for k in range(1, n_steps + 1):
        u = stepper.step(u)
        if k % spec.sample_stride == 0 or k == n_steps:
            mass = float(np.sum(np.abs(u) ** 2)) * grid.cell_volume
            max_drift = max(max_drift, abs(mass - mass0) / mass0)
            linf = float(np.abs(u).max())
            if mass > BLOWUP_FACTOR ** 2 * mass0 or linf > BLOWUP_FACTOR * max(linf0, 1e-300):
                raise BlowupError(f"blow-up sentinel tripped at step {k}")
            if stri is not None:
                t = -spec.T + k * spec.dt
                stri["times"].append(t)
                stri["norms"].append(_strichartz_sample(grid, u, exps.r, exps.s_c))
        if k == half_idx:
            u_plus_half = _free_apply(grid, u, -t_half)

    u_plus_vals = _free_apply(grid, u, -spec.T)
    u_plus = ComplexField(grid, u_plus_vals, Space.PHYSICAL)
    tail_plus = 1.0 - localization_fraction(u_plus, _field_center(u_minus))

    horizon_rel = math.inf
    if u_plus_half is not None:
        diff = ComplexField(grid, u_plus_vals - u_plus_half, Space.PHYSICAL)
        horizon_rel = h1_norm(diff) / max(h1_norm(u_plus), 1e-300)

    pairing = inner_product(
        ComplexField(grid, u_plus_vals - u_minus.values, Space.PHYSICAL), u_minus
    )

    accepted = max_drift <= MASS_DRIFT_TOL and horizon_rel <= spec.horizon_tol
    diagnostics = {
        "mass_drift": max_drift,
        "tail_minus": tail_minus,
        "tail_plus": tail_plus,
        "horizon_rel_diff": horizon_rel,
        "h1_in": small,
        "strichartz": stri,
    }
    return ScatteringRecord(
        probe=probe,
        u_plus=u_plus,
        pairing=pairing,
        diagnostics=diagnostics,
        accepted=accepted,
    )


def born_final_state(u_minus: ComplexField, spec: SolveSpec) -> ComplexField:
    """u_- - i * integral_{-T}^{T} e^{-it Lap} [a |e^{it Lap} u_-|^p e^{it Lap} u_-] dt.

    The trapezoid step is ``spec.born_dt`` (defaulting to ``spec.dt``); the
    integrand is analytic in t with poles at distance ~sigma^2 for Gaussian
    data, so a step of sigma^2/4 already integrates it to near roundoff.
    """
    u_minus.require(Space.PHYSICAL)
    grid = u_minus.grid
    if grid != spec.coeff.grid:
        raise GridError("u_minus and coefficient live on different grids")
    dt_req = spec.born_dt if spec.born_dt is not None else spec.dt
    m = max(2, int(math.ceil(2.0 * spec.T / dt_req)))
    dt = 2.0 * spec.T / m
    xi2 = grid.frequency_squares()
    a = spec.coeff.values
    hat_minus = _fft.fftn(u_minus.values)
    acc = np.zeros_like(hat_minus)
    for k in range(m + 1):
        t = -spec.T + k * dt
        w = dt * (0.5 if k in (0, m) else 1.0)
        u_free = _fft.ifftn(np.exp(-1j * t * xi2) * hat_minus)
        nl = a * _abs_power(u_free, spec.p) * u_free
        acc += w * np.exp(1j * t * xi2) * _fft.fftn(nl)
    return ComplexField(
        grid, u_minus.values - 1j * _fft.ifftn(acc), Space.PHYSICAL
    )


def born_pairing(u_minus: ComplexField, spec: SolveSpec) -> complex:
    """Pairing of the Born final state against u_-."""
    born = born_final_state(u_minus, spec)
    grid = u_minus.grid
    diff = ComplexField(grid, born.values - u_minus.values, Space.PHYSICAL)
    return inner_product(diff, u_minus)


def duhamel_residual(traj: Trajectory, n_checkpoints: int = 4) -> float:
    """Max relative L^2 defect of the integral equation over checkpoints.

    At each checkpoint t the recorded solution is compared against
    e^{i(t+T) Lap} u(-T) - i integral_{-T}^t e^{i(t-s) Lap} a |u|^p u(s) ds,
    with the time integral taken by trapezoid over the recorded snapshots.
    """
    if len(traj.fields) < 3:
        raise ValueError("duhamel residual needs a trajectory with dense snapshots")
    grid = traj.fields[0].grid
    spec = traj.spec
    xi2 = grid.frequency_squares()
    a = spec.coeff.values
    times = traj.times
    ds = times[1] - times[0]
    if not np.allclose(np.diff(times), ds, rtol=1e-9, atol=1e-12):
        raise ValueError("duhamel residual expects uniformly spaced snapshots")

    hat_init = _fft.fftn(traj.fields[0].values)
    n_snap = len(times)
    idxs = sorted(set(np.linspace(1, n_snap - 1, n_checkpoints, dtype=int)))

    hat_nl = []  # e^{+i s |xi|^2} FFT(a |u|^p u(s)) per snapshot
    worst = 0.0
    running = np.zeros_like(hat_init)
    last_added = -1
    for idx in idxs:
        while last_added < idx:
            last_added += 1
            s = times[last_added]
            u_s = traj.fields[last_added].values
            nl_hat = np.exp(1j * s * xi2) * _fft.fftn(a * _abs_power(u_s, spec.p) * u_s)
            hat_nl.append(nl_hat)
            running = running + nl_hat
        t = times[idx]
        integral_hat = ds * (running - 0.5 * hat_nl[0] - 0.5 * hat_nl[idx])
        rhs_hat = np.exp(-1j * (t + spec.T) * xi2) * hat_init - 1j * np.exp(
            -1j * t * xi2
        ) * integral_hat
        u_t = traj.fields[idx].values
        defect = u_t - _fft.ifftn(rhs_hat)
        num = math.sqrt(float(np.sum(np.abs(defect) ** 2)))
        den = math.sqrt(float(np.sum(np.abs(u_t) ** 2)))
        worst = max(worst, num / max(den, 1e-300))
    return worst


def strichartz_ratio(traj_or_record, u_minus: ComplexField, p: float) -> dict[str, float]:
    """Named Strichartz quotients of a recorded solve.

    Returns ||u||_{L^q L^r} / ||u_-||_{L^2}, ||grad u||_{L^q L^r} / ||u_-||_{H^1}
    and || |grad|^{s_c} u ||_{L^q L^r} / ||u_-||_{dot H^{s_c}}, with
    (q, r, s_c) attached to p.
    """
    stri = (
        traj_or_record.strichartz_samples
        if isinstance(traj_or_record, Trajectory)
        else traj_or_record.diagnostics.get("strichartz")
    )
    if not stri or not stri["times"]:
        raise ValueError("strichartz recording was not enabled for this solve")
    if abs(stri["q"] - (p + 2.0)) > 1e-9:
        raise ValueError("power p does not match the recorded exponents")
    q = stri["q"]
    s_c = stri["s_c"]
    times = np.array(stri["times"])
    norms = np.array(stri["norms"])  # columns: plain, grad, critical
    def time_integrate(col: np.ndarray) -> float:
        return float(_trapezoid(col ** q, times) ** (1.0 / q))

    num_plain = time_integrate(norms[:, 0])
    num_grad = time_integrate(norms[:, 1])
    num_crit = time_integrate(norms[:, 2])
    den_l2 = lebesgue_norm(u_minus, 2.0)
    den_h1 = h1_norm(u_minus)
    den_crit = den_l2 if s_c == 0.0 else sobolev_norm(u_minus, s_c, homogeneous=True)
    return {
        "mass": num_plain / den_l2,
        "energy": num_grad / den_h1,
        "critical": num_crit / den_crit,
    }
