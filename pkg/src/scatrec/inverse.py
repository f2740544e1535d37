"""The inverse problem: pointwise coefficient recovery from pairings,
operator-norm estimation between scattering maps, the sigma optimizer and
stability bound, and power recovery by inverting lambda(3, .).

The reconstruction identity: for a narrow Gaussian probe centered at x0,

    <S_a(phi) - phi, phi> = -i sigma^(d+2) lambda(d,p) a(x0)
                            + O(sigma^(d+2+s)) + O(sigma^7),

so a_hat(x0) = -Im(pairing) / (sigma^(d+2) lambda(d,p)) converges to a(x0)
as sigma -> 0.  With a == 1 the same pairing instead estimates lambda(3,p)
itself, and the strict monotonicity of lambda in p turns that estimate into
a power estimate.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np

from .dynamics import (
    CoefficientProfile,
    ScatteringRecord,
    SolveSpec,
    born_final_state,
    scattering_map,
)
from .gaussian import GaussianProbe, probe_field, probe_h1_norm, probe_sobolev_norm
from .special import LambdaInversion, invert_lambda, lambda_const, lambda_range
from .spectral import ComplexField, Space, h1_norm, inner_product

SIGMA_EXPONENT = 4.0 / 9.0  # paper's optimizer sigma ~ eps * (N/M)^(4/9)

ScatteringOracle = Callable[[GaussianProbe], ScatteringRecord]


class RecordRejectedError(RuntimeError):
    """A flagged (non-convergent) record reached a consumer that needs
    accepted data."""


@dataclass(frozen=True)
class ProbeFamily:
    """Widths and centers of the Gaussian probes driving an experiment."""

    sigmas: tuple[float, ...]
    centers: tuple[tuple[float, ...], ...]
    dim: int = 3

    def __post_init__(self):
        if not self.sigmas:
            raise ValueError("probe family needs at least one width")
        if not self.centers:
            raise ValueError("probe family needs at least one center")

    def probes(self) -> list[GaussianProbe]:
        return [
            GaussianProbe(sigma=s, center=c, dim=self.dim)
            for s in self.sigmas
            for c in self.centers
        ]

    def validate_against(self, grid_half_width: float) -> None:
        """Centers must keep >= 4 sigma clearance from the box boundary."""
        worst = max(self.sigmas)
        for c in self.centers:
            margin = grid_half_width - max(abs(v) for v in c)
            if margin < 4.0 * worst:
                raise ValueError(
                    f"center {c} is within 4 sigma of the box boundary "
                    f"(margin {margin:g}, sigma {worst:g})"
                )

    def h1_norms(self) -> list[float]:
        return [probe_h1_norm(pr) for pr in self.probes()]


@dataclass
class StabilityReport:
    sup_diff: float
    op_norm_est: float
    rhs_bound: float
    sigma_used: float
    slopes: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.op_norm_est < 0:
            raise ValueError("operator norm estimate must be nonnegative")


@dataclass(frozen=True)
class SimulatedOracle:
    """Scattering-map evaluator backed by the split-step solver.

    Immutable once configured; evaluating a probe samples it on the grid,
    runs the solve, and returns the ScatteringRecord.  Picklable, so probe
    evaluations can be farmed out to worker processes.
    """

    coeff: CoefficientProfile
    p: float
    T: float
    dt: float
    smallness: float = 3.0
    horizon_tol: float = 1e-3
    scale_dt_with_sigma: float | None = None  # dt = min(dt, scale * sigma^2)

    def solve_spec(self, probe: GaussianProbe) -> SolveSpec:
        dt = self.dt
        if self.scale_dt_with_sigma is not None:
            target = self.scale_dt_with_sigma * probe.sigma ** 2
            if target < dt:
                steps = math.ceil(self.T / target)
                dt = self.T / steps
        return SolveSpec(
            p=self.p,
            coeff=self.coeff,
            T=self.T,
            dt=dt,
            smallness=self.smallness,
            horizon_tol=self.horizon_tol,
        )

    def __call__(self, probe: GaussianProbe) -> ScatteringRecord:
        u_minus = probe_field(probe, self.coeff.grid)
        return scattering_map(u_minus, self.solve_spec(probe), probe=probe)

    def born_record(self, probe: GaussianProbe) -> ScatteringRecord:
        """Born-approximation record on the same grid/window (no solve)."""
        u_minus = probe_field(probe, self.coeff.grid)
        spec = self.solve_spec(probe)
        spec = replace(spec, born_dt=min(spec.dt, probe.sigma ** 2 / 4.0))
        u_plus = born_final_state(u_minus, spec)
        diff = ComplexField(
            u_minus.grid, u_plus.values - u_minus.values, Space.PHYSICAL
        )
        pairing = inner_product(diff, u_minus)
        return ScatteringRecord(
            probe=probe,
            u_plus=u_plus,
            pairing=pairing,
            diagnostics={"born": True},
            accepted=True,
        )


def pairing_functional(record: ScatteringRecord) -> complex:
    """The stored pairing <u_+ - u_-, u_->, unit normalization (no division
    by the probe norm); rejects flagged records."""
    if not record.accepted:
        raise RecordRejectedError(
            "record was flagged (non-convergent or mass-drifting); "
            f"diagnostics: {record.diagnostics}"
        )
    return record.pairing


def reconstruct_point(
    oracle: ScatteringOracle, p: float, sigma: float, x0: Sequence[float], dim: int = 3
) -> float:
    """a_hat(x0) = -Im <S_a(phi)-phi, phi> / (sigma^(d+2) lambda(d,p))."""
    probe = GaussianProbe(sigma=sigma, center=tuple(x0), dim=dim)
    record = oracle(probe)
    pairing = pairing_functional(record)
    lam = lambda_const(dim, p).value
    return -pairing.imag / (sigma ** (dim + 2) * lam)


def _reconstruct_job(args) -> float:
    oracle, p, sigma, center, dim = args
    return reconstruct_point(oracle, p, sigma, center, dim=dim)


def reconstruct_field(
    oracle: ScatteringOracle,
    p: float,
    sigma: float,
    centers: Sequence[Sequence[float]],
    dim: int = 3,
    workers: int = 1,
) -> list[tuple[tuple[float, ...], float]]:
    """Reconstruct a(x0) on a lattice of centers.

    Output order equals input order regardless of worker count; a center
    that fails its gates raises rather than being silently dropped.
    """
    jobs = [(oracle, p, sigma, tuple(c), dim) for c in centers]
    if workers <= 1:
        values = [_reconstruct_job(j) for j in jobs]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            values = list(pool.map(_reconstruct_job, jobs))
    return [(tuple(c), v) for c, v in zip(centers, values)]


def operator_norm_estimate(
    oracle_a: ScatteringOracle,
    oracle_b: ScatteringOracle,
    family: ProbeFamily,
) -> float:
    """max over the family of ||S_a(phi) - S_b(phi)||_{H^1} / ||phi||_{H^1}.

    A finite family gives a lower bound for the Lipschitz constant over the
    full ball; discrete H^1 norms on the simulation grid.
    """
    probes = family.probes()
    if not probes:
        raise ValueError("probe family is empty")
    best = 0.0
    for probe in probes:
        rec_a = oracle_a(probe)
        rec_b = oracle_b(probe)
        diff = ComplexField(
            rec_a.u_plus.grid,
            rec_a.u_plus.values - rec_b.u_plus.values,
            Space.PHYSICAL,
        )
        denom = probe_h1_norm(probe)
        best = max(best, h1_norm(diff) / denom)
    return best


@dataclass(frozen=True)
class SigmaChoice:
    sigma: float
    clamped: bool


def optimal_sigma(
    op_norm: float, w1inf_sum: float, epsilon: float, sigma_min: float = 1e-3
) -> SigmaChoice:
    """sigma = epsilon * (||S_a - S_b|| / (||a||_W + ||b||_W))^(4/9),
    clamped below by the smallest resolvable width."""
    if op_norm < 0:
        raise ValueError("op_norm must be nonnegative")
    if not w1inf_sum > 0:
        raise ValueError("w1inf_sum must be positive")
    if not 0 < epsilon <= 1:
        raise ValueError("epsilon must lie in (0, 1]")
    sigma = epsilon * (op_norm / w1inf_sum) ** SIGMA_EXPONENT
    if sigma < sigma_min:
        return SigmaChoice(sigma=sigma_min, clamped=True)
    return SigmaChoice(sigma=sigma, clamped=False)


def stability_bound_rhs(w1inf_a: float, w1inf_b: float, op_norm: float) -> float:
    """M^(8/9) N^(1/9) + M^(10/9) N^(8/9) with M = ||a||_W + ||b||_W,
    N = ||S_a - S_b||; implicit constant 1 (a shape, not a certified bound)."""
    if min(w1inf_a, w1inf_b, op_norm) < 0:
        raise ValueError("stability bound needs nonnegative inputs")
    m = w1inf_a + w1inf_b
    n = op_norm
    if n == 0.0:
        return 0.0
    return m ** (8.0 / 9.0) * n ** (1.0 / 9.0) + m ** (10.0 / 9.0) * n ** (8.0 / 9.0)


@dataclass(frozen=True)
class PowerEstimate:
    p_hat: float
    lambda_hat: float
    clamped: bool


def estimate_power(
    oracle: ScatteringOracle,
    sigma: float,
    richardson_sigma: float | None = None,
    slack: float = 0.10,
) -> PowerEstimate:
    """Recover the power of a pure nonlinearity |u|^p u from its map.

    Probes are centered at the origin; lambda_hat = -Im(pairing)/sigma^5 is
    inverted through the strictly decreasing lambda(3, .).  Estimates within
    ``slack`` (relative) of the attainable range are clamped; further out is
    a hard error.  ``richardson_sigma`` optionally cancels the leading
    O(sigma^2) pairing bias using a second width (off by default).
    """

    def lam_hat(s: float) -> float:
        probe = GaussianProbe(sigma=s, center=(0.0, 0.0, 0.0), dim=3)
        pairing = pairing_functional(oracle(probe))
        return -pairing.imag / s ** 5

    value = lam_hat(sigma)
    if richardson_sigma is not None:
        other = lam_hat(richardson_sigma)
        s2, r2 = sigma ** 2, richardson_sigma ** 2
        value = (r2 * value - s2 * other) / (r2 - s2)

    lo, hi = lambda_range()
    span_lo, span_hi = lo * (1.0 - slack), hi * (1.0 + slack)
    if not (span_lo <= value <= span_hi):
        raise ValueError(
            f"lambda estimate {value:.4g} is more than {slack:.0%} outside "
            f"the attainable range [{lo:.4g}, {hi:.4g}]"
        )
    inv: LambdaInversion = invert_lambda(value)
    return PowerEstimate(p_hat=inv.p, lambda_hat=value, clamped=inv.clamped)


def probe_duality_norms(probe: GaussianProbe) -> dict[str, float]:
    """Continuum ||phi||_{H^1} and ||phi||_{dot H^{-1}} used in the
    operator-norm duality step (the torus zero mode obstructs a discrete
    dot H^{-1})."""
    return {
        "h1": probe_h1_norm(probe),
        "h_minus_1": probe_sobolev_norm(probe, -1.0),
    }


def default_center_lattice(span: float, count: int, dim: int) -> list[tuple[float, ...]]:
    """count^dim lattice of centers filling [-span, span]^dim."""
    axis = np.linspace(-span, span, count) if count > 1 else np.array([0.0])
    grids = np.meshgrid(*([axis] * dim), indexing="ij")
    pts = np.stack(grids, axis=-1).reshape(-1, dim)
    return [tuple(float(v) for v in row) for row in pts]
