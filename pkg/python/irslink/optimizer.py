"""
Joint BS/IRS beamforming.

The BS beam is the dominant eigenvector of T. The IRS phases follow a
projected-gradient ascent on P(ξ) = wᴴT(ξ)w, where the unit-modulus
constraint is relaxed to an ℓp ball handled by a log barrier, and the
iterate is projected back onto unit modulus only at the end.
"""

import logging
import math
from dataclasses import dataclass, field
from typing import List, Optional, Tuple

import numpy as np
from scipy.optimize import minimize_scalar

from .beamforming import (
    DampedMatrices,
    LinkPowerTerms,
    assemble_T,
    bs_beam,
    compute_damped_matrices,
    link_power_terms,
)
from .channel import cascade_los, dbm_to_linear, scene_from_config
from .config import OptimizerParams, SystemConfig
from .errors import BarrierDomainError, DomainError
from .estimation import AngleEstimate
from .geometry import SceneGeometry

logger = logging.getLogger("IRSLink.Optimizer")

_TINY = 1e-300


def unit_phase(x: np.ndarray) -> np.ndarray:
    """exp(j·angle(x)) elementwise, with exp(j0) = 1 where x is zero."""
    mag = np.abs(x)
    return np.divide(x, mag, out=np.ones(x.shape, dtype=complex), where=mag != 0)


def p_norm(x: np.ndarray, p: int) -> float:
    mag = np.abs(x)
    peak = float(mag.max()) if mag.size else 0.0
    if peak == 0.0:
        return 0.0
    return peak * float(np.sum((mag / peak) ** p)) ** (1.0 / p)


@dataclass(frozen=True)
class IrsPowerModel:
    """
    P(ξ) = ξᴴQξ + 2·cross·Re(ξᴴu) + const for a fixed BS beam w.

    Q = β(B ⊙ v*vᵀ) with v = H̄w, u = v* ⊙ Cw, const = β_U·wᴴAw + σ²_NLOS·‖w‖².
    """
    Q: np.ndarray
    u: np.ndarray
    cross: float
    const: float

    @classmethod
    def from_beam(
        cls,
        w: np.ndarray,
        dm: DampedMatrices,
        h_bar: np.ndarray,
        terms: LinkPowerTerms,
    ) -> "IrsPowerModel":
        w = np.asarray(w, dtype=complex)
        v = h_bar @ w
        Q = terms.beta_cascade * dm.B * np.outer(np.conj(v), v)
        u = np.conj(v) * (dm.C @ w)
        const = terms.beta_direct * float(np.real(np.vdot(w, dm.A @ w))) + terms.sigma_nlos_sq * float(
            np.real(np.vdot(w, w))
        )
        return cls(Q=Q, u=u, cross=terms.cross_weight, const=const)

    def scaled(self, factor: float) -> "IrsPowerModel":
        return IrsPowerModel(Q=self.Q * factor, u=self.u * factor, cross=self.cross, const=self.const * factor)

    def power(self, xi: np.ndarray) -> float:
        quad = np.real(np.vdot(xi, self.Q @ xi))
        return float(quad + 2.0 * self.cross * np.real(np.vdot(xi, self.u)) + self.const)

    def power_batch(self, X: np.ndarray) -> np.ndarray:
        """P for each row of X (K×M)."""
        quad = np.real(np.einsum("km,mn,kn->k", X.conj(), self.Q, X))
        return quad + 2.0 * self.cross * np.real(X.conj() @ self.u) + self.const

    def gradient(self, xi: np.ndarray) -> np.ndarray:
        """∂P/∂Re ξ + j·∂P/∂Im ξ."""
        return 2.0 * (self.Q @ xi) + 2.0 * self.cross * self.u


def barrier_gradient(xi: np.ndarray, params: OptimizerParams, scale: float = 1.0) -> np.ndarray:
    """
    Gradient of -ln(1 - ‖ξ/c‖_p)/(2κ) in ξ.

    Raises:
        BarrierDomainError: ‖ξ/c‖_p ≥ 1
    """
    xs = np.asarray(xi, dtype=complex) / scale
    norm = p_norm(xs, params.p)
    if norm >= 1.0:
        raise BarrierDomainError(f"ℓ{params.p} norm {norm:.6f} of the scaled IRS vector is outside the barrier domain")
    if norm == 0.0:
        return np.zeros_like(xs)
    zeta = xs * np.abs(xs) ** (params.p - 2)
    return norm ** (1 - params.p) * zeta / (2.0 * params.kappa * (1.0 - norm)) / scale


def irs_objective(
    xi: np.ndarray,
    w: np.ndarray,
    dm: DampedMatrices,
    h_bar: np.ndarray,
    terms: LinkPowerTerms,
) -> float:
    """Expected received power P(ξ) for beam w."""
    return IrsPowerModel.from_beam(w, dm, h_bar, terms).power(np.asarray(xi, dtype=complex))


def irs_barrier_objective(
    xi: np.ndarray,
    w: np.ndarray,
    dm: DampedMatrices,
    h_bar: np.ndarray,
    terms: LinkPowerTerms,
    params: OptimizerParams,
    scale: float = 1.0,
) -> float:
    """G(ξ) = -ln(1 - ‖ξ/c‖_p)/(2κ) - P(ξ), the function the gradient step descends."""
    norm = p_norm(np.asarray(xi, dtype=complex) / scale, params.p)
    if norm >= 1.0:
        raise BarrierDomainError(f"ℓ{params.p} norm {norm:.6f} is outside the barrier domain")
    return -math.log1p(-norm) / (2.0 * params.kappa) - irs_objective(xi, w, dm, h_bar, terms)


def irs_gradient(
    xi: np.ndarray,
    w: np.ndarray,
    dm: DampedMatrices,
    h_bar: np.ndarray,
    terms: LinkPowerTerms,
    params: OptimizerParams,
    scale: float = 1.0,
) -> np.ndarray:
    """
    ∇G(ξ) in the ∂/∂Re + j·∂/∂Im convention.

    Args:
        xi: Point with ‖ξ/scale‖_p < 1
        w: BS beam
        dm: Damped matrices
        h_bar: Cascade LOS matrix
        terms: Large-scale terms
        params: Barrier exponent p and scale κ
        scale: Feasibility rescale c of the barrier argument

    Raises:
        BarrierDomainError: ‖ξ/scale‖_p ≥ 1
    """
    xi = np.asarray(xi, dtype=complex)
    model = IrsPowerModel.from_beam(w, dm, h_bar, terms)
    return barrier_gradient(xi, params, scale) - model.gradient(xi)


def project_tangent(g: np.ndarray, xi: np.ndarray) -> np.ndarray:
    """
    Remove the component of g along ξ: g - (ξᴴg)ξ/‖ξ‖².

    Raises:
        DomainError: ξ is the zero vector
    """
    xi = np.asarray(xi, dtype=complex)
    energy = float(np.real(np.vdot(xi, xi)))
    if energy == 0.0:
        raise DomainError("Cannot project onto the tangent plane at ξ = 0")
    return g - (np.vdot(xi, g) / energy) * xi


def _line_search(
    model: IrsPowerModel,
    xi: np.ndarray,
    direction: np.ndarray,
    grid_points: int,
) -> Tuple[float, float]:
    """Best ϖ in [0, 1] for P at the phase projection of (1-ϖ)ξ + ϖ·d."""
    grid = np.linspace(0.0, 1.0, grid_points)
    candidates = (1.0 - grid)[:, None] * xi[None, :] + grid[:, None] * direction[None, :]
    scores = model.power_batch(unit_phase(candidates))
    best = int(np.argmax(scores))
    step, value = float(grid[best]), float(scores[best])

    lo, hi = grid[max(best - 1, 0)], grid[min(best + 1, grid_points - 1)]
    if hi > lo:
        res = minimize_scalar(
            lambda t: -model.power(unit_phase((1.0 - t) * xi + t * direction)),
            bounds=(lo, hi),
            method="bounded",
            options={"xatol": 1e-8},
        )
        if res.success and -res.fun > value:
            step, value = float(res.x), float(-res.fun)
    return step, value


def optimize_irs(
    w: np.ndarray,
    xi0: np.ndarray,
    dm: DampedMatrices,
    h_bar: np.ndarray,
    terms: LinkPowerTerms,
    params: Optional[OptimizerParams] = None,
) -> Tuple[np.ndarray, List[float]]:
    """
    Projected-gradient IRS phase optimization for a fixed BS beam.

    Each iteration computes ∇G at the current iterate with the barrier
    argument rescaled by c = ‖ξ‖_p(1+δ), projects -∇G onto the tangent plane,
    and moves along √M·g_p/‖g_p‖² by the ϖ that maximizes P at the phase
    projection. The objective is normalized by P(ξ0) internally.

    Returns:
        (unit-modulus ξ, trace of P after every iteration, starting with P(ξ0))
    """
    params = params or OptimizerParams()
    xi = np.asarray(xi0, dtype=complex).copy()
    size = xi.size
    if size == 0:
        return xi, []

    raw = IrsPowerModel.from_beam(w, dm, h_bar, terms)
    norm_scale = raw.power(unit_phase(xi))
    if not norm_scale > 0:
        norm_scale = 1.0
    model = raw.scaled(1.0 / norm_scale)

    current = model.power(unit_phase(xi))
    trace = [current]
    for it in range(params.n_iter_inner):
        c = p_norm(xi, params.p) * (1.0 + params.barrier_margin)
        if c == 0.0:
            raise DomainError("IRS iterate collapsed to zero")
        descent = -(barrier_gradient(xi, params, c) - model.gradient(xi))
        g_p = project_tangent(descent, xi)
        g_norm = float(np.linalg.norm(g_p))
        if g_norm <= 1e-12 * (float(np.linalg.norm(descent)) + _TINY):
            logger.debug(f"Tangent gradient vanished at iteration {it}")
            break
        direction = math.sqrt(size) * g_p / g_norm ** 2
        step, value = _line_search(model, xi, direction, params.line_search_grid)
        if step > 0.0:
            xi = (1.0 - step) * xi + step * direction
        trace.append(value)
        if abs(value - current) <= params.eps * abs(value):
            break
        current = value

    return unit_phase(xi), [p * norm_scale for p in trace]


@dataclass
class BeamformingSolution:
    """Outcome of the BS/IRS alternation."""
    w: np.ndarray
    xi: np.ndarray
    objective_trace: List[float] = field(default_factory=list)
    outer_iterations: int = 0
    converged: bool = False

    @property
    def final_power(self) -> float:
        return self.objective_trace[-1] if self.objective_trace else 0.0

    def snr_trace(self, noise_mw: float) -> List[float]:
        return [p / noise_mw for p in self.objective_trace]


def _relative_change(new: np.ndarray, old: np.ndarray, align: bool = False) -> float:
    ref = float(np.linalg.norm(old))
    if ref == 0.0:
        return 0.0 if float(np.linalg.norm(new)) == 0.0 else math.inf
    if align:
        inner = np.vdot(new, old)
        if inner != 0:
            new = new * (inner / abs(inner))
    return float(np.linalg.norm(new - old)) / ref


def joint_optimize(
    config: SystemConfig,
    estimate: AngleEstimate,
    scene: Optional[SceneGeometry] = None,
) -> BeamformingSolution:
    """
    Alternate the eigen-beam at the BS with IRS phase optimization.

    Starts from ξ = 1 and w = √(P_BS/N)·1. The objective trace gets the
    starting power and then one entry after every half-step; a half-step
    that would lower P is discarded. Stops when w (up to a common phase)
    and ξ both change by less than eps relative, or after n_iter_outer
    rounds. Without an IRS the first BS step is already optimal.
    """
    scene = scene or scene_from_config(config)
    params = config.optimizer
    n, m = config.n_bs, config.m_irs
    p_bs = dbm_to_linear(config.p_bs_dbm)

    dm = compute_damped_matrices(estimate, n, m)
    h_bar = cascade_los(scene, n, m)
    terms = link_power_terms(config, scene)

    xi = np.ones(m, dtype=complex)
    w = math.sqrt(p_bs / n) * np.ones(n, dtype=complex)
    pm = assemble_T(dm, xi, h_bar, terms)
    trace = [pm.power(w)]
    converged = False
    outer = 0

    for outer in range(1, params.n_iter_outer + 1):
        w_new = bs_beam(pm, p_bs)
        p_w = pm.power(w_new)
        if p_w < trace[-1]:
            w_new, p_w = w, trace[-1]
        trace.append(p_w)
        if m == 0:
            w = w_new
            converged = True
            break

        xi_new, _ = optimize_irs(w_new, xi, dm, h_bar, terms, params)
        pm_new = assemble_T(dm, xi_new, h_bar, terms)
        p_xi = pm_new.power(w_new)
        if p_xi < p_w:
            xi_new, pm_new, p_xi = xi, pm, p_w
        trace.append(p_xi)

        dw = _relative_change(w_new, w, align=True)
        dxi = _relative_change(xi_new, xi)
        w, xi, pm = w_new, xi_new, pm_new
        logger.debug(f"Outer iteration {outer}: P={p_xi:.6g}, Δw={dw:.3g}, Δξ={dxi:.3g}")
        if dw < params.eps and dxi < params.eps:
            converged = True
            break

    if not converged:
        logger.info(f"Joint optimization stopped at the cap of {params.n_iter_outer} rounds")
    return BeamformingSolution(w=w, xi=xi, objective_trace=trace, outer_iterations=outer, converged=converged)
