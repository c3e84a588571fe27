"""Closed-form mean-square performance of BS-LMS under white Gaussian input.

Two levels of prediction are provided.

*Per system* (a known response ``s``): the steady-state MSD as a function
of ``kappa``, the ``kappa`` that minimises it, the steady-state bias, and
the three-mode transient curve ``D_n = sum_i c_i lambda_i^n + D_inf``.

*Averaged over a Markov-Gaussian ensemble*: the minimum steady-state MSD
as a function of the partition size ``P`` (and from it the best ``P``),
and the averaged transient curve with closed-form rates. These replace the
per-system quantities ``Q``, ``G(s)``, ``G'(s)`` and ``||s||^2`` with their
ensemble means.

Violations of the approximation regime are never clamped; they are
attached to the returned objects as :class:`Diagnostic` records.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import NamedTuple

import numpy as np

from .errors import DegenerateTheoryError, StepSizeError
from .filter import FilterConfig, classify_coefficients, group_zero_attraction_exact, mu_max
from .mgmodel import MGParams, border_effect_q, group_occupancy_pmf
from .special import incomplete_gamma_lower

__all__ = [
    "Diagnostic",
    "TheoryConstants",
    "TransientModel",
    "AveragedTheory",
    "KappaOpt",
    "theta",
    "penalty_moments",
    "theory_constants",
    "constants_from_moments",
    "steady_state_msd",
    "kappa_opt",
    "steady_state_bias",
    "omega_solve",
    "transient_model",
    "f_alpha_moments",
    "averaged_theory",
    "ams_msd",
    "p_opt",
    "fast_convergence_condition",
    "fast_convergence_threshold",
    "equalize_step_size",
]

SQRT_8_OVER_PI = math.sqrt(8.0 / math.pi)


@dataclass(frozen=True)
class Diagnostic:
    """A validity-regime warning attached to a theory result."""

    code: str
    message: str


def theta(P: int) -> float:
    """Partition-size constant ``theta(P)``; 1 at ``P = 1``, ``pi/4`` at ``P = 2``.

    Evaluated through log-gamma so large ``P`` does not overflow.
    """
    if int(P) != P or P < 1:
        raise ValueError(f"P must be a positive integer, got {P!r}")
    lg = math.lgamma
    if P % 2:
        k = (P - 1) // 2
        return math.exp(2.0 * lg(k + 1) + (P - 1) * math.log(2.0) - lg(P + 1))
    h = P // 2
    return math.exp(lg(P) + math.log(math.pi) - lg(h + 1) - lg(h) - P * math.log(2.0))


def penalty_moments(s, cfg: FilterConfig):
    """``G(s) = sum g_k(s)^2`` and ``G'(s) = sum s_k g_k(s)`` over small-group taps.

    ``g`` is the attraction without the ``delta`` regulariser; it already
    vanishes outside the small class.
    """
    s = np.asarray(s, dtype=float)
    g = group_zero_attraction_exact(s, cfg.P, cfg.alpha)
    small = classify_coefficients(s, cfg).small
    return float(np.sum(g[small] ** 2)), float(np.dot(s[small], g[small]))


@dataclass(frozen=True)
class TheoryConstants:
    """Derived constants for one system (or for ensemble means).

    ``q``, ``g_s``, ``g_prime_s`` and ``norm2`` are the number of taps in
    nonzero groups, ``G(s)``, ``G'(s)`` and ``||s||^2``; the rest follows
    from them and the filter settings.
    """

    L: int
    P: int
    mu: float
    alpha: float
    sigma_x2: float
    sigma_v2: float
    q: float
    g_s: float
    g_prime_s: float
    norm2: float
    delta_L: float
    delta_Q: float
    delta_0: float
    delta_0_prime: float
    theta_p: float
    beta: tuple
    diagnostics: tuple = ()

    @property
    def mu_max(self) -> float:
        return mu_max(self.L, self.sigma_x2)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["beta"] = list(self.beta)
        d["diagnostics"] = [asdict(x) for x in self.diagnostics]
        return d


def constants_from_moments(L, P, mu, alpha, q, g_s, g_prime_s, sigma_x2, sigma_v2,
                           norm2=float("nan")) -> TheoryConstants:
    """Build :class:`TheoryConstants` from the system summaries directly.

    Raises
    ------
    StepSizeError
        If ``mu`` is outside ``(0, 2/((L+2) sigma_x2))``.
    """
    if not 0 < mu < mu_max(L, sigma_x2):
        raise StepSizeError(mu, mu_max(L, sigma_x2))
    mx = mu * sigma_x2
    dL = 2.0 - (L + 2) * mx
    dQ = 2.0 - (q + 2) * mx
    d0 = 1.0 - mx
    d0p = 2.0 - mx
    th = theta(P)
    a2 = alpha * alpha

    beta0 = mx * d0p * dL * g_s + 4.0 * a2 * dQ * (mx * dL / P + d0 * dQ * th**2 / math.pi)
    beta1 = (d0p * g_s + 4.0 * (L - q) * a2 * (mx / P + 2.0 * d0 * dQ * th**2 / (math.pi * dL))) \
        / (mu * mx * sigma_x2 * dL)
    beta2 = 4.0 * alpha * (L - q) * th / (mx * mx * dL * dL) * math.sqrt(d0 * beta0 / math.pi)
    beta3 = 2.0 * mu * mu * mx * sigma_x2 * sigma_v2 * d0 * dL / beta0

    diags = []
    if not beta0 > 0:
        diags.append(Diagnostic("beta0_nonpositive", f"beta0={beta0:.6g} is not positive"))
    if not beta1 >= beta2 >= 0:
        diags.append(Diagnostic(
            "beta_order", f"expected beta1 >= beta2 >= 0, got beta1={beta1:.6g}, beta2={beta2:.6g}"))
    return TheoryConstants(
        L=int(L), P=int(P), mu=float(mu), alpha=float(alpha),
        sigma_x2=float(sigma_x2), sigma_v2=float(sigma_v2),
        q=float(q), g_s=float(g_s), g_prime_s=float(g_prime_s), norm2=float(norm2),
        delta_L=dL, delta_Q=dQ, delta_0=d0, delta_0_prime=d0p, theta_p=th,
        beta=(beta0, beta1, beta2, beta3), diagnostics=tuple(diags),
    )


def theory_constants(s, cfg: FilterConfig, sigma_x2: float, sigma_v2: float) -> TheoryConstants:
    """Constants for a known response ``s`` identified with ``cfg``."""
    s = np.asarray(s, dtype=float)
    q = classify_coefficients(s, cfg).q
    g_s, g_prime_s = penalty_moments(s, cfg)
    return constants_from_moments(cfg.L, cfg.P, cfg.mu, cfg.alpha, q, g_s, g_prime_s,
                                  sigma_x2, sigma_v2, norm2=float(s @ s))


def steady_state_msd(kappa, consts: TheoryConstants):
    """Steady-state MSD ``mu sigma_v2 L / Delta_L + b1 k^2 - b2 k sqrt(k^2 + b3)``.

    ``kappa`` may be a scalar or an array.
    """
    _, b1, b2, b3 = consts.beta
    k = np.asarray(kappa, dtype=float)
    lms = consts.mu * consts.sigma_v2 * consts.L / consts.delta_L
    out = lms + b1 * k * k - b2 * k * np.sqrt(k * k + b3)
    return float(out) if out.ndim == 0 else out


class KappaOpt(NamedTuple):
    kappa: float
    msd: float


def kappa_opt(consts: TheoryConstants) -> KappaOpt:
    """Penalty intensity minimising :func:`steady_state_msd`, and that minimum.

    Raises
    ------
    DegenerateTheoryError
        When ``beta1 <= beta2`` (no finite minimiser) or ``beta3 <= 0``.
    """
    _, b1, b2, b3 = consts.beta
    if not (b1 > b2 >= 0) or not b3 > 0:
        raise DegenerateTheoryError(
            f"optimal kappa needs beta1 > beta2 >= 0 and beta3 > 0; "
            f"got beta1={b1:.6g}, beta2={b2:.6g}, beta3={b3:.6g}")
    r = (b1 + b2) / (b1 - b2)
    kappa = 0.5 * math.sqrt(b3) * (r**0.25 - r**-0.25)
    lms = consts.mu * consts.sigma_v2 * consts.L / consts.delta_L
    dmin = lms + 0.5 * b3 * (math.sqrt(b1 * b1 - b2 * b2) - b1)
    return KappaOpt(kappa, dmin)


def steady_state_bias(s, cfg: FilterConfig, sigma_x2: float) -> np.ndarray:
    """Mean steady-state misalignment per tap, ``kappa/(mu sigma_x2) g_k(s)``.

    Nonzero only on small-group taps.
    """
    g = group_zero_attraction_exact(np.asarray(s, dtype=float), cfg.P, cfg.alpha)
    return cfg.kappa / (cfg.mu * sigma_x2) * g


def omega_solve(consts: TheoryConstants, kappa: float) -> float:
    """Positive root of the quadratic defining the auxiliary magnitude ``omega``.

    Raises
    ------
    DegenerateTheoryError
        If the quadratic has no positive root.
    """
    c = consts
    mx = c.mu * c.sigma_x2
    qa = 2.0 * mx * c.delta_0 * c.delta_L
    qb = 8.0 * kappa * c.alpha * c.theta_p * c.delta_0 * c.delta_Q / math.sqrt(2.0 * math.pi)
    qc = -2.0 * c.mu * mx * c.sigma_v2 * c.delta_0 \
        - kappa**2 * (4.0 * c.alpha**2 * c.delta_Q / c.P + c.g_s * c.delta_0_prime)
    if not (qa > 0 and qc < 0):
        raise DegenerateTheoryError(
            f"omega quadratic has no unique positive root (a={qa:.6g}, c={qc:.6g})")
    disc = qb * qb - 4.0 * qa * qc
    # cancellation-free form of (-b + sqrt(disc)) / 2a
    return -2.0 * qc / (qb + math.sqrt(disc))


def _attraction_rate(consts: TheoryConstants, kappa: float, omega: float) -> float:
    return consts.theta_p * SQRT_8_OVER_PI * kappa * consts.alpha * consts.delta_0 / omega


def _mode_matrix(consts: TheoryConstants, kappa: float, omega: float) -> np.ndarray:
    c = consts
    mx = c.mu * c.sigma_x2
    rate = _attraction_rate(c, kappa, omega)
    return np.array([
        [1.0 - mx * c.delta_L, -rate],
        [(c.L - c.q) * mx * mx, 1.0 - 2.0 * mx * c.delta_0 - rate],
    ])


def _b00(consts: TheoryConstants, kappa: float, omega: float) -> float:
    c = consts
    mx = c.mu * c.sigma_x2
    return (c.L * c.mu * mx * c.sigma_v2
            + (c.L - c.q) * (4.0 * c.alpha**2 * kappa**2 / c.P
                             - c.theta_p * SQRT_8_OVER_PI * kappa * c.delta_0 * c.alpha * omega)
            + kappa**2 * (c.delta_0_prime - 2.0 * c.delta_0) / mx * c.g_s
            - 2.0 * kappa * c.delta_0 * c.g_prime_s)


def _c3(consts: TheoryConstants, kappa: float, omega: float, det: complex) -> complex:
    c = consts
    mx = c.mu * c.sigma_x2
    num = mx - 2.0 * mx * mx + _attraction_rate(c, kappa, omega)
    return -(2.0 * kappa * c.delta_0 / mx) * num / det * (kappa * c.g_s + mx * c.g_prime_s)


def _c12(l1, l2, l3, c3, norm2, b00, d_inf, consts):
    mx = consts.mu * consts.sigma_x2
    head = (1.0 - mx * consts.delta_L) * norm2 + b00 - d_inf - c3 * l3
    tail = norm2 - c3 - d_inf
    c1 = (head - l2 * tail) / (l1 - l2)
    c2 = (head - l1 * tail) / (l2 - l1)
    return c1, c2


def _curve(n, lambdas, coeffs, d_inf):
    n = np.asarray(n, dtype=float)
    out = np.full(n.shape, d_inf, dtype=complex)
    for lam, c in zip(lambdas, coeffs):
        out = out + c * np.power(complex(lam), n)
    out = out.real
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class TransientModel:
    """Three-mode MSD learning curve for one system."""

    lambdas: tuple
    coeffs: tuple
    d_inf: float
    kappa: float
    omega: float
    diagnostics: tuple = ()

    def curve(self, n):
        """``D_n`` at iteration(s) ``n``."""
        return _curve(n, self.lambdas, self.coeffs, self.d_inf)

    def to_dict(self) -> dict:
        return {
            "lambdas": [_jsonable(v) for v in self.lambdas],
            "coeffs": [_jsonable(v) for v in self.coeffs],
            "d_inf": self.d_inf, "kappa": self.kappa, "omega": self.omega,
            "diagnostics": [asdict(x) for x in self.diagnostics],
        }


def _jsonable(v):
    v = complex(v)
    return v.real if v.imag == 0 else {"re": v.real, "im": v.imag}


def _rate_diagnostics(lambdas, prefix="lambda"):
    diags = []
    for i, lam in enumerate(lambdas, 1):
        lam = complex(lam)
        if lam.imag != 0:
            diags.append(Diagnostic(
                "complex_eigenvalue",
                f"{prefix}{i} = {lam.real:.6g} {lam.imag:+.3g}j (imaginary magnitude {abs(lam.imag):.3g})"))
        if not 0 < lam.real < 1:
            diags.append(Diagnostic(
                "rate_out_of_range",
                f"{prefix}{i} = {lam.real:.6g} outside (0, 1)"
                + ("; divergence predicted" if abs(lam) >= 1 else "")))
    return diags


def transient_model(s, cfg: FilterConfig, sigma_x2: float, sigma_v2: float,
                    kappa: float | None = None) -> TransientModel:
    """Predicted learning curve for identifying ``s`` from ``w_0 = 0``.

    ``kappa`` defaults to ``cfg.kappa``. The two coupled modes are the
    eigenvalues of the 2x2 mode matrix (sorted descending); the third mode
    decays at ``1 - mu sigma_x2``. The coefficients reproduce ``||s||^2`` at
    ``n = 0``.
    """
    kappa = cfg.kappa if kappa is None else float(kappa)
    consts = theory_constants(s, cfg, sigma_x2, sigma_v2)
    omega = omega_solve(consts, kappa)
    A = _mode_matrix(consts, kappa, omega)
    ev = np.linalg.eigvals(A)
    ev = sorted(ev.astype(complex), key=lambda v: (v.real, v.imag), reverse=True)
    l1, l2 = ev
    l3 = consts.delta_0
    det = (l3 - l1) * (l3 - l2)
    c3 = _c3(consts, kappa, omega, det)
    d_inf = steady_state_msd(kappa, consts)
    c1, c2 = _c12(l1, l2, l3, c3, consts.norm2, _b00(consts, kappa, omega), d_inf, consts)

    lambdas = tuple(_real_if_close(v) for v in (l1, l2, l3))
    coeffs = tuple(_real_if_close(v) for v in (c1, c2, c3))
    diags = list(consts.diagnostics) + _rate_diagnostics(lambdas)
    return TransientModel(lambdas, coeffs, d_inf, kappa, omega, tuple(diags))


def _real_if_close(v):
    v = complex(v)
    return v.real if v.imag == 0 else v


def f_alpha_moments(m: int, alpha: float, sigma_s: float):
    """Means of ``sum g_k^2`` and ``sum s_k g_k`` over one small group of ``m`` Gaussian taps.

    The taps are i.i.d. ``N(0, sigma_s^2)`` and the group counts only when
    its norm is below ``1/alpha``; with ``r^2 ~ sigma_s^2 chi^2_m`` the
    truncated moments reduce to lower incomplete gamma functions at
    ``x = 1/(2 alpha^2 sigma_s^2)``.
    """
    if int(m) != m or m < 1:
        raise ValueError(f"m must be a positive integer, got {m!r}")
    x = 1.0 / (2.0 * alpha**2 * sigma_s**2)
    inv_gamma = math.exp(-math.lgamma(m / 2.0))
    g0 = incomplete_gamma_lower(m / 2.0, x)
    g1 = incomplete_gamma_lower((m + 1) / 2.0, x)
    g2 = incomplete_gamma_lower((m + 2) / 2.0, x)
    root2 = math.sqrt(2.0)
    F = 4.0 * alpha**2 * inv_gamma * (
        2.0 * alpha**2 * sigma_s**2 * g2 + g0 - 2.0 * root2 * alpha * sigma_s * g1)
    F_prime = inv_gamma * (4.0 * alpha**2 * sigma_s**2 * g2 - 2.0 * root2 * alpha * sigma_s * g1)
    return F, F_prime


@dataclass(frozen=True)
class AveragedTheory:
    """Ensemble-averaged predictions for one partition size."""

    params: MGParams
    P: int
    mu: float
    alpha: float
    sigma_x2: float
    sigma_v2: float
    q_bar: float
    delta_q_bar: float
    g_bar: float
    g_prime_bar: float
    norm2_bar: float
    ams_msd: float
    lambdas_prime: tuple
    coeffs_prime: tuple
    kappa: float = float("nan")
    omega: float = float("nan")
    diagnostics: tuple = field(default=())

    def curve(self, n):
        """Averaged minimum MSD at iteration(s) ``n``."""
        return _curve(n, self.lambdas_prime, self.coeffs_prime, self.ams_msd)

    def to_dict(self) -> dict:
        d = {k: getattr(self, k) for k in (
            "P", "mu", "alpha", "sigma_x2", "sigma_v2", "q_bar", "delta_q_bar", "g_bar",
            "g_prime_bar", "norm2_bar", "ams_msd", "kappa", "omega")}
        d["params"] = asdict(self.params)
        d["lambdas_prime"] = [_jsonable(v) for v in self.lambdas_prime]
        d["coeffs_prime"] = [_jsonable(v) for v in self.coeffs_prime]
        d["diagnostics"] = [asdict(x) for x in self.diagnostics]
        return d


def _penalty_means(params: MGParams, P: int, alpha: float):
    pmf = group_occupancy_pmf(params, P)
    sigma_s = math.sqrt(params.sigma_s2)
    F = np.array([f_alpha_moments(m, alpha, sigma_s) for m in range(1, P + 1)])
    scale = params.L / P
    return scale * float(pmf[1:] @ F[:, 0]), scale * float(pmf[1:] @ F[:, 1])


def ams_msd(params: MGParams, P: int, mu: float, alpha: float = 1.0,
            sigma_x2: float = 1.0, sigma_v2: float = 1.0) -> float:
    """Averaged minimum steady-state MSD for partition size ``P``."""
    L = params.L
    if not 0 < mu < mu_max(L, sigma_x2):
        raise StepSizeError(mu, mu_max(L, sigma_x2))
    q_bar = border_effect_q(params, P)
    dq = 2.0 - (q_bar + 2.0) * mu * sigma_x2
    g_bar, _ = _penalty_means(params, P, alpha)
    return mu * sigma_v2 / dq * (q_bar + math.sqrt(2.0 * math.pi * (L - q_bar) * g_bar)
                                 / (alpha * theta(P) * dq))


def averaged_theory(params: MGParams, P: int, mu: float, alpha: float = 1.0,
                    sigma_x2: float = 1.0, sigma_v2: float = 1.0) -> AveragedTheory:
    """Averaged steady-state and transient predictions over the M-G ensemble.

    The transient coefficients use the same expressions as the per-system
    model with ``Q``, ``G``, ``G'`` and ``||s||^2`` replaced by their means
    and ``kappa`` set to the optimum computed from those means.
    """
    L = params.L
    q_bar = border_effect_q(params, P)
    g_bar, gp_bar = _penalty_means(params, P, alpha)
    norm2_bar = L * params.sparsity * params.sigma_s2
    d_min = ams_msd(params, P, mu, alpha, sigma_x2, sigma_v2)
    dq = 2.0 - (q_bar + 2.0) * mu * sigma_x2
    th = theta(P)
    mx = mu * sigma_x2

    lam1 = 1.0 - 2.0 * mx
    lam2 = 1.0 - 2.0 * mx * alpha * th * math.sqrt(2.0 * (L - q_bar) / (math.pi * g_bar)) \
        if g_bar > 0 else float("-inf")
    lam3 = 1.0 - mx

    diags = []
    if not (10.0 <= q_bar <= L / 5.0):
        diags.append(Diagnostic(
            "sparse_regime", f"expected 2 << Q_bar << L, got Q_bar={q_bar:.4g} with L={L}"))
    diags += _rate_diagnostics((lam1, lam2, lam3), prefix="lambda'")

    consts = constants_from_moments(L, P, mu, alpha, q_bar, g_bar, gp_bar, sigma_x2, sigma_v2,
                                    norm2=norm2_bar)
    diags += list(consts.diagnostics)
    kappa = omega = float("nan")
    coeffs = (float("nan"),) * 3
    try:
        kappa = kappa_opt(consts).kappa
        omega = omega_solve(consts, kappa)
        A = _mode_matrix(consts, kappa, omega)
        det = float(np.linalg.det(lam3 * np.eye(2) - A))
        c3 = _c3(consts, kappa, omega, det)
        c1, c2 = _c12(lam1, lam2, lam3, c3, norm2_bar, _b00(consts, kappa, omega), d_min, consts)
        coeffs = (c1, c2, c3)
    except DegenerateTheoryError as exc:
        diags.append(Diagnostic("degenerate", str(exc)))

    return AveragedTheory(
        params=params, P=int(P), mu=float(mu), alpha=float(alpha),
        sigma_x2=float(sigma_x2), sigma_v2=float(sigma_v2),
        q_bar=q_bar, delta_q_bar=dq, g_bar=g_bar, g_prime_bar=gp_bar, norm2_bar=norm2_bar,
        ams_msd=d_min, lambdas_prime=(lam1, lam2, lam3), coeffs_prime=coeffs,
        kappa=kappa, omega=omega, diagnostics=tuple(diags),
    )


def p_opt(params: MGParams, mu: float, alpha: float = 1.0, sigma_x2: float = 1.0,
          sigma_v2: float = 1.0, p_max: int = 50) -> int:
    """Partition size in ``1..p_max`` minimising :func:`ams_msd` (ties go to the smaller)."""
    if not 1 <= p_max <= params.L:
        raise ValueError(f"p_max must lie in [1, L={params.L}], got {p_max}")
    values = [ams_msd(params, P, mu, alpha, sigma_x2, sigma_v2) for P in range(1, p_max + 1)]
    return int(np.argmin(values)) + 1


def fast_convergence_threshold() -> float:
    """Right-hand side ``1 / (3 (1 - e^-1))`` of the faster-convergence condition."""
    return 1.0 / (3.0 * (1.0 - math.exp(-1.0)))


def fast_convergence_condition(params: MGParams) -> bool:
    """Sufficient condition for BS-LMS at the best ``P`` to beat l0-LMS on every rate."""
    return (1.0 - params.p1) / (1.0 - params.p2) ** 2 >= fast_convergence_threshold()


def equalize_step_size(params: MGParams, P: int, target: float, alpha: float = 1.0,
                       sigma_x2: float = 1.0, sigma_v2: float = 1.0,
                       rtol: float = 1e-12) -> float:
    """Step size at which :func:`ams_msd` for ``P`` equals ``target``.

    The averaged MSD increases with ``mu``, so plain bisection on
    ``(0, mu_max)`` suffices.
    """
    hi = mu_max(params.L, sigma_x2) * (1.0 - 1e-9)
    lo = 0.0

    def f(mu):
        return ams_msd(params, P, mu, alpha, sigma_x2, sigma_v2) - target

    if f(hi) < 0:
        raise DegenerateTheoryError(
            f"target MSD {target:.6g} unreachable below mu_max for P={P}")
    while hi - lo > rtol * hi:
        mid = 0.5 * (lo + hi)
        if f(mid) < 0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)
