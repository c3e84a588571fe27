"""Block-sparse LMS (BS-LMS) adaptive filter.

The filter minimises the mean square error plus a smoothed mixed
l2,0-norm penalty over equal-size groups of taps. Each iteration is the
plain LMS update plus a *group zero-point attraction* term ``kappa * g(w)``
that pulls every group whose Euclidean norm lies below ``1/alpha`` towards
zero.

Two execution paths implement the same recursion:

* :func:`bs_lms_step` advances a single :class:`FilterState` by one sample,
  for streaming use.
* :func:`run_filter` processes whole input records, optionally a batch of
  independent trials at once (shape ``(B, N)``).

Both share one compiled update, and trials never interact, so a trajectory
is bit-identical whether it runs step by step, alone or inside a batch.

Tap indices are 0-based throughout. When ``L`` is not a multiple of ``P``
the last group is shorter (equivalently, padded with zero taps).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numba
import numpy as np

from .errors import DimensionError, DivergenceError, NumericError, StepSizeError

__all__ = [
    "FilterConfig",
    "FilterState",
    "CoefficientClasses",
    "FilterRun",
    "mixed_l20_norm",
    "group_norms",
    "group_zero_attraction",
    "group_zero_attraction_exact",
    "bs_lms_step",
    "classify_coefficients",
    "mu_max",
    "check_step_size",
    "run_filter",
]


@dataclass(frozen=True)
class FilterConfig:
    """BS-LMS hyperparameters.

    Parameters
    ----------
    L : int
        Number of adaptive taps.
    P : int
        Group partition size, ``1 <= P <= L``. ``P = 1`` is l0-LMS and
        ``P = L`` behaves like LMS once the weight norm exceeds ``1/alpha``.
    mu : float
        Step size.
    alpha : float
        Attraction range; groups with norm below ``1/alpha`` are attracted.
    kappa : float
        Penalty intensity. ``kappa = 0`` gives plain LMS.
    delta : float
        Regulariser added to group norms in the attraction denominator.
    """

    L: int
    P: int
    mu: float
    alpha: float = 1.0
    kappa: float = 0.0
    delta: float = 1e-8

    def __post_init__(self):
        if int(self.L) != self.L or self.L < 1:
            raise ValueError(f"L must be a positive integer, got {self.L!r}")
        if int(self.P) != self.P or not 1 <= self.P <= self.L:
            raise ValueError(f"P must be an integer in [1, L={self.L}], got {self.P!r}")
        if not self.mu > 0:
            raise ValueError(f"mu must be positive, got {self.mu!r}")
        if not self.alpha > 0:
            raise ValueError(f"alpha must be positive, got {self.alpha!r}")
        if not self.kappa >= 0:
            raise ValueError(f"kappa must be non-negative, got {self.kappa!r}")
        if not self.delta >= 0:
            raise ValueError(f"delta must be non-negative, got {self.delta!r}")
        object.__setattr__(self, "L", int(self.L))
        object.__setattr__(self, "P", int(self.P))

    @property
    def padded_length(self) -> int:
        """``L`` rounded up to the next multiple of ``P``."""
        return -(-self.L // self.P) * self.P

    @property
    def n_groups(self) -> int:
        return self.padded_length // self.P

    def replace(self, **changes) -> "FilterConfig":
        params = dict(L=self.L, P=self.P, mu=self.mu, alpha=self.alpha,
                      kappa=self.kappa, delta=self.delta)
        params.update(changes)
        return FilterConfig(**params)


@dataclass
class FilterState:
    """Adaptive weights and input delay line at iteration ``n``.

    ``delay_line[0]`` is the most recent input sample.
    """

    weights: np.ndarray
    delay_line: np.ndarray
    n: int = 0

    @classmethod
    def zeros(cls, cfg: FilterConfig) -> "FilterState":
        return cls(np.zeros(cfg.L), np.zeros(cfg.L), 0)

    def copy(self) -> "FilterState":
        return FilterState(self.weights.copy(), self.delay_line.copy(), self.n)


@dataclass(frozen=True)
class CoefficientClasses:
    """Partition of tap indices by the norm of their group.

    ``large`` holds taps whose group norm is at least ``1/alpha``,
    ``small`` those with group norm in ``(0, 1/alpha)`` and ``zero`` those in
    all-zero groups. ``q`` is the number of taps in nonzero groups.
    """

    large: np.ndarray
    small: np.ndarray
    zero: np.ndarray
    q: int


def _as_vector(u) -> np.ndarray:
    u = np.asarray(u, dtype=float)
    if u.ndim != 1:
        raise DimensionError(f"expected a 1-D vector, got shape {u.shape}")
    return u


def group_norms(u, P: int) -> np.ndarray:
    """Euclidean norm of each length-``P`` group of ``u`` (zero-padded at the tail)."""
    u = np.asarray(u, dtype=float)
    L = u.shape[-1]
    pad = (-L) % P
    if pad:
        u = np.concatenate([u, np.zeros(u.shape[:-1] + (pad,))], axis=-1)
    blocks = u.reshape(u.shape[:-1] + (-1, P))
    return np.sqrt(np.square(blocks).sum(axis=-1))


def mixed_l20_norm(u, P: int) -> int:
    """Number of length-``P`` groups of ``u`` with nonzero Euclidean norm."""
    u = _as_vector(u)
    if P < 1 or u.size % P:
        raise DimensionError(f"vector length {u.size} is not divisible by P={P}")
    return int(np.count_nonzero(group_norms(u, P)))


def _attraction_scale(norms, alpha, delta):
    # per-group factor s such that g_k = s * u_k; zero once norm + delta >= 1/alpha
    with np.errstate(divide="ignore"):
        inv = 1.0 / (norms + delta)
    scale = 2.0 * alpha * (alpha - np.maximum(inv, alpha))
    scale[norms == 0] = 0.0  # all-zero groups feel no attraction, even with delta = 0
    return scale


def group_zero_attraction(u, cfg: FilterConfig) -> np.ndarray:
    """Group zero-point attraction ``g(u)`` as used by the running filter.

    ``g_k = 2 alpha^2 u_k - 2 alpha u_k max(1/(E + delta), alpha)`` where
    ``E`` is the norm of the group holding tap ``k``. Identically zero on
    all-zero groups and on groups with ``E + delta >= 1/alpha``.
    """
    u = _as_vector(u)
    if u.size != cfg.L:
        raise DimensionError(f"expected length {cfg.L}, got {u.size}")
    scale = _attraction_scale(group_norms(u, cfg.P), cfg.alpha, cfg.delta)
    return u * np.repeat(scale, cfg.P)[: cfg.L]


def group_zero_attraction_exact(u, P: int, alpha: float) -> np.ndarray:
    """Piecewise attraction without the ``delta`` regulariser.

    ``g_k = 2 alpha^2 u_k - 2 alpha u_k / E`` for ``0 < E <= 1/alpha`` and
    ``0`` elsewhere. This is the ``delta -> 0`` limit of
    :func:`group_zero_attraction`.
    """
    u = _as_vector(u)
    norms = group_norms(u, P)
    active = (norms > 0) & (norms <= 1.0 / alpha)
    scale = np.zeros_like(norms)
    scale[active] = 2.0 * alpha**2 - 2.0 * alpha / norms[active]
    return u * np.repeat(scale, P)[: u.size]


def classify_coefficients(s, cfg: FilterConfig) -> CoefficientClasses:
    """Split tap indices into large, small and zero classes by group norm."""
    s = _as_vector(s)
    if s.size != cfg.L:
        raise DimensionError(f"expected length {cfg.L}, got {s.size}")
    norms = np.repeat(group_norms(s, cfg.P), cfg.P)[: cfg.L]
    idx = np.arange(cfg.L)
    large = idx[norms >= 1.0 / cfg.alpha]
    small = idx[(norms > 0) & (norms < 1.0 / cfg.alpha)]
    zero = idx[norms == 0]
    return CoefficientClasses(large, small, zero, int(large.size + small.size))


def bs_lms_step(state: FilterState, x_new: float, d: float, cfg: FilterConfig):
    """Advance the filter by one sample.

    Returns the new state and the a-priori error ``e = d - x^T w``. Both the
    error and the attraction term use the pre-update weights.
    """
    if state.weights.shape != (cfg.L,) or state.delay_line.shape != (cfg.L,):
        raise DimensionError(
            f"state dimensions {state.weights.shape}/{state.delay_line.shape} "
            f"do not match L={cfg.L}"
        )
    if not (np.isfinite(x_new) and np.isfinite(d)):
        raise NumericError(f"non-finite input at iteration {state.n}: x={x_new}, d={d}")

    x = np.empty(cfg.L)
    x[0] = x_new
    x[1:] = state.delay_line[:-1]
    w_new = state.weights.copy()
    e = float(_update(w_new, x, float(d), cfg.P, cfg.mu, cfg.kappa, cfg.alpha, cfg.delta))
    if not np.all(np.isfinite(w_new)):
        raise DivergenceError(state.n)
    return FilterState(w_new, x, state.n + 1), e


def mu_max(L: int, sigma_x2: float = 1.0) -> float:
    """Largest stable step size, ``2 / ((L + 2) sigma_x2)``."""
    return 2.0 / ((L + 2) * sigma_x2)


def check_step_size(mu: float, L: int, sigma_x2: float = 1.0) -> None:
    bound = mu_max(L, sigma_x2)
    if not 0 < mu < bound:
        raise StepSizeError(mu, bound)


@dataclass
class FilterRun:
    """Output of :func:`run_filter`.

    ``msd[b, n]`` is ``||w_n - s||^2`` for trial ``b`` *before* the ``n``-th
    update, so ``msd[:, 0] == ||s||^2`` for the zero initialisation.
    """

    weights: np.ndarray
    errors: np.ndarray
    msd: np.ndarray | None = None
    extra: dict = field(default_factory=dict)


def run_filter(x, d, cfg: FilterConfig, system=None, *, sigma_x2=None,
               trial_ids=None) -> FilterRun:
    """Run BS-LMS over one or more input records.

    Parameters
    ----------
    x, d : array_like, shape (N,) or (B, N)
        Input samples and observations. Samples before ``x[..., 0]`` are
        taken as zero.
    cfg : FilterConfig
    system : array_like, shape (L,) or (B, L), optional
        True response; when given, the squared deviation is recorded at
        every iteration.
    sigma_x2 : float, optional
        Input variance. When given the step size is checked against
        ``mu_max`` before running.
    trial_ids : sequence, optional
        Labels attached to a :class:`DivergenceError`.

    Returns
    -------
    FilterRun
        Arrays keep the leading batch axis only if ``x`` had one.
    """
    x = np.asarray(x, dtype=float)
    d = np.asarray(d, dtype=float)
    single = x.ndim == 1
    x = np.atleast_2d(x)
    d = np.atleast_2d(d)
    if x.shape != d.shape:
        raise DimensionError(f"x and d shapes differ: {x.shape} vs {d.shape}")
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(d))):
        raise NumericError("non-finite input sample or observation")
    if sigma_x2 is not None:
        check_step_size(cfg.mu, cfg.L, sigma_x2)

    B, N = x.shape
    L, P = cfg.L, cfg.P

    # reversed, zero-prefixed input: the regressor at time n is a contiguous slice
    z = np.zeros((B, N + L - 1))
    z[:, :N] = x[:, ::-1]
    W = np.zeros((B, L))
    errors = np.empty((B, N))
    if system is None:
        s = np.zeros((1, L))
        msd = np.empty((1, 0))
    else:
        s = np.ascontiguousarray(np.broadcast_to(np.asarray(system, dtype=float), (B, L)))
        msd = np.empty((B, N))

    bad_trial, bad_iter = _kernel(z, d, s, system is not None, P, cfg.mu, cfg.kappa,
                                  cfg.alpha, cfg.delta, W, errors, msd)
    if bad_trial >= 0:
        label = trial_ids[bad_trial] if trial_ids is not None else bad_trial
        raise DivergenceError(bad_iter, label)

    weights = W
    msd = msd if system is not None else None
    if single:
        return FilterRun(weights[0], errors[0], None if msd is None else msd[0])
    return FilterRun(weights, errors, msd)


@numba.njit(cache=True, nogil=True, error_model="numpy")
def _update(w, x, d, P, mu, kappa, alpha, delta):
    # One in-place BS-LMS update of w with regressor x; returns the a-priori error.
    # Both the single-step API and the batch kernel go through here, so they
    # agree to the last bit.
    L = x.shape[0]
    y = 0.0
    for k in range(L):
        y += x[k] * w[k]
    e = d - y
    step = mu * e
    if kappa == 0.0:
        for k in range(L):
            w[k] += step * x[k]
        return e
    thresh = 1.0 / alpha
    for lo in range(0, L, P):
        hi = min(lo + P, L)
        if P == 1:
            norm = abs(w[lo])
        else:
            acc = 0.0
            for j in range(lo, hi):
                acc += w[j] * w[j]
            norm = math.sqrt(acc)
        # group reads only its own pre-update taps, so in-place is safe
        if norm > 0.0 and norm + delta < thresh:
            # max(1/(E + delta), alpha) == 1/(E + delta) here
            sc = 2.0 * alpha * (alpha - 1.0 / (norm + delta))
            for j in range(lo, hi):
                wj = w[j]
                w[j] = (wj + step * x[j]) + kappa * (wj * sc)
        else:
            for j in range(lo, hi):
                w[j] += step * x[j]
    return e


@numba.njit(cache=True, nogil=True, error_model="numpy")
def _kernel(z, d, s, track, P, mu, kappa, alpha, delta, W, errors, msd):
    # Each trial runs independently, so results do not depend on batching.
    # Returns (trial, iteration) of the first non-finite update, else (-1, -1).
    B, N = d.shape
    L = s.shape[1]
    for b in range(B):
        w = W[b]
        for n in range(N):
            off = N - 1 - n
            if track:
                acc = 0.0
                for k in range(L):
                    t = w[k] - s[b, k]
                    acc += t * t
                msd[b, n] = acc
            errors[b, n] = _update(w, z[b, off:off + L], d[b, n], P, mu, kappa, alpha, delta)
            for k in range(L):
                if not math.isfinite(w[k]):
                    return b, n
    return -1, -1
