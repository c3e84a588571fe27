"""Markov-Gaussian generator of block-sparse impulse responses.

The support of a response of length ``L`` follows a two-state Markov chain
(zero / nonzero) started from an imaginary zero tap ``s_0 = 0``:

    P{s_k = 0  | s_{k-1} = 0 } = p1
    P{s_k != 0 | s_{k-1} != 0} = p2

and every nonzero amplitude is drawn i.i.d. from ``N(0, sigma_s2)``. Values
close to 1 for both probabilities, with ``1 - p2 >> 1 - p1``, produce sparse
responses made of a few clusters.

Besides generation, the module gives the closed-form ensemble quantities used
by the averaged theory: sparsity and mean run lengths, the expected number of
taps inside nonzero groups of size ``P`` (border effect), the law of the number
of nonzero taps in one group, and the equivalent Ising-model parameters.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass

import numpy as np

__all__ = [
    "MGParams",
    "EnsembleStats",
    "generate_system",
    "generate_systems",
    "system_seed",
    "ensemble_stats",
    "border_effect_q",
    "group_occupancy_pmf",
    "ising_parameters",
    "system_to_json",
]


@dataclass(frozen=True)
class MGParams:
    """Markov-Gaussian model ``M(L, p1, p2, sigma_s2)``."""

    L: int
    p1: float
    p2: float
    sigma_s2: float = 1.0

    def __post_init__(self):
        if int(self.L) != self.L or self.L < 1:
            raise ValueError(f"L must be a positive integer, got {self.L!r}")
        for name in ("p1", "p2"):
            p = getattr(self, name)
            if not 0.0 < p < 1.0:
                raise ValueError(f"{name} must lie in (0, 1), got {p!r}")
        if not self.sigma_s2 > 0:
            raise ValueError(f"sigma_s2 must be positive, got {self.sigma_s2!r}")
        object.__setattr__(self, "L", int(self.L))

    @property
    def sparsity(self) -> float:
        """Stationary probability that a tap is nonzero."""
        return (1.0 - self.p1) / (2.0 - self.p1 - self.p2)


@dataclass(frozen=True)
class EnsembleStats:
    s_bar: float
    b_nz_bar: float
    b_z_bar: float


def system_seed(seed, index: int) -> np.random.SeedSequence:
    """Seed of system ``index`` in a batch generated from ``seed``.

    Depends only on ``(seed, index)`` so any member of a batch can be
    regenerated on its own.
    """
    return np.random.SeedSequence(seed, spawn_key=(0, int(index)))


def _sample_support(params: MGParams, rng: np.random.Generator) -> np.ndarray:
    u = rng.random(params.L)
    support = np.empty(params.L, dtype=bool)
    nonzero = False  # s_0 is fixed to zero
    p1, p2 = params.p1, params.p2
    for k in range(params.L):
        nonzero = u[k] < p2 if nonzero else u[k] >= p1
        support[k] = nonzero
    return support


def generate_system(params: MGParams, seed=None) -> np.ndarray:
    """Draw one impulse response of length ``params.L``.

    ``seed`` may be anything accepted by :func:`numpy.random.default_rng`
    (int, ``SeedSequence``, ``Generator``). A fixed seed gives a fixed vector.
    """
    rng = np.random.default_rng(seed)
    support = _sample_support(params, rng)
    s = np.zeros(params.L)
    amps = rng.standard_normal(params.L) * np.sqrt(params.sigma_s2)
    s[support] = amps[support]
    return s


def generate_systems(params: MGParams, count: int, seed=0) -> np.ndarray:
    """Draw ``count`` independent responses, shape ``(count, L)``.

    Row ``i`` equals ``generate_system(params, system_seed(seed, i))``.
    """
    out = np.zeros((count, params.L))
    for i in range(count):
        out[i] = generate_system(params, system_seed(seed, i))
    return out


def ensemble_stats(params: MGParams) -> EnsembleStats:
    """Mean nonzero fraction and mean lengths of nonzero and zero runs."""
    return EnsembleStats(
        s_bar=params.sparsity,
        b_nz_bar=1.0 / (1.0 - params.p2),
        b_z_bar=1.0 / (1.0 - params.p1),
    )


def border_effect_q(params: MGParams, P: int) -> float:
    """Expected number of taps lying in nonzero groups of size ``P``.

    ``Q = L (1 - (1 - S) p1^(P-1))``, which grows with ``P`` as more zero taps
    share a group with a nonzero one.
    """
    if P < 1:
        raise ValueError(f"P must be >= 1, got {P}")
    return params.L * (1.0 - (1.0 - params.sparsity) * params.p1 ** (P - 1))


def group_occupancy_pmf(params: MGParams, P: int) -> np.ndarray:
    """Probability that a group of ``P`` taps holds ``m`` nonzero taps, ``m = 0..P``.

    The all-zero and all-nonzero cases are the exact stationary-chain
    probabilities; the mass left for ``0 < m < P`` is spread geometrically
    with ratio ``p2/p1``. For ``p1 == p2`` the ratio is 1 and the spread is
    uniform, which is the continuous limit.
    """
    if P < 1:
        raise ValueError(f"P must be >= 1, got {P}")
    p1, p2 = params.p1, params.p2
    denom = 2.0 - p1 - p2
    pmf = np.zeros(P + 1)
    pmf[0] = (1.0 - p2) / denom * p1 ** (P - 1)
    pmf[P] += (1.0 - p1) / denom * p2 ** (P - 1)
    if P > 1:
        rest = 1.0 - pmf[0] - pmf[P]
        r = p2 / p1
        m = np.arange(1, P)
        if np.isclose(r, 1.0, rtol=0.0, atol=1e-12):
            weights = np.full(P - 1, 1.0 / (P - 1))
        else:
            weights = (1.0 - r) / (1.0 - r ** (P - 1)) * r ** (m - 1)
        pmf[1:P] = rest * weights
    return pmf


def ising_parameters(params: MGParams):
    """Field and coupling parameters of the equivalent Ising model.

    Returns ``(zeta, zeta_prime)`` with lengths ``L`` and ``L - 1`` for
    spins ``+1`` (nonzero tap) and ``-1`` (zero tap). The normaliser is not
    computed.
    """
    p1, p2, L = params.p1, params.p2, params.L
    zeta = np.full(L, 0.5 * np.log(p2 / p1))
    edge = 0.25 * np.log(p2 * (1.0 - p1) / (p1 * (1.0 - p2)))
    zeta[0] = edge
    zeta[-1] = edge
    coupling = 0.25 * np.log(p1 * p2 / ((1.0 - p1) * (1.0 - p2)))
    return zeta, np.full(L - 1, coupling)


def system_to_json(params: MGParams, seed, values) -> str:
    """Serialise a generated response as ``{"params", "seed", "values"}``."""
    if isinstance(seed, np.random.SeedSequence):
        seed = {"entropy": seed.entropy, "spawn_key": list(seed.spawn_key)}
    return json.dumps({"params": asdict(params), "seed": seed,
                       "values": [float(v) for v in np.asarray(values)]})
