"""
Local differential privacy primitives.

Bounded Laplace sampling for continuous attributes, randomized response for
Boolean attributes, and a ledger that sums the privacy budget of a session
(sequential composition).

All randomness flows through an explicit RandomSource so every draw can be
replayed from a seed.
"""

import hashlib
import math
import threading
from dataclasses import dataclass, field
from typing import List, Optional, Tuple

import numpy as np
from scipy import integrate, stats

from src.core.errors import InvalidInputError, InvalidParamsError
from utils.logging_utils import get_logger

logger = get_logger(__name__)

# Redraws per sample before the rejection sampler gives up and clamps
MAX_REDRAWS = 1000

# Noise granularity as a fraction of the sensitivity
SNAP_FRACTION = 2.0 ** -32

# Number of samples that hit MAX_REDRAWS since the process started
fallback_count = 0
_fallback_lock = threading.Lock()


@dataclass(frozen=True)
class PrivacyParams:
    """Epsilon and semantic bounds of one attribute; sensitivity is the full range."""

    epsilon: float
    lower: float
    upper: float

    def __post_init__(self):
        if not all(math.isfinite(v) for v in (self.epsilon, self.lower, self.upper)):
            raise InvalidParamsError(f"Privacy parameters must be finite: {self}")
        if self.epsilon <= 0:
            raise InvalidParamsError(f"epsilon must be positive, got {self.epsilon}")
        if not self.lower < self.upper:
            raise InvalidParamsError(f"lower bound {self.lower} must be below upper bound {self.upper}")

    @property
    def sensitivity(self) -> float:
        return self.upper - self.lower

    @property
    def scale(self) -> float:
        """Laplace scale b = sensitivity / epsilon."""
        return self.sensitivity / self.epsilon

    def clamp(self, value):
        return np.clip(value, self.lower, self.upper)


class RandomSource:
    """
    Seeded, replayable random stream.

    A RandomSource is single-owner. Independent streams for sessions or
    attributes are obtained with derive(), which hashes the parent seed with
    the given keys so that the child does not depend on how much of the parent
    has been consumed.
    """

    def __init__(self, seed: int):
        self.seed = int(seed) & 0xFFFFFFFFFFFFFFFF
        self.generator = np.random.Generator(np.random.PCG64(self.seed))

    def derive(self, *keys) -> "RandomSource":
        """Create an independent RandomSource for a named substream."""
        tag = ":".join(str(k) for k in (self.seed,) + keys)
        digest = hashlib.sha256(tag.encode("utf-8")).digest()
        return RandomSource(int.from_bytes(digest[:8], byteorder="big"))

    def uniform_open(self, size=None):
        """Uniform draws in the open interval (0, 1)."""
        if size is None:
            u = self.generator.random()
            while u == 0.0:
                u = self.generator.random()
            return u
        u = self.generator.random(size)
        zeros = u == 0.0
        while np.any(zeros):
            u[zeros] = self.generator.random(int(np.count_nonzero(zeros)))
            zeros = u == 0.0
        return u

    def laplace(self, scale: float, size=None):
        """Zero-centred Laplace noise by inverse CDF on open-interval uniforms."""
        centred = np.asarray(self.uniform_open(size)) - 0.5
        noise = -scale * np.sign(centred) * np.log1p(-2.0 * np.abs(centred))
        return float(noise) if size is None else noise

    def normal(self, loc=0.0, scale=1.0, size=None):
        return self.generator.normal(loc, scale, size)

    def uniform(self, low=0.0, high=1.0, size=None):
        return self.generator.uniform(low, high, size)


class BoundedLaplace:
    """
    Bounded Laplace mechanism by rejection sampling.

    The input is clamped into [lower, upper], Laplace noise with scale
    sensitivity/epsilon is added, and out-of-bounds results are redrawn.
    """

    def __init__(self, params: PrivacyParams):
        self.params = params
        self._fixed_noise: Optional[float] = None

    @classmethod
    def with_fixed_noise(cls, params: PrivacyParams, noise: float) -> "BoundedLaplace":
        """Deterministic variant for unit tests: every draw returns clamp(v) + noise."""
        mechanism = cls(params)
        mechanism._fixed_noise = float(noise)
        return mechanism

    def _check_value(self, value):
        values = np.asarray(value, dtype=float)
        if not np.all(np.isfinite(values)):
            raise InvalidInputError(f"Cannot privatize non-finite value {value!r}")
        return values

    def _snap(self, noise):
        granularity = SNAP_FRACTION * self.params.sensitivity
        return np.round(noise / granularity) * granularity

    def sample_many(self, value, rng: RandomSource, size: int) -> np.ndarray:
        """Draw `size` independent outputs for the same input value."""
        global fallback_count
        params = self.params
        center = params.clamp(self._check_value(value))

        if self._fixed_noise is not None:
            noisy = center + self._snap(self._fixed_noise)
            return np.full(size, float(np.clip(noisy, params.lower, params.upper)))

        out = center + self._snap(rng.laplace(params.scale, size))
        pending = (out < params.lower) | (out > params.upper)
        redraws = 0
        while np.any(pending) and redraws < MAX_REDRAWS:
            count = int(np.count_nonzero(pending))
            out[pending] = center + self._snap(rng.laplace(params.scale, count))
            pending = (out < params.lower) | (out > params.upper)
            redraws += 1

        if np.any(pending):
            missed = int(np.count_nonzero(pending))
            with _fallback_lock:
                fallback_count += missed
            logger.warning(f"⚠️ Bounded Laplace fell back to clamping for {missed} sample(s)")
            out = np.clip(out, params.lower, params.upper)
        return out

    def sample(self, value: float, rng: RandomSource) -> float:
        return float(self.sample_many(value, rng, 1)[0])


def bounded_laplace(value: float, params: PrivacyParams, rng: RandomSource) -> float:
    """Privatize one continuous value; the result always lies in [lower, upper]."""
    return BoundedLaplace(params).sample(value, rng)


def truncated_laplace_cdf(x, center: float, params: PrivacyParams):
    """CDF of Laplace(center, scale) truncated to the parameter bounds."""
    dist = stats.laplace(loc=center, scale=params.scale)
    low, high = dist.cdf(params.lower), dist.cdf(params.upper)
    clipped = np.clip(x, params.lower, params.upper)
    return (dist.cdf(clipped) - low) / (high - low)


def truncated_laplace_std(center: float, params: PrivacyParams) -> float:
    """Standard deviation of the bounded Laplace output distribution."""
    dist = stats.laplace(loc=center, scale=params.scale)
    mass = dist.cdf(params.upper) - dist.cdf(params.lower)
    mean = integrate.quad(lambda x: x * dist.pdf(x), params.lower, params.upper)[0] / mass
    var = integrate.quad(lambda x: (x - mean) ** 2 * dist.pdf(x), params.lower, params.upper)[0] / mass
    return math.sqrt(var)


def randomized_response(truth: bool, bias: float, rng: RandomSource) -> bool:
    """
    Warner's randomized response.

    With probability `bias` the truth is reported; otherwise a fair coin decides.
    """
    if not 0.0 <= bias <= 1.0:
        raise InvalidParamsError(f"Randomized response bias must lie in [0, 1], got {bias}")
    if rng.uniform_open() <= bias:
        return bool(truth)
    return rng.uniform_open() <= 0.5


def rr_bias_for_epsilon(epsilon: float) -> float:
    """Bias p whose truthful-output probability q = p + (1-p)/2 gives epsilon = ln(q/(1-q))."""
    if not epsilon > 0:
        raise InvalidParamsError(f"epsilon must be positive, got {epsilon}")
    return math.tanh(epsilon / 2.0)


def epsilon_for_rr_bias(bias: float) -> float:
    """Inverse of rr_bias_for_epsilon."""
    if not 0.0 < bias < 1.0:
        raise InvalidParamsError(f"bias must lie in (0, 1) for a finite epsilon, got {bias}")
    return 2.0 * math.atanh(bias)


def truthful_probability(bias: float) -> float:
    return bias + (1.0 - bias) / 2.0


@dataclass
class BudgetLedger:
    """Epsilon consumed per attribute in one session."""

    entries: List[Tuple[str, float]] = field(default_factory=list)

    def record(self, attribute: str, epsilon: float) -> None:
        if not epsilon > 0:
            raise InvalidParamsError(f"Cannot record non-positive epsilon {epsilon} for {attribute}")
        self.entries.append((attribute, float(epsilon)))

    def as_dict(self):
        return {name: eps for name, eps in self.entries}

    @property
    def total(self) -> float:
        return math.fsum(eps for _, eps in self.entries)


def budget_total(ledger: BudgetLedger) -> float:
    """Total privacy budget under sequential composition."""
    return ledger.total
