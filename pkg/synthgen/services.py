"""
Synthetic stream generators for IDD Monitor
Convex-potential deformations of a product-Beta mixture base sample, Gaussian
translations, Poisson spikes and ordinal drift
"""
import logging
from dataclasses import dataclass, replace
from typing import Callable, Iterator, Optional, Sequence, Union

import numpy as np
from scipy import linalg
from scipy.special import expit, logit
from scipy.stats import norm, rankdata

from idd_monitor.exceptions import ConfigError
from transport.measures import EmpiricalMeasure

logger = logging.getLogger(__name__)

CONTINUOUS_SCENARIOS = ('barycenter', 'mm_reweight', 'copula_shift')
SCENARIOS = CONTINUOUS_SCENARIOS + ('poisson_spike', 'ordinal_drift', 'gaussian_shift')

DEFAULT_ORDINAL_P0 = (0.3, 0.25, 0.2, 0.12, 0.08, 0.05)

# spawn keys of the independent random streams drawn from one seed
_MIXTURE, _BASE, _POST_BASE, _MONITOR, _CALIBRATION, _HOLDOUT, _SHIFT, _NULL = range(8)
PHASES = {'monitor': _MONITOR, 'calibration': _CALIBRATION, 'holdout': _HOLDOUT, 'null': _NULL}


def _rng(seed: int, *key: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=key))


@dataclass(frozen=True, eq=False)
class DeformationParams:
    """Parameters of x -> x + epsilon * sum_j w_j h_beta(<a_j, x> - c_j) a_j"""
    directions: np.ndarray
    weights: np.ndarray
    offsets: np.ndarray
    epsilon: float = 0.3
    beta: float = 5.0

    def __post_init__(self):
        directions = np.atleast_2d(np.asarray(self.directions, dtype=float))
        weights = np.asarray(self.weights, dtype=float).reshape(-1)
        offsets = np.asarray(self.offsets, dtype=float).reshape(-1)
        J = directions.shape[0]
        if weights.shape[0] != J or offsets.shape[0] != J:
            raise ConfigError(f"Need one weight and one offset per direction ({J})")
        if not np.allclose(np.linalg.norm(directions, axis=1), 1.0, rtol=0, atol=1e-10):
            raise ConfigError("Deformation directions must be unit vectors")
        if np.any(weights <= 0) or abs(weights.sum() - 1.0) > 1e-12:
            raise ConfigError("Deformation weights must be positive and sum to 1")
        if self.epsilon < 0 or self.beta <= 0:
            raise ConfigError(f"Need epsilon >= 0 and beta > 0, got {self.epsilon}, {self.beta}")
        object.__setattr__(self, 'directions', directions)
        object.__setattr__(self, 'weights', weights)
        object.__setattr__(self, 'offsets', offsets)

    @property
    def dim(self) -> int:
        return self.directions.shape[1]


def random_deformation(dim: int, rng: np.random.Generator, n_terms: int = 3,
                       epsilon: float = 0.3, beta: float = 5.0) -> DeformationParams:
    """Random directions on the sphere, Dirichlet weights, offsets over the projected unit cube"""
    directions = rng.standard_normal((n_terms, dim))
    directions /= np.linalg.norm(directions, axis=1, keepdims=True)
    weights = rng.dirichlet(np.ones(n_terms))
    weights /= weights.sum()
    low = np.minimum(directions, 0).sum(axis=1)
    high = np.maximum(directions, 0).sum(axis=1)
    offsets = rng.uniform(low, high)
    return DeformationParams(directions, weights, offsets, epsilon, beta)


def smooth_ramp(z: np.ndarray, beta: float) -> np.ndarray:
    """h_beta(z) = softplus_beta(z) * sigmoid_beta(z), stable for large |beta z|"""
    return np.logaddexp(0.0, beta * z) / beta * expit(beta * z)


def apply_deformation(params: DeformationParams, x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    points = np.atleast_2d(x)
    z = points @ params.directions.T - params.offsets
    push = (smooth_ramp(z, params.beta) * params.weights) @ params.directions
    result = points + params.epsilon * push
    return result[0] if single else result


@dataclass(frozen=True)
class MonotonicityReport:
    passed: bool
    worst_margin: float
    n_pairs: int


def monotonicity_check(
    params: Union[DeformationParams, Callable[[np.ndarray], np.ndarray]],
    n_pairs: int,
    seed: int = 0,
    dim: Optional[int] = None,
    tolerance: float = 1e-10,
) -> MonotonicityReport:
    """
    Sampled check of <T(x) - T(y), x - y> >= 0 on the unit cube.

    ``params`` may also be any vectorised map, in which case ``dim`` is
    required.
    """
    if n_pairs < 1:
        raise ConfigError(f"n_pairs must be at least 1, got {n_pairs}")
    if isinstance(params, DeformationParams):
        dim = params.dim
        mapping = lambda points: apply_deformation(params, points)  # noqa: E731
    else:
        if dim is None:
            raise ConfigError("dim is required when checking an arbitrary map")
        mapping = params

    rng = np.random.default_rng(seed)
    x = rng.uniform(size=(n_pairs, dim))
    y = rng.uniform(size=(n_pairs, dim))
    margins = np.einsum('ij,ij->i', mapping(x) - mapping(y), x - y)
    worst = float(margins.min())
    return MonotonicityReport(worst >= -tolerance, worst, n_pairs)


@dataclass(frozen=True, eq=False)
class BetaMixture:
    """Mixture of product-Beta distributions on the unit cube"""
    weights: np.ndarray
    alpha: np.ndarray
    beta: np.ndarray

    def __post_init__(self):
        weights = np.asarray(self.weights, dtype=float).reshape(-1)
        alpha = np.atleast_2d(np.asarray(self.alpha, dtype=float))
        beta = np.atleast_2d(np.asarray(self.beta, dtype=float))
        if alpha.shape != beta.shape or alpha.shape[0] != weights.shape[0]:
            raise ConfigError("Beta parameters must have shape (components, d) matching the weights")
        if np.any(alpha <= 0) or np.any(beta <= 0) or not np.all(np.isfinite(alpha + beta)):
            raise ConfigError("Beta parameters must be finite and positive")
        _check_simplex(weights, 'mixture weights')
        object.__setattr__(self, 'weights', weights)
        object.__setattr__(self, 'alpha', alpha)
        object.__setattr__(self, 'beta', beta)

    @classmethod
    def from_means(cls, weights, means, concentration: float) -> 'BetaMixture':
        means = np.asarray(means, dtype=float)
        return cls(weights, means * concentration, (1 - means) * concentration)

    @property
    def n_components(self) -> int:
        return self.weights.shape[0]

    @property
    def dim(self) -> int:
        return self.alpha.shape[1]

    @property
    def means(self) -> np.ndarray:
        return self.alpha / (self.alpha + self.beta)

    @property
    def concentration(self) -> np.ndarray:
        return self.alpha + self.beta

    def sample(self, n: int, rng: np.random.Generator):
        """Returns (points, component labels)"""
        labels = rng.choice(self.n_components, size=n, p=self.weights)
        points = rng.beta(self.alpha[labels], self.beta[labels])
        return points, labels

    def shifted_means(self, delta: float) -> 'BetaMixture':
        """Component means moved by delta on the logit scale, concentration kept"""
        means = np.clip(self.means, 1e-12, 1 - 1e-12)
        moved = expit(logit(means) + delta)
        return BetaMixture(self.weights, moved * self.concentration, (1 - moved) * self.concentration)

    def reweighted(self, eta: np.ndarray) -> 'BetaMixture':
        weights = self.weights * eta
        return BetaMixture(weights / weights.sum(), self.alpha, self.beta)


def default_mixture(dim: int, seed: int, n_components: int = 4, concentration: float = 20.0) -> BetaMixture:
    """Equal-weight mixture with component means drawn in [0.15, 0.85]^d"""
    rng = _rng(seed, _MIXTURE)
    means = rng.uniform(0.15, 0.85, size=(n_components, dim))
    return BetaMixture.from_means(np.full(n_components, 1.0 / n_components), means, concentration)


def _check_simplex(p: np.ndarray, name: str):
    if p.ndim != 1 or p.size < 1 or np.any(p < 0) or abs(p.sum() - 1.0) > 1e-9:
        raise ConfigError(f"{name} must be a probability vector, got {p.tolist()}")


def ordinal_shift(p0: np.ndarray) -> np.ndarray:
    """Move every class one step up; the top class absorbs the top two"""
    p0 = np.asarray(p0, dtype=float)
    shifted = np.zeros_like(p0)
    shifted[1:-1] = p0[:-2]
    shifted[-1] = p0[-2] + p0[-1]
    return shifted


@dataclass(frozen=True)
class StreamSpec:
    """
    One synthetic stream: scenario, sizes, change point and shift magnitudes.

    Batches are indexed t = 1..T; t <= change_point is pre-change.
    """
    scenario: str = 'barycenter'
    dim: int = 2
    batch_size: int = 100
    length: int = 200
    change_point: int = 100
    seed: int = 0
    # continuous family
    n_components: int = 4
    concentration: float = 20.0
    mixture_weights: Optional[tuple] = None
    beta_alpha: Optional[tuple] = None
    beta_beta: Optional[tuple] = None
    epsilon: float = 0.3
    smoothness: float = 5.0
    n_terms: int = 3
    delta_loc: float = 0.15
    delta_mm: float = 2.0
    rho: float = 0.6
    # gaussian translation
    sigma: float = 0.5
    delta: float = 0.5
    # poisson spike
    lambda0: float = 5.0
    alpha_mix: float = 0.05
    k_star: int = 25
    heavy_tail: bool = False
    lambda_tail: float = 20.0
    mean_matched: bool = True
    # ordinal drift
    p0: tuple = DEFAULT_ORDINAL_P0
    ramp_length: int = 10

    def __post_init__(self):
        if self.scenario not in SCENARIOS:
            raise ConfigError(f"Unknown scenario '{self.scenario}', expected one of {SCENARIOS}")
        if self.batch_size < 2:
            raise ConfigError(f"batch_size must be at least 2, got {self.batch_size}")
        if self.length < 1 or not 1 <= self.change_point <= self.length:
            raise ConfigError(f"Need 1 <= change_point <= length, got {self.change_point} and {self.length}")
        if self.dim < 1:
            raise ConfigError(f"dim must be at least 1, got {self.dim}")
        if self.scenario == 'copula_shift':
            if self.dim < 2:
                raise ConfigError("copula_shift needs d >= 2; dependence is undefined in 1-D")
            if not abs(self.rho) < 1:
                raise ConfigError(f"rho must lie in (-1, 1), got {self.rho}")
        if self.scenario in CONTINUOUS_SCENARIOS:
            if self.epsilon < 0 or self.smoothness <= 0 or self.n_terms < 1:
                raise ConfigError("Deformation needs epsilon >= 0, smoothness > 0 and n_terms >= 1")
            self.mixture()
        if self.scenario == 'gaussian_shift' and self.sigma <= 0:
            raise ConfigError(f"sigma must be positive, got {self.sigma}")
        if self.scenario == 'poisson_spike':
            if self.lambda0 <= 0 or not 0 <= self.alpha_mix < 1:
                raise ConfigError("Poisson spike needs lambda0 > 0 and alpha_mix in [0, 1)")
            if self.heavy_tail:
                self.tail_rates()
            elif not self.k_star > self.lambda0:
                raise ConfigError(f"k_star must exceed lambda0, got {self.k_star}")
        if self.scenario == 'ordinal_drift':
            p0 = np.asarray(self.p0, dtype=float)
            _check_simplex(p0, 'p0')
            if p0.size < 3:
                raise ConfigError("Ordinal drift needs at least 3 categories")
            if self.ramp_length < 1:
                raise ConfigError(f"ramp_length must be at least 1, got {self.ramp_length}")

    @property
    def n_categories(self) -> int:
        return len(self.p0)

    def with_changes(self, **changes) -> 'StreamSpec':
        return replace(self, **changes)

    def mixture(self) -> BetaMixture:
        if self.beta_alpha is not None or self.beta_beta is not None:
            alpha = np.asarray(self.beta_alpha, dtype=float)
            beta = np.asarray(self.beta_beta, dtype=float)
            n = np.atleast_2d(alpha).shape[0]
            weights = self.mixture_weights if self.mixture_weights is not None else np.full(n, 1.0 / n)
            mixture = BetaMixture(weights, alpha, beta)
        else:
            mixture = default_mixture(self.dim, self.seed, self.n_components, self.concentration)
            if self.mixture_weights is not None:
                mixture = BetaMixture(self.mixture_weights, mixture.alpha, mixture.beta)
        if mixture.dim != self.dim:
            raise ConfigError(f"Mixture dimension {mixture.dim} does not match dim {self.dim}")
        return mixture

    def tail_rates(self):
        """(lambda_a, lambda_b) of the post-change two-Poisson mixture"""
        alpha, lambda_b = self.alpha_mix, self.lambda_tail
        if self.mean_matched:
            lambda_a = (self.lambda0 - alpha * lambda_b) / (1 - alpha)
            if lambda_a <= 0:
                raise ConfigError(
                    f"Mean matching needs alpha_mix * lambda_tail < lambda0, got {alpha * lambda_b} >= {self.lambda0}"
                )
        else:
            lambda_a = self.lambda0
        return lambda_a, lambda_b

    def ordinal_law(self, t: int) -> np.ndarray:
        p0 = np.asarray(self.p0, dtype=float)
        gamma = self.ramp(t)
        return (1 - gamma) * p0 + gamma * ordinal_shift(p0)

    def ramp(self, t: int) -> float:
        if t <= self.change_point:
            return 0.0
        return min(1.0, (t - self.change_point) / self.ramp_length)


def sample_reference(spec: StreamSpec, seed: Optional[int] = None, return_labels: bool = False):
    """N i.i.d. draws from the product-Beta mixture of the stream"""
    seed = spec.seed if seed is None else seed
    points, labels = spec.mixture().sample(spec.batch_size, _rng(seed, _BASE))
    return (points, labels) if return_labels else points


def equicorrelation(dim: int, rho: float) -> np.ndarray:
    return np.full((dim, dim), rho) + (1 - rho) * np.eye(dim)


def iman_conover(sample: np.ndarray, rho: float, seed: int = 0) -> np.ndarray:
    """
    Reorder each column of ``sample`` so that its ranks follow a Gaussian
    copula with equicorrelation ``rho``. Columns keep their exact multisets.
    """
    sample = np.asarray(sample, dtype=float)
    if sample.ndim != 2 or sample.shape[1] < 2:
        raise ConfigError("Iman-Conover needs a sample with at least 2 columns")
    if not abs(rho) < 1:
        raise ConfigError(f"rho must lie in (-1, 1), got {rho}")
    n, dim = sample.shape
    if n <= dim:
        raise ConfigError(f"Iman-Conover needs more rows than columns, got {sample.shape}")
    try:
        target = np.linalg.cholesky(equicorrelation(dim, rho))
    except np.linalg.LinAlgError as exc:
        raise ConfigError(f"Equicorrelation {rho} is not positive definite in {dim} dimensions") from exc

    rng = np.random.default_rng(seed)
    # van der Waerden scores, independently permuted per column
    scores_1d = norm.ppf(np.arange(1, n + 1) / (n + 1))
    scores = np.column_stack([rng.permutation(scores_1d) for _ in range(dim)])
    current = np.linalg.cholesky(np.corrcoef(scores, rowvar=False))
    decorrelated = linalg.solve_triangular(current, scores.T, lower=True).T
    correlated = decorrelated @ target.T

    result = np.empty_like(sample)
    for k in range(dim):
        ranks = rankdata(correlated[:, k], method='ordinal').astype(int) - 1
        result[:, k] = np.sort(sample[:, k])[ranks]
    return result


class SyntheticStream:
    """
    Lazily generated stream for one (spec, seed).

    Base samples are drawn once; batch t comes from its own random stream so
    any batch can be regenerated independently of the others.
    """

    def __init__(self, spec: StreamSpec, seed: Optional[int] = None):
        self.spec = spec
        self.seed = spec.seed if seed is None else seed
        self._base = None
        self._post_base = None

    @property
    def dim(self) -> int:
        return 1 if self.spec.scenario in ('poisson_spike', 'ordinal_drift') else self.spec.dim

    def base_sample(self) -> np.ndarray:
        if self._base is None:
            self._base = sample_reference(self.spec, self.seed)
        return self._base

    def post_change_mixture(self) -> BetaMixture:
        """Mixture the post-change base sample is drawn from (barycenter and mm_reweight only)"""
        spec = self.spec
        mixture = spec.mixture()
        if spec.scenario == 'barycenter':
            return mixture.shifted_means(spec.delta_loc)
        if spec.scenario == 'mm_reweight':
            eta = np.exp(spec.delta_mm * _rng(self.seed, _SHIFT).standard_normal(mixture.n_components))
            return mixture.reweighted(eta)
        raise ConfigError(f"Scenario '{spec.scenario}' has no post-change mixture")

    def post_change_base(self) -> np.ndarray:
        if self._post_base is None:
            spec = self.spec
            rng = _rng(self.seed, _POST_BASE)
            if spec.scenario in ('barycenter', 'mm_reweight'):
                self._post_base, _ = self.post_change_mixture().sample(spec.batch_size, rng)
            else:
                self._post_base = iman_conover(self.base_sample(), spec.rho, seed=int(rng.integers(2 ** 32)))
        return self._post_base

    def points(self, t: int, phase: str = 'monitor') -> np.ndarray:
        """Raw points of batch t; calibration and holdout phases are always pre-change"""
        spec = self.spec
        rng = _rng(self.seed, PHASES[phase], t)
        post = phase == 'monitor' and t > spec.change_point
        scenario = spec.scenario

        if scenario in CONTINUOUS_SCENARIOS:
            base = self.post_change_base() if post else self.base_sample()
            params = random_deformation(spec.dim, rng, spec.n_terms, spec.epsilon, spec.smoothness)
            return apply_deformation(params, base)
        if scenario == 'gaussian_shift':
            points = spec.sigma * rng.standard_normal((spec.batch_size, spec.dim))
            if post:
                points[:, 0] += spec.delta
            return points
        if scenario == 'poisson_spike':
            return self._poisson_points(rng, post).reshape(-1, 1).astype(float)
        law = spec.ordinal_law(t) if phase == 'monitor' else np.asarray(spec.p0, dtype=float)
        categories = np.arange(1, spec.n_categories + 1)
        return rng.choice(categories, size=spec.batch_size, p=law / law.sum()).reshape(-1, 1).astype(float)

    def _poisson_points(self, rng, post: bool) -> np.ndarray:
        spec = self.spec
        n = spec.batch_size
        if not post:
            return rng.poisson(spec.lambda0, size=n)
        if spec.heavy_tail:
            lambda_a, lambda_b = spec.tail_rates()
            from_tail = rng.uniform(size=n) < spec.alpha_mix
            return np.where(from_tail, rng.poisson(lambda_b, size=n), rng.poisson(lambda_a, size=n))
        counts = rng.poisson(spec.lambda0, size=n)
        spiked = rng.uniform(size=n) < spec.alpha_mix
        counts[spiked] = spec.k_star
        return counts

    def batch(self, t: int, phase: str = 'monitor') -> EmpiricalMeasure:
        return EmpiricalMeasure.from_points(self.points(t, phase))

    def batches(self, start: int = 1, stop: Optional[int] = None) -> Iterator[EmpiricalMeasure]:
        stop = self.spec.length if stop is None else stop
        for t in range(start, stop + 1):
            yield self.batch(t)

    def null_batches(self, n: int, phase: str = 'calibration') -> Sequence[EmpiricalMeasure]:
        """n pre-change batches independent of the monitored stream"""
        return [self.batch(i, phase) for i in range(1, n + 1)]

    def __iter__(self):
        return self.batches()

    def export(self, path) -> int:
        from detection.streams import write_stream
        count = write_stream(path, ((t, self.points(t)) for t in range(1, self.spec.length + 1)))
        logger.info(f"Wrote {count} batches of scenario '{self.spec.scenario}' to {path}")
        return count


def gen_stream_continuous(spec: StreamSpec, seed: Optional[int] = None) -> Iterator[EmpiricalMeasure]:
    if spec.scenario not in CONTINUOUS_SCENARIOS:
        raise ConfigError(f"'{spec.scenario}' is not a continuous scenario")
    return SyntheticStream(spec, seed).batches()


def gen_stream_poisson_spike(spec: StreamSpec, seed: Optional[int] = None) -> Iterator[EmpiricalMeasure]:
    if spec.scenario != 'poisson_spike':
        raise ConfigError(f"Expected a poisson_spike spec, got '{spec.scenario}'")
    return SyntheticStream(spec, seed).batches()


def gen_stream_ordinal_drift(spec: StreamSpec, seed: Optional[int] = None) -> Iterator[EmpiricalMeasure]:
    if spec.scenario != 'ordinal_drift':
        raise ConfigError(f"Expected an ordinal_drift spec, got '{spec.scenario}'")
    return SyntheticStream(spec, seed).batches()
