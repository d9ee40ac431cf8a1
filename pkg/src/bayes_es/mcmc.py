"""Adaptive random-walk Metropolis sampling of the model posteriors.

Sampling happens in an unconstrained space: positive parameters are
log-transformed, ``rho1 = tanh(v)`` and the remaining parameters are used as
they are. The log-posterior includes the log-Jacobian of that map, so priors
are specified on the natural (constrained) scale.
"""

from __future__ import annotations

import csv
import io
import logging
import math
from dataclasses import dataclass, field
from typing import Mapping, Optional

import numpy as np
from scipy import optimize

from bayes_es.core import BuildingDataset
from bayes_es.models import (
    POSITIVE_PARAMS,
    ModelKind,
    NonFiniteLikelihood,
    ParameterVector,
    log_likelihood,
    param_names,
)
from bayes_es.priors import MissingPrior, PriorSpec, log_pdf, sample

logger = logging.getLogger(__name__)


class SamplerError(RuntimeError):
    pass


class AllProposalsRejected(SamplerError):
    pass


class NonFiniteStart(SamplerError):
    pass


RHAT_THRESHOLD = 1.05


@dataclass(frozen=True)
class SamplerConfig:
    chains: int = 4
    warmup_draws: int = 2000
    kept_draws: int = 2000
    seed: int = 0
    target_accept: float = 0.234
    adapt_window: int = 100
    thin: int = 5
    mode_starts: int = 6

    def __post_init__(self):
        if self.chains < 2:
            raise ValueError("need at least 2 chains")
        if self.kept_draws < 1 or self.warmup_draws < 0 or self.thin < 1:
            raise ValueError("draw counts must be positive")
        if not 0.1 < self.target_accept < 0.6:
            raise ValueError("target_accept must lie in (0.1, 0.6)")
        if self.adapt_window < 10:
            raise ValueError("adapt_window must be at least 10")


# --- transforms -------------------------------------------------------------

def _transform_codes(kind) -> np.ndarray:
    # 0 identity, 1 log, 2 tanh
    names = param_names(kind)
    return np.array([1 if n in POSITIVE_PARAMS else 2 if n == "rho1" else 0 for n in names])


def constrain_array(v: np.ndarray, codes: np.ndarray) -> tuple[np.ndarray, float]:
    """Map unconstrained ``v`` to the parameter scale; also return log|J|."""
    x = np.array(v, dtype=float)
    logj = 0.0
    pos = codes == 1
    if pos.any():
        with np.errstate(over="ignore"):
            x[pos] = np.exp(v[pos])
        logj += float(np.sum(v[pos]))
    th = codes == 2
    if th.any():
        t = np.tanh(v[th])
        x[th] = t
        # log(1 - tanh^2 v) = 2 (log 2 - v - softplus(-2 v))
        vv = v[th]
        logj += float(np.sum(2.0 * (math.log(2.0) - vv - np.logaddexp(0.0, -2.0 * vv))))
    return x, logj


def unconstrain_array(x: np.ndarray, codes: np.ndarray) -> np.ndarray:
    v = np.array(x, dtype=float)
    pos = codes == 1
    v[pos] = np.log(x[pos])
    th = codes == 2
    v[th] = np.arctanh(x[th])
    return v


def to_unconstrained(p: ParameterVector, kind) -> np.ndarray:
    return unconstrain_array(p.as_array(kind), _transform_codes(kind))


def to_constrained(v, kind) -> ParameterVector:
    x, _ = constrain_array(np.asarray(v, dtype=float), _transform_codes(kind))
    return ParameterVector.from_array(x, kind)


# --- posterior --------------------------------------------------------------

class LogPosterior:
    """Unnormalized log-posterior of one model on one dataset.

    Calling the object with an unconstrained vector returns the log-posterior;
    :meth:`evaluate` also returns the per-day log-likelihood.
    """

    def __init__(self, kind, data: BuildingDataset, priors: Mapping[str, PriorSpec],
                 include_likelihood: bool = True, exclude_days=(),
                 fixed: Optional[Mapping[str, float]] = None):
        self.kind = ModelKind.parse(kind)
        self.data = data
        self.names = param_names(self.kind)
        fixed = dict(fixed or {})
        unknown = set(fixed) - set(self.names)
        if unknown:
            raise ValueError(f"cannot fix unknown parameters {sorted(unknown)}")
        # sampling happens over the free coordinates only
        self.free = np.array([i for i, n in enumerate(self.names) if n not in fixed], dtype=int)
        self.free_names = tuple(self.names[i] for i in self.free)
        missing = [n for n in self.free_names if n not in priors]
        if missing:
            raise MissingPrior(f"no prior for {', '.join(missing)}")
        self.priors = [priors[n] for n in self.free_names]
        self.codes = _transform_codes(self.kind)[self.free]
        self._template = np.array([fixed.get(n, np.nan) for n in self.names], dtype=float)
        self.include_likelihood = include_likelihood
        self._empty = np.zeros(data.n_days)
        # held-out days stay in the data (they are still lag inputs) but do
        # not contribute to the likelihood
        self.keep = None
        if len(exclude_days):
            self.keep = np.ones(data.n_days, dtype=bool)
            self.keep[list(exclude_days)] = False

    @property
    def dim(self) -> int:
        return len(self.free)

    def expand(self, x_free: np.ndarray) -> np.ndarray:
        """Full constrained parameter array from the free coordinates."""
        full = self._template.copy()
        full[self.free] = x_free
        return full

    def evaluate(self, v: np.ndarray) -> tuple[float, Optional[np.ndarray]]:
        if not np.all(np.isfinite(v)):
            return -math.inf, None
        x, logj = constrain_array(v, self.codes)
        lp = logj
        for spec, xi in zip(self.priors, x):
            lp += log_pdf(spec, xi)
        if not math.isfinite(lp):
            return -math.inf, None
        if not self.include_likelihood:
            return lp, self._empty
        p = ParameterVector.from_array(self.expand(x), self.kind)
        try:
            with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
                total, pointwise = log_likelihood(self.kind, p, self.data)
        except NonFiniteLikelihood:
            return -math.inf, None
        if self.keep is not None:
            total = float(pointwise[self.keep].sum())
        lp += total
        if not math.isfinite(lp):
            return -math.inf, None
        return lp, pointwise

    def __call__(self, v) -> float:
        return self.evaluate(np.asarray(v, dtype=float))[0]


def log_posterior(kind, v, data: BuildingDataset, priors: Mapping[str, PriorSpec]) -> float:
    return LogPosterior(kind, data, priors)(v)


# --- samples ----------------------------------------------------------------

@dataclass
class PosteriorSamples:
    kind: ModelKind
    param_names: tuple[str, ...]
    draws: np.ndarray  # chains x kept x params, constrained scale
    pointwise_loglik: np.ndarray  # chains x kept x days
    accept_rate: np.ndarray
    config: Optional[SamplerConfig] = field(default=None, compare=False)

    @property
    def n_chains(self) -> int:
        return self.draws.shape[0]

    @property
    def n_draws(self) -> int:
        return self.draws.shape[1]

    def param(self, name: str) -> np.ndarray:
        """Draws of one parameter, shape (chains, kept)."""
        return self.draws[:, :, self.param_names.index(name)]

    def flat(self) -> np.ndarray:
        return self.draws.reshape(-1, self.draws.shape[-1])

    def flat_loglik(self) -> np.ndarray:
        return self.pointwise_loglik.reshape(-1, self.pointwise_loglik.shape[-1])

    def parameter_vectors(self):
        for row in self.flat():
            yield ParameterVector.from_array(row, self.kind)

    def posterior_mean(self) -> ParameterVector:
        return ParameterVector.from_array(self.flat().mean(axis=0), self.kind)

    def rhat(self) -> dict[str, float]:
        return {n: rhat(self, n) for n in self.param_names}

    def ess(self) -> dict[str, float]:
        return {n: ess(self, n) for n in self.param_names}

    def converged(self, threshold: float = RHAT_THRESHOLD) -> bool:
        return all(r < threshold for r in self.rhat().values())

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(("chain",) + tuple(self.param_names))
        for c in range(self.n_chains):
            for row in self.draws[c]:
                writer.writerow([c] + [repr(float(x)) for x in row])
        return buf.getvalue()


# --- sampler ----------------------------------------------------------------

def _initial_scales(post: LogPosterior) -> np.ndarray:
    scales = np.full(post.dim, 0.1)
    for i, (code, spec) in enumerate(zip(post.codes, post.priors)):
        if code == 0:
            scales[i] = 0.1 * spec.sd
    return scales


def _prior_start(post: LogPosterior, rng: np.random.Generator, tries: int = 100):
    """First prior draw with a finite log-posterior, as (v, lp)."""
    for _ in range(tries):
        x = np.array([sample(spec, rng) for spec in post.priors])
        if np.any(np.abs(x[post.codes == 2]) >= 1) or np.any(x[post.codes == 1] <= 0):
            continue
        v = unconstrain_array(x, post.codes)
        lp = post(v)
        if math.isfinite(lp):
            return v, lp
    raise NonFiniteStart(f"no finite-posterior start in {tries} prior draws")


def _neg_hessian(f, v: np.ndarray, h: float = 1e-4) -> np.ndarray:
    d = v.size
    H = np.empty((d, d))
    f0 = f(v)
    for i in range(d):
        ei = np.zeros(d)
        ei[i] = h
        H[i, i] = -(f(v + ei) - 2.0 * f0 + f(v - ei)) / h ** 2
        for j in range(i):
            ej = np.zeros(d)
            ej[j] = h
            H[i, j] = H[j, i] = -(
                f(v + ei + ej) - f(v + ei - ej) - f(v - ei + ej) + f(v - ei - ej)
            ) / (4.0 * h ** 2)
    return H


@dataclass
class ModeEstimate:
    v: np.ndarray
    log_post: float
    cov: np.ndarray


def find_mode(post: LogPosterior, rng: np.random.Generator, n_starts: int = 6) -> ModeEstimate:
    """Best local maximum over optimizer runs started at prior draws.

    ``cov`` is the inverse negative Hessian at the mode, or a diagonal
    fallback when the Hessian is not positive definite.
    """
    def neg(v):
        lp = post(v)
        return 1e300 if not math.isfinite(lp) else -lp

    best = None
    for _ in range(n_starts):
        v0, _ = _prior_start(post, rng)
        res = optimize.minimize(neg, v0, method="L-BFGS-B", options={"maxiter": 500})
        res = optimize.minimize(neg, res.x, method="Nelder-Mead",
                                options={"maxiter": 400 * post.dim, "xatol": 1e-6, "fatol": 1e-8})
        if best is None or res.fun < best.fun:
            best = res
    v = best.x
    H = _neg_hessian(post, v)
    try:
        cov = np.linalg.inv(H)
        np.linalg.cholesky(cov)
    except np.linalg.LinAlgError:
        diag = np.diag(H)
        cov = np.diag(np.where(diag > 0, 1.0 / np.where(diag > 0, diag, 1.0), 0.01))
    return ModeEstimate(v, -best.fun, cov)


def _dispersed_start(post: LogPosterior, mode: ModeEstimate, rng: np.random.Generator,
                     spread: float = 2.0, tries: int = 100):
    chol = np.linalg.cholesky(mode.cov)
    scale = spread
    for i in range(tries):
        v = mode.v + scale * (chol @ rng.standard_normal(post.dim))
        lp, pw = post.evaluate(v)
        if math.isfinite(lp):
            return v, lp, pw
        if i % 10 == 9:
            scale /= 2.0
    raise NonFiniteStart("no finite-posterior start around the posterior mode")


def _window_ends(warmup: int, first: int, terminal: int) -> list[int]:
    """Iterations after which the proposal covariance is re-estimated."""
    ends = []
    size, pos = first, 0
    stop = warmup - terminal
    while pos + size <= stop:
        pos += size
        ends.append(pos)
        size *= 2
    if ends and stop - ends[-1] < size:
        ends[-1] = stop
    return ends


def run_chain(post: LogPosterior, config: SamplerConfig, chain: int,
              mode: Optional[ModeEstimate] = None):
    """Run one chain; returns (draws, pointwise, accept_rate) for kept draws."""
    rng = np.random.default_rng(config.seed ^ chain)
    if mode is None:
        v, lp = _prior_start(post, rng)
        pw = post.evaluate(v)[1]
        cov = np.diag(_initial_scales(post) ** 2)
    else:
        v, lp, pw = _dispersed_start(post, mode, rng)
        cov = mode.cov
    d = post.dim
    log_lam = math.log(2.38 / math.sqrt(d))
    chol = np.linalg.cholesky(cov)
    target = config.target_accept

    warm = config.warmup_draws
    terminal = min(50, warm // 10)
    ends = set(_window_ends(warm, config.adapt_window, terminal))
    history = []
    window_accepts = 0
    window_len = 0
    rm_count = 0

    for it in range(warm):
        prop = v + math.exp(log_lam) * (chol @ rng.standard_normal(d))
        lp_new, pw_new = post.evaluate(prop)
        alpha = 0.0 if not math.isfinite(lp_new) else min(1.0, math.exp(min(0.0, lp_new - lp)))
        if rng.random() < alpha:
            v, lp, pw = prop, lp_new, pw_new
            window_accepts += 1
        rm_count += 1
        log_lam += (alpha - target) / rm_count ** 0.6
        history.append(v)
        window_len += 1
        if window_len >= config.adapt_window:
            if window_accepts == 0:
                raise AllProposalsRejected(
                    f"chain {chain}: no proposal accepted in {window_len} warmup iterations"
                )
            window_accepts = window_len = 0
        if it + 1 in ends:
            h = np.array(history)
            n = h.shape[0]
            emp = np.cov(h, rowvar=False) if n > d else np.diag(np.var(h, axis=0))
            cov = (n / (n + 5.0)) * emp + 1e-6 * (5.0 / (n + 5.0)) * np.eye(d)
            try:
                chol = np.linalg.cholesky(cov)
            except np.linalg.LinAlgError:
                chol = np.diag(np.sqrt(np.maximum(np.diag(cov), 1e-12)))
            log_lam = math.log(2.38 / math.sqrt(d))
            rm_count = 0
            history = []

    step = math.exp(log_lam) * chol
    kept = config.kept_draws
    draws = np.empty((kept, d))
    pointwise = np.empty((kept, post.data.n_days))
    accepts = 0
    total = kept * config.thin
    z = rng.standard_normal((total, d))
    u = rng.random(total)
    for it in range(total):
        prop = v + step @ z[it]
        lp_new, pw_new = post.evaluate(prop)
        if math.isfinite(lp_new) and math.log(u[it]) < lp_new - lp:
            v, lp, pw = prop, lp_new, pw_new
            accepts += 1
        if (it + 1) % config.thin == 0:
            k = (it + 1) // config.thin - 1
            draws[k] = v
            pointwise[k] = pw
    if accepts == 0:
        raise AllProposalsRejected(f"chain {chain}: no proposal accepted after warmup")
    return draws, pointwise, accepts / total


def fit(kind, data: BuildingDataset, priors: Mapping[str, PriorSpec],
        config: SamplerConfig = SamplerConfig(), include_likelihood: bool = True,
        exclude_days=(), fixed: Optional[Mapping[str, float]] = None) -> PosteriorSamples:
    """Sample the posterior of ``kind`` on ``data`` with ``config.chains`` chains.

    Prior draws seed a multi-start mode search; chains then start from
    overdispersed points around the best mode (or straight from prior draws
    when ``config.mode_starts == 0``). Proposals adapt during warmup only and
    each chain is seeded with ``config.seed ^ chain``, so results are
    reproducible.

    ``exclude_days`` drops those days from the likelihood (leave-out fits);
    stored pointwise log-likelihoods still cover every day. Parameters in
    ``fixed`` are held at the given values and need no prior.
    """
    post = LogPosterior(kind, data, priors, include_likelihood, exclude_days, fixed)
    mode = None
    if config.mode_starts > 0:
        mode = find_mode(post, np.random.default_rng([config.seed, 0x6D6F6465]),
                         config.mode_starts)
    all_draws, all_pw, rates = [], [], []
    for c in range(config.chains):
        v_draws, pw, rate = run_chain(post, config, c, mode)
        x = np.array([post.expand(constrain_array(row, post.codes)[0]) for row in v_draws])
        all_draws.append(x)
        all_pw.append(pw)
        rates.append(rate)
        logger.debug("chain %d acceptance %.3f", c, rate)
    return PosteriorSamples(
        post.kind, post.names, np.array(all_draws), np.array(all_pw), np.array(rates), config
    )


# --- diagnostics ------------------------------------------------------------

def _as_chains(samples, param) -> np.ndarray:
    if isinstance(samples, PosteriorSamples):
        return samples.param(param)
    x = np.asarray(samples, dtype=float)
    return x if param is None else x[:, :, param]


def split_rhat(x: np.ndarray) -> float:
    """Split-chain potential scale reduction factor of a (chains, draws) array."""
    x = np.asarray(x, dtype=float)
    n = x.shape[1] // 2
    halves = np.vstack([x[:, :n], x[:, -n:]])
    means = halves.mean(axis=1)
    within = halves.var(axis=1, ddof=1).mean()
    between = n * means.var(ddof=1)
    if within == 0:
        return 1.0 if between == 0 else math.inf
    var_plus = (n - 1) / n * within + between / n
    return math.sqrt(var_plus / within)


def _autocov(x: np.ndarray) -> np.ndarray:
    n = x.shape[-1]
    size = 1 << (2 * n - 1).bit_length()
    xc = x - x.mean(axis=-1, keepdims=True)
    f = np.fft.rfft(xc, size)
    return np.fft.irfft(f * np.conj(f), size)[..., :n] / n


def effective_sample_size(x: np.ndarray) -> float:
    """Multi-chain ESS with Geyer's initial positive sequence truncation."""
    x = np.asarray(x, dtype=float)
    m, n = x.shape
    acov = _autocov(x)
    chain_var = acov[:, 0] * n / (n - 1.0)
    within = chain_var.mean()
    var_plus = within * (n - 1.0) / n
    if m > 1:
        var_plus += x.mean(axis=1).var(ddof=1)
    if var_plus == 0:
        return float(m * n)
    rho = 1.0 - (within - acov.mean(axis=0)) / var_plus
    rho[0] = 1.0
    tau = -1.0
    for k in range(0, n - 1, 2):
        pair = rho[k] + rho[k + 1]
        if pair < 0:
            break
        tau += 2.0 * pair
    return float(m * n / max(tau, 1.0 / math.log10(max(m * n, 10))))


def rhat(samples, param) -> float:
    return split_rhat(_as_chains(samples, param))


def ess(samples, param) -> float:
    return effective_sample_size(_as_chains(samples, param))
