"""Separable CMA-ES: evolution strategy with a diagonal covariance matrix.

Restricting the covariance to coordinate-wise variances cuts state and
per-generation cost from O(d^2) to O(d), which is what makes the method
usable on embedding vectors with tens of thousands of coordinates. The
strategy constants follow the standard separable-variant defaults,
including the (d+2)/3 learning-rate boost on the covariance updates.

Fitness is maximized natively: candidates are ranked by descending fitness,
no sign-flip layer.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import EmbeddingVector, ValidationError
from .trace import BestSeen, RealClock, RunAborted, RunTrace, TraceEntry, VirtualClock


@dataclass(frozen=True)
class SepCmaParams:
    """Static strategy constants derived from (dimension, population size)."""

    dim: int
    lam: int
    mu: int
    weights: np.ndarray       # positive, descending, sums to 1
    mu_eff: float             # 1 / sum(w_i^2)
    c_sigma: float
    d_sigma: float
    c_c: float
    c_1: float                # rank-one rate before the separable boost
    c_mu: float               # rank-mu rate before the separable boost
    sep_boost: float          # (d+2)/3
    c_1_sep: float            # boosted rates actually used by tell;
    c_mu_sep: float           # clamped so c_1_sep + c_mu_sep <= 1
    chi_d: float              # E||N(0, I_d)||

    @classmethod
    def derive(cls, dim: int, lam: int) -> "SepCmaParams":
        if lam < 2:
            raise ValidationError(f"population size must be >= 2, got {lam}")
        if dim < 1:
            raise ValidationError(f"dimension must be >= 1, got {dim}")
        d = float(dim)
        mu = lam // 2
        # Log-linear recombination weights over the top half of the ranking.
        raw = np.log(mu + 0.5) - np.log(np.arange(1, mu + 1))
        weights = raw / raw.sum()
        mu_eff = 1.0 / float(np.sum(weights**2))

        c_sigma = (mu_eff + 2.0) / (d + mu_eff + 5.0)
        d_sigma = 1.0 + 2.0 * max(0.0, math.sqrt((mu_eff - 1.0) / (d + 1.0)) - 1.0) + c_sigma
        c_c = (4.0 + mu_eff / d) / (d + 4.0 + 2.0 * mu_eff / d)
        c_1 = 2.0 / ((d + 1.3) ** 2 + mu_eff)
        c_mu = min(1.0 - c_1, 2.0 * (mu_eff - 2.0 + 1.0 / mu_eff) / ((d + 2.0) ** 2 + mu_eff))

        sep_boost = (d + 2.0) / 3.0
        # The diagonal-only update tolerates faster learning; the boosted pair
        # must still keep the decay factor 1 - c1' - cmu' nonnegative.
        c_1_sep = min(1.0, c_1 * sep_boost)
        c_mu_sep = min(1.0 - c_1_sep, c_mu * sep_boost)

        chi_d = math.sqrt(d) * (1.0 - 1.0 / (4.0 * d) + 1.0 / (21.0 * d * d))
        return cls(dim=dim, lam=lam, mu=mu, weights=weights, mu_eff=mu_eff,
                   c_sigma=c_sigma, d_sigma=d_sigma, c_c=c_c, c_1=c_1, c_mu=c_mu,
                   sep_boost=sep_boost, c_1_sep=c_1_sep, c_mu_sep=c_mu_sep, chi_d=chi_d)


@dataclass
class BestCandidate:
    """Highest-fitness candidate seen by tell (ask/tell-level bookkeeping)."""

    vector: EmbeddingVector
    fitness: float
    evaluations: int


@dataclass
class SepCmaState:
    """Dynamic strategy state: exactly four d-length arrays plus scalars."""

    mean: np.ndarray     # distribution mean m
    sigma: float         # global step size
    diag_c: np.ndarray   # coordinate-wise variances (the diagonal of C)
    p_sigma: np.ndarray  # step-size evolution path
    p_c: np.ndarray      # covariance evolution path
    generation: int = 0

    def strategy_arrays(self) -> dict[str, np.ndarray]:
        """The complete set of stored d-length arrays, for O(d) auditing."""
        return {"mean": self.mean, "diag_c": self.diag_c,
                "p_sigma": self.p_sigma, "p_c": self.p_c}


class SepCmaEs:
    """Ask/tell optimizer over flat embedding vectors.

    ``ask`` samples lambda candidates x_i = m + sigma * sqrt(diag_c) .* n_i
    and retains the raw steps y_i = (x_i - m) / sigma; ``tell`` consumes the
    candidates' fitness values and adapts mean, paths, variances, and sigma.
    """

    def __init__(self, m0: EmbeddingVector | np.ndarray, sigma0: float,
                 lam: int, seed: int = 0,
                 params: SepCmaParams | None = None):
        if isinstance(m0, EmbeddingVector):
            mean = m0.data.copy()
            self.shape = m0.shape
        else:
            mean = np.asarray(m0, dtype=np.float64).ravel().copy()
            self.shape = (mean.size,)
        if mean.size < 1 or not np.all(np.isfinite(mean)):
            raise ValidationError("initial mean must be non-empty and finite")
        if not (sigma0 > 0):
            raise ValidationError(f"sigma0 must be positive, got {sigma0}")
        d = mean.size
        self.params = params if params is not None else SepCmaParams.derive(d, lam)
        if self.params.dim != d or self.params.lam != lam:
            raise ValidationError("params do not match (dimension, population size)")
        self.state = SepCmaState(
            mean=mean,
            sigma=float(sigma0),
            diag_c=np.ones(d),
            p_sigma=np.zeros(d),
            p_c=np.zeros(d),
            generation=0,
        )
        self.rng = np.random.default_rng(seed)
        self.best: BestCandidate | None = None  # bookkeeping, not strategy state
        self.evaluations = 0

    @property
    def dim(self) -> int:
        return self.params.dim

    def ask(self) -> tuple[list[EmbeddingVector], np.ndarray]:
        """Sample lambda candidates; returns (candidates, raw steps y_i)."""
        st = self.state
        n = self.rng.standard_normal((self.params.lam, self.dim))
        steps = np.sqrt(st.diag_c) * n                      # y_i
        xs = st.mean + st.sigma * steps
        candidates = [EmbeddingVector(data=x, shape=self.shape) for x in xs]
        return candidates, steps

    def tell(self, candidates: list[EmbeddingVector], steps: np.ndarray,
             fitness_values) -> None:
        """Rank by descending fitness and update the full strategy state."""
        p, st = self.params, self.state
        values = np.asarray(fitness_values, dtype=np.float64)
        if values.shape != (p.lam,):
            raise ValidationError(
                f"expected {p.lam} fitness values, got shape {values.shape}")
        if not np.all(np.isfinite(values)):
            raise ValidationError("fitness values must be finite")
        steps = np.asarray(steps, dtype=np.float64)
        if steps.shape != (p.lam, p.dim):
            raise ValidationError("raw steps do not match (lambda, dim)")

        # Descending fitness; ties broken by ascending candidate index.
        order = np.argsort(-values, kind="stable")
        sel = order[: p.mu]
        y_w = p.weights @ steps[sel]                        # sum_i w_i y_(i)

        st.mean = st.mean + st.sigma * y_w                  # c_m = 1

        # Step-size path, whitened with the pre-update variances.
        st.p_sigma = (1.0 - p.c_sigma) * st.p_sigma + math.sqrt(
            p.c_sigma * (2.0 - p.c_sigma) * p.mu_eff) * (y_w / np.sqrt(st.diag_c))
        ps_norm = float(np.linalg.norm(st.p_sigma))

        # Stall indicator: suppress the rank-one pull while the path is still
        # inflating, so the variances do not grow on random-walk noise.
        t1 = st.generation + 1
        h_sigma = ps_norm / math.sqrt(1.0 - (1.0 - p.c_sigma) ** (2 * t1)) < (
            1.4 + 2.0 / (p.dim + 1.0)) * p.chi_d
        hs = 1.0 if h_sigma else 0.0

        st.p_c = (1.0 - p.c_c) * st.p_c + hs * math.sqrt(
            p.c_c * (2.0 - p.c_c) * p.mu_eff) * y_w

        # Diagonal covariance: decay + rank-one (with variance-loss correction
        # when stalled) + rank-mu from the selected squared steps.
        rank_mu = p.weights @ steps[sel] ** 2
        st.diag_c = ((1.0 - p.c_1_sep - p.c_mu_sep) * st.diag_c
                     + p.c_1_sep * (st.p_c**2 + (1.0 - hs) * p.c_c * (2.0 - p.c_c) * st.diag_c)
                     + p.c_mu_sep * rank_mu)

        st.sigma = st.sigma * math.exp((p.c_sigma / p.d_sigma) * (ps_norm / p.chi_d - 1.0))
        st.generation = t1

        self._update_best(candidates, values, order)

    def _update_best(self, candidates, values, order) -> None:
        i = int(order[0])
        self.evaluations += len(candidates)
        if self.best is None or values[i] > self.best.fitness:
            self.best = BestCandidate(vector=candidates[i], fitness=float(values[i]),
                                      evaluations=self.evaluations)

    def run(self, objective, generations: int, clock=None,
            max_wall_s: float | None = None,
            prompt_id: str = "", optimizer_id: str = "sep-cmaes") -> tuple[RunTrace, BestSeen]:
        """Run ask/evaluate/tell cycles and record a best-so-far trace.

        ``objective.evaluate(z)`` must return (MetricScores, FitnessValue).
        The returned best is the maximum-fitness candidate over all
        evaluations, not the final mean (exposed as ``self.state.mean``).
        """
        if generations < 1:
            raise ValidationError(f"need generations >= 1, got {generations}")
        clock = clock if clock is not None else VirtualClock()
        trace = RunTrace(prompt_id=prompt_id, optimizer_id=optimizer_id)
        best: BestSeen | None = None
        evals = 0
        for t in range(generations):
            if max_wall_s is not None and clock.now() >= max_wall_s:
                break
            candidates, steps = self.ask()
            values = []
            for z in candidates:
                try:
                    scores, fv = objective.evaluate(z)
                except Exception as exc:
                    raise RunAborted(f"objective failed at generation {t}: {exc}",
                                     trace, best) from exc
                clock.advance(1)
                evals += 1
                if best is None:
                    best = BestSeen(vector=z, fitness=fv, scores=scores, evaluations=evals)
                else:
                    best.consider(z, fv, scores, evals)
                values.append(fv.value)
            self.tell(candidates, steps, values)
            trace.entries.append(TraceEntry(
                iteration=t + 1, evaluations=evals, wall_s=clock.now(),
                best_fitness=best.fitness.value,
                best_aesthetic=best.scores.aesthetic,
                best_clip=best.scores.clip))
        assert best is not None
        return trace, best
