"""Synthetic worlds whose surrogates obey a known scaling law exactly.

The generator decomposes the outcome as

    Y = true_mean + signal_sd * x1 + eta,      eta ~ N(0, noise_floor),

so a function of X can explain everything except eta.  A trained
surrogate captures the full signal and carries two defects: the
configured bias profile and a deterministic pseudo-noise field scaled so
the population residual variance lands exactly on the law at the
training size s.  The field is a hash of the feature vector, so the
predictor stays a pure function of x; checkpoints at different s share
the field and only rescale it, mirroring how successive fine-tunes
shrink one error pattern rather than redraw it.

These worlds make brute-force Monte-Carlo oracles possible: every
analytic quantity (residual variance, estimator variance, optimal
split) is known in closed form.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np

from .allocate import solve_optimal_allocation
from .core import (
    LabeledDataset,
    ParameterError,
    Predictor,
    RngSeed,
    UnlabeledDataset,
    UnsupportedSizeError,
    as_seed,
)
from .ppi_mean import ppi_mean_estimate
from .scaling import ScalingLaw, ScalingObservation, eval_variance, fit_scaling_law

_MIX_1 = np.uint64(0x9E3779B97F4A7C15)
_MIX_2 = np.uint64(0xBF58476D1CE4E5B9)
_MIX_3 = np.uint64(0x94D049BB133111EB)
_FIELD_SALT = np.uint64(0xD1B54A32D192ED03)


def _splitmix(z: np.ndarray) -> np.ndarray:
    z = z + _MIX_1
    z = (z ^ (z >> np.uint64(30))) * _MIX_2
    z = (z ^ (z >> np.uint64(27))) * _MIX_3
    return z ^ (z >> np.uint64(31))


def _gauss_field(xs: np.ndarray, key: int) -> np.ndarray:
    """Deterministic standard normals, one per row, keyed by (row bytes, key)."""
    h = np.full(xs.shape[0], np.uint64(key), dtype=np.uint64)
    for j in range(xs.shape[1]):
        bits = np.ascontiguousarray(xs[:, j]).view(np.uint64)
        h = _splitmix(h ^ bits)
    u1 = ((h >> np.uint64(11)).astype(np.float64) + 1.0) * 2.0**-53  # (0, 1]
    h2 = _splitmix(h ^ _FIELD_SALT)
    u2 = (h2 >> np.uint64(11)).astype(np.float64) * 2.0**-53  # [0, 1)
    return np.sqrt(-2.0 * np.log(u1)) * np.cos(2.0 * np.pi * u2)


def _field_key(seed: RngSeed) -> int:
    return int(np.random.SeedSequence((seed.seed, 0xF1E1D)).generate_state(1, np.uint64)[0])


@dataclass(frozen=True)
class BiasProfile:
    """How the surrogate's predictions deviate from the truth.

    ``zero``: no systematic error.  ``constant``: over-predicts by
    ``value`` everywhere.  ``drifting``: over-predicts by
    ``value * (1 + x1)``, so the error has mean ``value`` and moves with
    the features; this is the profile that breaks surrogate-only
    averaging while rectified estimates stay unbiased.
    """

    kind: str
    value: float = 0.0

    def __post_init__(self) -> None:
        if self.kind not in ("zero", "constant", "drifting"):
            raise ParameterError(
                f"bias kind must be zero|constant|drifting, got {self.kind!r}"
            )
        if not np.isfinite(self.value):
            raise ParameterError(f"bias value must be finite, got {self.value}")
        if self.kind == "zero" and self.value != 0.0:
            raise ParameterError("zero bias cannot carry a value")

    @classmethod
    def zero(cls) -> "BiasProfile":
        return cls("zero", 0.0)

    @classmethod
    def constant(cls, value: float) -> "BiasProfile":
        return cls("constant", value)

    @classmethod
    def drifting(cls, slope: float) -> "BiasProfile":
        return cls("drifting", slope)

    def offsets(self, xs: np.ndarray) -> np.ndarray:
        if self.kind == "zero":
            return np.zeros(xs.shape[0])
        if self.kind == "constant":
            return np.full(xs.shape[0], self.value)
        return self.value * (1.0 + xs[:, 0])

    @property
    def variance(self) -> float:
        """Population variance of the offset (features are standard normal)."""
        return self.value**2 if self.kind == "drifting" else 0.0

    @property
    def mean(self) -> float:
        return 0.0 if self.kind == "zero" else self.value


@dataclass(frozen=True)
class SyntheticWorld:
    """A fully-specified population plus the law its surrogates follow.

    ``noise_floor`` is Var(Y | X), the part no predictor can remove; it
    defaults to the law's floor b.  Setting it below b models a surrogate
    family that plateaus above the irreducible noise, which is what an
    improved (externally pre-trained) family can then beat.  ``s_min`` is
    the smallest supported fine-tuning size; None declares a world with
    no trainable surrogate (data generation only).  Within the supported
    range the law may not exceed var_y: a surrogate worse than predicting
    the mean is a configuration error, not an interesting world.
    """

    true_mean: float
    var_y: float
    feature_dim: int
    law: ScalingLaw
    bias: BiasProfile = BiasProfile.zero()
    s_min: int | None = 1
    noise_floor: float | None = None

    def __post_init__(self) -> None:
        if not np.isfinite(self.true_mean):
            raise ParameterError(f"true_mean must be finite, got {self.true_mean}")
        if not np.isfinite(self.var_y) or self.var_y < 0:
            raise ParameterError(f"var_y must be finite and >= 0, got {self.var_y}")
        if not isinstance(self.feature_dim, (int, np.integer)) or self.feature_dim < 1:
            raise ParameterError(f"feature_dim must be an integer >= 1, got {self.feature_dim!r}")
        nf = self.law.b if self.noise_floor is None else self.noise_floor
        if not np.isfinite(nf) or nf < 0:
            raise ParameterError(f"noise_floor must be finite and >= 0, got {nf}")
        if nf > self.law.b + 1e-12:
            raise ParameterError(
                f"noise_floor ({nf}) cannot exceed the law's floor b ({self.law.b}): "
                "no surrogate could then reach its own asymptote"
            )
        if nf > self.var_y:
            raise ParameterError(
                f"noise_floor ({nf}) cannot exceed var_y ({self.var_y})"
            )
        if self.s_min is not None:
            if not isinstance(self.s_min, (int, np.integer)) or self.s_min < 1:
                raise ParameterError(f"s_min must be an integer >= 1 or None, got {self.s_min!r}")
            ceiling = eval_variance(self.law, int(self.s_min))
            if ceiling > self.var_y:
                raise ParameterError(
                    f"law exceeds var_y at s_min={self.s_min} "
                    f"({ceiling:.6g} > {self.var_y:.6g}); raise s_min or var_y"
                )

    @property
    def effective_noise_floor(self) -> float:
        return self.law.b if self.noise_floor is None else self.noise_floor

    @property
    def signal_sd(self) -> float:
        return float(np.sqrt(self.var_y - self.effective_noise_floor))

    def residual_pseudo_noise_var(self, s: int) -> float:
        """Variance the hash field must supply at training size s."""
        return eval_variance(self.law, s) - self.effective_noise_floor - self.bias.variance


def generate_world_data(
    world: SyntheticWorld, n: int, m: int, seed: RngSeed | int
) -> tuple[LabeledDataset, UnlabeledDataset]:
    """Draw n labeled and m unlabeled samples from the world."""
    if not isinstance(n, (int, np.integer)) or n < 1:
        raise ParameterError(f"n must be an integer >= 1, got {n!r}")
    if not isinstance(m, (int, np.integer)) or m < 1:
        raise ParameterError(f"m must be an integer >= 1, got {m!r}")
    seed = as_seed(seed)
    labeled = _generate_labeled(world, int(n), seed.child(1))
    rng_u = seed.child(2).generator()
    xu = rng_u.standard_normal((int(m), world.feature_dim))
    return labeled, UnlabeledDataset(xu)


def _generate_labeled(world: SyntheticWorld, n: int, seed: RngSeed) -> LabeledDataset:
    rng = seed.generator()
    xs = rng.standard_normal((n, world.feature_dim))
    eta_sd = float(np.sqrt(world.effective_noise_floor))
    eta = rng.standard_normal(n) * eta_sd
    ys = world.true_mean + world.signal_sd * xs[:, 0] + eta
    return LabeledDataset(xs, ys)


def _sim_predictor(world: SyntheticWorld, pseudo_var: float, key: int, s_tag: int, label: str) -> Predictor:
    if pseudo_var < -1e-12:
        raise UnsupportedSizeError(
            f"{label}: law leaves no room for the pseudo-noise field "
            f"(needed variance {pseudo_var:.6g} < 0)"
        )
    pseudo_sd = float(np.sqrt(max(pseudo_var, 0.0)))
    mean, signal_sd, bias = world.true_mean, world.signal_sd, world.bias

    def fn(xs: np.ndarray) -> np.ndarray:
        return (
            mean
            + signal_sd * xs[:, 0]
            + bias.offsets(xs)
            + pseudo_sd * _gauss_field(xs, key)
        )

    return Predictor(fn, s=s_tag, label=label)


@dataclass(frozen=True)
class SimTrainer:
    """Stand-in for a fine-tuning run inside a synthetic world.

    ``train`` consumes only the fine-tuning subset's size; the returned
    predictor is a pure function of the feature vector and the trainer
    seed, so it is independent of any rectification or validation data
    by construction.  Residual variance at size s equals the world law
    exactly.
    """

    world: SyntheticWorld
    rng: RngSeed

    def train(self, ft_data: LabeledDataset) -> Predictor:
        return self.train_size(ft_data.n)

    def train_size(self, s: int) -> Predictor:
        """Train at an explicit size (the subset's content is not used)."""
        world = self.world
        if world.s_min is None:
            raise UnsupportedSizeError("this world declares no trainable surrogate")
        if not isinstance(s, (int, np.integer)) or s < world.s_min:
            raise UnsupportedSizeError(
                f"training size {s!r} below the world's minimum {world.s_min}"
            )
        pseudo_var = world.residual_pseudo_noise_var(int(s))
        return _sim_predictor(
            world, pseudo_var, _field_key(self.rng), int(s), f"sim(s={int(s)})"
        )


def base_predictor(world: SyntheticWorld, seed: RngSeed | int) -> Predictor:
    """Surrogate that never saw task labels; residual variance is the law at s=1.

    This is the stand-in for rectifying with an off-the-shelf model, so
    it exists even when the world's supported fine-tuning range starts
    above 1.
    """
    pseudo_var = eval_variance(world.law, 1) - world.effective_noise_floor - world.bias.variance
    return _sim_predictor(world, pseudo_var, _field_key(as_seed(seed)), 0, "base")


# ---------------------------------------------------------------------------
# Experiments
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class BruteForceResult:
    """Empirical variance curve over split fractions, plus its argmin."""

    best_fraction: float
    fractions: np.ndarray
    variances: np.ndarray
    replicates: int


def brute_force_allocation(
    world: SyntheticWorld,
    n: int,
    m: int,
    grid_step: float,
    replicates: int,
    seed: RngSeed | int,
) -> BruteForceResult:
    """Monte-Carlo oracle for the optimal split fraction.

    For every grid fraction in (0, 1) the full pipeline (draw data,
    split, train, rectified estimate) runs ``replicates`` times and the
    empirical variance of the estimate is recorded.  Two common-random-
    numbers devices keep the argmin stable without biasing it.  First,
    within a replicate all fractions share the same labeled draw and
    trainer, so noise is strongly correlated across the grid.  Second,
    the unlabeled pool is drawn once and held fixed across replicates:
    conditional on the pool features, the estimate's mean does not
    depend on the split (the pool contributes the same additive term to
    every fraction), so by the law of total variance the conditioning
    subtracts a split-independent constant from the variance curve and
    leaves its minimizer untouched.
    """
    if not 0.0 < grid_step < 1.0:
        raise ParameterError(f"grid_step must lie in (0, 1), got {grid_step}")
    if replicates < 2:
        raise ParameterError(f"replicates must be >= 2, got {replicates}")
    if not isinstance(n, (int, np.integer)) or n < 4:
        raise ParameterError(f"n must be an integer >= 4, got {n!r}")
    if not isinstance(m, (int, np.integer)) or m < 1:
        raise ParameterError(f"m must be an integer >= 1, got {m!r}")
    seed = as_seed(seed)
    count = int(round(1.0 / grid_step)) - 1
    fractions = np.array([grid_step * (i + 1) for i in range(count)])
    fractions = fractions[(fractions > 0.0) & (fractions < 1.0)]
    sizes = [min(max(int(round(f * n)), 1), n - 2) for f in fractions]

    pool_rng = seed.child(0).generator()
    unlabeled = UnlabeledDataset(pool_rng.standard_normal((int(m), world.feature_dim)))

    estimates = np.empty((fractions.shape[0], replicates))
    for r in range(replicates):
        rep = seed.child(r + 1)
        labeled = _generate_labeled(world, int(n), rep.child(0))
        trainer = SimTrainer(world, rep.child(1))
        perm = rep.child(2).generator().permutation(n)
        for i, s in enumerate(sizes):
            ft = labeled.subset(np.sort(perm[:s]))
            ppi = labeled.subset(np.sort(perm[s:]))
            f = trainer.train(ft)
            estimates[i, r] = ppi_mean_estimate(ppi, unlabeled, f)

    variances = np.var(estimates, axis=1, ddof=1)
    best = int(np.argmin(variances))  # ties resolve to the smaller fraction
    return BruteForceResult(
        best_fraction=float(fractions[best]),
        fractions=fractions,
        variances=variances,
        replicates=replicates,
    )


def analytic_estimator_variance(world: SyntheticWorld, n: int, m: int, s: int) -> float:
    """Closed-form variance of the rectified mean at split s in this world."""
    law_var = eval_variance(world.law, s)
    pred_var = (
        world.signal_sd**2 + world.bias.variance + world.residual_pseudo_noise_var(s)
    )
    return law_var / (n - s) + pred_var / m


@dataclass(frozen=True)
class MethodStats:
    """Monte-Carlo accuracy summary for one estimation method."""

    method: str
    mean_estimate: float
    rmse: float
    mae: float
    variance: float


@dataclass(frozen=True)
class ComparisonReport:
    """Side-by-side Monte-Carlo accuracy of the four mean estimators.

    ``sample_savings`` and ``variance_reduction`` are one and the same
    number: 1 - Var(rectified at s*) / Var(sample mean) equals the saved
    share of labeled data at equal precision.
    """

    rows: tuple[MethodStats, ...]
    s_star: int
    variance_reduction: float
    sample_savings: float
    analytic_variance_reduction: float
    n: int
    m: int
    replicates: int


def run_estimator_comparison(
    world: SyntheticWorld, n: int, m: int, replicates: int, seed: RngSeed | int
) -> ComparisonReport:
    """Monte-Carlo comparison: sample mean, surrogate-only, rectified base,
    and fine-tune-then-rectify at the solver's optimal split."""
    if replicates < 2:
        raise ParameterError(f"replicates must be >= 2, got {replicates}")
    seed = as_seed(seed)
    alloc = solve_optimal_allocation(world.law, n)
    s_star = alloc.s_star_int

    names = ("SampleMean", "FtOnly", "PpiOnly", "FtPpi")
    draws = {name: np.empty(replicates) for name in names}
    for r in range(replicates):
        rep = seed.child(r)
        labeled, unlabeled = generate_world_data(world, n, m, rep.child(0))
        trainer = SimTrainer(world, rep.child(1))

        draws["SampleMean"][r] = float(np.mean(labeled.ys))
        f_full = trainer.train(labeled)
        draws["FtOnly"][r] = float(np.mean(f_full.on(unlabeled)))
        base = base_predictor(world, rep.child(2))
        draws["PpiOnly"][r] = ppi_mean_estimate(labeled, unlabeled, base)
        perm = rep.child(3).generator().permutation(n)
        ft = labeled.subset(np.sort(perm[:s_star]))
        ppi = labeled.subset(np.sort(perm[s_star:]))
        f = trainer.train(ft)
        draws["FtPpi"][r] = ppi_mean_estimate(ppi, unlabeled, f)

    rows = []
    for name in names:
        err = draws[name] - world.true_mean
        rows.append(
            MethodStats(
                method=name,
                mean_estimate=float(np.mean(draws[name])),
                rmse=float(np.sqrt(np.mean(err**2))),
                mae=float(np.mean(np.abs(err))),
                variance=float(np.var(draws[name], ddof=1)),
            )
        )
    var_sm = rows[0].variance
    var_ftppi = rows[3].variance
    reduction = 1.0 - var_ftppi / var_sm
    analytic = 1.0 - n * eval_variance(world.law, s_star) / (world.var_y * (n - s_star))
    return ComparisonReport(
        rows=tuple(rows),
        s_star=s_star,
        variance_reduction=reduction,
        sample_savings=reduction,
        analytic_variance_reduction=float(analytic),
        n=n,
        m=m,
        replicates=replicates,
    )


@dataclass(frozen=True)
class QuantitySummary:
    median: float
    ci_low: float
    ci_high: float


@dataclass(frozen=True)
class BootstrapReport:
    """Stability of the fitted law and implied split under resampling.

    ``quantities`` summarizes each fitted quantity by the median over all
    (dataset, training-seed) outcomes with a percentile bootstrap CI of
    that median.  The variance decomposition splits the total variance of
    the split fraction across outcomes into a dataset-sampling part and a
    training-randomness part; the two parts sum to the total exactly.
    """

    quantities: dict[str, QuantitySummary]
    data_sampling_part: float
    training_randomness_part: float
    total_variance: float
    n_datasets: int
    n_training_seeds: int
    resamples: int


_BOOT_QUANTITIES = ("a", "alpha", "b", "fraction", "r_squared")


def _measure_law_outcome(
    labeled: LabeledDataset,
    val_idx: np.ndarray,
    pool_perm: np.ndarray,
    s_grid: Sequence[int],
    trainer: SimTrainer,
    n_alloc: int,
) -> tuple[float, float, float, float, float]:
    val = labeled.subset(val_idx)
    observations = []
    for s in s_grid:
        ft_idx = np.sort(pool_perm[:s])
        f = trainer.train(labeled.subset(ft_idx))
        resid = val.ys - f.on(val)
        observations.append(ScalingObservation(int(s), float(np.var(resid, ddof=1))))
    fit = fit_scaling_law(observations)
    alloc = solve_optimal_allocation(fit.law, n_alloc)
    return (fit.law.a, fit.law.alpha, fit.law.b, alloc.fraction, fit.r_squared)


def default_measure_grid(world: SyntheticWorld, pool: int, points: int = 7) -> list[int]:
    """Geometric grid of training sizes inside the supported range."""
    lo = max(world.s_min or 1, 16)
    if pool <= lo:
        raise ParameterError(f"pool of {pool} too small for measurements starting at {lo}")
    grid = np.unique(np.geomspace(lo, pool, points).round().astype(int))
    return [int(s) for s in grid]


def bootstrap_robustness(
    world: SyntheticWorld,
    n_datasets: int,
    n_training_seeds: int,
    n_fit: int,
    resamples: int,
    seed: RngSeed | int,
    s_grid: Sequence[int] | None = None,
    training_noise: bool = True,
    n_alloc: int | None = None,
) -> BootstrapReport:
    """Two-level uncertainty audit of the fitted law.

    Draws ``n_datasets`` fresh datasets; on each, refits the law under
    ``n_training_seeds`` training seeds (half the data held out for
    residual measurement, half providing nested fine-tuning subsets).
    With ``training_noise=False`` every training seed is identical, which
    should and does zero out the training-randomness variance part.
    """
    if n_datasets < 2 or n_training_seeds < 1:
        raise ParameterError("need n_datasets >= 2 and n_training_seeds >= 1")
    if resamples < 1:
        raise ParameterError(f"resamples must be >= 1, got {resamples}")
    seed = as_seed(seed)
    n_alloc = n_fit if n_alloc is None else n_alloc

    outcomes = np.empty((n_datasets, n_training_seeds, len(_BOOT_QUANTITIES)))
    for j in range(n_datasets):
        data_seed = seed.child(1, j)
        labeled = _generate_labeled(world, n_fit, data_seed.child(0))
        perm = data_seed.child(1).generator().permutation(n_fit)
        n_val = n_fit // 2
        val_idx = np.sort(perm[:n_val])
        pool_perm = perm[n_val:]
        grid = (
            list(s_grid)
            if s_grid is not None
            else default_measure_grid(world, len(pool_perm))
        )
        for k in range(n_training_seeds):
            trainer = SimTrainer(world, seed.child(2, j, k if training_noise else 0))
            outcomes[j, k, :] = _measure_law_outcome(
                labeled, val_idx, pool_perm, grid, trainer, n_alloc
            )

    flat = outcomes.reshape(-1, len(_BOOT_QUANTITIES))
    rng = seed.child(3).generator()
    idx = rng.integers(0, flat.shape[0], size=(resamples, flat.shape[0]))
    boot_medians = np.median(flat[idx], axis=1)  # (resamples, q)

    quantities = {}
    for qi, name in enumerate(_BOOT_QUANTITIES):
        lo, hi = np.percentile(boot_medians[:, qi], [2.5, 97.5])
        quantities[name] = QuantitySummary(
            median=float(np.median(flat[:, qi])), ci_low=float(lo), ci_high=float(hi)
        )

    fractions = outcomes[:, :, _BOOT_QUANTITIES.index("fraction")]
    per_dataset_mean = fractions.mean(axis=1)
    between = float(np.var(per_dataset_mean))  # population variances: parts
    within = float(np.mean(np.var(fractions, axis=1)))  # sum to the total exactly
    total = float(np.var(fractions))
    return BootstrapReport(
        quantities=quantities,
        data_sampling_part=between,
        training_randomness_part=within,
        total_variance=total,
        n_datasets=n_datasets,
        n_training_seeds=n_training_seeds,
        resamples=resamples,
    )


@dataclass(frozen=True)
class ExternalFtReport:
    """Effect of richer pre-training data, modeled as a shifted law."""

    strength: float
    law_base: ScalingLaw
    law_external: ScalingLaw
    fraction_base: float
    fraction_external: float
    mc_mean: float
    mc_se: float
    true_mean: float
    empirical_variance: float
    analytic_variance: float
    replicates: int

    @property
    def unbiased_within_3se(self) -> bool:
        return abs(self.mc_mean - self.true_mean) <= 3.0 * self.mc_se


def shifted_law(world: SyntheticWorld, strength: float) -> ScalingLaw:
    """Law after adding external fine-tuning data: lower floor, faster decay.

    The floor cannot drop below the world's irreducible noise.
    """
    if not 0.0 <= strength <= 1.0:
        raise ParameterError(f"strength must lie in [0, 1], got {strength}")
    law = world.law
    nf = world.effective_noise_floor
    return ScalingLaw(
        a=law.a,
        alpha=law.alpha * (1.0 + 0.2 * strength),
        b=max(law.b * (1.0 - 0.5 * strength), nf),
    )


def external_ft_experiment(
    world: SyntheticWorld,
    external_strength: float,
    n: int,
    m: int,
    replicates: int,
    seed: RngSeed | int,
) -> ExternalFtReport:
    """Check that the rectified estimator keeps its guarantees under the
    shifted law: unbiasedness and the two-term variance formula."""
    if replicates < 2:
        raise ParameterError(f"replicates must be >= 2, got {replicates}")
    seed = as_seed(seed)
    law2 = shifted_law(world, external_strength)
    world2 = replace(world, law=law2, noise_floor=world.effective_noise_floor)

    alloc_base = solve_optimal_allocation(world.law, n)
    alloc_ext = solve_optimal_allocation(law2, n)
    s = alloc_ext.s_star_int

    estimates = np.empty(replicates)
    for r in range(replicates):
        rep = seed.child(r)
        labeled, unlabeled = generate_world_data(world2, n, m, rep.child(0))
        trainer = SimTrainer(world2, rep.child(1))
        perm = rep.child(2).generator().permutation(n)
        ft = labeled.subset(np.sort(perm[:s]))
        ppi = labeled.subset(np.sort(perm[s:]))
        estimates[r] = ppi_mean_estimate(ppi, unlabeled, trainer.train(ft))

    mc_mean = float(np.mean(estimates))
    mc_var = float(np.var(estimates, ddof=1))
    return ExternalFtReport(
        strength=float(external_strength),
        law_base=world.law,
        law_external=law2,
        fraction_base=alloc_base.fraction,
        fraction_external=alloc_ext.fraction,
        mc_mean=mc_mean,
        mc_se=float(np.sqrt(mc_var / replicates)),
        true_mean=world.true_mean,
        empirical_variance=mc_var,
        analytic_variance=analytic_estimator_variance(world2, n, m, s),
        replicates=replicates,
    )


# ---------------------------------------------------------------------------
# World (de)serialization for scenario files
# ---------------------------------------------------------------------------


def world_from_dict(spec: dict) -> SyntheticWorld:
    """Build a world from a plain dict (parsed scenario JSON)."""
    if not isinstance(spec, dict):
        raise ParameterError(f"world spec must be an object, got {type(spec).__name__}")
    try:
        law_spec = spec["law"]
        law = ScalingLaw(
            a=float(law_spec["a"]), alpha=float(law_spec["alpha"]), b=float(law_spec["b"])
        )
        bias_spec = spec.get("bias", {"kind": "zero"})
        bias = BiasProfile(
            kind=str(bias_spec.get("kind", "zero")),
            value=float(bias_spec.get("value", 0.0)),
        )
        s_min = spec.get("s_min", 1)
        noise_floor = spec.get("noise_floor")
        return SyntheticWorld(
            true_mean=float(spec["true_mean"]),
            var_y=float(spec["var_y"]),
            feature_dim=int(spec.get("feature_dim", 1)),
            law=law,
            bias=bias,
            s_min=None if s_min is None else int(s_min),
            noise_floor=None if noise_floor is None else float(noise_floor),
        )
    except KeyError as exc:
        raise ParameterError(f"world spec missing required key {exc.args[0]!r}") from exc
    except (TypeError, ValueError) as exc:
        raise ParameterError(f"world spec malformed: {exc}") from exc


def world_to_dict(world: SyntheticWorld) -> dict:
    return {
        "true_mean": world.true_mean,
        "var_y": world.var_y,
        "feature_dim": world.feature_dim,
        "law": {"a": world.law.a, "alpha": world.law.alpha, "b": world.law.b},
        "bias": {"kind": world.bias.kind, "value": world.bias.value},
        "s_min": world.s_min,
        "noise_floor": world.noise_floor,
    }
