"""KernelSHAP, brute-force Shapley values, and a convergence audit that
compares sampled attributions with a model's additive scores."""

from __future__ import annotations

import logging
import math
from itertools import combinations
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .charts import band_lines
from .errors import ConfigurationError, RankError, SizeError, UnsupportedHeadError
from .metrics import cosine, spearman_rho
from .model import IgnnetModel

logger = logging.getLogger(__name__)

Scorer = Callable[[np.ndarray], np.ndarray]
EXACT_LIMIT = 15


def kernel_weight(m: int, size: int) -> float:
    """Shapley kernel pi(M, |z|) for 0 < |z| < M."""
    if not 0 < size < m:
        raise ValueError(f"coalition size {size} outside (0, {m})")
    return (m - 1) / (math.comb(m, size) * size * (m - size))


@dataclass
class CoalitionSample:
    mask: np.ndarray
    weight: float
    value: float = float("nan")


@dataclass
class ShapResult:
    values: np.ndarray
    base_value: float
    full_value: float
    n_coalitions: int
    enumerated: bool

    @property
    def total(self) -> float:
        """Base value plus attributions: reproduces ``full_value``."""
        return self.base_value + math.fsum(self.values)


def _masked_inputs(masks: np.ndarray, instance: np.ndarray, background: np.ndarray) -> np.ndarray:
    return np.where(masks.astype(bool), instance, background)


def _scalar_scores(scorer: Scorer, rows: np.ndarray) -> np.ndarray:
    out = np.asarray(scorer(rows), dtype=np.float64).reshape(-1)
    if out.shape[0] != rows.shape[0]:
        raise ConfigurationError(f"scorer returned {out.shape[0]} values for {rows.shape[0]} rows")
    return out


def _all_masks(m: int) -> np.ndarray:
    codes = np.arange(2**m, dtype=np.int64)
    return ((codes[:, None] >> np.arange(m)) & 1).astype(np.int8)


def exact_shapley(scorer: Scorer, instance, background) -> np.ndarray:
    """Shapley values by summing factorial-weighted marginal contributions
    over all 2^M coalitions (M <= 15)."""
    x = np.asarray(instance, dtype=np.float64).ravel()
    bg = np.asarray(background, dtype=np.float64).ravel()
    m = x.size
    if m > EXACT_LIMIT:
        raise SizeError(f"exact Shapley values need 2^{m} evaluations; limit is M <= {EXACT_LIMIT}")
    if bg.size != m:
        raise ConfigurationError("instance and background differ in length")
    masks = _all_masks(m)
    v = _scalar_scores(scorer, _masked_inputs(masks, x, bg))
    sizes = masks.sum(axis=1)
    # weight of coalition S for a player outside S: |S|! (M-|S|-1)! / M!
    w = np.array([math.factorial(s) * math.factorial(m - s - 1) / math.factorial(m) if s < m else 0.0
                  for s in range(m + 1)])
    codes = np.arange(2**m)
    phi = np.zeros(m)
    for j in range(m):
        without = codes[(codes >> j) & 1 == 0]
        phi[j] = np.sum(w[sizes[without]] * (v[without | (1 << j)] - v[without]))
    return phi


class CoalitionSampler:
    """Coalitions with kernel weights for a budget of model evaluations.

    Subset sizes are visited from the outside in (1 and M-1, then 2 and
    M-2, ...). A size pair is enumerated completely while the remaining
    budget covers it; the leftover kernel mass is then spread over paired
    random draws (a coalition and its complement), with repeated draws
    merged and weighted by their multiplicity.
    """

    def __init__(self, m: int, budget: int, rng: np.random.Generator, max_draw_factor: int = 50):
        if m < 2:
            raise ConfigurationError("KernelSHAP needs at least 2 features")
        if budget < 2:
            raise ConfigurationError("sample budget must be at least 2")
        self.m, self.budget, self.rng = m, budget, rng
        self.max_draw_factor = max_draw_factor

    @property
    def n_possible(self) -> int:
        return 2**self.m - 2

    def sample(self) -> tuple[np.ndarray, np.ndarray, bool]:
        """Returns (masks, weights, enumerated_all). Weights sum to 1."""
        m = self.m
        if self.budget >= self.n_possible:
            masks = _all_masks(m)[1:-1]
            sizes = masks.sum(axis=1)
            weights = np.array([kernel_weight(m, s) for s in sizes])
            return masks, weights / weights.sum(), True

        n_sizes = (m - 1 + 1) // 2  # sizes 1 .. ceil((M-1)/2)
        size_mass = np.array([(m - 1) / (s * (m - s)) for s in range(1, n_sizes + 1)])
        paired = np.array([s != m - s for s in range(1, n_sizes + 1)])
        size_mass[paired] *= 2
        size_mass /= size_mass.sum()

        masks: list[np.ndarray] = []
        weights: list[float] = []
        left = self.budget
        mass_left = 1.0
        done = 0
        for idx, s in enumerate(range(1, n_sizes + 1)):
            count = math.comb(m, s) * (2 if paired[idx] else 1)
            share = size_mass[idx] / mass_left if mass_left > 0 else 0.0
            if left * share + 1e-8 < count:
                break
            per = size_mass[idx] / count
            for combo in combinations(range(m), s):
                mask = np.zeros(m, dtype=np.int8)
                mask[list(combo)] = 1
                masks.append(mask)
                weights.append(per)
                if paired[idx]:
                    masks.append(1 - mask)
                    weights.append(per)
            left -= count
            mass_left -= size_mass[idx]
            done += 1

        if done < n_sizes and left > 0:
            rest = size_mass[done:] / size_mass[done:].sum()
            drawn: dict[bytes, list] = {}
            attempts = 0
            while len(drawn) < left and attempts < self.max_draw_factor * self.budget:
                attempts += 1
                s = done + 1 + int(self.rng.choice(len(rest), p=rest))
                mask = np.zeros(m, dtype=np.int8)
                mask[self.rng.choice(m, size=s, replace=False)] = 1
                pair = [mask] + ([1 - mask] if s != m - s else [])
                for z in pair:
                    key = z.tobytes()
                    if key in drawn:
                        drawn[key][1] += 1.0
                    elif len(drawn) < left:  # the budget may cut the last pair
                        drawn[key] = [z, 1.0]
            total = sum(c for _, c in drawn.values())
            for z, c in drawn.values():
                masks.append(z)
                weights.append(mass_left * c / total)
        w = np.array(weights)
        return np.array(masks, dtype=np.int8), w / w.sum(), False


def solve_constrained(masks: np.ndarray, weights: np.ndarray, y: np.ndarray, total: float) -> np.ndarray:
    """Weighted least squares for phi with sum(phi) == total imposed by
    eliminating the last coordinate."""
    z = masks.astype(np.float64)
    target = y - z[:, -1] * total
    design = z[:, :-1] - z[:, -1:]
    sw = np.sqrt(weights)[:, None]
    a = design * sw
    b = target * sw[:, 0]
    if np.linalg.matrix_rank(a) < a.shape[1]:
        raise RankError(f"KernelSHAP system is singular with {len(masks)} coalitions; increase the sample budget")
    head, *_ = np.linalg.lstsq(a, b, rcond=None)
    return np.append(head, total - head.sum())


def kernel_shap(scorer: Scorer, instance, background, n_samples: int = 2048, seed: int = 0) -> ShapResult:
    """KernelSHAP attributions of ``scorer`` at ``instance`` against one
    background row. ``n_samples`` bounds the number of coalitions
    evaluated; budgets of at least 2^M - 2 enumerate every coalition.

    The attributions sum to ``f(instance) - f(background)`` (up to the
    rounding of one subtraction).
    """
    x = np.asarray(instance, dtype=np.float64).ravel()
    bg = np.asarray(background, dtype=np.float64).ravel()
    if bg.size != x.size:
        raise ConfigurationError("instance and background differ in length")
    m = x.size
    ends = _scalar_scores(scorer, np.stack([bg, x]))
    base, full = float(ends[0]), float(ends[1])
    masks, weights, enumerated = CoalitionSampler(m, n_samples, np.random.default_rng(seed)).sample()
    y = _scalar_scores(scorer, _masked_inputs(masks, x, bg)) - base
    phi = solve_constrained(masks, weights, y, full - base)
    return ShapResult(phi, base, full, len(masks), enumerated)


# -- convergence audit -----------------------------------------------------

@dataclass
class ShapAuditReport:
    schedule: list[int]
    instances: list[int]
    cosine: np.ndarray  # instances x schedule
    spearman: np.ndarray
    coalitions: np.ndarray  # coalitions actually evaluated
    zero_vector_flags: np.ndarray
    seed: int
    background: list[float]
    reference: str = "tau"
    scale: str = "logit"
    notes: list[str] = field(default_factory=list)

    @property
    def mean_cosine(self) -> np.ndarray:
        return self.cosine.mean(axis=0)

    @property
    def std_cosine(self) -> np.ndarray:
        return self.cosine.std(axis=0)

    @property
    def mean_spearman(self) -> np.ndarray:
        return self.spearman.mean(axis=0)

    @property
    def std_spearman(self) -> np.ndarray:
        return self.spearman.std(axis=0)

    def improved_fraction(self) -> float:
        """Share of instances whose final cosine is at least their first."""
        return float(np.mean(self.cosine[:, -1] >= self.cosine[:, 0]))

    def to_dict(self) -> dict:
        return {
            "schedule": self.schedule,
            "instances": self.instances,
            "seed": self.seed,
            "reference": self.reference,
            "scale": self.scale,
            "background": self.background,
            "cosine": self.cosine.tolist(),
            "spearman": self.spearman.tolist(),
            "coalitions": self.coalitions.tolist(),
            "zero_vector_flags": self.zero_vector_flags.tolist(),
            "mean_cosine": self.mean_cosine.tolist(),
            "std_cosine": self.std_cosine.tolist(),
            "mean_spearman": self.mean_spearman.tolist(),
            "std_spearman": self.std_spearman.tolist(),
            "improved_fraction": self.improved_fraction(),
            "notes": self.notes,
        }

    def to_svg(self, title: str = "KernelSHAP vs model scores") -> str:
        return band_lines(
            self.schedule,
            {"cosine": (self.mean_cosine, self.std_cosine), "Spearman": (self.mean_spearman, self.std_spearman)},
            title, "coalitions sampled",
        )


def logit_scorer(model: IgnnetModel, class_index: Optional[int] = None) -> Scorer:
    """Pre-link output of ``model`` (one class's logit for multi-class)."""
    def score(rows: np.ndarray) -> np.ndarray:
        logits = model.logits(rows, batch_size=4096)
        return logits if logits.ndim == 1 else logits[:, class_index]
    return score


def convergence_audit(model: IgnnetModel, instances: np.ndarray, background: np.ndarray,
                      schedule: Sequence[int] = (32, 128, 512, 2048, 8192), seed: int = 0,
                      instance_ids: Optional[Sequence[int]] = None, centered: bool = False) -> ShapAuditReport:
    """Cosine and Spearman similarity between KernelSHAP attributions of the
    logit and the model's scores, per instance and sample budget.

    Instance ``i`` draws its coalitions from seed ``seed ^ i``. With
    ``centered`` the reference becomes ``tau(x) - tau(background)``.
    """
    from .explain import explain_instance

    if model.config.head != "interpretable":
        raise UnsupportedHeadError("convergence audit compares against additive scores; the head is opaque")
    schedule = [int(s) for s in schedule]
    if len(schedule) < 2:
        raise ConfigurationError("schedule needs at least 2 points")
    if any(b <= a for a, b in zip(schedule, schedule[1:])):
        raise ConfigurationError(f"schedule must be strictly increasing, got {schedule}")
    instances = np.atleast_2d(np.asarray(instances, dtype=np.float64))
    background = np.asarray(background, dtype=np.float64).ravel()
    ids = list(instance_ids) if instance_ids is not None else list(range(len(instances)))
    n, k = len(instances), len(schedule)
    cos = np.zeros((n, k))
    rho = np.zeros((n, k))
    used = np.zeros((n, k), dtype=np.int64)
    flags = np.zeros((n, k), dtype=bool)
    bg_expl = explain_instance(model, background) if centered else None
    for i, x in enumerate(instances):
        expl = explain_instance(model, x)
        reference = expl.tau
        scorer = logit_scorer(model, expl.class_index)
        if centered:
            ref_bg = bg_expl.tau if expl.binary else bg_expl.all_tau[expl.class_index]
            reference = expl.tau - ref_bg
        for j, budget in enumerate(schedule):
            result = kernel_shap(scorer, x, background, budget, seed ^ ids[i])
            cos[i, j], flags[i, j] = cosine(result.values, reference, with_flag=True)
            rho[i, j] = spearman_rho(result.values, reference)
            used[i, j] = result.n_coalitions
        logger.debug("audit instance %d: cosine %s", ids[i], np.round(cos[i], 4).tolist())
    return ShapAuditReport(schedule, ids, cos, rho, used, flags, seed, background.tolist(),
                           "tau-centered" if centered else "tau")
