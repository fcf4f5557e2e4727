"""Monte Carlo certification engine.

The procedure per input: split (for the dual mode), draw a selection round
of noise samples to pick the candidate class, draw an independent estimation
round, lower-bound the candidate's per-branch probability with the exact
binomial confidence limit, and certify through the closed-form radius if the
abstain gate passes.

Determinism contract: a certificate is a pure function of (inputs,
parameters, seed).  Noise is drawn in fixed-size blocks whose generator keys
encode (seed, phase, branch, block index), so neither the worker count nor
oracle batching can change a certificate.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from smoothcert.oracle import CountingOracle, as_counting
from smoothcert.partition import ImageTensor, PartitionIndex, downsample, resize_batch
from smoothcert.radius import (
    RadiusResult,
    drs_radius_lower,
    rs_radius_lower,
)
from smoothcert.statfun import ConfidenceLevel, clopper_pearson_lower

__all__ = [
    "ABSTAIN",
    "NOISE_BLOCK",
    "RandomStream",
    "SmoothedCounts",
    "Certificate",
    "sample_under_noise",
    "certify_drs",
    "certify_rs",
    "worker_count",
]

ABSTAIN = -1
# Samples per noise block and per oracle request.  Fixed: the block structure
# is part of the determinism contract, not a tuning knob.
NOISE_BLOCK = 1000

PHASE_SELECT = 0
PHASE_ESTIMATE = 1

MODE_RS = "RS"
MODE_DRS = "DRS"
MODE_DRS_ASYM = "DRS_ASYM"


@dataclass
class RandomStream:
    """A counter-based random stream addressed by (seed, stream_id).

    Distinct id pairs give statistically independent sequences; equal pairs
    replay the identical sequence.  The id packs lanes: bits 60+ phase, 56+
    branch, 24+ sample index, low 24 the noise block, so every work unit of
    every certification owns its own stream no matter how work is scheduled.
    """

    seed: int
    stream_id: int = 0

    def for_sample(self, sample_index: int) -> "RandomStream":
        if not 0 <= sample_index < 2**32:
            raise ValueError("sample index out of range")
        return RandomStream(seed=self.seed, stream_id=self.stream_id | (sample_index << 24))

    def child(self, phase: int, branch: int, block: int) -> "RandomStream":
        if not 0 <= block < 2**24:
            raise ValueError("block index out of range")
        sid = self.stream_id | (int(phase) << 60) | (int(branch) << 56) | int(block)
        return RandomStream(seed=self.seed, stream_id=sid)

    def generator(self) -> np.random.Generator:
        if self._gen is None:
            key = np.array([self.seed, self.stream_id], dtype=np.uint64)
            self._gen = np.random.Generator(np.random.Philox(key=key))
        return self._gen

    def normal(self, sigma: float, shape) -> np.ndarray:
        return self.generator().normal(0.0, sigma, size=shape)

    def __post_init__(self) -> None:
        self.seed = int(self.seed) & (2**64 - 1)
        self.stream_id = int(self.stream_id) & (2**64 - 1)
        self._gen = None


@dataclass(frozen=True)
class SmoothedCounts:
    """Per-class vote counts per branch from one sampling round."""

    counts_left: np.ndarray
    counts_right: np.ndarray
    trials: int

    def __post_init__(self) -> None:
        if self.trials < 1:
            raise ValueError("trials must be >= 1")
        for c in (self.counts_left, self.counts_right):
            if int(np.sum(c)) != self.trials:
                raise ValueError("per-branch counts must sum to trials")


@dataclass(frozen=True)
class Certificate:
    """The output of one certification: a prediction (or abstention), the
    certified radius, the branch lower bounds, and full provenance."""

    prediction: int
    radius: float
    p_lower_left: float
    p_lower_right: float | None
    sigma: float
    n0: int
    n: int
    alpha: float
    seed: int
    mode: str
    sigma_r: float | None = None
    runner_up: int | None = None
    clamp_flags: frozenset = field(default_factory=frozenset)

    @property
    def abstained(self) -> bool:
        return self.prediction == ABSTAIN

    @property
    def confidence_note(self) -> dict:
        """Both readings of the overall confidence: the per-branch bounds are
        each one-sided at 1 - alpha; jointly they fail with probability at
        most 2 alpha."""
        return {"per_branch": 1.0 - self.alpha, "joint_lower_bound": 1.0 - 2.0 * self.alpha}


def worker_count(workers: int | None = None) -> int:
    """Resolve the sampling worker count: explicit arg, then the
    SMOOTHCERT_THREADS environment variable, then one (0 means auto)."""
    if workers is None:
        env = os.environ.get("SMOOTHCERT_THREADS", "").strip()
        workers = int(env) if env else 1
    if workers == 0:
        workers = os.cpu_count() or 1
    if workers < 1:
        raise ValueError("worker count must be >= 1 (or 0 for auto)")
    return workers


def _blocks(trials: int) -> list[tuple[int, int]]:
    out = []
    start = 0
    block = 0
    while start < trials:
        size = min(NOISE_BLOCK, trials - start)
        out.append((block, size))
        start += size
        block += 1
    return out


def _count_branch(
    oracle: CountingOracle,
    x: np.ndarray,
    trials: int,
    sigma: float,
    stream: RandomStream,
    phase: int,
    branch: int,
    resize_shape: tuple[int, int] | None,
    interp: str,
    pool: ThreadPoolExecutor | None,
) -> np.ndarray:
    def run_block(item: tuple[int, int]) -> np.ndarray:
        block, size = item
        gen = stream.child(phase, branch, block)
        noised = x[None, :, :, :] + gen.normal(sigma, (size,) + x.shape)
        if resize_shape is not None:
            noised = resize_batch(noised, resize_shape[0], resize_shape[1], interp)
        return oracle.count_batch(noised.reshape(size, -1))

    blocks = _blocks(trials)
    if pool is None:
        results = [run_block(b) for b in blocks]
    else:
        results = list(pool.map(run_block, blocks))
    return np.sum(results, axis=0, dtype=np.int64)


def _resize_plan(oracle: CountingOracle, sub: ImageTensor, target: tuple[int, int, int]) -> tuple[int, int] | None:
    """Decide whether branch samples must be resized for this oracle."""
    c, h, w = target
    if oracle.input_dim == sub.dim:
        return None
    if oracle.input_dim == c * h * w:
        return (h, w)
    raise ValueError(
        f"oracle input_dim {oracle.input_dim} matches neither the sub-image "
        f"dim {sub.dim} nor the full-resolution dim {c * h * w}"
    )


def sample_under_noise(
    oracle_l,
    oracle_r,
    x_l: ImageTensor,
    x_r: ImageTensor,
    trials: int,
    sigma: float,
    stream: RandomStream,
    *,
    sigma_r: float | None = None,
    phase: int = PHASE_SELECT,
    resize_shape: tuple[int, int] | None = None,
    interp: str = "bilinear",
    workers: int | None = None,
) -> SmoothedCounts:
    """Draw noise samples per branch, classify them, and count votes.

    Noise is added to the sub-images first and any resize happens after, so
    the certified geometry lives in the sub-image space.  Counts are exact
    integer sums and independent of worker count.
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    oracle_l = as_counting(oracle_l)
    oracle_r = as_counting(oracle_r)
    if oracle_l.votes_per_sample != oracle_r.votes_per_sample:
        raise ValueError("branches must carry the same ensemble size")
    nworkers = worker_count(workers)
    pool = ThreadPoolExecutor(max_workers=nworkers) if nworkers > 1 else None
    try:
        counts_l = _count_branch(
            oracle_l, x_l.data, trials, sigma, stream, phase, 0, resize_shape, interp, pool
        )
        counts_r = _count_branch(
            oracle_r, x_r.data, trials, sigma if sigma_r is None else sigma_r,
            stream, phase, 1, resize_shape, interp, pool,
        )
    finally:
        if pool is not None:
            pool.shutdown()
    total = trials * oracle_l.votes_per_sample
    return SmoothedCounts(counts_left=counts_l, counts_right=counts_r, trials=total)


def _top_two(counts: np.ndarray) -> tuple[int, int]:
    order = np.lexsort((np.arange(len(counts)), -counts))
    return int(order[0]), int(order[1])


def certify_drs(
    oracle_l,
    oracle_r,
    x: ImageTensor,
    idx: PartitionIndex,
    sigma: float,
    n0: int = 100,
    n: int = 100_000,
    alpha: float = 0.001,
    stream: RandomStream | None = None,
    *,
    seed: int | None = None,
    sigma_r: float | None = None,
    interp: str = "bilinear",
    workers: int | None = None,
) -> Certificate:
    """Certify one input through the dual (split-input) smoothed classifier.

    Selection round picks the candidate class from the summed branch counts;
    the estimation round is sampled from fresh streams; each branch gets a
    one-sided binomial lower bound at confidence 1 - alpha; certification
    happens iff the two bounds sum to at least one.
    """
    if n0 < 1 or n < 1:
        raise ValueError("n0 and n must be >= 1")
    alpha = float(ConfidenceLevel(alpha))
    if stream is None:
        stream = RandomStream(seed=0 if seed is None else seed)
    oracle_l = as_counting(oracle_l)
    oracle_r = as_counting(oracle_r)

    pair = downsample(x, idx)
    target = pair.parent_shape
    resize_shape = _resize_plan(oracle_l, pair.left, target)
    if resize_shape != _resize_plan(oracle_r, pair.right, target):
        raise ValueError("branch oracles disagree on the required resize")

    common = dict(
        sigma_r=sigma_r, resize_shape=resize_shape, interp=interp, workers=workers
    )
    counts0 = sample_under_noise(
        oracle_l, oracle_r, pair.left, pair.right, n0, sigma, stream,
        phase=PHASE_SELECT, **common,
    )
    c_hat_a, c_hat_b = _top_two(counts0.counts_left + counts0.counts_right)
    counts = sample_under_noise(
        oracle_l, oracle_r, pair.left, pair.right, n, sigma, stream,
        phase=PHASE_ESTIMATE, **common,
    )
    p_lower_l = clopper_pearson_lower(int(counts.counts_left[c_hat_a]), counts.trials, alpha)
    p_lower_r = clopper_pearson_lower(int(counts.counts_right[c_hat_a]), counts.trials, alpha)

    mode = MODE_DRS if sigma_r is None else MODE_DRS_ASYM
    if p_lower_l + p_lower_r >= 1.0:
        if mode == MODE_DRS:
            result = drs_radius_lower(p_lower_l, p_lower_r, sigma)
        else:
            result = _asym_lower(p_lower_l, p_lower_r, sigma, sigma_r)
        prediction, radius, flags = c_hat_a, result.radius, result.clamp_flags
    else:
        prediction, radius, flags = ABSTAIN, 0.0, frozenset()

    return Certificate(
        prediction=prediction,
        radius=radius,
        p_lower_left=float(p_lower_l),
        p_lower_right=float(p_lower_r),
        sigma=float(sigma),
        n0=n0,
        n=n,
        alpha=alpha,
        seed=stream.seed,
        mode=mode,
        sigma_r=None if sigma_r is None else float(sigma_r),
        runner_up=c_hat_b,
        clamp_flags=flags,
    )


def _asym_lower(p_lower_l: float, p_lower_r: float, sigma_l: float, sigma_r: float) -> RadiusResult:
    from smoothcert.radius import BranchProbs, asym_variance_radius

    return asym_variance_radius(
        BranchProbs.worst_case(p_lower_l),
        BranchProbs.worst_case(p_lower_r),
        sigma_l,
        sigma_r,
    )


def certify_rs(
    oracle,
    x: ImageTensor,
    sigma: float,
    n0: int = 100,
    n: int = 100_000,
    alpha: float = 0.001,
    stream: RandomStream | None = None,
    *,
    seed: int | None = None,
    workers: int | None = None,
    _branch: int = 0,
) -> Certificate:
    """Certify one input through plain single-input smoothing.

    ``_branch`` selects the stream lane and exists so a branch-by-branch run
    can replay exactly the noise certify_drs would draw for that branch.
    """
    if n0 < 1 or n < 1:
        raise ValueError("n0 and n must be >= 1")
    alpha = float(ConfidenceLevel(alpha))
    if stream is None:
        stream = RandomStream(seed=0 if seed is None else seed)
    oracle = as_counting(oracle)
    if oracle.input_dim != x.dim:
        raise ValueError(f"oracle input_dim {oracle.input_dim} != image dim {x.dim}")

    nworkers = worker_count(workers)
    pool = ThreadPoolExecutor(max_workers=nworkers) if nworkers > 1 else None
    try:
        counts0 = _count_branch(
            oracle, x.data, n0, sigma, stream, PHASE_SELECT, _branch, None, "bilinear", pool
        )
        c_hat_a, c_hat_b = _top_two(counts0)
        counts = _count_branch(
            oracle, x.data, n, sigma, stream, PHASE_ESTIMATE, _branch, None, "bilinear", pool
        )
    finally:
        if pool is not None:
            pool.shutdown()
    trials = n * oracle.votes_per_sample
    p_lower = clopper_pearson_lower(int(counts[c_hat_a]), trials, alpha)
    result = rs_radius_lower(p_lower, sigma) if p_lower > 0.5 else None

    certified = result is not None and result.certified
    return Certificate(
        prediction=c_hat_a if certified else ABSTAIN,
        radius=result.radius if certified else 0.0,
        p_lower_left=float(p_lower),
        p_lower_right=None,
        sigma=float(sigma),
        n0=n0,
        n=n,
        alpha=alpha,
        seed=stream.seed,
        mode=MODE_RS,
        runner_up=c_hat_b,
    )
