"""Synthetic biometric populations and the FAR/FRR/timing protocol.

Genuine trials enroll each template and query it with a perturbed copy;
impostor trials query each enrollment with every other template (sampled
above ``MAX_FULL_CROSS`` templates). Enroll and unlock are timed
separately with a monotonic clock.
"""

from __future__ import annotations

import csv
import io
import json
import time
from dataclasses import asdict, dataclass, field
from typing import Optional, Sequence

import numpy as np

from .commitment import DEFAULT_PARAMS, CommitmentParams, IrisCode, commit, decommit
from .errors import BiokeyError
from .vault import (
    BIFURCATION,
    DEFAULT_THRESHOLD,
    DEFAULT_TOLERANCES,
    ENDING,
    MIN_POINTS,
    Minutia,
    MinutiaeTemplate,
    lock_key,
    unlock_vault,
)

FINGERPRINT, IRIS = "fingerprint", "iris"
VAULT, COMMITMENT = "vault", "commitment"
GRID = 512
POINTS_RANGE = (30, 50)
MAX_FULL_CROSS = 200


@dataclass(frozen=True)
class NoiseModel:
    flip_probability: float = 0.0
    burst_count: int = 0
    burst_length: int = 0
    sigma_xy: float = 0.0
    sigma_theta: float = 0.0
    drop_rate: float = 0.0
    spurious_rate: float = 0.0

    def __post_init__(self):
        if not 0 <= self.flip_probability <= 0.5:
            raise ValueError("flip_probability must lie in [0, 0.5]")
        for name in ("drop_rate", "spurious_rate"):
            if not 0 <= getattr(self, name) <= 1:
                raise ValueError(f"{name} must lie in [0, 1]")
        if min(self.burst_count, self.burst_length, self.sigma_xy, self.sigma_theta) < 0:
            raise ValueError("noise magnitudes must be non-negative")

    @classmethod
    def from_json(cls, data) -> "NoiseModel":
        if isinstance(data, str):
            data = json.loads(data) if data.strip() else {}
        data = dict(data)
        if "burst" in data:
            data["burst_count"], data["burst_length"] = data.pop("burst")
        return cls(**data)

    @property
    def is_zero(self) -> bool:
        return self == NoiseModel()


def _rng(seed) -> np.random.Generator:
    return np.random.default_rng(seed)


def random_template(rng: np.random.Generator, n_points: Optional[int] = None) -> MinutiaeTemplate:
    n = n_points or int(rng.integers(POINTS_RANGE[0], POINTS_RANGE[1] + 1))
    seen = set()
    pts = []
    while len(pts) < n:
        x, y, t = (int(v) for v in (rng.integers(GRID), rng.integers(GRID), rng.integers(360)))
        if (x, y, t) in seen:
            continue
        seen.add((x, y, t))
        pts.append(Minutia(x, y, t, BIFURCATION if rng.integers(2) else ENDING))
    return MinutiaeTemplate(tuple(pts))


def gen_population(kind: str, size: int, seed: int, n_bits: int = DEFAULT_PARAMS.n_bits) -> list:
    if size < 2:
        raise ValueError("population needs at least two templates")
    rng = _rng(seed)
    if kind == FINGERPRINT:
        return [random_template(rng) for _ in range(size)]
    if kind == IRIS:
        return [IrisCode(rng.integers(0, 2, n_bits, dtype=np.uint8), f"iris-{i}") for i in range(size)]
    raise ValueError(f"unknown population kind {kind!r}")


def random_attributes(rng: np.random.Generator, names: Sequence[str], fill: float = 0.8) -> dict:
    """Random attribute values, each a token unique enough to string-scan for."""
    return {
        name: f"{name[:3].lower()}-{rng.bytes(6).hex()}"
        for name in names
        if rng.random() < fill
    }


def perturb(template, noise: NoiseModel, seed):
    """Genuine re-capture of ``template`` under ``noise``; zero noise is the identity."""
    if noise.is_zero:
        return template
    rng = _rng(seed)
    if isinstance(template, IrisCode):
        bits = template.bits.copy()
        bits ^= (rng.random(bits.size) < noise.flip_probability).astype(np.uint8)
        for _ in range(noise.burst_count):
            start = int(rng.integers(bits.size))
            bits[start : start + noise.burst_length] ^= 1
        return IrisCode(bits, template.id)

    pts = []
    seen = set()
    for p in template.points:
        if rng.random() < noise.drop_rate:
            continue
        x = int(np.clip(round(p.x + rng.normal(0, noise.sigma_xy)), 0, GRID - 1)) if noise.sigma_xy else p.x
        y = int(np.clip(round(p.y + rng.normal(0, noise.sigma_xy)), 0, GRID - 1)) if noise.sigma_xy else p.y
        t = int(round(p.theta + rng.normal(0, noise.sigma_theta))) % 360 if noise.sigma_theta else p.theta
        if (x, y, t) not in seen:
            seen.add((x, y, t))
            pts.append(Minutia(x, y, t, p.kind))
    n_spurious = int(rng.binomial(len(template), noise.spurious_rate)) if noise.spurious_rate else 0
    n_spurious = max(n_spurious, MIN_POINTS - len(pts))
    while n_spurious > 0:
        x, y, t = int(rng.integers(GRID)), int(rng.integers(GRID)), int(rng.integers(360))
        if (x, y, t) not in seen:
            seen.add((x, y, t))
            pts.append(Minutia(x, y, t, ENDING))
            n_spurious -= 1
    return MinutiaeTemplate(tuple(pts[:128]))


@dataclass
class TrialOutcome:
    id: str
    enroll_time: float
    extract_time: float
    accept: int
    reason: str = ""


@dataclass
class EvalReport:
    system: str
    far: float
    frr: float
    genuine_trials: int
    impostor_trials: int
    false_accepts: int
    false_rejects: int
    impostor_sampled: bool
    enc_total: float
    enc_mean: float
    dec_total: float
    dec_mean: float
    seed: int
    threshold: float
    noise: dict
    trials: list = field(default_factory=list)
    reject_reasons: dict = field(default_factory=dict)

    TIMING_FIELDS = ("enc_total", "enc_mean", "dec_total", "dec_mean")

    def to_dict(self, timings: bool = True) -> dict:
        d = asdict(self)
        if not timings:
            for k in self.TIMING_FIELDS:
                d.pop(k)
            d["trials"] = [{k: v for k, v in t.items() if not k.endswith("_time")} for t in d["trials"]]
        return d

    def to_json(self, timings: bool = True) -> str:
        return json.dumps(self.to_dict(timings), sort_keys=True, indent=1)

    def trials_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf)
        w.writerow(["id", "enroll_time", "extract_time", "accept"])
        for t in self.trials:
            w.writerow([t.id, f"{t.enroll_time:.9f}", f"{t.extract_time:.9f}", t.accept])
        return buf.getvalue()


def _impostor_pairs(size: int, rng: np.random.Generator, limit: Optional[int]) -> tuple[list, bool]:
    if size <= MAX_FULL_CROSS and limit is None:
        return [(i, j) for i in range(size) for j in range(size) if i != j], False
    total = size * (size - 1)
    count = min(limit or MAX_FULL_CROSS * (MAX_FULL_CROSS - 1), total)
    picks = rng.choice(total, size=count, replace=False)
    pairs = []
    for p in sorted(int(v) for v in picks):
        i, r = divmod(p, size - 1)
        pairs.append((i, r if r < i else r + 1))
    return pairs, True


def run_far_frr(
    system: str,
    population: Sequence,
    noise: NoiseModel = NoiseModel(),
    threshold: Optional[float] = None,
    seed: int = 0,
    impostor_limit: Optional[int] = None,
    params: CommitmentParams = DEFAULT_PARAMS,
    tolerances=DEFAULT_TOLERANCES,
    genuine: bool = True,
    impostor: bool = True,
) -> EvalReport:
    """Enroll every template, then run genuine and impostor trials.

    ``threshold`` is the vault match threshold or the commitment Hamming
    threshold depending on ``system``.
    """
    if len(population) < 2:
        raise ValueError("population needs at least two templates")
    root = np.random.SeedSequence(seed)
    key_seq, noise_seq, pair_seq = root.spawn(3)
    key_rng = np.random.default_rng(key_seq)
    noise_seeds = noise_seq.spawn(len(population))
    clock = time.perf_counter

    if system == VAULT:
        threshold = DEFAULT_THRESHOLD if threshold is None else threshold

        def enroll(tmpl):
            digits = str(int(key_rng.integers(10**14, 10**15)))
            z = int(key_rng.integers(0, 2**31))
            t0 = clock()
            helper = lock_key(tmpl, digits, z)
            return helper, digits, clock() - t0

        def attempt(query, enrolled):
            helper, digits, _ = enrolled
            return unlock_vault(query, helper, threshold, tolerances).to_digits() == digits

    elif system == COMMITMENT:
        if threshold is not None:
            params = CommitmentParams(**{**asdict(params), "threshold": threshold})
        threshold = params.threshold

        def enroll(iris):
            key = key_rng.bytes(params.key_bits // 8)
            t0 = clock()
            c = commit(iris, key, params)
            return c, key, clock() - t0

        def attempt(query, enrolled):
            c, key, _ = enrolled
            return decommit(query, c) == key

    else:
        raise ValueError(f"unknown system {system!r}")

    def trial(query, enrolled):
        t0 = clock()
        try:
            ok, reason = attempt(query, enrolled), ""
        except BiokeyError as exc:
            ok, reason = False, getattr(exc, "reason", type(exc).__name__)
        return ok, reason, clock() - t0

    enrolled = [enroll(t) for t in population]
    reasons: dict = {}
    trials = []
    false_rejects = 0
    dec_times = []
    if genuine:
        for i, tmpl in enumerate(population):
            query = perturb(tmpl, noise, noise_seeds[i])
            ok, reason, dt = trial(query, enrolled[i])
            dec_times.append(dt)
            if not ok:
                false_rejects += 1
                reasons[reason or "WrongKey"] = reasons.get(reason or "WrongKey", 0) + 1
            trials.append(TrialOutcome(getattr(tmpl, "id", "") or f"{system}-{i}",
                                       enrolled[i][2], dt, int(ok), reason))

    false_accepts = 0
    pairs, sampled = ([], False)
    if impostor:
        pairs, sampled = _impostor_pairs(len(population), np.random.default_rng(pair_seq), impostor_limit)
        for i, j in pairs:
            ok, _, _ = trial(population[j], enrolled[i])
            false_accepts += int(ok)

    enc = [e[2] for e in enrolled]
    n_gen = len(trials)
    return EvalReport(
        system=system,
        far=false_accepts / len(pairs) if pairs else 0.0,
        frr=false_rejects / n_gen if n_gen else 0.0,
        genuine_trials=n_gen,
        impostor_trials=len(pairs),
        false_accepts=false_accepts,
        false_rejects=false_rejects,
        impostor_sampled=sampled,
        enc_total=float(sum(enc)),
        enc_mean=float(np.mean(enc)),
        dec_total=float(sum(dec_times)),
        dec_mean=float(np.mean(dec_times)) if dec_times else 0.0,
        seed=seed,
        threshold=threshold,
        noise=asdict(noise),
        trials=trials,
        reject_reasons=dict(sorted(reasons.items())),
    )


def frr_curve(
    probabilities: Sequence[float],
    trials: int,
    seed: int,
    params: CommitmentParams = DEFAULT_PARAMS,
) -> dict:
    """Commitment FRR at each i.i.d. flip probability, ``trials`` genuine queries each."""
    population = gen_population(IRIS, trials, seed, params.n_bits)
    return {
        p: run_far_frr(COMMITMENT, population, NoiseModel(flip_probability=p), seed=seed,
                       params=params, impostor=False).frr
        for p in probabilities
    }
