"""Wall-clock comparison of hue jittering and SwapMix on CPU."""

from __future__ import annotations

import time
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.stats import mannwhitneyu

from .augment import sample_lambda, sample_permutation, swap_mix
from .colorspace import hue_jitter

DEFAULT_SHAPES = ((8, 3, 112, 112), (8, 3, 224, 224), (16, 3, 224, 224))


@dataclass
class TimingStats:
    name: str
    shape: tuple
    runs: int
    times_ms: list = field(repr=False)

    @property
    def median(self) -> float:
        return float(np.median(self.times_ms))

    @property
    def mean(self) -> float:
        return float(np.mean(self.times_ms))

    @property
    def p95(self) -> float:
        return float(np.percentile(self.times_ms, 95))

    def summary(self) -> dict:
        return {"op": self.name, "shape": list(self.shape), "runs": self.runs,
                "median_ms": self.median, "mean_ms": self.mean, "p95_ms": self.p95}


@dataclass
class Comparison:
    a: str
    b: str
    shape: tuple
    median_ratio: float
    p_value: float
    significant: bool
    level: float = 0.01

    def to_dict(self) -> dict:
        d = asdict(self)
        d["shape"] = list(self.shape)
        return d


def time_op(op, data, runs: int = 500, warmup: int = 20, name: str | None = None) -> TimingStats:
    """Run ``op(data)`` ``warmup`` times untimed, then ``runs`` timed times."""
    if runs < 1 or warmup < 0:
        raise ValueError("need runs >= 1 and warmup >= 0")
    name = name or getattr(op, "__name__", "op")
    before = data.tobytes() if isinstance(data, np.ndarray) else None
    try:
        for _ in range(warmup):
            op(data)
        times = []
        for _ in range(runs):
            t0 = time.perf_counter_ns()
            op(data)
            times.append((time.perf_counter_ns() - t0) / 1e6)
    except Exception as exc:
        raise RuntimeError(f"benchmarked op {name!r} failed: {exc}") from exc
    if before is not None and data.tobytes() != before:
        raise RuntimeError(f"benchmarked op {name!r} mutated its input")
    shape = tuple(data.shape) if hasattr(data, "shape") else ()
    return TimingStats(name, shape, runs, times)


def compare(a: TimingStats, b: TimingStats, level: float = 0.01) -> Comparison:
    """Median time ratio ``a / b`` and a two-sided Mann-Whitney U test."""
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    if a.runs != b.runs:
        raise ValueError(f"run count mismatch: {a.runs} vs {b.runs}")
    if a.times_ms == b.times_ms:
        p = 1.0
    else:
        p = float(mannwhitneyu(a.times_ms, b.times_ms, alternative="two-sided").pvalue)
    ratio = a.median / b.median if b.median > 0 else float("inf")
    return Comparison(a.name, b.name, a.shape, ratio, p, p < level, level)


def run_benchmark(shapes=DEFAULT_SHAPES, runs: int = 500, warmup: int = 20, seed: int = 0) -> dict:
    """Time both operations on identical uint8 input for every shape."""
    results = []
    for shape in shapes:
        rng = np.random.default_rng(seed)
        video = rng.integers(0, 256, size=shape, dtype=np.uint8)

        def hue(v, rng=np.random.default_rng(seed)):
            return hue_jitter(v, float(rng.uniform(-180, 180)))

        def swapmix(v, rng=np.random.default_rng(seed)):
            return swap_mix(v, sample_permutation(rng), sample_lambda(rng, 1.0))

        hj = time_op(hue, video, runs, warmup, name="hue_jitter")
        sm = time_op(swapmix, video, runs, warmup, name="swap_mix")
        results.append({"hue_jitter": hj.summary(), "swap_mix": sm.summary(),
                        "comparison": compare(hj, sm).to_dict()})
    return {"runs": runs, "warmup": warmup, "seed": seed, "results": results}


def format_table(report: dict) -> str:
    lines = [f"{'shape':>18}  {'op':>10}  {'median ms':>10}  {'mean ms':>10}  {'p95 ms':>10}"]
    for r in report["results"]:
        for key in ("hue_jitter", "swap_mix"):
            s = r[key]
            shape = "x".join(map(str, s["shape"]))
            lines.append(f"{shape:>18}  {key:>10}  {s['median_ms']:10.3f}  {s['mean_ms']:10.3f}  {s['p95_ms']:10.3f}")
        c = r["comparison"]
        lines.append(f"{'':>18}  speedup {c['median_ratio']:.2f}x  (Mann-Whitney p={c['p_value']:.2g})")
    return "\n".join(lines)
