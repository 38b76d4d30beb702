"""Per-stage latency and storage benchmark over a phantom corpus.

Each image flows phantom -> compress -> encrypt -> decrypt -> mask -> infer.
Every stage runs once as warm-up and then ``repetitions`` more times; the
median wall-clock time is reported. Size columns are deterministic for a
given corpus; timing columns are not.
"""

from __future__ import annotations

import csv
import functools
import io
import statistics
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import astuple, dataclass, field, fields

import numpy as np

from semcrypt.cnn import CnnModel, default_model, he_uniform_init, to_input
from semcrypt.codec import Mode, decode, encode
from semcrypt.crypto import HEADER_LEN, decrypt_container, encrypt_container
from semcrypt.errors import InvariantBreach, SemcryptError, UsageError
from semcrypt.image import ImageBuffer
from semcrypt.mask import MaskKey, apply_mask, derive_mask_plan
from semcrypt.phantom import DEFAULT_NOISE, phantom_corpus
from semcrypt.rng import Xoshiro256

MIN_REPETITIONS = 3
AGGREGATES = ("mean", "median", "p95")


@dataclass(frozen=True)
class BenchRow:
    image_id: str
    raw_bytes: int
    j2l_bytes: int
    semc_bytes: int
    t_compress_ms: float
    t_encrypt_ms: float
    t_decrypt_ms: float
    t_mask_ms: float
    t_infer_ms: float

    @property
    def overhead_ratio(self) -> float:
        return self.semc_bytes / self.j2l_bytes


COLUMNS = tuple(f.name for f in fields(BenchRow))
NUMERIC = COLUMNS[1:]
TIMINGS = tuple(c for c in COLUMNS if c.startswith("t_"))


@dataclass
class BenchReport:
    rows: list[BenchRow] = field(default_factory=list)
    errors: list[tuple[str, str]] = field(default_factory=list)
    contended: bool = False

    def aggregates(self) -> dict[str, dict[str, float]]:
        if not self.rows:
            return {}
        table = np.array([astuple(r)[1:] for r in self.rows], dtype=np.float64)
        return {
            "mean": dict(zip(NUMERIC, table.mean(axis=0))),
            "median": dict(zip(NUMERIC, np.median(table, axis=0))),
            "p95": dict(zip(NUMERIC, np.percentile(table, 95, axis=0))),
        }

    def to_csv(self) -> str:
        out = io.StringIO()
        w = csv.writer(out, lineterminator="\n")
        w.writerow(COLUMNS)
        for r in self.rows:
            w.writerow([r.image_id, r.raw_bytes, r.j2l_bytes, r.semc_bytes,
                        *(f"{getattr(r, c):.3f}" for c in TIMINGS)])
        for image_id, _ in self.errors:
            w.writerow([image_id] + [""] * len(NUMERIC))
        suffix = "[contended]" if self.contended else ""
        for name, stats in self.aggregates().items():
            w.writerow([name + suffix] + [f"{stats[c]:.3f}" for c in NUMERIC])
        return out.getvalue()

    def summary(self) -> dict:
        ratios = [r.overhead_ratio for r in self.rows]
        return {
            "images": len(self.rows),
            "errors": [{"image_id": i, "error": e} for i, e in self.errors],
            "contended_timings": self.contended,
            "overhead_ratio_min": min(ratios) if ratios else None,
            "overhead_ratio_max": max(ratios) if ratios else None,
            "aggregates": self.aggregates(),
        }


@dataclass(frozen=True)
class BenchSettings:
    repetitions: int = 5
    lossless: bool = True
    passphrase: str = "bench-passphrase"
    mask_key: MaskKey = field(default_factory=lambda: MaskKey(bytes(range(32))))
    block_size: int = 8

    def __post_init__(self):
        if self.repetitions < MIN_REPETITIONS:
            raise UsageError(f"repetitions must be >= {MIN_REPETITIONS}")


def _timed(fn, reps: int):
    fn()  # warm-up, not recorded
    times = []
    for _ in range(reps):
        t0 = time.perf_counter()
        out = fn()
        times.append((time.perf_counter() - t0) * 1000.0)
    return out, statistics.median(times)


@functools.lru_cache(maxsize=8)
def _untrained_model(size: int) -> CnnModel:
    # inference latency does not depend on the weights
    return he_uniform_init(default_model(size), Xoshiro256(0))


def bench_image(image_id: str, img: ImageBuffer, model: CnnModel | None, settings: BenchSettings) -> BenchRow:
    reps = settings.repetitions
    mode = Mode.LOSSLESS_53 if settings.lossless else Mode.LOSSY_97
    j2l, t_compress = _timed(lambda: encode(img, mode), reps)
    semc, t_encrypt = _timed(lambda: encrypt_container(j2l, settings.passphrase), reps)
    back, t_decrypt = _timed(lambda: decrypt_container(semc, settings.passphrase), reps)
    if back != j2l:
        raise InvariantBreach("container round-trip changed the payload")
    decoded = decode(back)

    def mask():
        plan = derive_mask_plan(settings.mask_key, decoded.width, decoded.height, settings.block_size)
        return apply_mask(decoded, plan)

    masked, t_mask = _timed(mask, reps)
    model = model or _untrained_model(img.width)
    x = to_input(masked.pixels[None], masked.max_value)
    _, t_infer = _timed(lambda: model.predict_proba(x), reps)
    row = BenchRow(image_id, img.width * img.height * (img.bit_depth // 8), len(j2l), len(semc),
                   t_compress, t_encrypt, t_decrypt, t_mask, t_infer)
    if not 1 <= row.semc_bytes - row.j2l_bytes - HEADER_LEN <= 16:
        raise InvariantBreach("container size does not match header + padding accounting")
    return row


def _bench_one(args):
    image_id, img, model, settings = args
    try:
        return bench_image(image_id, img, model, settings), None
    except SemcryptError as exc:
        return None, (image_id, f"{type(exc).__name__}: {exc}")


def run_bench(images: list[tuple[str, ImageBuffer]], model: CnnModel | None = None,
              settings: BenchSettings | None = None, parallel: bool = False) -> BenchReport:
    """Benchmark ``(image_id, image)`` pairs; failing images become error entries."""
    settings = settings or BenchSettings()
    jobs = [(i, img, model, settings) for i, img in images]
    if parallel and len(jobs) > 1:
        with ProcessPoolExecutor() as pool:
            results = list(pool.map(_bench_one, jobs))
    else:
        results = [_bench_one(j) for j in jobs]
    report = BenchReport(contended=parallel and len(jobs) > 1)
    for row, err in results:
        if row is not None:
            report.rows.append(row)
        else:
            report.errors.append(err)
    return report


def phantom_images(n: int, seed: int, size: int = 64, noise_sigma: float = DEFAULT_NOISE):
    images, _ = phantom_corpus(-(-n // 3), seed, size, noise_sigma)
    return [(f"phantom-{i:04d}", img) for i, img in enumerate(images[:n])]


def run_pipeline_bench(n: int, seed: int, repetitions: int = 5, model: CnnModel | None = None,
                       size: int = 64, lossless: bool = True, parallel: bool = False) -> BenchReport:
    settings = BenchSettings(repetitions=repetitions, lossless=lossless)
    return run_bench(phantom_images(n, seed, size), model, settings, parallel)
