"""One-command comparative experiment: Plain vs Masked vs cipher-control CNNs plus a leakage study.

Everything written to the output directory is a pure function of the seed
(and of ``SEMC_MASK_KEY`` when the caller supplies one), so two runs with the
same inputs produce byte-identical files. Salts and IVs inside the leakage
study come from a seeded generator for that reason; the ``encrypt`` and
``protect`` commands always use operating-system entropy.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
from dataclasses import asdict, dataclass, replace
from pathlib import Path

import numpy as np

from semcrypt.cnn import Domain, EvalReport, Secrets, TrainConfig, evaluate_scores, format_table, save_model, train
from semcrypt.cnn.train import load_split, test_inputs
from semcrypt.codec import encode
from semcrypt.crypto import decrypt_container, encrypt_container, parse_container
from semcrypt.errors import InvariantBreach
from semcrypt.image import ImageBuffer
from semcrypt.leakage import LeakageReport, audit
from semcrypt.mask import MaskKey, apply_mask, apply_mask_batch, derive_mask_plan, invert_mask
from semcrypt.phantom import phantom_corpus
from semcrypt.rng import Xoshiro256

OUTPUT_FILES = (
    "config.json",
    "metrics.csv",
    "report_plain.json",
    "report_masked.json",
    "report_cipher.json",
    "plain.tcnn",
    "masked.tcnn",
    "cipher.tcnn",
    "leakage.json",
    "table.txt",
)
DOMAIN_LABELS = {Domain.PLAIN: "Plain", Domain.MASKED: "Masked", Domain.CIPHER: "CipherControl"}

LEAKAGE_IMAGES = 100
LEAKAGE_SIZE = 256


@dataclass(frozen=True)
class ExperimentConfig:
    seed: int = 7
    epochs: int = 10
    train_per_class: int = 200
    test_per_class: int = 100
    size: int = 64
    leakage_images: int = LEAKAGE_IMAGES
    leakage_size: int = LEAKAGE_SIZE

    def train_config(self, domain: Domain, secrets: Secrets) -> TrainConfig:
        return TrainConfig(epochs=self.epochs, seed=self.seed, train_per_class=self.train_per_class,
                           test_per_class=self.test_per_class, size=self.size, domain=domain, secrets=secrets)


# --- leakage study ------------------------------------------------------------------

def study_passphrase(seed: int, index: int) -> str:
    return hashlib.sha256(f"semcrypt-leakage/{seed}/{index}".encode()).hexdigest()


def leakage_study(n: int = LEAKAGE_IMAGES, seed: int = 7, size: int = LEAKAGE_SIZE,
                  mask_key: MaskKey | None = None) -> list[LeakageReport]:
    """Audit ``n`` phantom/key pairs: lossless ``.j2l`` -> ``.semc`` under a per-image passphrase.

    The ciphertext body (not the fixed header) is what gets audited.
    """
    images, _ = phantom_corpus(-(-n // 3), seed, size)
    mask_key = mask_key or Secrets.from_seed(seed).mask_key
    plan = derive_mask_plan(mask_key, size, size)
    rng = Xoshiro256(seed ^ 0x1EA4)
    reports = []
    for i, img in enumerate(images[:n]):
        j2l = encode(img)
        semc = encrypt_container(j2l, study_passphrase(seed, i), rng=rng)
        if decrypt_container(semc, study_passphrase(seed, i)) != j2l:
            raise InvariantBreach("container round-trip failed in the leakage study")
        masked = apply_mask(img, plan)
        if invert_mask(masked, plan) != img:
            raise InvariantBreach("mask inversion failed in the leakage study")
        reports.append(audit(img, parse_container(semc).ciphertext, masked))
    return reports


def summarize_leakage(reports: list[LeakageReport]) -> dict:
    masked = [r.ssim_plain_vs_masked for r in reports if r.ssim_plain_vs_masked is not None]
    return {
        "images": len(reports),
        "all_pass": all(r.verdict.value == "pass" for r in reports),
        "max_ssim_plain_vs_cipher": max(r.ssim_plain_vs_cipher for r in reports),
        "min_phash_distance": min(r.phash_distance for r in reports),
        "mean_phash_distance": float(np.mean([r.phash_distance for r in reports])),
        "min_cipher_entropy": min(r.cipher_entropy for r in reports),
        "min_chi2_pvalue": min(r.histogram_chi2_pvalue for r in reports),
        "mean_ssim_plain_vs_masked": float(np.mean(masked)) if masked else None,
        "max_ssim_plain_vs_masked": max(masked) if masked else None,
    }


# --- comparative run ----------------------------------------------------------------

@dataclass
class ExperimentResult:
    reports: dict[Domain, EvalReport]
    models: dict[Domain, bytes]
    leakage: list[LeakageReport]

    @property
    def ordering_holds(self) -> bool:
        acc = {d: r.accuracy for d, r in self.reports.items()}
        return acc[Domain.PLAIN] >= acc[Domain.MASKED] >= acc[Domain.CIPHER]


def run_experiment(cfg: ExperimentConfig, mask_key: MaskKey | None = None, log=None) -> ExperimentResult:
    secrets = Secrets.from_seed(cfg.seed)
    if mask_key is not None:
        secrets = replace(secrets, mask_key=mask_key)
    reports, models = {}, {}
    for domain in Domain:
        tcfg = cfg.train_config(domain, secrets)
        if log:
            log(f"training {domain.value} model")
        model = train(tcfg, log)
        x, y = test_inputs(tcfg)
        reports[domain] = evaluate_scores(model.predict_proba(x), y)
        models[domain] = save_model(model)
    # the masked transform must stay invertible on the data it was trained on
    mcfg = cfg.train_config(Domain.MASKED, secrets)
    pixels, _ = load_split(mcfg, "test")
    plan = derive_mask_plan(secrets.mask_key, cfg.size, cfg.size)
    masked = apply_mask_batch(pixels, plan, 255)
    if not np.array_equal(invert_mask_batch(masked, plan), pixels):
        raise InvariantBreach("mask inversion failed on the test split")
    if log:
        log(f"leakage study over {cfg.leakage_images} images")
    leakage = leakage_study(cfg.leakage_images, cfg.seed, cfg.leakage_size, secrets.mask_key)
    return ExperimentResult(reports, models, leakage)


def invert_mask_batch(images: np.ndarray, plan) -> np.ndarray:
    return np.stack([invert_mask(ImageBuffer(im, 8), plan).pixels for im in images]) if len(images) else images


def metrics_csv(reports: dict[Domain, EvalReport]) -> str:
    out = io.StringIO()
    w = csv.writer(out, lineterminator="\n")
    w.writerow(["domain", "accuracy", "macro_f1", "macro_auc", "auc_nodule", "auc_linear", "auc_clear"])
    for domain, r in reports.items():
        aucs = [("" if a is None else f"{a:.6f}") for a in r.auc]
        w.writerow([DOMAIN_LABELS[domain], f"{r.accuracy:.6f}", f"{r.macro_f1:.6f}", f"{r.macro_auc:.6f}", *aucs])
    return out.getvalue()


def _json(data) -> str:
    return json.dumps(data, indent=2, sort_keys=True) + "\n"


def write_outputs(out_dir: str | Path, cfg: ExperimentConfig, result: ExperimentResult) -> list[Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    files = {
        "config.json": _json(asdict(cfg)),
        "metrics.csv": metrics_csv(result.reports),
        "leakage.json": _json({"summary": summarize_leakage(result.leakage),
                               "images": [r.to_dict() for r in result.leakage]}),
        "table.txt": format_table({DOMAIN_LABELS[d]: r for d, r in result.reports.items()}) + "\n",
    }
    for domain, report in result.reports.items():
        files[f"report_{domain.value}.json"] = _json(report.to_dict())
    written = []
    for name in OUTPUT_FILES:
        path = out / name
        if name.endswith(".tcnn"):
            path.write_bytes(result.models[Domain(name.split(".")[0])])
        else:
            path.write_text(files[name])
        written.append(path)
    return written
