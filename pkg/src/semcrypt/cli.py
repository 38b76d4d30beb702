"""``semcrypt`` command-line interface.

Secrets never travel in argv: passphrases come from the environment variable
named by ``--pass-env`` (default ``SEMC_PASS``) and mask keys from
``--key-env`` (default ``SEMC_MASK_KEY``), with an interactive prompt as the
fallback when stdin is a terminal. Exit codes: 0 ok, 1 usage, 2 data/format,
3 crypto/MAC, 4 access denied, 5 internal invariant breach.
"""

from __future__ import annotations

import argparse
import getpass
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from semcrypt import __version__
from semcrypt.errors import DataError, InvariantBreach, SemcryptError, UsageError

log = logging.getLogger("semcrypt")

DEFAULT_PASS_ENV = "SEMC_PASS"
DEFAULT_KEY_ENV = "SEMC_MASK_KEY"
CLASS_NAMES = ("nodule", "linear_opacity", "clear_field")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


# --- helpers ----------------------------------------------------------------------

def _emit(args, data: dict, text: str | None = None) -> None:
    """JSON on stdout with ``--json``; otherwise human text unless ``--quiet``."""
    if args.json:
        print(json.dumps(data, sort_keys=True))
    elif not args.quiet:
        print(text if text is not None else json.dumps(data, indent=2, sort_keys=True))


def _secret(var: str, what: str) -> str:
    value = os.environ.get(var)
    if value is None and sys.stdin.isatty():
        value = getpass.getpass(f"{what}: ")
    if not value:
        raise UsageError(f"{what} not provided: set ${var}")
    return value


def _mask_key(args):
    from semcrypt.mask import MaskKey

    return MaskKey.from_text(_secret(args.key_env, "mask key"))


def _read(path: str) -> bytes:
    try:
        return Path(path).read_bytes()
    except FileNotFoundError:
        raise DataError(f"no such file: {path}") from None
    except IsADirectoryError:
        raise DataError(f"is a directory: {path}") from None


def _write(path: str, data: bytes) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Path(path).write_bytes(data)


def _read_image(path: str):
    from semcrypt.image import decode_pgm

    return decode_pgm(_read(path))


def _write_image(path: str, img) -> None:
    from semcrypt.image import encode_pgm

    _write(path, encode_pgm(img))


def _load_model(path: str):
    from semcrypt.cnn import load_model

    return load_model(_read(path))


def _model_image(img, model):
    """The image at the model's input size, windowed to 8 bits if needed."""
    from semcrypt.image import preprocess

    _, h, w = model.input_shape
    if h != w:
        raise DataError("only square models are supported")
    if (img.width, img.height, img.bit_depth) != (w, h, 8):
        img = preprocess(img, w)
    return img


def _model_input(img, model):
    from semcrypt.cnn import to_input

    return to_input(_model_image(img, model).pixels[None])


def _posteriors(probs: np.ndarray) -> dict:
    return {name: round(float(p), 6) for name, p in zip(CLASS_NAMES, probs)}


# --- commands ---------------------------------------------------------------------

def cmd_ingest(args) -> int:
    from semcrypt.dicom import PATIENT_ID, extract_image, parse_dicom, window_from_dataset
    from semcrypt.image import preprocess

    ds = parse_dicom(_read(args.file))
    img = extract_image(ds)
    window = window_from_dataset(ds)
    info = {"file": args.file, "transfer_syntax": ds.transfer_syntax.name, "elements": len(ds.elements),
            "width": img.width, "height": img.height, "bit_depth": img.bit_depth,
            "window": None if window is None else [window.center, window.width]}
    if PATIENT_ID in ds:
        info["patient_id"] = ds.get_str(PATIENT_ID)
    if args.out:
        _write_image(args.out, preprocess(img, args.size, window) if args.size else img)
        info["out"] = args.out
    _emit(args, info)
    return 0


def cmd_phantom(args) -> int:
    from semcrypt.phantom import PhantomClass, PhantomSpec, phantom_generate

    try:
        spec = PhantomSpec(PhantomClass.parse(args.cls), args.size, args.seed, args.noise, args.bit_depth)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    img = phantom_generate(spec)
    _write_image(args.out, img)
    _emit(args, {"out": args.out, "class": spec.class_label.name.lower(), "seed": args.seed,
                 "size": args.size}, f"wrote {args.out}")
    return 0


def cmd_compress(args) -> int:
    from semcrypt.codec import Mode, encode

    img = _read_image(args.input)
    mode = Mode.LOSSY_97 if args.lossy else Mode.LOSSLESS_53
    data = encode(img, mode, args.levels, args.qstep)
    _write(args.output, data)
    raw = img.width * img.height * img.bit_depth // 8
    _emit(args, {"raw": raw, "compressed": len(data), "ratio": raw / len(data), "mode": mode.name.lower()},
          f"{args.input}: {raw} -> {len(data)} bytes ({raw / len(data):.2f}:1)")
    return 0


def cmd_decompress(args) -> int:
    from semcrypt.codec import decode

    img = decode(_read(args.input))
    _write_image(args.output, img)
    _emit(args, {"width": img.width, "height": img.height, "bit_depth": img.bit_depth, "out": args.output},
          f"wrote {args.output}")
    return 0


def cmd_encrypt(args) -> int:
    from semcrypt.crypto import CipherId, encrypt_container

    data = _read(args.input)
    cipher = {"aes128": CipherId.AES128_CBC, "aes256": CipherId.AES256_CBC}[args.cipher]
    out = encrypt_container(data, _secret(args.pass_env, "passphrase"), cipher)
    _write(args.output, out)
    _emit(args, {"plaintext": len(data), "encrypted": len(out), "cipher": args.cipher}, f"wrote {args.output}")
    return 0


def cmd_decrypt(args) -> int:
    from semcrypt.crypto import decrypt_container

    out = decrypt_container(_read(args.input), _secret(args.pass_env, "passphrase"))
    _write(args.output, out)
    _emit(args, {"plaintext": len(out)}, f"wrote {args.output}")
    return 0


def _mask_command(args, forward: bool) -> int:
    from semcrypt.mask import apply_mask, derive_mask_plan, invert_mask

    img = _read_image(args.input)
    plan = derive_mask_plan(_mask_key(args), img.width, img.height, args.block)
    out = apply_mask(img, plan) if forward else invert_mask(img, plan)
    _write_image(args.output, out)
    _emit(args, {"out": args.output, "blocks": plan.block_count, "block": args.block}, f"wrote {args.output}")
    return 0


def cmd_mask(args) -> int:
    return _mask_command(args, True)


def cmd_unmask(args) -> int:
    return _mask_command(args, False)


def _train_config(args, domain):
    from semcrypt.cnn import Secrets, TrainConfig
    from semcrypt.mask import MaskKey

    secrets = Secrets.from_seed(args.seed)
    if os.environ.get(args.key_env):
        from dataclasses import replace

        secrets = replace(secrets, mask_key=MaskKey.from_text(os.environ[args.key_env]))
    return TrainConfig(epochs=args.epochs, seed=args.seed, train_per_class=args.train_per_class,
                       test_per_class=args.test_per_class, size=args.size, domain=domain, secrets=secrets)


def cmd_train(args) -> int:
    from semcrypt.cnn import save_model, train

    cfg = _train_config(args, args.domain)
    model = train(cfg, log=log.info)
    _write(args.out, save_model(model))
    _emit(args, {"out": args.out, "domain": cfg.domain.value, "seed": cfg.seed, "epochs": cfg.epochs},
          f"wrote {args.out}")
    return 0


def cmd_infer(args) -> int:
    model = _load_model(args.model)
    results = []
    for path in args.images:
        probs = model.predict_proba(_model_input(_read_image(path), model))[0]
        results.append({"image": path, "predicted": CLASS_NAMES[int(np.argmax(probs))],
                        "posteriors": _posteriors(probs)})
    text = "\n".join(f"{r['image']}: {r['predicted']} {r['posteriors']}" for r in results)
    _emit(args, {"results": results}, text)
    return 0


def cmd_evaluate(args) -> int:
    from semcrypt.cnn import evaluate_scores, test_inputs

    model = _load_model(args.model)
    cfg = _train_config(args, args.domain)
    if model.input_shape != (1, cfg.size, cfg.size):
        raise DataError(f"model expects {model.input_shape}, evaluation data is {cfg.size}x{cfg.size}")
    x, y = test_inputs(cfg)
    report = evaluate_scores(model.predict_proba(x), y)
    d = report.to_dict()
    if args.report == "csv":
        header = "domain,accuracy,macro_f1,macro_auc"
        text = f"{header}\n{cfg.domain.value},{report.accuracy:.6f},{report.macro_f1:.6f},{report.macro_auc:.6f}"
    else:
        text = json.dumps(d, indent=2, sort_keys=True)
    _emit(args, d, text)
    return 0


def cmd_audit(args) -> int:
    from semcrypt.crypto import MAGIC, parse_container
    from semcrypt.leakage import audit

    plain = _read_image(args.plain)
    blob = _read(args.cipher)
    # audit the ciphertext body; the container header is public framing
    body = parse_container(blob).ciphertext if blob[:4] == MAGIC else blob
    masked = _read_image(args.masked) if args.masked else None
    report = audit(plain, body, masked)
    d = report.to_dict()
    if args.report == "csv":
        cols = ["ssim_plain_vs_cipher", "phash_distance", "cipher_entropy", "histogram_chi2_pvalue",
                "ssim_plain_vs_masked", "verdict"]
        text = ",".join(cols) + "\n" + ",".join("" if d[c] is None else str(d[c]) for c in cols)
    else:
        text = json.dumps(d, indent=2, sort_keys=True)
    _emit(args, d, text)
    return 0


def cmd_vault(args) -> int:
    from semcrypt.vault import Vault

    vault = Vault(args.vault)
    if args.vault_cmd == "put":
        vault.put(_read(args.file), args.id, args.principal)
        _emit(args, {"id": args.id, "stored": True}, f"stored {args.id}")
    elif args.vault_cmd == "get":
        data = vault.get(args.id, args.principal)
        _write(args.out, data)
        _emit(args, {"id": args.id, "bytes": len(data), "out": args.out}, f"wrote {args.out}")
    else:
        ok, bad = vault.verify_audit()
        n = len(vault.audit_lines())
        _emit(args, {"ok": ok, "entries": n, "first_bad_index": bad},
              f"audit chain intact ({n} entries)" if ok else f"audit chain broken at entry {bad}")
        if not ok:
            return DataError.exit_code
    return 0


def cmd_bench(args) -> int:
    from semcrypt.bench import BenchSettings, phantom_images, run_bench

    model = _load_model(args.model) if args.model else None
    settings = BenchSettings(repetitions=args.reps, lossless=not args.lossy)
    report = run_bench(phantom_images(args.n, args.seed, args.size), model, settings, args.parallel)
    _write(args.out, report.to_csv().encode())
    for image_id, err in report.errors:
        log.warning("%s: %s", image_id, err)
    summary = report.summary()
    summary["out"] = args.out
    _emit(args, summary, f"wrote {args.out}: {len(report.rows)} rows, {len(report.errors)} errors")
    return 0


def cmd_protect(args) -> int:
    from semcrypt.codec import Mode, encode
    from semcrypt.crypto import encrypt_container
    from semcrypt.dicom import extract_image, parse_dicom, window_from_dataset
    from semcrypt.image import preprocess

    passphrase = _secret(args.pass_env, "passphrase")
    ds = parse_dicom(_read(args.input))
    img = preprocess(extract_image(ds), args.size, window_from_dataset(ds))
    j2l = encode(img, Mode.LOSSY_97 if args.lossy else Mode.LOSSLESS_53)
    semc = encrypt_container(j2l, passphrase)
    _write(args.output, semc)
    summary = {"raw": img.width * img.height, "compressed": len(j2l), "encrypted": len(semc)}
    # the summary is JSON in both modes
    if not args.quiet or args.json:
        print(json.dumps(summary, sort_keys=True))
    return 0


def _compare_models(args):
    path = Path(args.model)
    if path.is_dir():
        plain, masked = path / "plain.tcnn", path / "masked.tcnn"
        return _load_model(str(plain)), _load_model(str(masked))
    plain = _load_model(args.model)
    return plain, _load_model(args.masked_model) if args.masked_model else plain


def cmd_compare(args) -> int:
    from semcrypt.mask import apply_mask, derive_mask_plan
    from semcrypt.phantom import phantom_corpus

    plain_model, masked_model = _compare_models(args)
    key = _mask_key(args)
    if args.images:
        items = [(p, _read_image(p)) for p in args.images]
    elif args.phantoms:
        images, _ = phantom_corpus(-(-args.phantoms // 3), args.seed, plain_model.input_shape[2])
        items = [(f"phantom-{i:04d}", im) for i, im in enumerate(images[: args.phantoms])]
    else:
        raise UsageError("give image files or --phantoms N")
    if plain_model.input_shape != masked_model.input_shape:
        raise DataError("plain and masked models disagree on input shape")
    size = plain_model.input_shape[2]
    plan = derive_mask_plan(key, size, size, args.block)
    results = []
    for name, img in items:
        img = _model_image(img, plain_model)
        p_plain = plain_model.predict_proba(_model_input(img, plain_model))[0]
        p_masked = masked_model.predict_proba(_model_input(apply_mask(img, plan), masked_model))[0]
        results.append({"image": name, "plain": _posteriors(p_plain), "masked": _posteriors(p_masked),
                        "agree": bool(np.argmax(p_plain) == np.argmax(p_masked))})
    rate = sum(r["agree"] for r in results) / len(results)
    lines = [f"{r['image']}: plain={r['plain']} masked={r['masked']} agree={r['agree']}" for r in results]
    lines.append(f"agreement {rate:.3f} over {len(results)} images")
    _emit(args, {"results": results, "agreement_rate": rate}, "\n".join(lines))
    return 0


def cmd_experiment(args) -> int:
    from semcrypt.experiment import ExperimentConfig, run_experiment, write_outputs
    from semcrypt.mask import MaskKey

    cfg = ExperimentConfig(seed=args.seed, epochs=args.epochs, train_per_class=args.train_per_class,
                           test_per_class=args.test_per_class, leakage_images=args.leakage_images)
    env_key = os.environ.get(args.key_env)
    result = run_experiment(cfg, MaskKey.from_text(env_key) if env_key else None, log=log.info)
    files = write_outputs(args.out_dir, cfg, result)
    acc = {d.value: r.accuracy for d, r in result.reports.items()}
    if not result.ordering_holds:
        log.warning("accuracy ordering Plain >= Masked >= CipherControl does not hold: %s", acc)
    _emit(args, {"out_dir": args.out_dir, "files": [f.name for f in files], "accuracy": acc,
                 "ordering_holds": result.ordering_holds},
          (Path(args.out_dir) / "table.txt").read_text().rstrip())
    return 0


# --- parser -----------------------------------------------------------------------

def _global_flags(parser: argparse.ArgumentParser, suppress: bool) -> None:
    default = (lambda v: argparse.SUPPRESS) if suppress else (lambda v: v)
    parser.add_argument("--json", action="store_true", default=default(False), help="machine-readable output")
    parser.add_argument("--seed", type=int, default=default(7), help="experiment/corpus seed (default 7)")
    parser.add_argument("--quiet", action="store_true", default=default(False), help="only errors on stderr")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="semcrypt", description="Privacy-preserving medical imaging pipeline toolkit.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    _global_flags(parser, suppress=False)
    common = _Parser(add_help=False)
    _global_flags(common, suppress=True)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def add(name, fn, help_text):
        p = sub.add_parser(name, parents=[common], help=help_text)
        p.set_defaults(func=fn)
        return p

    def pass_env(p):
        p.add_argument("--pass-env", default=DEFAULT_PASS_ENV, metavar="VAR",
                       help=f"environment variable holding the passphrase (default {DEFAULT_PASS_ENV})")

    def key_env(p):
        p.add_argument("--key-env", default=DEFAULT_KEY_ENV, metavar="VAR",
                       help=f"environment variable holding the mask key (default {DEFAULT_KEY_ENV})")

    def train_shape(p):
        p.add_argument("--epochs", type=int, default=10)
        p.add_argument("--train-per-class", type=int, default=200)
        p.add_argument("--test-per-class", type=int, default=100)
        p.add_argument("--size", type=int, default=64)
        key_env(p)

    p = add("ingest", cmd_ingest, "parse a DICOM file and report its image")
    p.add_argument("file")
    p.add_argument("--out", help="write the image as PGM")
    p.add_argument("--size", type=int, help="window to 8 bit and resize to SIZExSIZE before writing")

    p = add("phantom", cmd_phantom, "generate a synthetic phantom as PGM")
    p.add_argument("--class", dest="cls", required=True, help="nodule | linear | clear")
    p.add_argument("--size", type=int, default=64)
    p.add_argument("--noise", type=float, default=0.02)
    p.add_argument("--bit-depth", type=int, default=8, choices=(8, 16))
    p.add_argument("--out", required=True)

    p = add("compress", cmd_compress, "PGM -> .j2l")
    p.add_argument("input")
    p.add_argument("output")
    p.add_argument("--lossy", action="store_true", help="9/7 quantized mode (default lossless 5/3)")
    p.add_argument("--levels", type=int)
    p.add_argument("--qstep", type=float, default=8.5)

    p = add("decompress", cmd_decompress, ".j2l -> PGM")
    p.add_argument("input")
    p.add_argument("output")

    p = add("encrypt", cmd_encrypt, "any file -> .semc")
    p.add_argument("input")
    p.add_argument("output")
    p.add_argument("--cipher", choices=("aes128", "aes256"), default="aes256")
    pass_env(p)

    p = add("decrypt", cmd_decrypt, ".semc -> original bytes")
    p.add_argument("input")
    p.add_argument("output")
    pass_env(p)

    for name, fn in (("mask", cmd_mask), ("unmask", cmd_unmask)):
        p = add(name, fn, f"{name} a PGM with the keyed block transform")
        p.add_argument("input")
        p.add_argument("output")
        p.add_argument("--block", type=int, default=8)
        key_env(p)

    p = add("train", cmd_train, "train a CNN on one domain")
    p.add_argument("--domain", choices=("plain", "masked", "cipher"), default="plain")
    p.add_argument("--out", required=True)
    train_shape(p)

    p = add("infer", cmd_infer, "class posteriors for PGM images")
    p.add_argument("--model", required=True)
    p.add_argument("images", nargs="+")

    p = add("evaluate", cmd_evaluate, "evaluate a model on the seeded test split")
    p.add_argument("--model", required=True)
    p.add_argument("--domain", choices=("plain", "masked", "cipher"), default="plain")
    p.add_argument("--report", choices=("json", "csv"), default="json")
    train_shape(p)

    p = add("audit", cmd_audit, "leakage audit of a ciphertext (and masked image) against its plaintext")
    p.add_argument("--plain", required=True)
    p.add_argument("--cipher", required=True)
    p.add_argument("--masked")
    p.add_argument("--report", choices=("json", "csv"), default="json")

    p = add("vault", cmd_vault, "policy-gated encrypted object store")
    vsub = p.add_subparsers(dest="vault_cmd", required=True, parser_class=_Parser)
    for name in ("put", "get", "verify-audit"):
        v = vsub.add_parser(name, parents=[common])
        v.add_argument("--vault", required=True)
        v.add_argument("--as", dest="principal", required=name != "verify-audit")
        if name != "verify-audit":
            v.add_argument("--id", required=True)
        if name == "put":
            v.add_argument("file")
        if name == "get":
            v.add_argument("--out", required=True)

    p = add("bench", cmd_bench, "per-stage latency and storage benchmark")
    p.add_argument("--n", type=int, default=100)
    p.add_argument("--reps", type=int, default=5)
    p.add_argument("--size", type=int, default=64)
    p.add_argument("--lossy", action="store_true")
    p.add_argument("--parallel", action="store_true")
    p.add_argument("--model")
    p.add_argument("--out", required=True)

    p = add("protect", cmd_protect, "DICOM -> normalized, compressed, encrypted .semc")
    p.add_argument("input")
    p.add_argument("output")
    p.add_argument("--size", type=int, default=64)
    p.add_argument("--lossy", action="store_true")
    pass_env(p)

    p = add("compare", cmd_compare, "plain vs masked inference agreement")
    p.add_argument("--model", required=True, help="plain model file, or an experiment output directory")
    p.add_argument("--masked-model", help="model for the masked variant (default: same as --model)")
    p.add_argument("--phantoms", type=int, help="compare on N seeded phantoms instead of files")
    p.add_argument("--block", type=int, default=8)
    p.add_argument("images", nargs="*")
    key_env(p)

    p = add("experiment", cmd_experiment, "train and evaluate Plain/Masked/CipherControl, audit leakage")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--epochs", type=int, default=10)
    p.add_argument("--train-per-class", type=int, default=200)
    p.add_argument("--test-per-class", type=int, default=100)
    p.add_argument("--leakage-images", type=int, default=100)
    key_env(p)
    return parser


def main(argv: list[str] | None = None) -> int:
    # a fresh handler per call so the current stderr is used (tests swap it)
    handler = logging.StreamHandler(sys.stderr)
    handler.setFormatter(logging.Formatter("semcrypt: %(message)s"))
    log.addHandler(handler)
    log.propagate = False
    log.setLevel(logging.INFO)
    try:
        args = build_parser().parse_args(argv)
        if args.quiet:
            log.setLevel(logging.ERROR)
        return args.func(args)
    except SemcryptError as exc:
        log.error("%s: %s", type(exc).__name__, exc)
        return exc.exit_code
    except ValueError as exc:
        log.error("invalid value: %s", exc)
        return UsageError.exit_code
    except OSError as exc:
        log.error("%s", exc)
        return DataError.exit_code
    except Exception as exc:  # noqa: BLE001 - anything else is a bug
        log.error("internal error: %r", exc)
        return InvariantBreach.exit_code
    finally:
        log.removeHandler(handler)

if __name__ == "__main__":
    sys.exit(main())
