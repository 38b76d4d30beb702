import json
import subprocess
import sys

import numpy as np
import pytest

from semcrypt.cli import main
from semcrypt.dicom import synth_dicom
from semcrypt.image import ImageBuffer, read_pgm
from semcrypt.phantom import PhantomClass, PhantomSpec, phantom_generate


@pytest.fixture(autouse=True)
def secrets_env(monkeypatch):
    monkeypatch.setenv("SEMC_PASS", "correct horse")
    monkeypatch.setenv("SEMC_MASK_KEY", "mask key text")


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    out = capsys.readouterr()
    return code, out.out, out.err


def run_json(capsys, *argv):
    code, out, err = run(capsys, "--json", *argv)
    assert code == 0, err
    return json.loads(out)


@pytest.fixture
def pgm(tmp_path, capsys):
    path = tmp_path / "p.pgm"
    assert run(capsys, "phantom", "--class", "nodule", "--seed", 3, "--size", 64, "--out", path)[0] == 0
    return path


@pytest.fixture
def dcm(tmp_path):
    img = phantom_generate(PhantomSpec(PhantomClass.LINEAR_OPACITY, 96, 5, bit_depth=16))
    path = tmp_path / "x.dcm"
    path.write_bytes(synth_dicom(img, "ANON-1"))
    return path


def test_phantom_matches_library(pgm):
    assert read_pgm(pgm) == phantom_generate(PhantomSpec(PhantomClass.NODULE, 64, 3))


def test_global_flags_before_or_after(tmp_path, capsys):
    a = run_json(capsys, "phantom", "--class", "clear", "--out", tmp_path / "a.pgm", "--seed", 9)
    code, out, _ = run(capsys, "--seed", 9, "phantom", "--class", "clear", "--out", tmp_path / "b.pgm", "--json")
    assert code == 0 and json.loads(out)["seed"] == a["seed"] == 9
    assert (tmp_path / "a.pgm").read_bytes() == (tmp_path / "b.pgm").read_bytes()


def test_quiet_suppresses_stdout(tmp_path, capsys):
    code, out, _ = run(capsys, "--quiet", "phantom", "--class", "clear", "--out", tmp_path / "a.pgm")
    assert code == 0 and out == ""


def test_compress_round_trip(pgm, tmp_path, capsys):
    info = run_json(capsys, "compress", pgm, tmp_path / "p.j2l")
    assert info["mode"] == "lossless_53" and info["compressed"] < info["raw"]
    run_json(capsys, "decompress", tmp_path / "p.j2l", tmp_path / "back.pgm")
    assert read_pgm(tmp_path / "back.pgm") == read_pgm(pgm)
    lossy = run_json(capsys, "compress", "--lossy", pgm, tmp_path / "q.j2l")
    assert lossy["ratio"] > info["ratio"]


def test_encrypt_decrypt(pgm, tmp_path, capsys, monkeypatch):
    run_json(capsys, "encrypt", pgm, tmp_path / "p.semc")
    run_json(capsys, "decrypt", tmp_path / "p.semc", tmp_path / "p2.pgm")
    assert (tmp_path / "p2.pgm").read_bytes() == pgm.read_bytes()
    monkeypatch.setenv("OTHER_VAR", "x")
    run_json(capsys, "encrypt", "--cipher", "aes128", "--pass-env", "OTHER_VAR", pgm, tmp_path / "q.semc")
    assert run(capsys, "decrypt", "--pass-env", "OTHER_VAR", tmp_path / "q.semc", tmp_path / "q.pgm")[0] == 0


def test_crypto_exit_codes(pgm, tmp_path, capsys, monkeypatch):
    semc = tmp_path / "p.semc"
    run_json(capsys, "encrypt", pgm, semc)
    monkeypatch.setenv("SEMC_PASS", "wrong")
    assert run(capsys, "decrypt", semc, tmp_path / "o")[0] == 3
    monkeypatch.setenv("SEMC_PASS", "correct horse")
    raw = bytearray(semc.read_bytes())
    raw[100] ^= 4
    semc.write_bytes(bytes(raw))
    code, out, err = run(capsys, "decrypt", semc, tmp_path / "o")
    assert code == 3 and out == "" and "MacMismatch" in err
    assert run(capsys, "decrypt", pgm, tmp_path / "o")[0] == 2
    monkeypatch.delenv("SEMC_PASS")
    assert run(capsys, "encrypt", pgm, tmp_path / "o")[0] == 1


def test_mask_unmask(pgm, tmp_path, capsys, monkeypatch):
    run_json(capsys, "mask", "--block", 8, pgm, tmp_path / "m.pgm")
    assert read_pgm(tmp_path / "m.pgm") != read_pgm(pgm)
    run_json(capsys, "unmask", "--block", 8, tmp_path / "m.pgm", tmp_path / "u.pgm")
    assert read_pgm(tmp_path / "u.pgm") == read_pgm(pgm)
    assert run(capsys, "mask", "--block", 7, pgm, tmp_path / "x.pgm")[0] == 2
    monkeypatch.delenv("SEMC_MASK_KEY")
    assert run(capsys, "mask", pgm, tmp_path / "x.pgm")[0] == 1


def test_ingest(dcm, tmp_path, capsys):
    info = run_json(capsys, "ingest", dcm, "--out", tmp_path / "i.pgm", "--size", 64)
    assert (info["width"], info["height"], info["bit_depth"]) == (96, 96, 16)
    assert info["patient_id"] == "ANON-1"
    out = read_pgm(tmp_path / "i.pgm")
    assert (out.width, out.bit_depth) == (64, 8)


def test_protect(dcm, tmp_path, capsys, monkeypatch):
    code, out, _ = run(capsys, "protect", dcm, tmp_path / "x.semc")
    summary = json.loads(out)
    assert code == 0 and (tmp_path / "x.semc").exists()
    assert summary["raw"] == 64 * 64
    assert 81 <= summary["encrypted"] - summary["compressed"] <= 96
    bad = tmp_path / "bad.dcm"
    bad.write_bytes(dcm.read_bytes()[:300])
    assert run(capsys, "protect", bad, tmp_path / "y.semc")[0] == 2
    monkeypatch.delenv("SEMC_PASS")
    assert run(capsys, "protect", dcm, tmp_path / "z.semc")[0] == 1
    assert not (tmp_path / "z.semc").exists()


def test_audit(pgm, tmp_path, capsys):
    img = read_pgm(pgm)
    big = tmp_path / "big.pgm"
    run_json(capsys, "phantom", "--class", "nodule", "--size", 256, "--out", big)
    run_json(capsys, "compress", big, tmp_path / "b.j2l")
    run_json(capsys, "encrypt", tmp_path / "b.j2l", tmp_path / "b.semc")
    run_json(capsys, "mask", big, tmp_path / "bm.pgm")
    rep = run_json(capsys, "audit", "--plain", big, "--cipher", tmp_path / "b.semc", "--masked", tmp_path / "bm.pgm")
    assert set(rep) >= {"ssim_plain_vs_cipher", "phash_distance", "cipher_entropy", "histogram_chi2_pvalue",
                        "ssim_plain_vs_masked", "verdict"}
    assert rep["ssim_plain_vs_masked"] < 0.5
    code, out, _ = run(capsys, "audit", "--plain", big, "--cipher", tmp_path / "b.semc", "--report", "csv")
    header, row = out.strip().splitlines()
    assert header.startswith("ssim_plain_vs_cipher,") and len(row.split(",")) == 6
    assert img.width == 64


def test_vault_flow(tmp_path, capsys):
    from semcrypt.vault import PolicyRule, Vault

    vdir = tmp_path / "vault"
    Vault.create(vdir, [PolicyRule("alice", a, "scan-*", "allow") for a in ("read", "write")])
    obj = tmp_path / "o.semc"
    from semcrypt.crypto import encrypt_container

    obj.write_bytes(encrypt_container(b"payload", "pw"))
    run_json(capsys, "vault", "put", "--vault", vdir, "--as", "alice", "--id", "scan-1", obj)
    run_json(capsys, "vault", "get", "--vault", vdir, "--as", "alice", "--id", "scan-1", "--out", tmp_path / "g")
    assert (tmp_path / "g").read_bytes() == obj.read_bytes()
    assert run(capsys, "vault", "get", "--vault", vdir, "--as", "eve", "--id", "scan-1", "--out", tmp_path / "e")[0] == 4
    assert run(capsys, "vault", "put", "--vault", vdir, "--as", "alice", "--id", "scan-1", obj)[0] == 2
    assert run(capsys, "vault", "get", "--vault", vdir, "--as", "alice", "--id", "scan-2", "--out", tmp_path / "e")[0] == 2
    assert run(capsys, "vault", "get", "--vault", vdir, "--id", "scan-1", "--out", tmp_path / "e")[0] == 1
    info = run_json(capsys, "vault", "verify-audit", "--vault", vdir)
    assert info == {"ok": True, "entries": 5, "first_bad_index": None}
    log = vdir / "audit.log"
    log.write_bytes(log.read_bytes().replace(b'"principal":"eve"', b'"principal":"bob"'))
    code, out, _ = run(capsys, "--json", "vault", "verify-audit", "--vault", vdir)
    assert code == 2 and json.loads(out)["first_bad_index"] == 2


def test_bench(tmp_path, capsys):
    info = run_json(capsys, "bench", "--n", 4, "--reps", 3, "--seed", 2, "--out", tmp_path / "b.csv")
    lines = (tmp_path / "b.csv").read_text().splitlines()
    assert len(lines) == 1 + 4 + 3 and info["images"] == 4
    assert 1.0 < info["overhead_ratio_min"] <= info["overhead_ratio_max"] <= 1.3
    run_json(capsys, "bench", "--n", 0, "--reps", 3, "--out", tmp_path / "e.csv")
    assert (tmp_path / "e.csv").read_text().count("\n") == 1
    assert run(capsys, "bench", "--n", 2, "--reps", 2, "--out", tmp_path / "x.csv")[0] == 1


@pytest.fixture(scope="module")
def tiny_models(tmp_path_factory):
    d = tmp_path_factory.mktemp("models")
    shape = ["--epochs", "4", "--train-per-class", "30", "--test-per-class", "10", "--size", "32", "--seed", "4"]
    for domain in ("plain", "masked"):
        assert main(["--quiet", "train", "--domain", domain, "--out", str(d / f"{domain}.tcnn"), *shape]) == 0
    return d, shape


def test_train_infer_evaluate(tiny_models, pgm, capsys):
    d, shape = tiny_models
    res = run_json(capsys, "infer", "--model", d / "plain.tcnn", pgm)["results"][0]
    assert res["predicted"] in ("nodule", "linear_opacity", "clear_field")
    assert sum(res["posteriors"].values()) == pytest.approx(1, abs=1e-5)
    code, out, _ = run(capsys, "evaluate", "--model", d / "plain.tcnn", "--report", "csv", *shape)
    assert code == 0 and out.splitlines()[0] == "domain,accuracy,macro_f1,macro_auc"
    rep = run_json(capsys, "evaluate", "--model", d / "plain.tcnn", *shape)
    assert rep["accuracy"] > 0.5
    assert run(capsys, "infer", "--model", d / "missing.tcnn", pgm)[0] == 2


def test_compare(tiny_models, pgm, capsys):
    d, _ = tiny_models
    res = run_json(capsys, "compare", "--model", d, pgm)
    assert len(res["results"]) == 1 and set(res["results"][0]) == {"image", "plain", "masked", "agree"}
    res = run_json(capsys, "compare", "--model", d / "plain.tcnn", "--masked-model", d / "masked.tcnn",
                   "--phantoms", 6, "--seed", 4)
    assert len(res["results"]) == 6 and 0 <= res["agreement_rate"] <= 1
    assert run(capsys, "compare", "--model", d / "nope.tcnn", pgm)[0] == 2


def test_experiment_file_set_and_determinism(tmp_path, capsys):
    from semcrypt.experiment import OUTPUT_FILES

    args = ["experiment", "--seed", 3, "--epochs", 1, "--train-per-class", 6, "--test-per-class", 3,
            "--leakage-images", 2]
    a = run_json(capsys, *args, "--out-dir", tmp_path / "a")
    run_json(capsys, *args, "--out-dir", tmp_path / "b")
    assert sorted(a["files"]) == sorted(OUTPUT_FILES)
    assert sorted(p.name for p in (tmp_path / "a").iterdir()) == sorted(OUTPUT_FILES)
    for name in OUTPUT_FILES:
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes(), name


def test_usage_errors(capsys):
    assert run(capsys)[0] == 1
    assert run(capsys, "phantom", "--class", "nodule")[0] == 1
    assert run(capsys, "phantom", "--class", "elephant", "--out", "/tmp/x.pgm")[0] == 1
    assert run(capsys, "bogus")[0] == 1


def test_console_script_streams(tmp_path):
    out = tmp_path / "p.pgm"
    proc = subprocess.run([sys.executable, "-m", "semcrypt.cli", "--json", "phantom", "--class", "linear",
                           "--out", str(out)], capture_output=True, text=True)
    assert proc.returncode == 0
    assert json.loads(proc.stdout)["class"] == "linear_opacity"
    proc = subprocess.run([sys.executable, "-m", "semcrypt.cli", "--json", "decompress", str(out), str(out) + "x"],
                          capture_output=True, text=True)
    assert proc.returncode == 2 and proc.stdout == "" and "BadMagic" in proc.stderr
