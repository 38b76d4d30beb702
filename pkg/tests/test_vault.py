import itertools
import json
import threading

import pytest
from hypothesis import given, strategies as st

from semcrypt.crypto import encrypt_container
from semcrypt.errors import AccessDenied, IdCollision, InvalidObjectId, MacMismatch, MalformedPolicy, NotFound
from semcrypt.vault import (
    GENESIS,
    Action,
    AuditEntry,
    Effect,
    PolicyRule,
    Vault,
    chain_entry,
    evaluate_policy,
    glob_match,
    parse_policy,
    verify_audit_chain,
)

ALICE_ALL = [PolicyRule("alice", a, "*", "allow") for a in Action]


class FakeClock:
    def __init__(self, start=1_700_000_000):
        self.t = start

    def __call__(self):
        self.t += 1
        return self.t


@pytest.fixture
def vault(tmp_path):
    rules = ALICE_ALL + [PolicyRule("bob", "read", "scan-*", "allow")]
    return Vault.create(tmp_path / "v", rules, clock=FakeClock())


@pytest.fixture(scope="module")
def blob():
    return encrypt_container(b"pixels" * 50, "pw")


def test_policy_examples():
    assert evaluate_policy([], "alice", Action.READ, "x") is Effect.DENY
    rules = [PolicyRule("alice", "read", "scan-*", "allow")]
    assert evaluate_policy(rules, "alice", Action.READ, "scan-42") is Effect.ALLOW
    assert evaluate_policy(rules, "alice", Action.READ, "xscan-42") is Effect.DENY
    assert evaluate_policy(rules, "alice", Action.WRITE, "scan-42") is Effect.DENY


def test_first_match_against_all_orderings():
    deny = PolicyRule("*", "decrypt", "*", "deny")
    allow = PolicyRule("alice", "decrypt", "*", "allow")
    assert evaluate_policy([deny, allow], "alice", Action.DECRYPT, "x") is Effect.DENY
    for order in itertools.permutations([deny, allow]):
        first = next(r for r in order if r.matches("alice", Action.DECRYPT, "x"))
        assert evaluate_policy(list(order), "alice", Action.DECRYPT, "x") is first.effect


def glob_oracle(pattern, text):
    # recursive definition of '*' as any run; independent of the regex translation
    if not pattern:
        return not text
    if pattern[0] == "*":
        return any(glob_oracle(pattern[1:], text[i:]) for i in range(len(text) + 1))
    return bool(text) and text[0] == pattern[0] and glob_oracle(pattern[1:], text[1:])


@given(st.text("ab*?[].", max_size=6), st.text("ab?[].", max_size=6))
def test_glob_matches_oracle(pattern, text):
    assert glob_match(pattern, text) == glob_oracle(pattern, text)


@given(st.text(max_size=12), st.sampled_from(list(Action)), st.text(max_size=20))
def test_default_deny(principal, action, resource):
    assert evaluate_policy([], principal, action, resource) is Effect.DENY


def test_policy_file_format(tmp_path):
    rules = [PolicyRule("alice", "read", "scan-*", "allow")]
    v = Vault.create(tmp_path, rules)
    doc = json.loads(v.policy_path.read_text())
    assert doc == {"rules": [{"principal": "alice", "action": "read", "resource": "scan-*", "effect": "allow"}]}
    assert v.rules() == rules
    with pytest.raises(MalformedPolicy):
        parse_policy('{"rules": [{"principal": "a"}]}')
    with pytest.raises(MalformedPolicy):
        parse_policy('{"rules": [{"principal": "a", "action": "fly", "resource": "*", "effect": "allow"}]}')


def test_put_get_round_trip(vault, blob):
    vault.put(blob, "scan-1", "alice")
    assert vault.get("scan-1", "alice") == blob
    assert vault.get("scan-1", "bob") == blob
    assert vault.open("scan-1", "alice", "pw") == b"pixels" * 50
    assert (vault.objects / "scan-1.semc").read_bytes() == blob
    with pytest.raises(MacMismatch):
        vault.open("scan-1", "alice", "wrong")


def test_denials_are_audited(vault, blob):
    vault.put(blob, "scan-1", "alice")
    with pytest.raises(AccessDenied):
        vault.get("scan-1", "mallory")
    with pytest.raises(AccessDenied):
        vault.put(blob, "scan-2", "bob")
    with pytest.raises(AccessDenied):
        vault.open("scan-1", "bob", "pw")
    entries = vault.audit_entries()
    assert [(e.principal, e.action, e.decision) for e in entries] == [
        ("alice", Action.WRITE, Effect.ALLOW),
        ("mallory", Action.READ, Effect.DENY),
        ("bob", Action.WRITE, Effect.DENY),
        ("bob", Action.DECRYPT, Effect.DENY),
    ]
    assert not (vault.objects / "scan-2.semc").exists()


def test_errors_and_audit_completeness(vault, blob):
    calls = 0
    with pytest.raises(NotFound):
        calls += 1
        vault.get("scan-9", "alice")
    vault.put(blob, "a", "alice")
    calls += 1
    with pytest.raises(IdCollision):
        calls += 1
        vault.put(blob, "a", "alice")
    with pytest.raises(InvalidObjectId):
        calls += 1
        vault.get("../etc/passwd", "alice")
    with pytest.raises(Exception):
        calls += 1
        vault.put(b"not a container", "b", "alice")
    assert len(vault.audit_entries()) == calls
    assert vault.verify_audit() == (True, None)
    assert sorted(p.name for p in vault.objects.iterdir()) == ["a.semc"]


def test_audit_hashes(vault, blob):
    vault.put(blob, "a", "alice")
    vault.get("a", "alice")
    e0, e1 = vault.audit_entries()
    assert e0.seq == 0 and e1.seq == 1
    assert e0.prev_hash == GENESIS and e1.prev_hash == e0.entry_hash
    assert e0.timestamp == 1_700_000_001
    import hashlib
    assert e1.entry_hash == hashlib.sha256(e1.prev_hash + e1.body()).digest()
    line = vault.audit_lines()[0]
    assert json.loads(line)["prev_hash"] == "00" * 32


def build_log(n=12):
    prev, entries = None, []
    for i in range(n):
        prev = chain_entry(prev, 1000 + i, f"user{i % 3}", list(Action)[i % 3], f"scan-{i}", list(Effect)[i % 2])
        entries.append(prev)
    return entries


def mutate_field(entry: AuditEntry, name: str) -> AuditEntry:
    value = getattr(entry, name)
    if isinstance(value, bytes):
        value = bytes([value[0] ^ 1]) + value[1:]
    elif isinstance(value, Action):
        value = Action.WRITE if value is not Action.WRITE else Action.READ
    elif isinstance(value, Effect):
        value = Effect.DENY if value is Effect.ALLOW else Effect.ALLOW
    elif isinstance(value, int):
        value += 1
    else:
        value += "x"
    fields = {f: getattr(entry, f) for f in AuditEntry.__dataclass_fields__}
    fields[name] = value
    return AuditEntry(**fields)


def test_every_field_mutation_detected():
    log = build_log()
    assert verify_audit_chain(log) == (True, None)
    for i, entry in enumerate(log):
        for name in AuditEntry.__dataclass_fields__:
            bad = list(log)
            bad[i] = mutate_field(entry, name)
            assert verify_audit_chain(bad) == (False, i), (i, name)


def test_every_bit_flip_detected():
    lines = [e.to_line() for e in build_log(4)]
    text = "\n".join(lines).encode()
    starts = [0]
    for line in lines:
        starts.append(starts[-1] + len(line) + 1)
    for pos in range(len(text)):
        line_idx = max(i for i, s in enumerate(starts) if s <= pos)
        for bit in range(8):
            raw = bytearray(text)
            raw[pos] ^= 1 << bit
            mutated = [b.decode("ascii", errors="surrogateescape") for b in bytes(raw).split(b"\n")]
            ok, bad = verify_audit_chain(mutated)
            assert not ok and bad <= line_idx, (pos, bit)


def test_deleted_entry_detected():
    log = build_log()
    assert verify_audit_chain(log[:5] + log[6:]) == (False, 5)
    assert verify_audit_chain(log[1:]) == (False, 0)
    assert verify_audit_chain([]) == (True, None)


def test_tampered_file_detected(vault, blob):
    vault.put(blob, "a", "alice")
    with pytest.raises(AccessDenied):
        vault.get("a", "bob")
    vault.get("a", "alice")
    raw = vault.audit_path.read_bytes().replace(b'"decision":"deny"', b'"decision":"allow"', 1)
    vault.audit_path.write_bytes(raw)
    assert vault.verify_audit() == (False, 1)


def test_concurrent_appends_keep_chain(vault, blob):
    vault.put(blob, "a", "alice")

    def reader():
        for _ in range(10):
            vault.get("a", "alice")

    threads = [threading.Thread(target=reader) for _ in range(6)]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    assert len(vault.audit_lines()) == 61
    assert vault.verify_audit() == (True, None)
