"""Policy-gated store for encrypted objects with a hash-chained audit log.

On-disk layout of a vault directory::

    objects/<id>.semc   encrypted containers, one per object id
    policy.json         {"rules": [{"principal", "action", "resource", "effect"}, ...]}
    audit.log           one canonical JSON object per line
    .lock               advisory writer lock

Rules are evaluated first-match; a request no rule matches is denied.
Every ``put``/``get``/``open`` call appends one audit entry whatever the
outcome. Entry ``i`` stores ``prev_hash`` (the previous ``entry_hash``, or
32 zero bytes for the first entry) and
``entry_hash = SHA-256(prev_hash || canonical(other fields))``.
"""

from __future__ import annotations

import enum
import fcntl
import hashlib
import json
import os
import re
import time
from contextlib import contextmanager
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Iterable, Sequence

from semcrypt.crypto import decrypt_container, parse_container
from semcrypt.errors import (
    AccessDenied,
    IdCollision,
    InvalidObjectId,
    InvariantBreach,
    MalformedPolicy,
    NotFound,
)

GENESIS = bytes(32)
OBJECT_ID = re.compile(r"[A-Za-z0-9][A-Za-z0-9._-]{0,127}")
AUDIT_FIELDS = ("seq", "timestamp", "principal", "action", "resource", "decision", "prev_hash", "entry_hash")


class Action(str, enum.Enum):
    READ = "read"
    WRITE = "write"
    DECRYPT = "decrypt"


class Effect(str, enum.Enum):
    ALLOW = "allow"
    DENY = "deny"


def glob_match(pattern: str, text: str) -> bool:
    """``*`` matches any run of characters; everything else is literal."""
    regex = ".*".join(re.escape(part) for part in pattern.split("*"))
    return re.fullmatch(regex, text, flags=re.DOTALL) is not None


@dataclass(frozen=True)
class PolicyRule:
    principal: str
    action: Action
    resource: str
    effect: Effect

    def __post_init__(self):
        object.__setattr__(self, "action", Action(self.action))
        object.__setattr__(self, "effect", Effect(self.effect))

    def matches(self, principal: str, action: Action, resource: str) -> bool:
        return ((self.principal == "*" or self.principal == principal)
                and self.action is Action(action) and glob_match(self.resource, resource))

    def to_dict(self) -> dict:
        return {"principal": self.principal, "action": self.action.value,
                "resource": self.resource, "effect": self.effect.value}


def evaluate_policy(rules: Sequence[PolicyRule], principal: str, action: Action, resource: str) -> Effect:
    for rule in rules:
        if rule.matches(principal, action, resource):
            return rule.effect
    return Effect.DENY


def parse_policy(text: str) -> list[PolicyRule]:
    try:
        doc = json.loads(text)
        return [PolicyRule(r["principal"], r["action"], r["resource"], r["effect"]) for r in doc["rules"]]
    except (ValueError, KeyError, TypeError) as exc:
        raise MalformedPolicy(f"bad policy document: {exc}") from None


def dump_policy(rules: Iterable[PolicyRule]) -> str:
    return json.dumps({"rules": [r.to_dict() for r in rules]}, indent=2) + "\n"


# --- audit chain ----------------------------------------------------------------------

@dataclass(frozen=True)
class AuditEntry:
    seq: int
    timestamp: int
    principal: str
    action: Action
    resource: str
    decision: Effect
    prev_hash: bytes
    entry_hash: bytes

    def body(self) -> bytes:
        """Canonical serialization of every field except the two hashes."""
        fields = {"seq": self.seq, "timestamp": self.timestamp, "principal": self.principal,
                  "action": Action(self.action).value, "resource": self.resource,
                  "decision": Effect(self.decision).value}
        return json.dumps(fields, sort_keys=True, separators=(",", ":")).encode("ascii")

    def expected_hash(self) -> bytes:
        return hashlib.sha256(self.prev_hash + self.body()).digest()

    def to_line(self) -> str:
        d = json.loads(self.body())
        d["prev_hash"] = self.prev_hash.hex()
        d["entry_hash"] = self.entry_hash.hex()
        return json.dumps(d, sort_keys=True, separators=(",", ":"))

    @classmethod
    def from_line(cls, line: str) -> "AuditEntry":
        d = json.loads(line)
        if not isinstance(d, dict) or sorted(d) != sorted(AUDIT_FIELDS):
            raise ValueError("wrong field set")
        if type(d["seq"]) is not int or type(d["timestamp"]) is not int:
            raise ValueError("seq and timestamp must be integers")
        if not all(isinstance(d[k], str) for k in ("principal", "resource")):
            raise ValueError("principal and resource must be strings")
        entry = cls(d["seq"], d["timestamp"], d["principal"], Action(d["action"]), d["resource"],
                    Effect(d["decision"]), bytes.fromhex(d["prev_hash"]), bytes.fromhex(d["entry_hash"]))
        # reject anything that is not byte-for-byte canonical (e.g. upper-case hex)
        if entry.to_line() != line:
            raise ValueError("entry is not in canonical form")
        return entry


def chain_entry(prev: AuditEntry | None, timestamp: int, principal: str, action: Action,
                resource: str, decision: Effect) -> AuditEntry:
    seq = 0 if prev is None else prev.seq + 1
    prev_hash = GENESIS if prev is None else prev.entry_hash
    draft = AuditEntry(seq, timestamp, principal, Action(action), resource, Effect(decision), prev_hash, b"")
    return AuditEntry(*[getattr(draft, f) for f in AUDIT_FIELDS[:-1]], draft.expected_hash())


def verify_audit_chain(log: Iterable[AuditEntry | str]) -> tuple[bool, int | None]:
    """``(True, None)`` for an intact chain, else ``(False, index of the first bad entry)``.

    Accepts parsed entries or raw log lines; a line that does not parse is bad.
    """
    prev_hash = GENESIS
    for i, item in enumerate(log):
        if isinstance(item, str):
            try:
                item = AuditEntry.from_line(item)
            except (ValueError, UnicodeError):
                return False, i
        if item.seq != i or item.prev_hash != prev_hash or item.entry_hash != item.expected_hash():
            return False, i
        prev_hash = item.entry_hash
    return True, None


# --- the store ------------------------------------------------------------------------

class Vault:
    def __init__(self, root: str | Path, clock: Callable[[], float] = time.time):
        self.root = Path(root)
        self.clock = clock

    @classmethod
    def create(cls, root: str | Path, rules: Iterable[PolicyRule] = (), **kwargs) -> "Vault":
        vault = cls(root, **kwargs)
        vault.objects.mkdir(parents=True, exist_ok=True)
        vault.policy_path.write_text(dump_policy(rules))
        vault.audit_path.touch()
        return vault

    @property
    def objects(self) -> Path:
        return self.root / "objects"

    @property
    def policy_path(self) -> Path:
        return self.root / "policy.json"

    @property
    def audit_path(self) -> Path:
        return self.root / "audit.log"

    def rules(self) -> list[PolicyRule]:
        if not self.policy_path.exists():
            return []
        return parse_policy(self.policy_path.read_text())

    def object_path(self, object_id: str) -> Path:
        if not OBJECT_ID.fullmatch(object_id):
            raise InvalidObjectId(f"invalid object id {object_id!r}")
        return self.objects / f"{object_id}.semc"

    @contextmanager
    def _writer_lock(self):
        self.root.mkdir(parents=True, exist_ok=True)
        with open(self.root / ".lock", "a") as fh:
            fcntl.flock(fh, fcntl.LOCK_EX)
            try:
                yield
            finally:
                fcntl.flock(fh, fcntl.LOCK_UN)

    def audit_lines(self) -> list[str]:
        if not self.audit_path.exists():
            return []
        raw = self.audit_path.read_bytes()
        lines = raw.split(b"\n")
        if lines[-1] == b"":
            lines.pop()
        # undecodable bytes survive as surrogates and then fail the canonical-form check
        return [line.decode("ascii", errors="surrogateescape") for line in lines]

    def audit_entries(self) -> list[AuditEntry]:
        return [AuditEntry.from_line(line) for line in self.audit_lines()]

    def verify_audit(self) -> tuple[bool, int | None]:
        return verify_audit_chain(self.audit_lines())

    def _record(self, principal: str, action: Action, resource: str, decision: Effect) -> AuditEntry:
        # caller holds the writer lock
        lines = self.audit_lines()
        prev = None
        if lines:
            try:
                prev = AuditEntry.from_line(lines[-1])
            except (ValueError, UnicodeError):
                raise InvariantBreach("last audit entry is damaged; refusing to extend the chain") from None
        entry = chain_entry(prev, int(self.clock()), principal, action, resource, decision)
        with open(self.audit_path, "a", encoding="ascii") as fh:
            fh.write(entry.to_line() + "\n")
            fh.flush()
            os.fsync(fh.fileno())
        return entry

    def _decide(self, principal: str, action: Action, object_id: str) -> tuple[Effect, Path | None]:
        try:
            path = self.object_path(object_id)
        except InvalidObjectId:
            return Effect.DENY, None
        return evaluate_policy(self.rules(), principal, action, object_id), path

    def put(self, data: bytes, object_id: str, principal: str) -> None:
        data = bytes(data)
        with self._writer_lock():
            decision, path = self._decide(principal, Action.WRITE, object_id)
            self._record(principal, Action.WRITE, object_id, decision)
            if path is None:
                raise InvalidObjectId(f"invalid object id {object_id!r}")
            if decision is Effect.DENY:
                raise AccessDenied(f"{principal} may not write {object_id}")
            parse_container(data)  # only encrypted containers are stored
            self.objects.mkdir(parents=True, exist_ok=True)
            tmp = self.objects / f".{object_id}.tmp"
            tmp.write_bytes(data)
            try:
                os.link(tmp, path)
            except FileExistsError:
                raise IdCollision(f"object {object_id} already exists") from None
            finally:
                tmp.unlink()

    def _fetch(self, object_id: str, principal: str, action: Action) -> bytes:
        with self._writer_lock():
            decision, path = self._decide(principal, action, object_id)
            self._record(principal, action, object_id, decision)
        if path is None:
            raise InvalidObjectId(f"invalid object id {object_id!r}")
        if decision is Effect.DENY:
            raise AccessDenied(f"{principal} may not {action.value} {object_id}")
        try:
            return path.read_bytes()
        except FileNotFoundError:
            raise NotFound(f"no object {object_id}") from None

    def get(self, object_id: str, principal: str) -> bytes:
        """The stored container bytes; needs a Read allow."""
        return self._fetch(object_id, principal, Action.READ)

    def open(self, object_id: str, principal: str, passphrase: bytes | str) -> bytes:
        """The decrypted payload; needs a Decrypt allow."""
        return decrypt_container(self._fetch(object_id, principal, Action.DECRYPT), passphrase)
