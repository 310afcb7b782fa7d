"""Role-based column redaction and access checks applied to every outgoing result."""

from __future__ import annotations

import configparser
import logging
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Iterable, Mapping

from .errors import InvalidConfig
from .ingest import PiiStore
from .model import FieldClass, ResultTable, shipped_path

log = logging.getLogger("fedlink.access")

# Condition types that return one identified individual.
INDIVIDUAL_LOOKUPS = frozenset({"F1_mrn", "F1_id", "F1_mobile"})


@dataclass(frozen=True)
class Role:
    name: str
    permitted_classes: frozenset[FieldClass]

    def __post_init__(self):
        if FieldClass.AGGREGATE not in self.permitted_classes:
            raise InvalidConfig(f"role {self.name!r} must permit AGGREGATE")

    @property
    def pii_allowed(self) -> bool:
        return FieldClass.PII in self.permitted_classes

    def permits(self, field_class: FieldClass) -> bool:
        return field_class in self.permitted_classes


def load_roles(path: str | Path | None = None) -> dict[str, Role]:
    path = Path(path) if path is not None else shipped_path("roles.conf")
    parser = configparser.ConfigParser()
    try:
        if not parser.read(path, encoding="utf-8"):
            raise InvalidConfig(f"cannot read roles file {path}")
    except configparser.Error as exc:
        raise InvalidConfig(f"{path}: {exc}") from None
    roles = {}
    for name in parser.sections():
        raw = parser[name].get("classes", "")
        try:
            classes = frozenset(FieldClass(c.strip()) for c in raw.split(",") if c.strip())
        except ValueError as exc:
            raise InvalidConfig(f"{path}: role {name}: {exc}") from None
        roles[name] = Role(name, classes)
    if not roles:
        raise InvalidConfig(f"{path}: no roles defined")
    return roles


def get_role(name: str | Role, roles: Mapping[str, Role] | None = None) -> Role:
    if isinstance(name, Role):
        return name
    roles = roles if roles is not None else load_roles()
    try:
        return roles[name]
    except KeyError:
        raise InvalidConfig(f"unknown role {name!r}; known roles: {', '.join(sorted(roles))}") from None


def redact(table: ResultTable, role: Role) -> ResultTable:
    """Drop every column whose class the role may not see; rows and column order otherwise unchanged."""
    keep = [i for i, c in enumerate(table.columns) if role.permits(c.field_class)]
    if len(keep) == len(table.columns):
        return table
    return replace(
        table,
        columns=tuple(table.columns[i] for i in keep),
        rows=tuple(tuple(r[i] for i in keep) for r in table.rows),
    )


@dataclass(frozen=True)
class AccessDecision:
    allowed: bool
    reason: str = ""

    def __bool__(self) -> bool:
        return self.allowed


DENY_INDIVIDUAL = "individual lookup requires PII permission"


def check_access(role: Role, condition_type: str) -> AccessDecision:
    """Individual lookups need PII permission; everything else is allowed and redacted later.

    Raises UnknownConditionType for names (or aliases) outside the registry.
    """
    from .dispatch import canonical_type  # registry lives in dispatch

    name = canonical_type(condition_type)
    if name in INDIVIDUAL_LOOKUPS and not role.pii_allowed:
        decision = AccessDecision(False, DENY_INDIVIDUAL)
    else:
        decision = AccessDecision(True)
    log.info("role=%s type=%s allowed=%s", role.name, name, decision.allowed)
    return decision


def pii_values(stores: Iterable[PiiStore]) -> set[str]:
    out: set[str] = set()
    for store in stores:
        out |= store.pii_values()
    return out


def leaked_values(strings: Iterable[str], pii: set[str]) -> set[str]:
    """Strings that equal a known PII value."""
    return {s for s in strings if s in pii}


__all__ = [
    "AccessDecision", "INDIVIDUAL_LOOKUPS", "Role", "check_access", "get_role",
    "leaked_values", "load_roles", "pii_values", "redact",
]
