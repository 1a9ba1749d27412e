"""Execution-environment coordinates and matrix expansion.

A target is one (arch, os, site) triple; the orchestrator config defines the
axes and every recipe is built for each combination unless its own filter
narrows the set.
"""
from __future__ import annotations

import itertools
import re
from dataclasses import dataclass, field

from .errors import EmptyTargetSet, InvariantViolation

_FIELD_RE = re.compile(r"[A-Za-z0-9_]+\Z")


@dataclass(frozen=True, order=True)
class Target:
    arch: str
    os: str
    site: str

    def __post_init__(self):
        for label, value in (("arch", self.arch), ("os", self.os), ("site", self.site)):
            if not _FIELD_RE.match(value):
                raise InvariantViolation(f"bad target {label} {value!r}")


def target_id(t: Target) -> str:
    """Render the canonical ``<arch>-<os>-<site>`` identifier."""
    return f"{t.arch}-{t.os}-{t.site}"


def parse_target_id(s: str) -> Target:
    parts = s.split("-")
    if len(parts) != 3:
        raise InvariantViolation(f"bad target id {s!r}")
    return Target(*parts)


@dataclass(frozen=True)
class TargetPattern:
    """Per-field match pattern; each field is a literal or the ``*`` wildcard."""

    arch: str
    os: str
    site: str

    @classmethod
    def parse(cls, text: str) -> TargetPattern:
        parts = text.split("-")
        if len(parts) != 3:
            raise InvariantViolation(f"bad target pattern {text!r}")
        for part in parts:
            if part != "*" and not _FIELD_RE.match(part):
                raise InvariantViolation(f"bad target pattern field {part!r}")
        return cls(*parts)

    def matches(self, t: Target) -> bool:
        return (
            self.arch in ("*", t.arch)
            and self.os in ("*", t.os)
            and self.site in ("*", t.site)
        )

    def __str__(self) -> str:
        return f"{self.arch}-{self.os}-{self.site}"


def _check_axis(label: str, values: list[str]) -> None:
    if not values:
        raise InvariantViolation(f"matrix axis {label} is empty")
    if len(set(values)) != len(values):
        raise InvariantViolation(f"matrix axis {label} has duplicates")
    for v in values:
        if not _FIELD_RE.match(v):
            raise InvariantViolation(f"bad {label} identifier {v!r}")


@dataclass(frozen=True)
class MatrixConfig:
    arches: tuple[str, ...]
    oses: tuple[str, ...]
    sites: tuple[str, ...]
    site_env: dict[str, tuple[str, ...]] = field(default_factory=dict)

    def __post_init__(self):
        _check_axis("arches", list(self.arches))
        _check_axis("oses", list(self.oses))
        _check_axis("sites", list(self.sites))
        for site, bindings in self.site_env.items():
            if site not in self.sites:
                raise InvariantViolation(f"site_env names unknown site {site!r}")
            for binding in bindings:
                if "=" not in binding:
                    raise InvariantViolation(f"bad site binding {binding!r}")

    def extra_env(self, site: str) -> dict[str, str]:
        env = {}
        for binding in self.site_env.get(site, ()):
            name, _, value = binding.partition("=")
            env[name] = value
        return env


def expand(config: MatrixConfig, recipe) -> list[Target]:
    """All matrix combinations for ``recipe``, include-filtered then
    exclude-filtered, in lexicographic (arch, os, site) order."""
    targets = sorted(
        Target(a, o, s)
        for a, o, s in itertools.product(config.arches, config.oses, config.sites)
    )
    tf = getattr(recipe, "target_filter", None)
    if tf is not None:
        if tf.include:
            targets = [t for t in targets if any(p.matches(t) for p in tf.include)]
        targets = [t for t in targets if not any(p.matches(t) for p in tf.exclude)]
    if not targets:
        raise EmptyTargetSet(
            f"target filter leaves no combinations for {recipe.name}/{recipe.version}"
        )
    return targets
