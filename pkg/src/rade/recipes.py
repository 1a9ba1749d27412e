"""Recipe manifests, the version-controlled corpus, and commit events.

A corpus is a directory tree ``<root>/<name>/<version>/rade.json`` with the
three phase scripts (and any researcher tests) stored alongside the manifest.
Commit events arrive as JSON documents naming changed corpus-relative paths.
"""
from __future__ import annotations

import json
import logging
import re
from dataclasses import dataclass, field
from pathlib import Path, PurePosixPath

from .errors import (
    DuplicateRecipe,
    InvariantViolation,
    MalformedManifest,
    SchemaViolation,
)
from .targets import TargetPattern
from .versions import VersionConstraint

log = logging.getLogger(__name__)

MANIFEST_NAME = "rade.json"

_NAME_RE = re.compile(r"[a-z0-9][a-z0-9._-]*\Z")
_SHA256_RE = re.compile(r"[0-9a-f]{64}\Z")


@dataclass(frozen=True)
class SourceSpec:
    url: str
    sha256: str


@dataclass(frozen=True)
class Dependency:
    name: str
    constraint: VersionConstraint


@dataclass(frozen=True)
class ScriptSet:
    build: str
    check: str
    deploy: str


@dataclass(frozen=True)
class TargetFilter:
    include: tuple[TargetPattern, ...] = ()
    exclude: tuple[TargetPattern, ...] = ()


@dataclass(frozen=True)
class Recipe:
    name: str
    version: str
    source: SourceSpec
    scripts: ScriptSet
    dependencies: tuple[Dependency, ...] = ()
    researcher_tests: tuple[str, ...] = ()
    target_filter: TargetFilter | None = None

    @property
    def key(self) -> tuple[str, str]:
        return (self.name, self.version)


@dataclass(frozen=True)
class CommitEvent:
    event_id: str
    changed_paths: tuple[str, ...]
    timestamp: int

    def __post_init__(self):
        if not self.event_id:
            raise SchemaViolation("event_id must be non-empty")
        if not self.changed_paths:
            raise SchemaViolation("changed_paths must be non-empty")


def _require(mapping: dict, key: str, kind, where: str):
    if key not in mapping:
        raise SchemaViolation(f"missing required field {where}{key}")
    value = mapping[key]
    if not isinstance(value, kind):
        raise SchemaViolation(f"field {where}{key} has wrong type")
    return value


def _string_list(value, where: str) -> list[str]:
    if not isinstance(value, list) or not all(isinstance(v, str) for v in value):
        raise SchemaViolation(f"field {where} must be a list of strings")
    return value


def parse_manifest(text: str) -> Recipe:
    """Parse one ``rade.json`` document into a Recipe.

    Optional fields default to an empty dependency list, no researcher tests
    and no target filter. Purely textual: script existence is checked when the
    corpus is loaded, not here.
    """
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise MalformedManifest(str(exc)) from exc
    if not isinstance(doc, dict):
        raise MalformedManifest("manifest must be a JSON object")

    name = _require(doc, "name", str, "")
    version = _require(doc, "version", str, "")
    source_doc = _require(doc, "source", dict, "")
    scripts_doc = _require(doc, "scripts", dict, "")

    if not _NAME_RE.match(name):
        raise InvariantViolation(f"bad recipe name {name!r}")
    if not version:
        raise SchemaViolation("version must be non-empty")

    source = SourceSpec(
        url=_require(source_doc, "url", str, "source."),
        sha256=_require(source_doc, "sha256", str, "source."),
    )
    if not _SHA256_RE.match(source.sha256):
        raise InvariantViolation(
            "source.sha256 must be 64 lowercase hex characters"
        )

    scripts = ScriptSet(
        build=_require(scripts_doc, "build", str, "scripts."),
        check=_require(scripts_doc, "check", str, "scripts."),
        deploy=_require(scripts_doc, "deploy", str, "scripts."),
    )

    dependencies = []
    for i, dep_doc in enumerate(doc.get("dependencies", [])):
        if not isinstance(dep_doc, dict):
            raise SchemaViolation(f"dependencies[{i}] must be an object")
        dep_name = _require(dep_doc, "name", str, f"dependencies[{i}].")
        raw = _require(dep_doc, "constraint", str, f"dependencies[{i}].")
        if dep_name == name:
            raise InvariantViolation(f"recipe {name} depends on itself")
        dependencies.append(Dependency(dep_name, VersionConstraint.parse(raw)))

    researcher_tests = tuple(
        _string_list(doc.get("researcher_tests", []), "researcher_tests")
    )

    target_filter = None
    if "targets" in doc:
        tf_doc = doc["targets"]
        if not isinstance(tf_doc, dict):
            raise SchemaViolation("targets must be an object")
        include = tuple(
            TargetPattern.parse(p)
            for p in _string_list(tf_doc.get("include", []), "targets.include")
        )
        exclude = tuple(
            TargetPattern.parse(p)
            for p in _string_list(tf_doc.get("exclude", []), "targets.exclude")
        )
        target_filter = TargetFilter(include, exclude)

    return Recipe(
        name=name,
        version=version,
        source=source,
        scripts=scripts,
        dependencies=tuple(dependencies),
        researcher_tests=researcher_tests,
        target_filter=target_filter,
    )


def canonical_manifest(recipe: Recipe) -> str:
    """Serialize a Recipe back to its canonical manifest text.

    Round-trips: ``parse_manifest(canonical_manifest(r)) == r``.
    """
    doc = {
        "name": recipe.name,
        "version": recipe.version,
        "source": {"url": recipe.source.url, "sha256": recipe.source.sha256},
        "scripts": {
            "build": recipe.scripts.build,
            "check": recipe.scripts.check,
            "deploy": recipe.scripts.deploy,
        },
    }
    if recipe.dependencies:
        doc["dependencies"] = [
            {"name": d.name, "constraint": str(d.constraint)}
            for d in recipe.dependencies
        ]
    if recipe.researcher_tests:
        doc["researcher_tests"] = list(recipe.researcher_tests)
    if recipe.target_filter is not None:
        doc["targets"] = {
            "include": [str(p) for p in recipe.target_filter.include],
            "exclude": [str(p) for p in recipe.target_filter.exclude],
        }
    return json.dumps(doc, indent=2, sort_keys=True) + "\n"


@dataclass
class Corpus:
    """Immutable index of parsed recipes keyed by (name, version)."""

    root: Path
    recipes: dict[tuple[str, str], Recipe] = field(default_factory=dict)
    dirs: dict[tuple[str, str], str] = field(default_factory=dict)

    def __contains__(self, key) -> bool:
        return key in self.recipes

    def __len__(self) -> int:
        return len(self.recipes)

    def recipe_dir(self, key: tuple[str, str]) -> Path:
        return self.root / self.dirs[key]

    def versions_of(self, name: str) -> list[str]:
        return [v for (n, v) in self.recipes if n == name]


def scan_corpus(root: Path):
    """Walk the corpus yielding ``(relative_dir, recipe_or_None, error_or_None)``
    for every directory holding a manifest file."""
    for manifest_path in sorted(root.rglob(MANIFEST_NAME)):
        rel_dir = manifest_path.parent.relative_to(root).as_posix()
        try:
            recipe = parse_manifest(manifest_path.read_text(encoding="utf-8"))
            _check_recipe_files(recipe, manifest_path.parent)
        except Exception as exc:  # noqa: BLE001 - reported per manifest
            yield rel_dir, None, exc
        else:
            yield rel_dir, recipe, None


def _check_recipe_files(recipe: Recipe, recipe_dir: Path) -> None:
    for label, rel in (
        ("build", recipe.scripts.build),
        ("check", recipe.scripts.check),
        ("deploy", recipe.scripts.deploy),
    ):
        path = recipe_dir / rel
        if not path.is_file() or path.stat().st_size == 0:
            raise InvariantViolation(
                f"{label} script {rel!r} missing or empty in {recipe_dir}"
            )


def load_corpus(root: Path) -> Corpus:
    """Load and index every recipe below ``root``.

    Raises the first parse error (annotated with its corpus path) and rejects
    duplicate (name, version) declarations.
    """
    root = Path(root)
    corpus = Corpus(root=root)
    for rel_dir, recipe, error in scan_corpus(root):
        if error is not None:
            raise type(error)(f"{rel_dir}/{MANIFEST_NAME}: {error}") from error
        if recipe.key in corpus.recipes:
            raise DuplicateRecipe(
                f"{recipe.name}/{recipe.version} declared in both "
                f"{corpus.dirs[recipe.key]} and {rel_dir}"
            )
        corpus.recipes[recipe.key] = recipe
        corpus.dirs[recipe.key] = rel_dir
    return corpus


def _normalize(path: str) -> str:
    return PurePosixPath(path).as_posix()


def changed_recipes(event: CommitEvent, corpus: Corpus) -> set[tuple[str, str]]:
    """Recipes whose directory contains at least one changed path.

    Paths outside every recipe directory are ignored with a warning.
    """
    changed = set()
    for raw in event.changed_paths:
        path = _normalize(raw)
        hit = None
        for key, rel_dir in corpus.dirs.items():
            if path == rel_dir or path.startswith(rel_dir + "/"):
                hit = key
                break
        if hit is None:
            log.warning("event %s: path %r is outside any recipe", event.event_id, raw)
        else:
            changed.add(hit)
    return changed


def load_event(path: Path) -> CommitEvent:
    """Read one commit event document from the spool."""
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise MalformedManifest(f"{path}: {exc}") from exc
    if not isinstance(doc, dict):
        raise MalformedManifest(f"{path}: event must be a JSON object")
    event_id = _require(doc, "event_id", str, "")
    changed = tuple(_string_list(_require(doc, "changed_paths", list, ""), "changed_paths"))
    timestamp = _require(doc, "timestamp", int, "")
    return CommitEvent(event_id=event_id, changed_paths=changed, timestamp=timestamp)


def pending_events(spool_dir: Path) -> list[Path]:
    """Unprocessed spool files, oldest name first. ``.done`` files are skipped."""
    return sorted(
        p for p in Path(spool_dir).iterdir()
        if p.is_file() and not p.name.endswith(".done")
    )


def mark_event_done(path: Path) -> Path:
    done = Path(str(path) + ".done")
    Path(path).rename(done)
    return done
