"""Simulated remote site: poll the repository head, sync content into a local
cache, and run a delivered application's researcher tests (the minimum viable
execution).

The client interprets only the three directive forms the pipeline's
modulefiles contain; it is deliberately not a general modulefile interpreter.
"""
from __future__ import annotations

import os
import shutil
import subprocess
from dataclasses import dataclass
from pathlib import Path

from .envtree import apply_directives, modulefile_rel, parse_directives, prefix_rel
from .errors import IntegrityError, NotDelivered
from .repo import (
    DIRECTORY,
    EXECUTABLE,
    REVISION_FILE,
    Catalog,
    RepoHead,
    Repository,
    sha256_hex,
)
from .targets import Target

UNCHANGED = "unchanged"
CHANGED = "changed"


@dataclass
class SyncReport:
    revision: int
    fetched_objects: int
    fetched_bytes: int

    def render(self) -> str:
        return (
            f"revision {self.revision}: fetched {self.fetched_objects} objects, "
            f"{self.fetched_bytes} bytes"
        )


@dataclass
class MveReport:
    passed: bool
    revision: int
    tests_run: int
    output: str


class SiteCache:
    """Single-writer local mirror of one repository.

    Layout: ``objects/`` holds verified content objects, ``tree/`` the
    materialized catalog, ``head`` the last synced HEAD line.
    """

    def __init__(self, repo_path: Path, cache_root: Path):
        self.repo = Repository.open(Path(repo_path))
        self.cache_root = Path(cache_root)
        self.objects_dir = self.cache_root / "objects"
        self.tree_root = self.cache_root / "tree"
        self.head_path = self.cache_root / "head"
        self.objects_dir.mkdir(parents=True, exist_ok=True)

    @property
    def last_head(self) -> RepoHead | None:
        if not self.head_path.is_file():
            return None
        text = self.head_path.read_text(encoding="utf-8").rstrip("\n")
        sha, size, revision, job_id = text.split(" ", 3)
        from .repo import ObjectRef

        return RepoHead(ObjectRef(sha, int(size)), int(revision), job_id)

    def _store_head(self, head: RepoHead) -> None:
        data = (
            f"{head.root_catalog.sha256} {head.root_catalog.size} "
            f"{head.revision} {head.job_id}\n"
        )
        tmp = self.cache_root / ".head.tmp"
        tmp.write_text(data, encoding="utf-8")
        os.replace(tmp, self.head_path)

    # -- polling -----------------------------------------------------------

    def poll(self):
        """Compare the repository head's catalog hash to the last synced one.

        Returns ``("unchanged", head)`` or ``("changed", head)``; transfers
        nothing.
        """
        head = self.repo.read_head()
        last = self.last_head
        if last is not None and last.root_catalog.sha256 == head.root_catalog.sha256:
            return (UNCHANGED, head)
        return (CHANGED, head)

    # -- syncing -------------------------------------------------------------

    def sync(self, head: RepoHead | None = None) -> SyncReport:
        """Fetch the objects this cache is missing and materialize the tree.

        Any digest mismatch raises IntegrityError before the tree or recorded
        head change, leaving the cache at its previous consistent state.
        """
        if head is None:
            head = self.repo.read_head()
        catalog_data = self.repo.catalog_path(head.root_catalog.sha256).read_bytes()
        if sha256_hex(catalog_data) != head.root_catalog.sha256:
            raise IntegrityError(
                f"catalog {head.root_catalog.sha256} fails its digest"
            )
        catalog = Catalog.parse(catalog_data)

        fetched = 0
        fetched_bytes = 0
        for entry in catalog.entries:
            if entry.mode == DIRECTORY:
                continue
            sha = entry.object.sha256
            cached = self._cache_object_path(sha)
            if cached.is_file():
                continue
            data = self._read_repo_object(entry.path, sha, head)
            if sha256_hex(data) != sha:
                raise IntegrityError(f"object {sha} fails its digest")
            cached.parent.mkdir(parents=True, exist_ok=True)
            tmp = cached.parent / f".{cached.name}.tmp"
            tmp.write_bytes(data)
            os.replace(tmp, cached)
            fetched += 1
            fetched_bytes += len(data)

        self._materialize(catalog)
        self._store_head(head)
        return SyncReport(
            revision=head.revision,
            fetched_objects=fetched,
            fetched_bytes=fetched_bytes,
        )

    def _cache_object_path(self, sha: str) -> Path:
        return self.objects_dir / sha[:2] / sha[2:]

    def _read_repo_object(self, path: str, sha: str, head: RepoHead) -> bytes:
        # The revision counter is derived from HEAD, not stored in objects/.
        if path == REVISION_FILE:
            return f"{head.revision}\n".encode("ascii")
        blob = self.repo.object_path(sha)
        if not blob.is_file():
            raise IntegrityError(f"object {sha} missing from repository")
        return blob.read_bytes()

    def _materialize(self, catalog: Catalog) -> None:
        staging = self.cache_root / f".tree.{os.getpid()}.tmp"
        if staging.exists():
            shutil.rmtree(staging)
        staging.mkdir()
        for entry in catalog.entries:
            dest = staging / entry.path
            if entry.mode == DIRECTORY:
                dest.mkdir(parents=True, exist_ok=True)
                continue
            dest.parent.mkdir(parents=True, exist_ok=True)
            shutil.copyfile(self._cache_object_path(entry.object.sha256), dest)
            if entry.mode == EXECUTABLE:
                dest.chmod(dest.stat().st_mode | 0o755)
        if self.tree_root.exists():
            shutil.rmtree(self.tree_root)
        os.replace(staging, self.tree_root)

    # -- minimum viable execution ---------------------------------------------

    def run_mve(self, recipe, target: Target, recipe_dir: Path, timeout_s: int = 600) -> MveReport:
        """Run the recipe's researcher tests against the synced deploy tree."""
        head = self.last_head
        if head is None:
            raise NotDelivered("cache has never synced")
        prefix = self.tree_root / prefix_rel(target, recipe.name, recipe.version)
        module = self.tree_root / modulefile_rel(target, recipe.name, recipe.version)
        if not prefix.is_dir() or not module.is_file():
            raise NotDelivered(
                f"{recipe.name}/{recipe.version} not delivered for "
                f"{target.arch}-{target.os}-{target.site}"
            )
        env = apply_directives(
            {"PATH": "/usr/bin:/bin"},
            parse_directives(module.read_text(encoding="utf-8")),
        )
        chunks = []
        passed = True
        tests_run = 0
        for rel in recipe.researcher_tests:
            script = Path(recipe_dir) / rel
            argv = [str(script)] if os.access(script, os.X_OK) else ["/bin/sh", str(script)]
            proc = subprocess.run(
                argv,
                capture_output=True,
                text=True,
                env=env,
                cwd=recipe_dir,
                timeout=timeout_s,
            )
            tests_run += 1
            chunks.append(f"$ {rel}\n{proc.stdout}{proc.stderr}")
            if proc.returncode != 0:
                chunks.append(f"exited {proc.returncode}\n")
                passed = False
                break
        return MveReport(
            passed=passed,
            revision=head.revision,
            tests_run=tests_run,
            output="".join(chunks),
        )


def poll_until_changed(cache: SiteCache, interval_s: float = 1.0, attempts: int = 1):
    """Poll helper for the CLI: returns the first changed head or None."""
    import time

    for i in range(max(1, attempts)):
        status, head = cache.poll()
        if status == CHANGED:
            return head
        if i + 1 < attempts:
            time.sleep(interval_s)
    return None
