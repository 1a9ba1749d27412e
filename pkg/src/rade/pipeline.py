"""Build -> Test -> Deliver state machine over (recipe, target) jobs.

Each phase runs the recipe's scripts in a sanitized environment (only the
phase bindings plus a minimal PATH reach the child process), capturing output
to a per-job log. Later phases run only if the earlier ones succeeded; a
worker pool executes independent jobs concurrently while dependents wait for
their dependencies' jobs on the same target to reach Delivered.
"""
from __future__ import annotations

import hashlib
import logging
import os
import shutil
import subprocess
import time
import uuid
from concurrent.futures import FIRST_COMPLETED, ThreadPoolExecutor, wait
from dataclasses import dataclass, field
from pathlib import Path

from .depgraph import BuildPlan, DependencyGraph, build_order, rebuild_set
from .envtree import (
    EnvTree,
    apply_directives,
    modulefile_rel,
    parse_directives,
    prefix_for,
    prefix_rel,
    write_modulefile,
)
from .errors import (
    BuildFailed,
    DeliverFailed,
    InstallFailed,
    InvariantViolation,
    RadeError,
    SourceChecksumMismatch,
    SourceUnavailable,
    TestFailed,
)
from .recipes import CommitEvent, Corpus, Recipe, changed_recipes
from .targets import MatrixConfig, Target, expand, target_id

log = logging.getLogger(__name__)

SAFE_PATH = "/usr/bin:/bin"

PENDING = "Pending"
BUILDING = "Building"
BUILT = "Built"
TESTING = "Testing"
TESTED = "Tested"
DELIVERING = "Delivering"
DELIVERED = "Delivered"
FAILED = "Failed"

_TRANSITIONS = {
    PENDING: {BUILDING},
    BUILDING: {BUILT, FAILED},
    BUILT: {TESTING},
    TESTING: {TESTED, FAILED},
    TESTED: {DELIVERING},
    DELIVERING: {DELIVERED, FAILED},
    DELIVERED: set(),
    FAILED: set(),
}

_PHASE_OF_STATE = {BUILDING: "build", TESTING: "test", DELIVERING: "deliver"}


@dataclass(frozen=True)
class TestSpec:
    origin: str  # internal | ops | researcher
    command: str


@dataclass(frozen=True)
class OpsTest:
    name: str
    command: Path


@dataclass(frozen=True)
class PhaseEnvironment:
    bindings: dict[str, str]

    def validate(self, target: Target) -> None:
        b = self.bindings
        if (b.get("ARCH"), b.get("OS"), b.get("SITE")) != (
            target.arch,
            target.os,
            target.site,
        ):
            raise InvariantViolation("phase environment disagrees with job target")
        prefixes = [v for v in ("INSTALL_PREFIX", "DEPLOY_PREFIX") if v in b]
        if len(prefixes) != 1:
            raise InvariantViolation(
                "exactly one of INSTALL_PREFIX/DEPLOY_PREFIX must be bound"
            )


@dataclass
class Job:
    name: str
    version: str
    target: Target
    log_path: Path
    state: str = PENDING
    failed_phase: str | None = None
    started: float | None = None
    finished: float | None = None
    transitions: list[tuple[str, float]] = field(default_factory=list)
    payload: list[tuple[Path, str]] = field(default_factory=list)

    @property
    def key(self) -> tuple[str, str, str]:
        return (self.name, self.version, target_id(self.target))

    def transition(self, new_state: str) -> None:
        if new_state not in _TRANSITIONS[self.state]:
            raise InvariantViolation(
                f"illegal transition {self.state} -> {new_state}"
            )
        self.state = new_state
        self.transitions.append((new_state, time.time()))

    def fail(self, phase: str) -> None:
        self.transition(FAILED)
        self.failed_phase = phase
        self.finished = time.time()


@dataclass
class JobOutcome:
    name: str
    version: str
    target: Target
    state: str
    failed_phase: str | None
    reason: str | None
    duration_ms: int
    log_path: Path


@dataclass(frozen=True)
class PublicationRequest:
    job_id: str
    stages: tuple[tuple[Path, str], ...]


@dataclass
class RunReport:
    outcomes: list[JobOutcome]
    publication: PublicationRequest | None = None

    @property
    def ok(self) -> bool:
        return all(o.state == DELIVERED for o in self.outcomes)

    def render(self) -> str:
        lines = []
        for o in self.outcomes:
            cols = [f"{o.name}/{o.version}", target_id(o.target), o.state]
            if o.failed_phase:
                cols.append(o.failed_phase)
            cols.append(str(o.duration_ms))
            lines.append(" ".join(cols))
        lines.append("RESULT ok" if self.ok else "RESULT fail")
        return "\n".join(lines) + "\n"


def plan(
    event: CommitEvent,
    corpus: Corpus,
    graph: DependencyGraph,
    matrix: MatrixConfig,
) -> BuildPlan:
    """Jobs for one commit: rebuild set in build order, expanded per target."""
    changed = changed_recipes(event, corpus)
    to_build = rebuild_set(graph, changed)
    rationale = {
        node: "changed" if node in changed else "dependent-of-changed"
        for node in to_build
    }
    jobs = []
    for name, version in build_order(graph, to_build):
        recipe = corpus.recipes[(name, version)]
        for target in expand(matrix, recipe):
            jobs.append((name, version, target))
    return BuildPlan(jobs=tuple(jobs), rationale=rationale, event_id=event.event_id)


class JobRunner:
    """Executes jobs against one corpus/graph/matrix and two prefix trees."""

    def __init__(
        self,
        corpus: Corpus,
        graph: DependencyGraph,
        matrix: MatrixConfig,
        integration: EnvTree,
        deploy: EnvTree,
        workdir: Path,
        ops_tests=(),
        phase_timeout_s: int = 600,
    ):
        self.corpus = corpus
        self.graph = graph
        self.matrix = matrix
        self.integration = integration
        self.deploy = deploy
        self.workdir = Path(workdir)
        self.ops_tests = tuple(ops_tests)
        self.phase_timeout_s = phase_timeout_s

    # -- naming ----------------------------------------------------------

    def new_job(self, name: str, version: str, target: Target) -> Job:
        log_dir = self.workdir / "logs"
        log_dir.mkdir(parents=True, exist_ok=True)
        log_path = log_dir / f"{name}-{version}-{target_id(target)}.log"
        log_path.write_text("", encoding="utf-8")
        return Job(name=name, version=version, target=target, log_path=log_path)

    def _recipe(self, job: Job) -> Recipe:
        return self.corpus.recipes[(job.name, job.version)]

    def _recipe_dir(self, job: Job) -> Path:
        return self.corpus.recipe_dir((job.name, job.version))

    def _build_dir(self, job: Job) -> Path:
        return self.workdir / "build" / f"{job.name}-{job.version}-{target_id(job.target)}"

    # -- environment -------------------------------------------------------

    def _phase_env(self, job: Job, phase: str) -> PhaseEnvironment:
        from .envtree import module_path_for_dependencies

        tree = self.deploy if phase == "deliver" else self.integration
        prefix_var = "DEPLOY_PREFIX" if phase == "deliver" else "INSTALL_PREFIX"
        recipe = self._recipe(job)
        dep_modules = module_path_for_dependencies(self.graph, recipe, tree, job.target)

        env = {"PATH": SAFE_PATH}
        for module in dep_modules:
            env = apply_directives(
                env, parse_directives(module.read_text(encoding="utf-8"))
            )
        env.update(
            {
                "ARCH": job.target.arch,
                "OS": job.target.os,
                "SITE": job.target.site,
                "SOURCE_DIR": str(self._source_dir(job)),
                "BUILD_DIR": str(self._build_dir(job)),
                prefix_var: str(
                    prefix_for(tree, job.target, job.name, job.version)
                ),
                "DEP_MODULE_PATH": os.pathsep.join(str(p) for p in dep_modules),
            }
        )
        env.update(self.matrix.extra_env(job.target.site))
        phase_env = PhaseEnvironment(env)
        phase_env.validate(job.target)
        return phase_env

    # -- source fetching ---------------------------------------------------

    def _source_dir(self, job: Job) -> Path:
        return self.workdir / "sources" / f"{job.name}-{job.version}"

    def _fetch_source(self, job: Job) -> Path:
        """Copy the recipe's source bundle locally and verify its checksum."""
        recipe = self._recipe(job)
        url = recipe.source.url
        if not url.startswith("file://"):
            raise SourceUnavailable(f"unsupported source url scheme: {url}")
        origin = Path(url[len("file://"):])
        if not origin.is_file():
            raise SourceUnavailable(f"source bundle missing: {origin}")
        dest_dir = self._source_dir(job)
        dest_dir.mkdir(parents=True, exist_ok=True)
        dest = dest_dir / origin.name
        if dest.is_file():
            if hashlib.sha256(dest.read_bytes()).hexdigest() == recipe.source.sha256:
                return dest
            dest.unlink()
        data = origin.read_bytes()
        if hashlib.sha256(data).hexdigest() != recipe.source.sha256:
            raise SourceChecksumMismatch(
                f"{origin} does not match declared sha256 {recipe.source.sha256}"
            )
        # concurrent jobs of one recipe may fetch simultaneously
        tmp = dest_dir / f".{origin.name}.{uuid.uuid4().hex[:8]}.tmp"
        tmp.write_bytes(data)
        os.replace(tmp, dest)
        return dest

    # -- script execution ----------------------------------------------------

    def _run_script(self, job: Job, script: Path, env: PhaseEnvironment, cwd: Path) -> int:
        """Run one phase script; captured output is appended to the job log."""
        script = Path(script)
        argv = [str(script)] if os.access(script, os.X_OK) else ["/bin/sh", str(script)]
        with open(job.log_path, "a", encoding="utf-8") as fh:
            fh.write(f"$ {script}\n")
            fh.flush()
            try:
                proc = subprocess.run(
                    argv,
                    stdout=fh,
                    stderr=subprocess.STDOUT,
                    env=env.bindings,
                    cwd=cwd,
                    timeout=self.phase_timeout_s,
                )
            except subprocess.TimeoutExpired:
                fh.write(f"timeout after {self.phase_timeout_s}s\n")
                return 124
            return proc.returncode

    def _log_line(self, job: Job, text: str) -> None:
        with open(job.log_path, "a", encoding="utf-8") as fh:
            fh.write(text + "\n")

    @staticmethod
    def _fresh_dir(path: Path) -> None:
        if path.exists():
            shutil.rmtree(path)
        path.mkdir(parents=True)

    # -- phases ---------------------------------------------------------------

    def run_build(self, job: Job) -> None:
        """Fetch + verify source, then run the build script in a fresh BUILD_DIR."""
        if job.started is None:
            job.started = time.time()
        job.transition(BUILDING)
        self._log_line(job, "=== PHASE build ===")
        try:
            self._fetch_source(job)
            build_dir = self._build_dir(job)
            self._fresh_dir(build_dir)
            env = self._phase_env(job, "build")
            rc = self._run_script(
                job, self._recipe_dir(job) / self._recipe(job).scripts.build, env, build_dir
            )
            if rc != 0:
                raise BuildFailed(f"build script exited {rc}")
        except RadeError:
            job.fail("build")
            raise
        job.transition(BUILT)

    def run_test(self, job: Job) -> None:
        """Internal tests, ops tests, integration install, researcher tests."""
        job.transition(TESTING)
        self._log_line(job, "=== PHASE test ===")
        recipe = self._recipe(job)
        recipe_dir = self._recipe_dir(job)
        build_dir = self._build_dir(job)
        try:
            env = self._phase_env(job, "test")

            check = TestSpec("internal", recipe.scripts.check)
            rc = self._run_script(job, recipe_dir / check.command, env, build_dir)
            if rc != 0:
                raise TestFailed(check.origin, check.command, f"exited {rc}")

            for ops in self.ops_tests:
                rc = self._run_script(job, Path(ops.command), env, build_dir)
                if rc != 0:
                    raise TestFailed("ops", ops.name, f"exited {rc}")

            prefix = prefix_for(self.integration, job.target, job.name, job.version)
            self._fresh_dir(prefix)
            rc = self._run_script(job, recipe_dir / recipe.scripts.deploy, env, build_dir)
            if rc != 0:
                raise InstallFailed(f"integration install exited {rc}")
            try:
                module = write_modulefile(self.integration, recipe, job.target)
            except RadeError as exc:
                raise InstallFailed(str(exc)) from exc

            test_env = PhaseEnvironment(
                apply_directives(
                    env.bindings,
                    parse_directives(module.read_text(encoding="utf-8")),
                )
            )
            for rel in recipe.researcher_tests:
                rc = self._run_script(job, recipe_dir / rel, test_env, recipe_dir)
                if rc != 0:
                    raise TestFailed("researcher", rel, f"exited {rc}")
        except RadeError:
            job.fail("test")
            raise
        job.transition(TESTED)

    def run_deliver(self, job: Job) -> list[tuple[Path, str]]:
        """Clean rebuild in the deploy environment, install, render modulefile.

        Returns the (filesystem path, repository path) pairs staged for
        publication.
        """
        job.transition(DELIVERING)
        self._log_line(job, "=== PHASE deliver ===")
        recipe = self._recipe(job)
        recipe_dir = self._recipe_dir(job)
        build_dir = self._build_dir(job)
        try:
            self._fresh_dir(build_dir)
            env = self._phase_env(job, "deliver")
            rc = self._run_script(job, recipe_dir / recipe.scripts.build, env, build_dir)
            if rc != 0:
                raise DeliverFailed(f"deploy-environment rebuild exited {rc}")
            prefix = prefix_for(self.deploy, job.target, job.name, job.version)
            self._fresh_dir(prefix)
            rc = self._run_script(job, recipe_dir / recipe.scripts.deploy, env, build_dir)
            if rc != 0:
                raise DeliverFailed(f"deploy install exited {rc}")
            try:
                module = write_modulefile(self.deploy, recipe, job.target)
            except RadeError as exc:
                raise DeliverFailed(str(exc)) from exc
        except RadeError:
            job.fail("deliver")
            raise
        job.transition(DELIVERED)
        job.finished = time.time()
        job.payload = [
            (prefix, prefix_rel(job.target, job.name, job.version)),
            (module, modulefile_rel(job.target, job.name, job.version)),
        ]
        return job.payload

    def run_job(self, job: Job) -> JobOutcome:
        """All three phases with conditional chaining; never raises."""
        try:
            self.run_build(job)
            self.run_test(job)
            self.run_deliver(job)
            reason = None
        except RadeError as exc:
            self._log_line(job, f"error: {exc}")
            reason = str(exc)
        except Exception as exc:  # noqa: BLE001 - workers must not kill the run
            log.exception("unexpected failure in %s/%s", job.name, job.version)
            if job.state not in (FAILED, DELIVERED):
                job.fail(_PHASE_OF_STATE.get(job.state, "build"))
            self._log_line(job, f"internal error: {exc!r}")
            reason = f"internal error: {exc!r}"
        if job.finished is None:
            job.finished = time.time()
        return self._outcome(job, reason)

    @staticmethod
    def _outcome(job: Job, reason: str | None) -> JobOutcome:
        duration = 0
        if job.started is not None and job.finished is not None:
            duration = int((job.finished - job.started) * 1000)
        return JobOutcome(
            name=job.name,
            version=job.version,
            target=job.target,
            state=job.state,
            failed_phase=job.failed_phase,
            reason=reason,
            duration_ms=duration,
            log_path=job.log_path,
        )

    # -- scheduling --------------------------------------------------------

    def run_plan(self, build_plan: BuildPlan, width: int) -> RunReport:
        """Execute every job, gating dependents on their dependencies' jobs
        for the same target; emits a publication request iff all Delivered.

        The scheduler thread is the sole owner of plan-level state; workers
        only execute their own job and hand the outcome back.
        """
        if width < 1:
            raise InvariantViolation("width must be >= 1")
        jobs = {
            (name, version, target_id(t)): self.new_job(name, version, t)
            for name, version, t in build_plan.jobs
        }
        plan_recipes = {(n, v) for n, v, _ in build_plan.jobs}
        direct_dependents = {
            node: [
                d
                for d in self.graph.direct_dependents(node)
                if d in plan_recipes
            ]
            for node in plan_recipes
        }

        def deps_of(key):
            # gate only on dependency jobs that exist in this plan; a dep
            # filtered out for this target is checked at build time instead
            name, version, tid = key
            return [
                (dn, dv, tid)
                for dn, dv in self.graph.direct_deps((name, version))
                if (dn, dv, tid) in jobs
            ]

        pending = set(jobs)
        outcomes: dict[tuple, JobOutcome] = {}
        skipped: dict[tuple, str] = {}
        running: dict = {}

        def mark_skipped(key, reason):
            stack = [key]
            while stack:
                k = stack.pop()
                name, version, tid = k
                for dn, dv in direct_dependents[(name, version)]:
                    dk = (dn, dv, tid)
                    if dk in pending and dk not in skipped:
                        skipped[dk] = reason
                        stack.append(dk)

        with ThreadPoolExecutor(max_workers=width) as pool:
            while pending or running:
                ready = [
                    k
                    for k in sorted(pending)
                    if k not in skipped
                    and all(
                        outcomes.get(d, None) is not None
                        and outcomes[d].state == DELIVERED
                        for d in deps_of(k)
                    )
                ]
                for key in ready:
                    pending.discard(key)
                    running[pool.submit(self.run_job, jobs[key])] = key
                if not running:
                    break
                done, _ = wait(running, return_when=FIRST_COMPLETED)
                for future in done:
                    key = running.pop(future)
                    outcome = future.result()
                    outcomes[key] = outcome
                    if outcome.state != DELIVERED:
                        name, version, tid = key
                        mark_skipped(
                            key, f"dependency {name}/{version} not delivered"
                        )

        ordered = []
        for name, version, t in build_plan.jobs:
            key = (name, version, target_id(t))
            if key in outcomes:
                ordered.append(outcomes[key])
            else:
                job = jobs[key]
                ordered.append(
                    JobOutcome(
                        name=name,
                        version=version,
                        target=t,
                        state=job.state,
                        failed_phase=None,
                        reason=skipped.get(key, "blocked by failed dependency"),
                        duration_ms=0,
                        log_path=job.log_path,
                    )
                )

        report = RunReport(outcomes=ordered)
        if build_plan.jobs and report.ok:
            stages = []
            for name, version, t in build_plan.jobs:
                job = jobs[(name, version, target_id(t))]
                for fs_path, repo_path in job.payload:
                    if not Path(fs_path).resolve().is_relative_to(
                        self.deploy.root.resolve()
                    ):
                        raise InvariantViolation(
                            f"publication payload {fs_path} escapes the deploy tree"
                        )
                    stages.append((Path(fs_path), repo_path))
            report.publication = PublicationRequest(
                job_id=build_plan.event_id, stages=tuple(stages)
            )
        return report
