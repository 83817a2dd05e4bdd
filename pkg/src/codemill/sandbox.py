"""Isolated execution of untrusted programs with wall-clock and memory limits.

Each job runs as its own process group in a private temporary directory, with
an address-space rlimit applied before exec. Timeouts kill the whole group
(TERM first, KILL after a short grace) so nothing survives a stuck job, and
per-process CPU time comes from the kernel's rusage accounting at reap time.

Two execution shapes exist: stdio programs that read stdin and write stdout,
and function-based programs that are driven through the runner shim's
one-line JSON protocol (see the ``millshim`` package).
"""

from __future__ import annotations

import json
import os
import resource
import shutil
import signal
import subprocess
import sys
import tempfile
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Optional

from .corpus import Solution

STDERR_CAP = 64 * 1024
KILL_GRACE_SECONDS = 0.5

# stderr fragments that mark an allocation failure under the address-space
# rlimit; anything else nonzero is a plain runtime error.
MEMORY_SIGNATURES = (
    "memoryerror",
    "bad_alloc",
    "cannot allocate memory",
    "out of memory",
    "oom-kill",
    "allocation failed",
)


class SandboxError(Exception):
    pass


class SandboxConfigError(SandboxError):
    pass


class Verdict(str, Enum):
    OK = "OK"
    TLE = "TLE"
    MLE = "MLE"
    RE = "RE"
    OUTPUT_LIMIT = "OUTPUT_LIMIT"


@dataclass
class ResourceLimits:
    wall_timeout_seconds: float = 10.0
    address_space_bytes: int = 4 << 30
    max_output_bytes: int = 16 << 20

    def __post_init__(self):
        if self.wall_timeout_seconds <= 0:
            raise ValueError("wall_timeout_seconds must be positive")
        if self.address_space_bytes <= 0 or self.max_output_bytes <= 0:
            raise ValueError("limits must be positive")


@dataclass
class ExecutionResult:
    verdict: Verdict
    stdout_text: str
    stderr_text: str
    exit_code: Optional[int]
    cpu_time_seconds: float
    wall_time_seconds: float
    stdout_truncated: bool = False
    shim_response: Optional[dict] = None


@dataclass
class RunnerRecipe:
    """How to turn source text into an argv for one runtime tag.

    ``argv`` may use the placeholders ``{python}``, ``{src}`` and ``{shim}``.
    """

    tag: str
    argv: list[str]
    extension: str = ".py"


def default_recipes() -> dict[str, RunnerRecipe]:
    return {
        # Plain interpreter: full site-packages, matches how judges usually
        # invoke solutions.
        "python": RunnerRecipe("python", ["{python}", "{src}"]),
        # -S skips site initialization; roughly 4x faster startup, enough for
        # stdlib-only competitive programs. Used by the bulk verification
        # stages where tens of thousands of short runs dominate.
        "python-lean": RunnerRecipe("python-lean", ["{python}", "-S", "{src}"]),
    }


def _default_shim_program() -> Optional[str]:
    """Locate the runner shim's entry file without importing it."""
    try:
        from importlib.util import find_spec

        spec = find_spec("millshim")
    except (ImportError, ValueError):
        return None
    if spec is None or not spec.submodule_search_locations:
        return None
    main_py = Path(list(spec.submodule_search_locations)[0]) / "__main__.py"
    return str(main_py) if main_py.exists() else None


@dataclass
class StdioJob:
    program: Solution
    input_text: str
    limits: ResourceLimits


@dataclass
class FunctionJob:
    program: Solution
    fn_name: str
    args_record: str
    limits: ResourceLimits


@dataclass
class ShimJob:
    """Raw shim request against some source text (generator/validator runs)."""

    source_text: str
    request: dict
    limits: ResourceLimits
    runtime_language_tag: str = "python"


Job = StdioJob | FunctionJob | ShimJob


class _CappedReader(threading.Thread):
    """Drain a pipe fully but keep at most ``cap`` bytes."""

    def __init__(self, stream, cap: int):
        super().__init__(daemon=True)
        self.stream = stream
        self.cap = cap
        self.chunks: list[bytes] = []
        self.size = 0
        self.overflow = 0
        self.start()

    def run(self):
        try:
            while True:
                chunk = self.stream.read(65536)
                if not chunk:
                    break
                keep = max(0, self.cap - self.size)
                if keep:
                    self.chunks.append(chunk[:keep])
                    self.size += min(len(chunk), keep)
                self.overflow += max(0, len(chunk) - keep)
        except (OSError, ValueError):
            pass

    def text(self) -> str:
        return b"".join(self.chunks).decode("utf-8", errors="replace")


def _feed_stdin(pipe, data: bytes):
    try:
        for i in range(0, len(data), 65536):
            pipe.write(data[i : i + 65536])
        pipe.close()
    except (BrokenPipeError, OSError):
        try:
            pipe.close()
        except OSError:
            pass


def _kill_group(pgid: int):
    try:
        os.killpg(pgid, signal.SIGTERM)
    except ProcessLookupError:
        return


def _kill_group_hard(pgid: int):
    try:
        os.killpg(pgid, signal.SIGKILL)
    except ProcessLookupError:
        pass


def group_alive(pgid: int) -> bool:
    """True while any process remains in the job's process group."""
    try:
        os.killpg(pgid, 0)
        return True
    except ProcessLookupError:
        return False
    except PermissionError:
        return True


class SandboxExecutor:
    """Bounded worker pool over the low-level process runner.

    Safe to call from multiple threads; each execution owns a temporary
    directory that is deleted on completion unless ``keep_failed`` is set and
    the job did not finish OK.
    """

    def __init__(
        self,
        recipes: Optional[dict[str, RunnerRecipe]] = None,
        workers: int = 4,
        shim_program: Optional[str] = None,
        keep_failed: bool = False,
        work_root: Optional[str | Path] = None,
    ):
        self.recipes = recipes or default_recipes()
        self.workers = max(1, workers)
        self.shim_program = shim_program or _default_shim_program()
        self.keep_failed = keep_failed
        self.work_root = Path(work_root) if work_root else None
        if self.work_root:
            self.work_root.mkdir(parents=True, exist_ok=True)
        self.leaked_process_groups = 0
        self._lock = threading.Lock()

    # -- public API ---------------------------------------------------------

    def run_stdio(
        self, program: Solution, input_text: str, limits: Optional[ResourceLimits] = None
    ) -> ExecutionResult:
        limits = limits or ResourceLimits()
        recipe = self._recipe_for(program.runtime_language_tag)
        return self._run_source(
            recipe.argv, recipe.extension, program.source_text,
            input_text.encode("utf-8"), limits,
        )

    def run_function(
        self,
        program: Solution,
        fn_name: str,
        args_record: str,
        limits: Optional[ResourceLimits] = None,
    ) -> ExecutionResult:
        limits = limits or ResourceLimits()
        self._recipe_for(program.runtime_language_tag)  # tag must be registered
        try:
            args = json.loads(args_record)
        except json.JSONDecodeError as exc:
            raise SandboxError(f"args_record is not valid JSON: {exc}") from exc
        request = {"mode": "FUNCTION", "fn_name": fn_name, "args": args}
        result = self.run_shim_request(program.source_text, request, limits)
        return self._finish_function_result(result)

    def run_shim_request(
        self, source_text: str, request: dict, limits: Optional[ResourceLimits] = None
    ) -> ExecutionResult:
        """Run one shim request against the given source under limits.

        The parsed one-line JSON response (if any) lands in
        ``result.shim_response``; a missing or unparseable response on an
        otherwise clean exit downgrades the verdict to RE.
        """
        limits = limits or ResourceLimits()
        if not self.shim_program:
            raise SandboxConfigError(
                "runner shim not found: install the millshim package or pass shim_program"
            )
        argv = ["{python}", "-S", self.shim_program, "{src}"]
        stdin_bytes = (json.dumps(request, ensure_ascii=False) + "\n").encode("utf-8")
        result = self._run_source(argv, ".py", source_text, stdin_bytes, limits)
        if result.verdict is Verdict.OK:
            line = result.stdout_text.strip().splitlines()
            try:
                response = json.loads(line[0]) if line else None
            except json.JSONDecodeError:
                response = None
            if not isinstance(response, dict):
                return ExecutionResult(
                    verdict=Verdict.RE,
                    stdout_text=result.stdout_text,
                    stderr_text=result.stderr_text
                    + "\nshim protocol violation: stdout is not a one-line JSON record",
                    exit_code=result.exit_code,
                    cpu_time_seconds=result.cpu_time_seconds,
                    wall_time_seconds=result.wall_time_seconds,
                )
            result.shim_response = response
        return result

    def batch_run(self, jobs: list[Job]) -> list[ExecutionResult]:
        """Run jobs through the pool; results align positionally with jobs."""
        if not jobs:
            return []
        with ThreadPoolExecutor(max_workers=self.workers) as pool:
            return list(pool.map(self._run_job, jobs))

    # -- internals ----------------------------------------------------------

    def _run_job(self, job: Job) -> ExecutionResult:
        if isinstance(job, StdioJob):
            return self.run_stdio(job.program, job.input_text, job.limits)
        if isinstance(job, FunctionJob):
            return self.run_function(job.program, job.fn_name, job.args_record, job.limits)
        if isinstance(job, ShimJob):
            return self.run_shim_request(job.source_text, job.request, job.limits)
        raise SandboxError(f"unknown job type {type(job).__name__}")

    def _recipe_for(self, tag: str) -> RunnerRecipe:
        recipe = self.recipes.get(tag)
        if recipe is None:
            raise SandboxConfigError(f"no runner recipe registered for tag {tag!r}")
        return recipe

    def _finish_function_result(self, result: ExecutionResult) -> ExecutionResult:
        if result.verdict is not Verdict.OK:
            return result
        response = result.shim_response or {}
        if response.get("ok"):
            result.stdout_text = json.dumps(response.get("result"), ensure_ascii=False)
            result.stdout_truncated = False
        else:
            result.verdict = Verdict.RE
            result.stderr_text = (result.stderr_text + "\n" + (response.get("error") or "")).strip()
        return result

    def _render_argv(self, template: list[str], src_path: str) -> list[str]:
        rendered = []
        for part in template:
            part = part.replace("{python}", sys.executable)
            part = part.replace("{src}", src_path)
            if "{shim}" in part:
                if not self.shim_program:
                    raise SandboxConfigError("recipe references {shim} but no shim is configured")
                part = part.replace("{shim}", self.shim_program)
            rendered.append(part)
        return rendered

    def _run_source(
        self,
        argv_template: list[str],
        extension: str,
        source_text: str,
        stdin_bytes: bytes,
        limits: ResourceLimits,
    ) -> ExecutionResult:
        job_dir = Path(tempfile.mkdtemp(prefix="job-", dir=self.work_root))
        result: Optional[ExecutionResult] = None
        try:
            src_path = job_dir / f"program{extension}"
            src_path.write_text(source_text, encoding="utf-8")
            argv = self._render_argv(argv_template, str(src_path))
            result = self._execute(argv, stdin_bytes, limits, cwd=str(job_dir))
            return result
        finally:
            failed = result is None or result.verdict is not Verdict.OK
            if not (self.keep_failed and failed):
                shutil.rmtree(job_dir, ignore_errors=True)

    def _execute(
        self, argv: list[str], stdin_bytes: bytes, limits: ResourceLimits, cwd: str
    ) -> ExecutionResult:
        address_space = limits.address_space_bytes

        def preexec():
            os.setsid()
            resource.setrlimit(resource.RLIMIT_AS, (address_space, address_space))

        start = time.monotonic()
        proc = subprocess.Popen(
            argv,
            stdin=subprocess.PIPE,
            stdout=subprocess.PIPE,
            stderr=subprocess.PIPE,
            preexec_fn=preexec,
            cwd=cwd,
            close_fds=True,
        )
        pgid = proc.pid  # setsid makes the child its own process-group leader

        stdout_reader = _CappedReader(proc.stdout, limits.max_output_bytes)
        stderr_reader = _CappedReader(proc.stderr, STDERR_CAP)
        writer = threading.Thread(target=_feed_stdin, args=(proc.stdin, stdin_bytes), daemon=True)
        writer.start()

        reaped = threading.Event()
        reap_info: dict = {}

        def reap():
            try:
                _, status, rusage = os.wait4(proc.pid, 0)
            except ChildProcessError:
                status, rusage = 0, None
            reap_info["status"] = status
            reap_info["rusage"] = rusage
            reap_info["end"] = time.monotonic()
            reaped.set()

        waiter = threading.Thread(target=reap, daemon=True)
        waiter.start()

        timed_out = not reaped.wait(limits.wall_timeout_seconds)
        if timed_out:
            _kill_group(pgid)
            if not reaped.wait(KILL_GRACE_SECONDS):
                _kill_group_hard(pgid)
                reaped.wait()

        status = reap_info["status"]
        rusage = reap_info["rusage"]
        wall = reap_info["end"] - start
        if timed_out:
            wall = max(wall, limits.wall_timeout_seconds)
        cpu = (rusage.ru_utime + rusage.ru_stime) if rusage else 0.0

        if os.WIFEXITED(status):
            exit_code: Optional[int] = os.WEXITSTATUS(status)
        elif os.WIFSIGNALED(status):
            exit_code = -os.WTERMSIG(status)
        else:
            exit_code = None
        proc.returncode = exit_code if exit_code is not None else -1

        # Readers see EOF once every pipe writer is gone; a lingering
        # grandchild holding the fd gets the group killed under it.
        stdout_reader.join(timeout=KILL_GRACE_SECONDS)
        if stdout_reader.is_alive():
            _kill_group_hard(pgid)
            stdout_reader.join()
        stderr_reader.join(timeout=KILL_GRACE_SECONDS)
        if stderr_reader.is_alive():
            _kill_group_hard(pgid)
            stderr_reader.join()
        writer.join(timeout=KILL_GRACE_SECONDS)
        for pipe in (proc.stdin, proc.stdout, proc.stderr):
            try:
                pipe.close()
            except OSError:
                pass

        if group_alive(pgid):
            _kill_group_hard(pgid)
            with self._lock:
                self.leaked_process_groups += 1

        stdout_text = stdout_reader.text()
        stderr_text = stderr_reader.text()
        truncated = stdout_reader.overflow > 0

        if timed_out:
            verdict = Verdict.TLE
        elif exit_code == 0 and truncated:
            verdict = Verdict.OUTPUT_LIMIT
        elif exit_code == 0:
            verdict = Verdict.OK
        else:
            lowered = stderr_text.lower()
            if any(sig in lowered for sig in MEMORY_SIGNATURES):
                verdict = Verdict.MLE
            else:
                verdict = Verdict.RE

        return ExecutionResult(
            verdict=verdict,
            stdout_text=stdout_text,
            stderr_text=stderr_text,
            exit_code=exit_code,
            cpu_time_seconds=cpu,
            wall_time_seconds=wall,
            stdout_truncated=truncated,
        )
