"""Minimal test runner speaking the job.json / result.json protocol.

Usage: stub_shim.py JOB_DIR

Reads JOB_DIR/job.json {code, test_source, entry_point, timeout_s}, runs the
test source against the candidate code and writes JOB_DIR/result.json
{status, tests_run, tests_passed, primary_exception, traceback_excerpt,
duration_s}. Exit status is 0 for every candidate outcome and nonzero only
when the job itself is unusable.
"""

import ast
import builtins
import importlib.abc
import importlib.util
import io
import json
import os
import signal
import socket
import sys
import time
import traceback
import types
import unittest

EXCERPT_LIMIT = 2000
JOB_FIELDS = ("code", "test_source", "entry_point", "timeout_s")

_real_open = builtins.open


class JobTimeout(BaseException):
    pass


class BadJob(Exception):
    pass


def load_job(job_dir):
    try:
        with _real_open(os.path.join(job_dir, "job.json"), encoding="utf-8") as fh:
            job = json.load(fh)
    except (OSError, ValueError) as exc:
        raise BadJob(f"unreadable job.json: {exc}") from exc
    if not isinstance(job, dict):
        raise BadJob("job.json is not an object")
    for field in JOB_FIELDS:
        if field not in job:
            raise BadJob(f"job.json lacks {field}")
    for field in ("code", "test_source", "entry_point"):
        if not isinstance(job[field], str):
            raise BadJob(f"{field} must be a string")
    timeout = job["timeout_s"]
    if isinstance(timeout, bool) or not isinstance(timeout, (int, float)) or timeout <= 0:
        raise BadJob("timeout_s must be a positive number")
    return job


def excerpt(exc):
    text = "".join(traceback.format_exception(type(exc), exc, exc.__traceback__))
    return text[-EXCERPT_LIMIT:]


def result(status, run=0, passed=0, exception=None, tb=""):
    return {
        "status": status,
        "tests_run": run,
        "tests_passed": passed,
        "primary_exception": exception,
        "traceback_excerpt": tb,
    }


def install_guards(job_dir):
    root = os.path.realpath(job_dir)

    def guarded_open(file, mode="r", *args, **kwargs):
        if isinstance(file, (str, bytes, os.PathLike)) and any(c in mode for c in "wax+"):
            path = os.path.realpath(os.fsdecode(file))
            if os.path.commonpath([root, path]) != root:
                raise PermissionError(f"write outside the job directory: {path}")
        return _real_open(file, mode, *args, **kwargs)

    def no_network(*_args, **_kwargs):
        raise PermissionError("network access is disabled")

    builtins.open = guarded_open
    io.open = guarded_open
    socket.socket.connect = no_network
    socket.socket.connect_ex = no_network
    socket.create_connection = no_network


class CandidateFinder(importlib.abc.MetaPathFinder, importlib.abc.Loader):
    """Resolves any otherwise unknown top-level import to the candidate module."""

    def __init__(self, module):
        self.module = module

    def find_spec(self, fullname, path, target=None):
        if path is not None or "." in fullname:
            return None
        return importlib.util.spec_from_loader(fullname, self)

    def create_module(self, spec):
        return self.module

    def exec_module(self, module):
        pass


def defines_test_case(tree):
    for node in tree.body:
        if isinstance(node, ast.ClassDef):
            for base in node.bases:
                name = base.attr if isinstance(base, ast.Attribute) else getattr(base, "id", "")
                if name.endswith("TestCase"):
                    return True
    return False


class ScriptCase(unittest.TestCase):
    """Bare-assert scripts run as one synthetic test."""

    def __init__(self, source, namespace):
        super().__init__("runTest")
        self.source = source
        self.namespace = namespace

    def runTest(self):
        exec(self.source, self.namespace)


def collect_cases(namespace, module_name):
    cases = []
    for value in list(namespace.values()):
        if (
            isinstance(value, type)
            and issubclass(value, unittest.TestCase)
            and value.__module__ == module_name
        ):
            for name, attr in value.__dict__.items():
                if name.startswith("test") and callable(attr):
                    cases.append(value(name))
    return cases


class OrderedResult(unittest.TestResult):
    def __init__(self):
        super().__init__()
        self.first_failure = None

    def _note(self, err):
        if self.first_failure is None:
            self.first_failure = err

    def addFailure(self, test, err):
        super().addFailure(test, err)
        self._note(err)

    def addError(self, test, err):
        if err[0] is JobTimeout:
            raise err[1]
        super().addError(test, err)
        self._note(err)


def run_job(job):
    candidate = types.ModuleType("candidate")
    candidate.__file__ = "candidate.py"
    try:
        exec(compile(job["code"], "candidate.py", "exec"), candidate.__dict__)
    except JobTimeout:
        raise
    except BaseException as exc:
        return result("Crash", exception=type(exc).__name__, tb=excerpt(exc))
    sys.modules["candidate"] = candidate
    sys.meta_path.append(CandidateFinder(candidate))

    namespace = dict(candidate.__dict__)
    namespace["__name__"] = "generated_tests"
    namespace.setdefault("candidate", candidate.__dict__.get(job["entry_point"]))
    try:
        tree = ast.parse(job["test_source"], "tests.py")
        source = compile(tree, "tests.py", "exec")
    except SyntaxError as exc:
        return result("Crash", exception=type(exc).__name__, tb=excerpt(exc))

    if defines_test_case(tree):
        try:
            exec(source, namespace)
        except JobTimeout:
            raise
        except BaseException as exc:
            return result("Crash", exception=type(exc).__name__, tb=excerpt(exc))
        cases = collect_cases(namespace, "generated_tests")
    else:
        cases = [ScriptCase(source, namespace)]

    outcome = OrderedResult()
    for case in cases:
        case.run(outcome)
    run = outcome.testsRun
    failed = len(outcome.failures) + len(outcome.errors)
    passed = run - failed
    if run > 0 and failed == 0:
        return result("AllPassed", run, passed)
    if outcome.first_failure is None:
        return result("TestFailures", run, passed, tb="no tests were collected")
    exc_type, exc, tb = outcome.first_failure
    return result("TestFailures", run, passed, exc_type.__name__, excerpt(exc))


def write_result(job_dir, doc):
    path = os.path.join(job_dir, "result.json")
    with _real_open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh)


def main(argv):
    if len(argv) != 2:
        sys.stderr.write("usage: stub_shim.py JOB_DIR\n")
        return 2
    job_dir = argv[1]
    start = time.monotonic()
    try:
        job = load_job(job_dir)
    except BadJob as exc:
        doc = result("HarnessError", tb=str(exc))
        doc["duration_s"] = 0.0
        doc["error"] = str(exc)
        try:
            write_result(job_dir, doc)
        except OSError:
            pass
        sys.stderr.write(f"{exc}\n")
        return 1

    def on_alarm(_signum, _frame):
        raise JobTimeout()

    install_guards(job_dir)
    sys.setrecursionlimit(1000)
    signal.signal(signal.SIGALRM, on_alarm)
    signal.setitimer(signal.ITIMER_REAL, float(job["timeout_s"]))
    try:
        doc = run_job(job)
    except JobTimeout:
        doc = result("Timeout", tb=f"exceeded {job['timeout_s']}s")
    finally:
        signal.setitimer(signal.ITIMER_REAL, 0)
    doc["duration_s"] = time.monotonic() - start
    write_result(job_dir, doc)
    return 0


if __name__ == "__main__":
    sys.exit(main(sys.argv))
