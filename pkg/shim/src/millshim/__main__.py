"""Child-process harness speaking a one-line JSON protocol over stdio.

Invocation: ``python -S path/to/millshim/__main__.py PROGRAM.py`` (or
``python -m millshim PROGRAM.py``). The harness reads exactly one JSON
request line from stdin, loads PROGRAM.py as a throwaway module, performs the
requested call, and emits exactly one JSON response line on stdout. Anything
the loaded program prints is rerouted to stderr, so stdout carries nothing
but the response line. The process exits 0 whenever a response was emitted,
regardless of the ok flag.

Request modes and their response shapes:

  {"mode": "FUNCTION", "fn_name": str, "args": list|dict|value}
      -> {"ok": bool, "result": value|null, "error": str|null}
  {"mode": "GENERATE", "params": [int, ...], "seed": int (optional)}
      -> {"ok": bool, "input_string": str|null}
  {"mode": "VALIDATE", "input_string": str}
      -> {"ok": bool, "valid": bool}

GENERATE calls ``generate_test_input(*params)`` and treats a None return as
"parameters out of constraint" (ok stays true, input_string is null).
VALIDATE calls ``validate_test_input(input_string)`` and requires a real
boolean back. FUNCTION resolves ``fn_name`` on the module, falling back to an
instantiated ``Solution`` class, and expands list args positionally and dict
args as keywords.

The vendored ``cyaron`` module next to this file keeps generated utilities
that import the input toolkit working without network access; GENERATE seeds
the process-global RNG so equal seeds give equal inputs.
"""

import inspect
import io
import json
import os
import random
import sys
import traceback

# Make the vendored toolkit importable no matter how the shim was started.
sys.path.insert(0, os.path.dirname(os.path.abspath(__file__)))

GENERATOR_ENTRY = "generate_test_input"
VALIDATOR_ENTRY = "validate_test_input"
_STDERR_NOTE_LIMIT = 8192


def _load_module(source: str, filename: str = "solution.py"):
    """Execute source as a throwaway module namespace."""
    import types

    module = types.ModuleType("tmp_sol")
    module.__file__ = filename
    code = compile(source, filename, "exec")
    exec(code, module.__dict__)
    return module


def _summary(exc: BaseException) -> str:
    lines = traceback.format_exception_only(type(exc), exc)
    return lines[-1].strip() if lines else repr(exc)


def _resolve_callable(module, fn_name: str, source: str):
    target = getattr(module, fn_name, None)
    if callable(target):
        return target
    if "class Solution" in source and hasattr(module, "Solution"):
        instance = module.Solution()
        target = getattr(instance, fn_name, None)
        if callable(target):
            return target
    raise AttributeError(f"attribute lookup failed: no callable {fn_name!r} in program")


def invoke_function(solution_source: str, fn_name: str, args) -> dict:
    """Call fn_name in the solution with the given args; JSON-typed result only."""
    try:
        module = _load_module(solution_source)
        target = _resolve_callable(module, fn_name, solution_source)
        if isinstance(args, list):
            result = target(*args)
        elif isinstance(args, dict):
            result = target(**args)
        else:
            result = target(args)
    except BaseException as exc:  # noqa: BLE001 - everything becomes a protocol error
        traceback.print_exc(file=sys.stderr)
        return {"ok": False, "result": None, "error": _summary(exc)}
    try:
        json.dumps(result)
    except (TypeError, ValueError):
        return {
            "ok": False,
            "result": None,
            "error": f"return value of type {type(result).__name__} is not JSON-serializable",
        }
    return {"ok": True, "result": result, "error": None}


def invoke_generator(generator_source: str, params, seed=None) -> dict:
    """Run generate_test_input(*params); None means out-of-constraint params."""
    try:
        module = _load_module(generator_source, "generator.py")
        target = getattr(module, GENERATOR_ENTRY, None)
        if not callable(target):
            raise AttributeError(f"program defines no {GENERATOR_ENTRY}")
        expected = len(inspect.signature(target).parameters)
        if expected != len(params):
            raise TypeError(
                f"{GENERATOR_ENTRY} takes {expected} parameters, got {len(params)}"
            )
        if seed is not None:
            random.seed(seed)
        result = target(*params)
    except BaseException as exc:  # noqa: BLE001
        traceback.print_exc(file=sys.stderr)
        return {"ok": False, "input_string": None, "error": _summary(exc)}
    if result is None:
        return {"ok": True, "input_string": None}
    if not isinstance(result, str):
        return {
            "ok": False,
            "input_string": None,
            "error": f"generator returned {type(result).__name__}, expected str or None",
        }
    return {"ok": True, "input_string": result}


def invoke_validator(validator_source: str, input_string: str) -> dict:
    """Run validate_test_input(input_string); the verdict must be a real bool."""
    try:
        module = _load_module(validator_source, "validator.py")
        target = getattr(module, VALIDATOR_ENTRY, None)
        if not callable(target):
            raise AttributeError(f"program defines no {VALIDATOR_ENTRY}")
        verdict = target(input_string)
    except BaseException as exc:  # noqa: BLE001
        traceback.print_exc(file=sys.stderr)
        return {"ok": False, "valid": False, "error": _summary(exc)}
    if not isinstance(verdict, bool):
        return {
            "ok": False,
            "valid": False,
            "error": f"validator returned {type(verdict).__name__}, expected bool",
        }
    return {"ok": True, "valid": verdict}


def handle_request(request_line: str, program_source: str) -> dict:
    try:
        request = json.loads(request_line)
    except (json.JSONDecodeError, ValueError) as exc:
        return {"ok": False, "error": f"request is not valid JSON: {exc}"}
    if not isinstance(request, dict):
        return {"ok": False, "error": "request must be a JSON object"}
    mode = request.get("mode")
    if mode == "FUNCTION":
        fn_name = request.get("fn_name")
        if not isinstance(fn_name, str) or not fn_name:
            return {"ok": False, "result": None, "error": "FUNCTION request needs fn_name"}
        return invoke_function(program_source, fn_name, request.get("args", []))
    if mode == "GENERATE":
        params = request.get("params")
        if not isinstance(params, list):
            return {"ok": False, "input_string": None, "error": "GENERATE request needs params list"}
        return invoke_generator(program_source, params, request.get("seed"))
    if mode == "VALIDATE":
        input_string = request.get("input_string")
        if not isinstance(input_string, str):
            return {"ok": False, "valid": False, "error": "VALIDATE request needs input_string"}
        return invoke_validator(program_source, input_string)
    return {"ok": False, "error": f"unknown mode {mode!r}"}


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else argv

    # Claim the real stdout before any user code runs, then point fd 1 at
    # stderr so stray prints from loaded programs can never pollute the
    # protocol stream.
    response_fd = os.dup(1)
    os.dup2(2, 1)
    sys.stdout = io.TextIOWrapper(os.fdopen(os.dup(2), "wb"), encoding="utf-8")

    def emit(response: dict) -> int:
        try:
            line = json.dumps(response, ensure_ascii=False)
        except (TypeError, ValueError):
            line = json.dumps({"ok": False, "error": "unserializable response"})
        os.write(response_fd, (line + "\n").encode("utf-8"))
        return 0

    if len(argv) != 1:
        return emit({"ok": False, "error": "usage: millshim PROGRAM_FILE (request on stdin)"})
    try:
        program_source = open(argv[0], "r", encoding="utf-8").read()
    except OSError as exc:
        return emit({"ok": False, "error": f"cannot read program file: {exc}"})
    try:
        request_line = sys.stdin.readline()
    except Exception as exc:  # noqa: BLE001
        return emit({"ok": False, "error": f"cannot read request line: {exc}"})
    try:
        response = handle_request(request_line, program_source)
    except BaseException as exc:  # noqa: BLE001 - totality: never die without a response
        traceback.print_exc(file=sys.stderr)
        response = {"ok": False, "error": _summary(exc)}
    return emit(response)


if __name__ == "__main__":
    sys.exit(main())
