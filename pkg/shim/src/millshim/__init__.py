"""Runner shim: one-line JSON protocol for driving programs inside a sandbox.

The importable API mirrors the process protocol one-to-one; see
``millshim.__main__`` for the wire format. Note the API executes the given
source in-process: isolation is the caller's job, not the shim's.
"""

from .__main__ import (
    GENERATOR_ENTRY,
    VALIDATOR_ENTRY,
    handle_request,
    invoke_function,
    invoke_generator,
    invoke_validator,
)

__all__ = [
    "GENERATOR_ENTRY",
    "VALIDATOR_ENTRY",
    "handle_request",
    "invoke_function",
    "invoke_generator",
    "invoke_validator",
]
