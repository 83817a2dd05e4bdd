"""codemill: verified competitive-programming dataset construction.

Submodules:
  corpus    problem ingestion, dedup, oracle filtering
  llm       cached chat-completion gateway with replay mode
  synth     problem synthesis prompts and response parsing
  inputgen  generator/validator utilities and the scale grid
  sandbox   resource-limited execution of untrusted programs
  verify    oracle labeling and mutual verification
  postproc  thresholds, fastest-solution selection, decontamination, export
  evaluate  pass@1 harness
  pipeline  resumable stage orchestration over a run directory
  cli       the ``codemill`` command
"""

__version__ = "0.1.0"
