"""rade: commit-triggered multi-target build/test/deliver pipeline with a
transactional content-addressed delivery repository and site sync clients."""

__version__ = "0.1.0"
