"""Neural provider: loads one transformer checkpoint per process and
answers per-token log-probability requests over stdio JSON lines."""

__version__ = "0.1.0"

PROTOCOL_VERSION = "1"
