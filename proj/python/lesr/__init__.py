"""Dual-view long-tail sequential recommendation toolkit."""

import json as _json

from ._lesr import (
    DataError,
    FormatError,
    __version__,
    head_count,
    metrics_at_10,
    retrieve,
    run_cli,
    softmax_rows,
    synth,
    welch_t_test,
)
from ._lesr import read_report as _read_report


def read_report(path):
    """Loads a metrics report written by `lesr train` or `lesr eval` as a dict."""
    return _json.loads(_read_report(str(path)))


def cli(*args):
    """Runs a `lesr` subcommand in-process and raises on a non-zero exit."""
    code, out, err = run_cli([str(a) for a in args])
    if code != 0:
        raise RuntimeError(f"lesr {args[0] if args else ''} exited {code}: {err.strip()}")
    return out


__all__ = [
    "DataError",
    "FormatError",
    "__version__",
    "cli",
    "head_count",
    "metrics_at_10",
    "read_report",
    "retrieve",
    "run_cli",
    "softmax_rows",
    "synth",
    "welch_t_test",
]
