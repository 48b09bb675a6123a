"""Python access to the adstage classification toolkit.

Array arguments are converted to float32 NumPy arrays in NHWC layout.
Structured results come back as plain dicts.
"""

import json
import os
import shutil
import subprocess

from . import _adstage
from ._adstage import (
    AdstageError,
    ConfigError,
    DegenerateTestError,
    EnsembleError,
    EvaluationError,
    ShapeError,
    SmoteError,
    SplitError,
    conv2d,
    dense,
    ensemble_average,
    model_names,
    pool2d,
    roc_auc,
    smote,
    softmax,
    split,
)

__all__ = [
    "AdstageError",
    "ConfigError",
    "DegenerateTestError",
    "EnsembleError",
    "EvaluationError",
    "ShapeError",
    "SmoteError",
    "SplitError",
    "cli",
    "conv2d",
    "dense",
    "ensemble_average",
    "ensemble_cost",
    "metrics",
    "model_cost",
    "model_names",
    "pool2d",
    "roc_auc",
    "run_cli",
    "smote",
    "softmax",
    "split",
    "wilcoxon",
]


def model_cost(model, convention="standard", scale="full"):
    """Parameter, FLOP and memory accounting for one architecture."""
    return json.loads(_adstage.model_cost(model, convention, scale))


def ensemble_cost(models, convention="standard", scale="full"):
    return json.loads(_adstage.ensemble_cost(list(models), convention, scale))


def metrics(truth, pred, classes=4):
    return json.loads(_adstage.metrics(list(truth), list(pred), classes))


def wilcoxon(a, b):
    """Two-sided signed-rank test on paired samples."""
    return json.loads(_adstage.wilcoxon(list(a), list(b)))


def run_cli(args):
    """Runs the command line in-process; returns (exit_code, stdout, stderr)."""
    return _adstage.run_cli([str(a) for a in args])


def _binary():
    here = os.path.join(os.path.dirname(__file__), "bin", "adstage")
    return here if os.path.exists(here) else shutil.which("adstage")


def cli():
    """Entry point for the installed `adstage` script."""
    import sys

    exe = _binary()
    if exe is None:
        code, out, err = run_cli(sys.argv[1:])
        sys.stdout.write(out)
        sys.stderr.write(err)
        raise SystemExit(code)
    raise SystemExit(subprocess.call([exe, *sys.argv[1:]]))
