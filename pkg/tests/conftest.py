"""Shared fixtures: a small rendered-digit dataset in MNIST IDX layout.

The generator script lives in scripts/ (it needs PIL, scipy, and the
matplotlib font bundle — build-time-only conveniences, not package deps).
"""

import importlib.util
import os
import sys

import pytest

ROOT = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))


def _load_script(name):
    path = os.path.join(ROOT, "scripts", name)
    spec = importlib.util.spec_from_file_location(name[:-3], path)
    mod = importlib.util.module_from_spec(spec)
    sys.modules[spec.name] = mod
    spec.loader.exec_module(mod)
    return mod


@pytest.fixture(scope="session")
def digits_dir(tmp_path_factory):
    """600-train / 200-test rendered-digit set for fast unit tests."""
    out = tmp_path_factory.mktemp("digits-small")
    _load_script("make_digits_idx.py").main([str(out), "--train", "600", "--test", "200"])
    return str(out)


@pytest.fixture(scope="session")
def digits_full_dir(tmp_path_factory):
    """Full-size set for the acceptance desk runs."""
    out = tmp_path_factory.mktemp("digits-full")
    _load_script("make_digits_idx.py").main([str(out), "--train", "12000", "--test", "1000"])
    return str(out)
