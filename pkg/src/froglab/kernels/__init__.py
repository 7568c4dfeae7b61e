"""Hot loops for the particle simulators.

The compiled extension ``_ckernels`` is used when it imports; otherwise the
pure-Python twin in ``_pykernels`` runs the same algorithms (bit-identical
output, much slower).  Set ``FROGLAB_PURE_PYTHON=1`` to force the fallback.
"""
from __future__ import annotations

import os

from . import _pykernels as python_backend
from ._pykernels import (  # noqa: F401
    EV_ABSORB,
    EV_ELIM_TIE,
    EV_ELIM_VISITED,
    EV_ESCAPE,
    EV_HORIZON,
    EV_MOVE,
    EV_SPAWN,
    EV_STUCK,
    GOLDEN,
    KIND_CUTOFF,
    KIND_INTERIOR,
    KIND_LEAF,
    LOG_DTYPE,
    MASK,
    ROLE_MARK,
    ROLE_SAMPLE,
    ROLE_SLEEP,
    ROLE_WALK,
    SEED_SALT,
    TWO_M53,
    mix64,
    poisson,
    stream_key,
    uniform,
)

try:
    from . import _ckernels as compiled_backend
except ImportError:  # pragma: no cover - depends on the build
    compiled_backend = None

if compiled_backend is not None and not os.environ.get("FROGLAB_PURE_PYTHON"):
    backend = compiled_backend
    BACKEND = "cython"
else:
    backend = python_backend
    BACKEND = "python"

frog_batch = backend.frog_batch
brw_batch = backend.brw_batch
erased_prefix_batch = backend.erased_prefix_batch
lerw_markov_batch = backend.lerw_markov_batch
