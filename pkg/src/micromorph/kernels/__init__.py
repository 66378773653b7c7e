"""Hot assembly kernels with backend selection.

The numba backend is used when importable; set MICROMORPH_NUMBA=0 to force
the pure-numpy fallback (or =1 to require numba and fail loudly if missing).
Both backends implement identical contracts; see benchmarks/bench_kernels.py
for a timing comparison.
"""

import os

from . import numpy_backend

_flag = os.environ.get("MICROMORPH_NUMBA", "").strip()

if _flag == "0":
    _impl = numpy_backend
    BACKEND = "numpy"
else:
    try:
        from . import numba_backend as _impl

        BACKEND = "numba"
    except ImportError:
        if _flag == "1":
            raise
        _impl = numpy_backend
        BACKEND = "numpy"

def_grads = _impl.def_grads
psi_batch = _impl.psi_batch
pk1_batch = _impl.pk1_batch
tangent_batch = _impl.tangent_batch
element_force = _impl.element_force
element_stiffness = _impl.element_stiffness


def backend_name() -> str:
    return BACKEND
