"""Hot kernels, compiled when the extension is built.

The Cython module ``_ckernels`` is preferred. Without it, or with
``PAGEHTR_KERNELS=python`` in the environment, the numpy fallback in
``_pykernels`` is used. ``BACKEND`` names the active one.
"""

import os

from . import _pykernels as python

cython = None
if os.environ.get("PAGEHTR_KERNELS", "").lower() != "python":
    try:
        from . import _ckernels as cython
    except ImportError:  # extension not built
        cython = None

_impl = cython if cython is not None else python
BACKEND = "cython" if cython is not None else "python"

levenshtein = _impl.levenshtein
levenshtein_matrix = _impl.levenshtein_matrix
im2col = _impl.im2col
col2im = _impl.col2im

__all__ = ["BACKEND", "levenshtein", "levenshtein_matrix", "im2col", "col2im", "python", "cython"]
