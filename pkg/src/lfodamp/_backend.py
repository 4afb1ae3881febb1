"""Kernel selection: compiled extension when importable, numpy fallback otherwise.

Set ``LFODAMP_BACKEND=python`` to force the fallback.
"""
import os

from . import _kernel_py

python_kernel = _kernel_py
compiled_kernel = None

if os.environ.get("LFODAMP_BACKEND", "").lower() != "python":
    try:
        from . import _kernel as compiled_kernel  # type: ignore[no-redef]
    except ImportError:  # extension not built
        compiled_kernel = None

kernel = compiled_kernel if compiled_kernel is not None else python_kernel
BACKEND = "cython" if kernel is compiled_kernel else "python"
