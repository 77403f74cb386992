"""Hash kernels with the compiled backend selected at import.

Set ``MANAGEDCOIN_PURE_PYTHON=1`` to force the pure-Python fallback.
"""

import os

from . import _kernels_py

if os.environ.get("MANAGEDCOIN_PURE_PYTHON") == "1":
    _impl = _kernels_py
else:
    try:
        from . import _kernels as _impl
    except ImportError:  # extension not built
        _impl = _kernels_py

BACKEND = "cython" if _impl is not _kernels_py else "python"

# one-shot hashing stays on hashlib: OpenSSL uses the CPU SHA extensions and beats
# the portable compiled code; the loops (merkle, nonce scan) gain from skipping the interpreter
sha256d = _kernels_py.sha256d
merkle_root = _impl.merkle_root
scan_nonce = _impl.scan_nonce
