"""Hot numeric kernels with a compiled core and a pure-numpy fallback.

The Cython extension is optional; when it failed to build (or was not
built at all) the reference implementations are used instead. Both are
required to produce identical outputs, which the test suite checks.
"""

from . import _reference

try:
    from . import _compiled as _impl

    COMPILED = True
except ImportError:  # extension not built
    _impl = _reference
    COMPILED = False

pairs_within = _impl.pairs_within
frechet_dp = _impl.frechet_dp

__all__ = ["pairs_within", "frechet_dp", "COMPILED", "_reference", "_impl"]
