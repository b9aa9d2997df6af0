"""Builds the optional compiled kernel extension.

The package works without it: sketchtraj.kernels falls back to the
pure-numpy implementations when the extension is absent.
"""

from setuptools import Extension, setup

try:
    import numpy
    from Cython.Build import cythonize

    extensions = cythonize(
        [
            Extension(
                "sketchtraj.kernels._compiled",
                ["src/sketchtraj/kernels/_compiled.pyx"],
                include_dirs=[numpy.get_include()],
                extra_compile_args=["-O3"],
                optional=True,
            )
        ],
        compiler_directives={
            "language_level": "3",
            "boundscheck": False,
            "wraparound": False,
            "cdivision": True,
        },
    )
except ImportError:
    extensions = []

setup(ext_modules=extensions)
