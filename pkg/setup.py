"""Build script: compiles the optional kernel extension when a toolchain exists.

`pip install -e .` (or `python setup.py build_ext --inplace`) produces
dragfield.kernels._core; without a compiler the package still works through
the numpy fallback selected at import.  Set DRAGFIELD_NO_EXT=1 to skip the
extension entirely.
"""

import os

from setuptools import setup

ext_modules = []
if os.environ.get("DRAGFIELD_NO_EXT") != "1":
    try:
        import numpy as np
        from Cython.Build import cythonize
        from setuptools import Extension

        ext = Extension(
            "dragfield.kernels._core",
            sources=["src/dragfield/kernels/_core.pyx"],
            include_dirs=[np.get_include()],
            define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
            extra_compile_args=["-O3"],
        )
        ext_modules = cythonize(
            [ext],
            compiler_directives={
                "language_level": "3",
                "boundscheck": False,
                "wraparound": False,
                "initializedcheck": False,
                "cdivision": True,
            },
        )
    except Exception:
        ext_modules = []

setup(ext_modules=ext_modules)
