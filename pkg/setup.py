"""Build script.

The compiled engine is optional: when Cython or a C compiler is not
available the package installs anyway and falls back to the pure-Python
engine at import time.
"""
import os

from setuptools import setup

PYX = "src/kfnoc/engine/_kernel.pyx"

ext_modules = []
if os.environ.get("KFNOC_SKIP_EXT") != "1" and os.path.exists(PYX):
    try:
        from Cython.Build import cythonize

        ext_modules = cythonize(
            PYX,
            compiler_directives={
                "language_level": 3,
                "boundscheck": False,
                "wraparound": False,
                "initializedcheck": False,
                "cdivision": True,
            },
        )
    except ImportError:
        ext_modules = []

setup(ext_modules=ext_modules)
