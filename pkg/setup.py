"""Build script for the optional Cython kernels.

The package works without the compiled extension; ``lowfps_mot.kernels``
falls back to the pure-Python implementation when ``_ckernels`` is missing.
"""
import os

from setuptools import Extension, setup

ext_modules = []
if os.environ.get("LOWFPS_MOT_NO_EXT") != "1":
    try:
        from Cython.Build import cythonize
    except ImportError:
        cythonize = None
    if cythonize is not None:
        ext_modules = cythonize(
            [
                Extension(
                    "lowfps_mot._ckernels",
                    ["src/lowfps_mot/_ckernels.pyx"],
                    extra_compile_args=["-O3"],
                )
            ],
            compiler_directives={
                "language_level": "3",
                "boundscheck": False,
                "wraparound": False,
                "cdivision": True,
                "initializedcheck": False,
            },
        )

setup(ext_modules=ext_modules)
