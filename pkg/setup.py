"""Build script for the optional compiled kernels.

The package works without the extension: ``sparseapprox._backend`` falls
back to the numpy implementation when ``_kernels`` cannot be imported.
"""
import os

from setuptools import setup

ext_modules = []
if os.environ.get("SPARSEAPPROX_NO_EXT", "") != "1":
    try:
        import numpy as np
        from Cython.Build import cythonize
        from setuptools import Extension

        ext_modules = cythonize(
            Extension(
                "sparseapprox._kernels",
                ["src/sparseapprox/_kernels.pyx"],
                include_dirs=[np.get_include()],
                extra_compile_args=["-O3"],
                define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
            ),
            compiler_directives={
                "language_level": "3",
                "boundscheck": False,
                "wraparound": False,
                "cdivision": True,
                "initializedcheck": False,
            },
        )
    except ImportError:
        ext_modules = []

setup(ext_modules=ext_modules)
