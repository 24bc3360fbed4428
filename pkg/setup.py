"""Build script for the optional compiled kernels.

The package is fully functional without the extension: spinequad.backend
falls back to the pure numpy kernels when the compiled module is missing.
"""

import os

import numpy
from setuptools import Extension, setup

try:
    from Cython.Build import cythonize
except ImportError:
    cythonize = None

if cythonize is not None and os.path.exists("src/spinequad/_fastcore.pyx"):
    extensions = cythonize(
        [
            Extension(
                "spinequad._fastcore",
                ["src/spinequad/_fastcore.pyx"],
                include_dirs=[numpy.get_include()],
                extra_compile_args=["-O3"],
            )
        ],
        compiler_directives={"language_level": "3"},
    )
else:
    extensions = []

setup(ext_modules=extensions)
