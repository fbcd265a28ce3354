"""Build script for the optional compiled sparsemax kernel.

The package is fully functional without the extension: contab.kernels falls
back to the numpy implementation when `contab._sparsemax` is missing, so the
extension is marked optional and a failed compile only costs speed.
"""

import numpy as np
from setuptools import Extension, setup

try:
    from Cython.Build import cythonize

    ext_modules = cythonize(
        [
            Extension(
                "contab._sparsemax",
                ["src/contab/_sparsemax.pyx"],
                include_dirs=[np.get_include()],
                define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
                optional=True,
            )
        ],
        language_level=3,
    )
except ImportError:
    ext_modules = []

setup(ext_modules=ext_modules)
