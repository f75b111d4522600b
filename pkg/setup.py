"""Build script for the optional compiled render kernels.

The package is pure Python except for sssp._kernels._render, a Cython
extension fusing tri-plane sampling and ray compositing for the CPU
inference path. The extension is optional: if it cannot be built the
package falls back to the numpy implementation at import time.
"""

import numpy
from setuptools import Extension, setup

try:
    from Cython.Build import cythonize
except ImportError:
    cythonize = None

ext_modules = []
if cythonize is not None:
    ext = Extension(
        "sssp._kernels._render",
        ["src/sssp/_kernels/_render.pyx"],
        include_dirs=[numpy.get_include()],
        define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
        optional=True,
    )
    ext_modules = cythonize([ext], language_level=3)

setup(ext_modules=ext_modules)
