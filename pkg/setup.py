"""Build script. Compiles the optional fast kernels when Cython and a C
compiler are present; otherwise the package installs with the pure-numpy
fallback only (set CORENET_PURE=1 to skip the extension on purpose)."""
import os

from setuptools import Extension, setup

ext_modules = []
if os.environ.get("CORENET_PURE") != "1":
    try:
        import numpy as np
        from Cython.Build import cythonize

        ext_modules = cythonize(
            [
                Extension(
                    "corenet.kernels._speedups",
                    ["src/corenet/kernels/_speedups.pyx"],
                    include_dirs=[np.get_include()],
                    define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
                )
            ],
            language_level="3",
        )
    except ImportError:
        ext_modules = []

setup(ext_modules=ext_modules)
