"""Build script for the optional compiled kernel extension.

The package is fully functional without the extension (a NumPy fallback is
selected at import time); building it just makes the hot loops fast.
"""

import numpy as np
from Cython.Build import cythonize
from setuptools import Extension, setup

extensions = [
    Extension(
        "zvnav._kernels._native",
        ["src/zvnav/_kernels/_native.pyx"],
        include_dirs=[np.get_include()],
        define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
        # -fno-math-errno lets gcc vectorize exp/tanh without changing results
        
        extra_link_args=["-fopenmp"],
    )
]

setup(ext_modules=cythonize(extensions, language_level=3))
