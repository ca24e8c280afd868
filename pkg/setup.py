import numpy as np
from setuptools import Extension, setup

from Cython.Build import cythonize

ext_modules = cythonize(
    [
        Extension(
            "nnmix._kernels",
            ["src/nnmix/_kernels.pyx"],
            include_dirs=[np.get_include()],
            extra_compile_args=["-O3"],
        )
    ],
    language_level="3",
)

setup(ext_modules=ext_modules)
