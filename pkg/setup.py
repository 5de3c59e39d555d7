import numpy as np
from Cython.Build import cythonize
from setuptools import Extension, setup

ext = Extension(
    "modeconn._kernel._core",
    ["src/modeconn/_kernel/_core.pyx"],
    include_dirs=[np.get_include()],
)

setup(ext_modules=cythonize([ext], language_level=3))
