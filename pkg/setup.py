"""Build script for the optional compiled sampling kernel.

The package is fully functional without the extension: the kernels
subpackage falls back to a numpy implementation that consumes the
underlying bit stream in the same order, so results are identical.
Set CAPRISK_SKIP_EXT=1 to skip the extension build entirely.
"""

import os

from setuptools import setup

ext_modules = []
if os.environ.get("CAPRISK_SKIP_EXT", "0") != "1":
    try:
        import numpy
        from Cython.Build import cythonize
        from setuptools.extension import Extension

        random_lib_dir = os.path.join(os.path.dirname(numpy.random.__file__), "lib")
        ext = Extension(
            "caprisk.kernels._compiled",
            sources=["src/caprisk/kernels/_compiled.pyx"],
            include_dirs=[numpy.get_include()],
            library_dirs=[random_lib_dir],
            libraries=["npyrandom"],
            extra_compile_args=["-O3"],
            define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
        )
        ext_modules = cythonize([ext], language_level=3)
    except ImportError:
        ext_modules = []

setup(ext_modules=ext_modules)
