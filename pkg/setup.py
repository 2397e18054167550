"""Build script for the optional compiled recursion kernels.

The package works without the extension: ``pagarch.kernels`` falls back to
``pagarch._kernels_python`` when ``pagarch._kernels`` cannot be imported.
"""
import os

from setuptools import Extension, setup

ext_modules = []
if not os.environ.get("PAGARCH_NO_EXTENSION"):
    try:
        from Cython.Build import cythonize
    except ImportError:
        cythonize = None
    if cythonize is not None:
        ext_modules = cythonize(
            [
                Extension(
                    "pagarch._kernels",
                    ["src/pagarch/_kernels.pyx"],
                    extra_compile_args=["-O3"],
                )
            ],
            language_level="3",
        )

setup(ext_modules=ext_modules)
