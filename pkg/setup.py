"""Builds the optional compiled rollup kernel.

The package works without it: spmdw.rollup falls back to the pure-Python
kernel when the extension is missing or SPMDW_PURE_PYTHON=1 is set.
"""

from setuptools import Extension, setup

try:
    from Cython.Build import cythonize

    ext_modules = cythonize(
        [
            Extension(
                "spmdw.rollup._kernel_c",
                ["src/spmdw/rollup/_kernel_c.pyx"],
            )
        ],
        language_level=3,
    )
except ImportError:
    ext_modules = []

setup(ext_modules=ext_modules)
