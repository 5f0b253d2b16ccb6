import os

from setuptools import setup
from setuptools.extension import Extension

# The compiled search kernel is optional: when it cannot be built (no
# Cython, no toolchain, stale setuptools) the build degrades to a warning
# and the package falls back to the numpy implementation in
# meshpipe._core.dp_py at import time.  MESHPIPE_NO_EXT=1 skips it outright.
ext_modules = []
if not os.environ.get("MESHPIPE_NO_EXT"):
    try:
        from Cython.Build import cythonize

        ext_modules = cythonize(
            [
                Extension(
                    "meshpipe._core._dp",
                    ["src/meshpipe/_core/_dp.pyx"],
                    extra_compile_args=["-O3"],
                    optional=True,
                )
            ],
            language_level="3",
        )
    except ImportError:
        ext_modules = []

setup(ext_modules=ext_modules)
