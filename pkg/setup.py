"""Build script for the optional compiled simulation kernel.

The package is fully functional without the extension (a pure-Python
kernel with identical semantics is selected at import time), so a missing
compiler or Cython only costs speed, not correctness.

Set RBDNET_SKIP_EXT=1 to skip the extension build entirely.
"""
import os

from setuptools import Extension, setup

ext_modules = []
if os.environ.get("RBDNET_SKIP_EXT") != "1":
    try:
        from Cython.Build import cythonize

        ext_modules = cythonize(
            [
                Extension(
                    "rbdnet._kernels_c",
                    ["src/rbdnet/_kernels_c.pyx"],
                    # -ffp-contract=off keeps the C arithmetic bit-identical
                    # to the pure-Python kernel (no FMA contraction).
                    extra_compile_args=["-O3", "-ffp-contract=off"],
                )
            ],
            compiler_directives={"language_level": "3"},
        )
    except ImportError:
        ext_modules = []

setup(ext_modules=ext_modules)
