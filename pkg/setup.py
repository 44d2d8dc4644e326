"""Build script for the optional compiled kernel extension.

The package works without the extension (a pure-Python kernel backend is
selected at import time), so a failed compile only costs speed.  Set
MANIPLAN_NO_EXT=1 to skip building it entirely.
"""

import os

from setuptools import Extension, setup
from setuptools.command.build_ext import build_ext


class optional_build_ext(build_ext):
    """Build the extension if possible; fall back to pure Python otherwise."""

    def run(self):
        try:
            super().run()
        except Exception as exc:  # compiler or toolchain missing
            self._warn(exc)

    def build_extension(self, ext):
        try:
            super().build_extension(ext)
        except Exception as exc:
            self._warn(exc)

    @staticmethod
    def _warn(exc):
        print(f"WARNING: compiled kernels unavailable ({exc}); "
              "maniplan will use the pure-Python backend")


ext_modules = []
if os.environ.get("MANIPLAN_NO_EXT") != "1":
    try:
        from Cython.Build import cythonize

        ext_modules = cythonize(
            [
                Extension(
                    "maniplan._kernels._compiled",
                    ["src/maniplan/_kernels/_compiled.pyx"],
                    # Results must stay bit-identical to the pure-Python
                    # backend: -ffp-contract=off blocks FMA contraction and
                    # the -fno-builtin pair stops GCC from fusing adjacent
                    # sin/cos calls into glibc sincos (whose cosine can be
                    # 1 ulp off plain cos).  Do not add -ffast-math.
                    extra_compile_args=["-O3", "-ffp-contract=off",
                                        "-fno-builtin-sin",
                                        "-fno-builtin-cos"],
                )
            ],
            compiler_directives={
                "language_level": "3",
                "boundscheck": False,
                "wraparound": False,
                "cdivision": True,
            },
        )
    except ImportError:
        print("WARNING: Cython not found; building without compiled kernels")

setup(ext_modules=ext_modules, cmdclass={"build_ext": optional_build_ext})
