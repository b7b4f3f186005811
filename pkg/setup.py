"""Build script for the optional compiled kernel.

The package is fully functional without the extension; smoothing falls back to
the pure-Python path at import time. Any compile failure therefore degrades to
a pure build instead of aborting the install.

Force a pure build with SMOOTHMAS_PURE_BUILD=1.
"""

import os

from setuptools import setup
from setuptools.command.build_ext import build_ext
from setuptools.errors import CCompilerError, ExecError, PlatformError

BUILD_ERRORS = (CCompilerError, ExecError, PlatformError, OSError, ValueError)


class OptionalBuildExt(build_ext):
    def run(self):
        try:
            super().run()
        except BUILD_ERRORS as exc:  # pragma: no cover - exercised on broken toolchains
            print(f"smoothmas: skipping compiled kernel ({exc!r}); using pure-Python fallback")

    def build_extension(self, ext):
        try:
            super().build_extension(ext)
        except BUILD_ERRORS as exc:  # pragma: no cover
            print(f"smoothmas: skipping {ext.name} ({exc!r}); using pure-Python fallback")


def extensions():
    if os.environ.get("SMOOTHMAS_PURE_BUILD") == "1":
        return []
    try:
        from Cython.Build import cythonize
    except ImportError:  # pragma: no cover
        return []
    from setuptools import Extension

    ext = Extension(
        "smoothmas._kernels._fast",
        sources=["src/smoothmas/_kernels/_fast.pyx"],
        extra_compile_args=["-O3"],
    )
    return cythonize([ext], language_level=3)


setup(
    ext_modules=extensions(),
    cmdclass={"build_ext": OptionalBuildExt},
)
