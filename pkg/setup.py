"""Build the optional GMP-backed kernel extension.

The package works without it: ``aerisai._native`` falls back to the
pure-Python kernels when the extension is missing.
"""

import os
import sys

from setuptools import Extension, setup
from setuptools.command.build_ext import build_ext


class OptionalBuildExt(build_ext):
    def run(self):
        try:
            super().run()
        except Exception as exc:  # noqa: BLE001
            self._skip(exc)

    def build_extension(self, ext):
        try:
            super().build_extension(ext)
        except Exception as exc:  # noqa: BLE001
            self._skip(exc)

    def _skip(self, exc):
        if os.environ.get("AERISAI_REQUIRE_NATIVE"):
            raise exc
        print(f"warning: native kernels not built ({exc}); using pure Python", file=sys.stderr)


def extensions():
    if os.environ.get("AERISAI_PURE_PYTHON_BUILD"):
        return []
    try:
        from Cython.Build import cythonize
    except ImportError:
        return []
    ext = Extension(
        "aerisai._native._kernels",
        ["src/aerisai/_native/_kernels.pyx"],
        libraries=["gmp"],
        extra_compile_args=["-O3"],
    )
    return cythonize([ext], language_level=3, quiet=True)


setup(ext_modules=extensions(), cmdclass={"build_ext": OptionalBuildExt})
