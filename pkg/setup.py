"""Builds the optional compiled rewrite kernel.

The package is fully functional without it (openbisim.kernel falls back to
the pure-Python twin), so build failures of the extension are tolerated.
"""

from setuptools import setup
from setuptools.command.build_ext import build_ext


class OptionalBuildExt(build_ext):
    def run(self):
        try:
            super().run()
        except Exception as exc:  # no compiler / no cython: pure fallback
            print(f"skipping compiled rewrite kernel: {exc}")

    def build_extension(self, ext):
        try:
            super().build_extension(ext)
        except Exception as exc:
            print(f"skipping compiled rewrite kernel: {exc}")


try:
    from Cython.Build import cythonize
    ext_modules = cythonize(
        ["src/openbisim/_rewrite.pyx"], language_level=3
    )
except ImportError:
    ext_modules = []

setup(ext_modules=ext_modules, cmdclass={"build_ext": OptionalBuildExt})
