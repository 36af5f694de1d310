"""Builds the optional compiled convolution kernels.

The extension is plain C loaded through ctypes (no CPython API), so a
failed build only costs speed: jnet falls back to its numpy path.
"""

from setuptools import Extension, setup
from setuptools.command.build_ext import build_ext


class OptionalBuildExt(build_ext):
    def build_extension(self, ext):
        try:
            super().build_extension(ext)
        except Exception as exc:  # missing compiler, exotic platform, ...
            print(f"skipping optional extension {ext.name}: {exc}")


setup(
    ext_modules=[
        Extension(
            "parawave._convops",
            sources=["src/parawave/_convops.c"],
            extra_compile_args=[
                "-O3",
                "-march=native",
                "-mprefer-vector-width=512",
                "-fopenmp-simd",
            ],
        )
    ],
    cmdclass={"build_ext": OptionalBuildExt},
)
