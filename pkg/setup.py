"""Build script with an optional compiled rasterizer kernel.

The package is pure Python plus one Cython extension
(``satpose._kernels._fill``) that accelerates the triangle fill loop of
the software rasterizer.  The extension is strictly optional: if Cython
or a C compiler is unavailable, or the compilation fails for any other
reason, the build completes without it and the package falls back to
the NumPy implementation at import time.

``-ffp-contract=off`` keeps the compiler from fusing multiply-add
chains, so the compiled kernel evaluates the exact same floating-point
expression sequence as the fallback and the two backends stay
bit-identical.
"""

import sys

from setuptools import setup
from setuptools.command.build_ext import build_ext


class OptionalBuildExt(build_ext):
    """Best-effort build_ext: a failed extension is not a failed install."""

    def run(self):
        try:
            super().run()
        except Exception as exc:  # noqa: BLE001 - any failure means "skip"
            print(f"satpose: skipping compiled kernel ({exc})", file=sys.stderr)

    def build_extension(self, ext):
        try:
            super().build_extension(ext)
        except Exception as exc:  # noqa: BLE001
            print(
                f"satpose: compilation of {ext.name} failed ({exc}); "
                "the NumPy fallback will be used",
                file=sys.stderr,
            )


def make_extensions():
    try:
        import numpy
        from Cython.Build import cythonize
        from setuptools import Extension
    except ImportError:
        return []

    if sys.platform == "win32":
        extra = ["/fp:precise"]
    else:
        extra = ["-O2", "-ffp-contract=off"]

    ext = Extension(
        "satpose._kernels._fill",
        sources=["src/satpose/_kernels/_fill.pyx"],
        include_dirs=[numpy.get_include()],
        extra_compile_args=extra,
        define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
    )
    return cythonize([ext], language_level="3")


setup(
    ext_modules=make_extensions(),
    cmdclass={"build_ext": OptionalBuildExt},
)
