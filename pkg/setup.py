"""Build script: compiles the optional Cython prox kernel when possible.

The package is fully functional without the extension (a pure-numpy
fallback is selected at import time); any build failure here downgrades
to the fallback instead of aborting the install.
"""

import warnings

from setuptools import setup
from setuptools.command.build_ext import build_ext


def _extensions():
    try:
        import numpy as np
        from Cython.Build import cythonize
        from setuptools import Extension
    except ImportError:
        return []
    return cythonize(
        [
            Extension(
                "sqrtsparse._prox_fast",
                sources=["src/sqrtsparse/_prox_fast.pyx"],
                include_dirs=[np.get_include()],
                define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
            )
        ],
        compiler_directives={
            "language_level": "3",
            "boundscheck": False,
            "wraparound": False,
            "cdivision": True,
        },
    )


class optional_build_ext(build_ext):
    """Skip extension build failures; the pure-python kernel takes over."""

    def run(self):
        try:
            super().run()
        except Exception as exc:  # compiler missing, etc.
            warnings.warn(f"compiled prox kernel skipped: {exc}")

    def build_extension(self, ext):
        try:
            super().build_extension(ext)
        except Exception as exc:
            warnings.warn(f"compiled prox kernel skipped: {exc}")


setup(ext_modules=_extensions(), cmdclass={"build_ext": optional_build_ext})
