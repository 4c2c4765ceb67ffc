"""Build script: compiles the optional propagation kernel.

The package works without the extension (a pure-numpy fallback is selected
at import time), so compilation failures are downgraded to a warning.
"""

import sys

from setuptools import setup
from setuptools.command.build_ext import build_ext


class OptionalBuildExt(build_ext):
    """Build the Cython kernel if possible, otherwise warn and continue."""

    def run(self):
        try:
            super().run()
        except Exception as exc:  # compiler missing, broken toolchain, ...
            print(f"warning: compiled kernel skipped ({exc}); "
                  "falling back to the pure-python propagator", file=sys.stderr)

    def build_extension(self, ext):
        try:
            super().build_extension(ext)
        except Exception as exc:
            print(f"warning: building {ext.name} failed ({exc}); "
                  "falling back to the pure-python propagator", file=sys.stderr)


def extensions():
    try:
        import numpy
        from Cython.Build import cythonize
        from setuptools import Extension
    except ImportError as exc:
        print(f"warning: {exc}; compiled kernel not built", file=sys.stderr)
        return []
    return cythonize(
        [
            Extension(
                "qugray._kernels._prop_cy",
                ["src/qugray/_kernels/_prop_cy.pyx"],
                include_dirs=[numpy.get_include()],
                extra_compile_args=["-O3"],
                define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
            )
        ],
        compiler_directives={"language_level": "3"},
    )


setup(ext_modules=extensions(), cmdclass={"build_ext": OptionalBuildExt})
