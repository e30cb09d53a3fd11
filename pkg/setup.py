"""Build script: compiles the stepping kernels when Cython and a C compiler
are available, otherwise installs the pure-Python fallback only."""
import sys

from setuptools import setup

ext_modules = []
try:
    from Cython.Build import cythonize
    from setuptools import Extension

    ext_modules = cythonize(
        [
            Extension(
                "leapfrog4d._kernels",
                ["src/leapfrog4d/_kernels.pyx"],
                extra_compile_args=["-O3"],
            )
        ],
        compiler_directives={"language_level": "3"},
    )
except ImportError:
    print("Cython not available; installing with the pure-Python kernel fallback.",
          file=sys.stderr)

setup(ext_modules=ext_modules)
