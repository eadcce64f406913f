"""Build script: compiles the simulation kernel with Cython when available.

The kernel at src/fatalsim/_kernel.py is written in Cython pure-Python mode:
it runs unmodified as plain Python, and compiling it yields an extension
module with the same name that shadows the .py at import time.  If Cython
is not installed the package still installs and falls back to the
interpreted kernel.
"""

from setuptools import setup

ext_modules = []
try:
    from Cython.Build import cythonize

    ext_modules = cythonize(
        ["src/fatalsim/_kernel.py"],
        compiler_directives={
            "language_level": "3",
            "boundscheck": False,
            "wraparound": False,
            "initializedcheck": False,
            "nonecheck": False,
        },
    )
except ImportError:
    pass

setup(ext_modules=ext_modules)
